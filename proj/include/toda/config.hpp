#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "toda/expr.hpp"

namespace toda {

// Sectioned key-value text: "[section]" headers, "key = value" lines and
// '#' comments. Keys outside a section belong to section "".
class ConfigFile {
public:
    static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
    static ConfigFile load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    const std::string& get(const std::string& section, const std::string& key) const;
    // Every (section, key) in file order.
    std::vector<std::pair<std::string, std::string>> keys() const;

private:
    std::map<std::pair<std::string, std::string>, std::string> values_;
    std::vector<std::pair<std::string, std::string>> order_;
};

enum class CheckLevel { Warn, Assert };

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> c = {"green", "meanfield", "shadow", "landscape", "construct",
                                               "verify-expansions"};
    return c;
}

struct RunConfig {
    std::string command;
    // [mesh]
    double h = 0.025;
    int quad_order = 4;
    // [problem]
    int k = 0;
    int m = 1;
    double rho2 = 1.5707963267948966;
    std::string V1 = "1";
    std::string V2 = "1";
    double d_scale = 0.25;
    // [configuration]: explicit points; searched when empty.
    std::vector<Point> interior;
    std::vector<double> boundary_angles;
    // [ladder]
    std::vector<double> lambdas = {1e-2, 3e-3, 1e-3, 3e-4};
    double p = 1.2;
    // [green]
    Point pole{0.2, -0.15};
    // [solver]
    double mf_newton_tol = 1e-8;
    double shadow_tol = 1e-7;
    double phi_tol = 1e-10;
    int phi_max_iterations = 200;
    double newton_tol = 1e-8;
    int newton_max_iterations = 50;
    int multistart = 8;
    // [run]
    std::string out = "out";
    std::uint64_t seed = 1;
    int workers = 1;
    CheckLevel check_level = CheckLevel::Assert;

    bool explicit_configuration() const { return !interior.empty() || !boundary_angles.empty(); }
};

// Reads the known keys; unknown sections or keys are reported by validate().
RunConfig parse_run_config(const ConfigFile& file, const std::string& command,
                           std::vector<std::string>* problems = nullptr);

// Every violated invariant, one message each.
std::vector<std::string> validate(const RunConfig& config);

// Distance of rho2 to the nearest positive multiple of 2 pi.
double resonance_distance(double rho2);

// Values that must be listed in a config echo.
std::vector<std::pair<std::string, std::string>> describe(const RunConfig& config);

}  // namespace toda
