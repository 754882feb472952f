#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "toda/config.hpp"
#include "toda/reduction.hpp"
#include "toda/shadow.hpp"

namespace toda {

inline constexpr int kSchemaVersion = 1;

// One asserted (or reported) check of a run.
struct Check {
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    // "<=", ">=", "<", ">" or "|x-target|<=": value relation threshold.
    std::string relation = "<=";
    double target = 0.0;
    bool asserted = true;
    bool passed = false;
};

Check make_check(const std::string& name, double value, const std::string& relation, double threshold,
                 bool asserted = true);
Check make_near(const std::string& name, double value, double target, double tolerance, bool asserted = true);

// Comma-separated table with a header row, LF endings and 17 significant digits.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
    CsvTable& row() {
        rows_.emplace_back();
        return *this;
    }
    CsvTable& operator<<(double v);
    CsvTable& operator<<(int v);
    CsvTable& operator<<(const std::string& v);
    CsvTable& operator<<(const char* v) { return *this << std::string(v); }
    std::string str() const;
    // Writes to path.tmp and renames.
    void write(const std::string& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string format_double(double v);

// Closed-form Neumann Green function of the unit-area disk (method of images).
double disk_green(const Point& x, const Point& xi);

Potentials make_potentials(const RunConfig& config);
// Explicit configuration, or a symmetric default layout (interior points on
// the circle of radius R/2, boundary points equally spaced).
Configuration configured_points(const RunConfig& config);

// Per-lambda diagnostics of a blow-up family.
struct FamilyRow {
    double lambda = 0.0;
    double delta = 0.0;
    ResidualReport residual;
    EnergyParts energy;
    PhiResult phi;
    SolveOutcome newton;
};

struct FamilyRun {
    Configuration xi;
    CutOff cut;
    std::shared_ptr<const Background> bg;
    std::vector<FamilyRow> rows;
    double Lambda = 0.0;
    bool completed = false;
    std::string message;
};

// Runs the ladder; stops at the first failing stage with a partial report.
FamilyRun run_family(const RunConfig& config, const Configuration& xi, bool with_newton = true);

// Executes the configured command, writing artifacts under config.out.
// Returns 0 when all asserted checks pass, 2 on a failing check, 1 on errors.
int run_command(const RunConfig& config, std::ostream& log);

}  // namespace toda
