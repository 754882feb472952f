#include "toda/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace toda {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, const std::string& seps) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (seps.find(c) != std::string::npos) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    out.erase(std::remove(out.begin(), out.end(), std::string()), out.end());
    return out;
}

double number(const std::string& v) { return Expression::parse(v).constant(); }

std::string format(double v) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
    ConfigFile f;
    std::istringstream in(text);
    std::string line, section;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto c = line.find('#'); c != std::string::npos) line.erase(c);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw std::invalid_argument(origin + ":" + std::to_string(n) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument(origin + ":" + std::to_string(n) + ": expected key = value");
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument(origin + ":" + std::to_string(n) + ": empty key");
        auto id = std::make_pair(section, key);
        if (f.values_.count(id))
            throw std::invalid_argument(origin + ":" + std::to_string(n) + ": duplicate key " + section + "." + key);
        f.values_[id] = value;
        f.order_.push_back(id);
    }
    return f;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
    return values_.count({section, key}) > 0;
}

const std::string& ConfigFile::get(const std::string& section, const std::string& key) const {
    auto it = values_.find({section, key});
    if (it == values_.end()) throw std::out_of_range("missing " + section + "." + key);
    return it->second;
}

std::vector<std::pair<std::string, std::string>> ConfigFile::keys() const { return order_; }

RunConfig parse_run_config(const ConfigFile& file, const std::string& command, std::vector<std::string>* problems) {
    RunConfig c;
    c.command = command;
    std::vector<std::string> local;
    auto& errs = problems ? *problems : local;
    std::set<std::pair<std::string, std::string>> used;
    auto read = [&](const std::string& sec, const std::string& key, auto&& apply) {
        if (!file.has(sec, key)) return;
        used.insert({sec, key});
        try {
            apply(file.get(sec, key));
        } catch (const std::exception& e) {
            errs.push_back(sec + "." + key + ": " + e.what());
        }
    };
    auto integer = [](const std::string& v) {
        double d = number(v);
        if (d != std::floor(d)) throw std::invalid_argument("integer expected");
        return static_cast<long long>(d);
    };
    read("mesh", "h", [&](const std::string& v) { c.h = number(v); });
    read("mesh", "quad_order", [&](const std::string& v) { c.quad_order = static_cast<int>(integer(v)); });
    read("problem", "k", [&](const std::string& v) { c.k = static_cast<int>(integer(v)); });
    read("problem", "m", [&](const std::string& v) { c.m = static_cast<int>(integer(v)); });
    read("problem", "rho2", [&](const std::string& v) { c.rho2 = number(v); });
    read("problem", "V1", [&](const std::string& v) { Expression::parse(v), c.V1 = v; });
    read("problem", "V2", [&](const std::string& v) { Expression::parse(v), c.V2 = v; });
    read("problem", "d_scale", [&](const std::string& v) { c.d_scale = number(v); });
    read("configuration", "interior", [&](const std::string& v) {
        for (const auto& p : split(v, ";")) {
            auto xy = split(p, ", ");
            if (xy.size() != 2) throw std::invalid_argument("interior points are 'x1 x2' pairs separated by ';'");
            c.interior.emplace_back(number(xy[0]), number(xy[1]));
        }
    });
    read("configuration", "boundary", [&](const std::string& v) {
        for (const auto& a : split(v, ";,")) c.boundary_angles.push_back(number(a));
    });
    read("ladder", "lambdas", [&](const std::string& v) {
        c.lambdas.clear();
        for (const auto& a : split(v, ",;")) c.lambdas.push_back(number(a));
    });
    read("ladder", "p", [&](const std::string& v) { c.p = number(v); });
    read("green", "pole", [&](const std::string& v) {
        auto xy = split(v, ", ");
        if (xy.size() != 2) throw std::invalid_argument("pole is 'x1 x2'");
        c.pole = Point(number(xy[0]), number(xy[1]));
    });
    read("solver", "mf_newton_tol", [&](const std::string& v) { c.mf_newton_tol = number(v); });
    read("solver", "shadow_tol", [&](const std::string& v) { c.shadow_tol = number(v); });
    read("solver", "phi_tol", [&](const std::string& v) { c.phi_tol = number(v); });
    read("solver", "phi_max_iterations", [&](const std::string& v) { c.phi_max_iterations = static_cast<int>(integer(v)); });
    read("solver", "newton_tol", [&](const std::string& v) { c.newton_tol = number(v); });
    read("solver", "newton_max_iterations",
         [&](const std::string& v) { c.newton_max_iterations = static_cast<int>(integer(v)); });
    read("solver", "multistart", [&](const std::string& v) { c.multistart = static_cast<int>(integer(v)); });
    read("run", "out", [&](const std::string& v) { c.out = v; });
    read("run", "seed", [&](const std::string& v) {
        auto s = integer(v);
        if (s < 0) throw std::invalid_argument("seed must be non-negative");
        c.seed = static_cast<std::uint64_t>(s);
    });
    read("run", "workers", [&](const std::string& v) { c.workers = static_cast<int>(integer(v)); });
    read("run", "check_level", [&](const std::string& v) {
        if (v == "warn") c.check_level = CheckLevel::Warn;
        else if (v == "assert") c.check_level = CheckLevel::Assert;
        else throw std::invalid_argument("check_level is warn or assert");
    });
    for (const auto& id : file.keys())
        if (!used.count(id)) errs.push_back("unknown key " + (id.first.empty() ? "" : id.first + ".") + id.second);
    return c;
}

double resonance_distance(double rho2) {
    double n = std::max(1.0, std::round(rho2 / (2.0 * kPi)));
    return std::abs(rho2 - 2.0 * kPi * n);
}

std::vector<std::string> validate(const RunConfig& c) {
    std::vector<std::string> e;
    if (std::find(command_names().begin(), command_names().end(), c.command) == command_names().end())
        e.push_back("unknown command '" + c.command + "'");
    if (!(c.h > 0.0 && c.h <= 0.2)) e.push_back("mesh.h must lie in (0, 0.2]");
    if (c.quad_order < 2 || c.quad_order > 10) e.push_back("mesh.quad_order must lie in [2, 10]");
    if (c.quad_order < 1 || c.quad_order > 8) e.push_back("mesh.quad_order must lie in [1, 8]");
    if (c.k < 0) e.push_back("problem.k must be non-negative");
    if (c.m < 1) e.push_back("problem.m must be at least 1");
    if (c.k > c.m) e.push_back("problem.k must not exceed problem.m");
    if (!(c.rho2 >= 0.0)) e.push_back("problem.rho2 must be non-negative");
    if (resonance_distance(c.rho2) <= 1e-9)
        e.push_back("resonance guard: problem.rho2 = " + format(c.rho2) + " lies within 1e-9 of 2 pi N");
    for (const auto& [name, text] : {std::pair{"V1", c.V1}, std::pair{"V2", c.V2}}) {
        try {
            auto f = Expression::parse(text);
            double R = disk_radius();
            for (int i = 0; i <= 8; ++i)
                for (int j = 0; j < 16; ++j) {
                    double r = R * i / 8.0, t = 2.0 * kPi * j / 16.0;
                    double v = f(Point(r * std::cos(t), r * std::sin(t)));
                    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("must be positive on the disk");
                }
        } catch (const std::exception& ex) {
            e.push_back(std::string("problem.") + name + ": " + ex.what());
        }
    }
    if (!(c.d_scale > 0.0)) e.push_back("problem.d_scale must be positive");
    if (c.explicit_configuration()) {
        if (static_cast<int>(c.interior.size()) != c.k)
            e.push_back("configuration.interior must list k = " + std::to_string(c.k) + " points");
        if (static_cast<int>(c.boundary_angles.size()) != c.m - c.k)
            e.push_back("configuration.boundary must list m - k = " + std::to_string(c.m - c.k) + " angles");
        for (const auto& p : c.interior)
            if (!(p.norm() < disk_radius())) e.push_back("configuration.interior point outside the disk");
    }
    if (c.lambdas.empty()) e.push_back("ladder.lambdas must not be empty");
    for (size_t i = 0; i < c.lambdas.size(); ++i) {
        if (!(c.lambdas[i] > 0.0 && c.lambdas[i] < 1.0)) e.push_back("ladder.lambdas must lie in (0, 1)");
        if (i > 0 && !(c.lambdas[i] < c.lambdas[i - 1])) e.push_back("ladder.lambdas must be strictly decreasing");
    }
    if (!(c.p > 1.0 && c.p < 2.0)) e.push_back("ladder.p must lie in (1, 2)");
    if (!(c.pole.norm() <= disk_radius() * (1 + 1e-12))) e.push_back("green.pole must lie in the closed disk");
    for (double t : {c.mf_newton_tol, c.shadow_tol, c.phi_tol, c.newton_tol})
        if (!(t > 0.0)) e.push_back("solver tolerances must be positive");
    if (c.phi_max_iterations < 1 || c.newton_max_iterations < 1) e.push_back("solver iteration limits must be positive");
    if (c.multistart < 1) e.push_back("solver.multistart must be positive");
    if (c.workers < 1) e.push_back("run.workers must be positive");
    if (c.out.empty()) e.push_back("run.out must not be empty");
    // One message per distinct violation.
    std::vector<std::string> unique;
    for (const auto& s : e)
        if (std::find(unique.begin(), unique.end(), s) == unique.end()) unique.push_back(s);
    return unique;
}

std::vector<std::pair<std::string, std::string>> describe(const RunConfig& c) {
    std::vector<std::pair<std::string, std::string>> d = {
        {"command", c.command},
        {"mesh.h", format(c.h)},
        {"mesh.quad_order", std::to_string(c.quad_order)},
        {"problem.k", std::to_string(c.k)},
        {"problem.m", std::to_string(c.m)},
        {"problem.rho2", format(c.rho2)},
        {"problem.V1", c.V1},
        {"problem.V2", c.V2},
        {"problem.d_scale", format(c.d_scale)},
        {"ladder.p", format(c.p)},
        {"run.seed", std::to_string(c.seed)},
        {"run.check_level", c.check_level == CheckLevel::Assert ? "assert" : "warn"},
    };
    std::string l;
    for (double v : c.lambdas) l += (l.empty() ? "" : ",") + format(v);
    d.push_back({"ladder.lambdas", l});
    if (c.explicit_configuration()) {
        std::string s;
        for (const auto& p : c.interior) s += (s.empty() ? "" : ";") + format(p.x) + " " + format(p.y);
        d.push_back({"configuration.interior", s});
        s.clear();
        for (double a : c.boundary_angles) s += (s.empty() ? "" : ";") + format(a);
        d.push_back({"configuration.boundary", s});
    }
    if (c.command == "green") d.push_back({"green.pole", format(c.pole.x) + " " + format(c.pole.y)});
    return d;
}

}  // namespace toda
