// Acceptance criteria: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "toda/bubble.hpp"
#include "toda/commands.hpp"

using namespace toda;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kScratch = fs::temp_directory_path() / "toda_acceptance";

struct Run {
    json summary;
    double seconds = 0.0;
    int code = 0;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Run run(RunConfig c, const std::string& command, const std::string& name) {
    c.command = command;
    c.out = (kScratch / name).string();
    c.check_level = CheckLevel::Warn;
    std::ostringstream log;
    auto t0 = std::chrono::steady_clock::now();
    Run r;
    r.code = run_command(c, log);
    r.seconds = seconds_since(t0);
    std::ifstream in(fs::path(c.out) / "summary.json");
    r.summary = json::parse(in);
    return r;
}

// Checks of a run whose name starts with prefix.
std::vector<json> checks(const Run& r, const std::string& prefix) {
    std::vector<json> out;
    for (const auto& c : r.summary["checks"])
        if (c["name"].get<std::string>().rfind(prefix, 0) == 0) out.push_back(c);
    return out;
}

bool all_pass(const std::vector<json>& cs) {
    if (cs.empty()) return false;
    for (const auto& c : cs)
        if (!c["passed"].get<bool>()) return false;
    return true;
}

double worst(const std::vector<json>& cs, bool largest = true) {
    double w = largest ? -1e300 : 1e300;
    for (const auto& c : cs) {
        double v = c["value"].get<double>();
        w = largest ? std::max(w, v) : std::min(w, v);
    }
    return w;
}

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

int failures = 0;

void report(int n, bool pass, const std::string& detail) {
    if (!pass) ++failures;
    std::cout << "criterion " << n << ": " << (pass ? "PASS" : "FAIL") << "  " << detail << std::endl;
}

RunConfig base() { return RunConfig{}; }

RunConfig pair_config() {
    RunConfig c;
    c.k = 0;
    c.m = 2;
    c.boundary_angles = {0.0, kPi};
    return c;
}

RunConfig center_config() {
    RunConfig c;
    c.k = 1;
    c.m = 1;
    c.interior = {Point(0.0, 0.0)};
    return c;
}

void criterion1() {
    RunConfig c = base();
    auto a = run(c, "green", "green_interior");
    c.pole = Point(disk_radius(), 0.0);
    auto b = run(c, "green", "green_boundary");
    auto l2 = checks(a, "green L2"), l2b = checks(b, "green L2");
    auto sy = checks(a, "green symmetry"), syb = checks(b, "green symmetry");
    double t = std::max(a.seconds, b.seconds);
    bool pass = all_pass(l2) && all_pass(l2b) && all_pass(sy) && all_pass(syb) && t <= 60.0;
    report(1, pass,
           "green h=0.025: L2 error " + num(std::max(worst(l2), worst(l2b))) + " (<= 1e-3), symmetry " +
               num(std::max(worst(sy), worst(syb))) + " (<= 2e-4), runtime " + num(t) + " s (<= 60)");
}

void criterion2() {
    auto t0 = std::chrono::steady_clock::now();
    auto rows = quadrature_identities();
    double t = seconds_since(t0);
    double mass = 0, quad = 0, logm = 0;
    for (const auto& r : rows) {
        if (r.name == "bubble mass") mass = std::abs(r.computed - 8 * kPi) / (8 * kPi);
        if (r.name == "4 y_i^2/(1+|y|^2)^3") quad = std::abs(r.computed - kPi);
        if (r.name == "kernel log moment e^U Z0 log(1+|y|^2)") logm = std::abs(r.computed + 4 * kPi);
    }
    bool pass = rows.size() >= 3 && mass <= 1e-6 && quad <= 1e-6 && logm <= 1e-5 && t <= 5.0;
    report(2, pass,
           "identities: 8pi rel " + num(mass) + ", pi abs " + num(quad) + ", -4pi abs " + num(logm) + ", runtime " +
               num(t) + " s");
}

void criterion3(const Run& v) {
    auto ex = checks(v, "expansion exponent"), co = checks(v, "expansion constant");
    std::string d;
    for (const auto& f : v.summary["results"]["projection_fits"])
        d += f["name"].get<std::string>() + " exponent " + num(f["exponent"]) + " constant " + num(f["constant"]) + "; ";
    report(3, all_pass(ex) && all_pass(co) && ex.size() == 2, d + "exponent 2 +- 15%, constant <= 10");
}

void criterion4(const Run& v) {
    auto diag = checks(v, "Gram normalized diagonal");
    const auto& g = v.summary["results"]["gram"];
    double first = g.front()["off_diagonal"], last = g.back()["off_diagonal"];
    bool pass = all_pass(diag) && last <= first + 1e-12 && last <= 1e-2;
    report(4, pass,
           "Gram diagonal at smallest delta " + num(worst(diag, false)) + ".." + num(worst(diag)) + " vs pi/6 (2%), " +
               "off-diagonal ratio " + num(first) + " -> " + num(last));
}

void criterion5(const Run& pair, const Run& single) {
    auto s = checks(pair, "residual slope vs");
    double t = pair.seconds;
    report(5, all_pass(s) && t <= 600.0,
           "(0,2) antipodal pair: slope " + num(worst(s)) + " vs 1/3 +- 15%, runtime " + num(t) +
               " s (<= 600); single boundary point slope " + num(worst(checks(single, "residual slope vs"))) +
               " (reported)");
}

void criterion6(const std::vector<std::pair<std::string, const Run*>>& runs) {
    bool pass = true;
    std::string d;
    for (const auto& [name, r] : runs) {
        auto s = checks(*r, "energy slope vs");
        const auto& e = r->summary["results"]["expansion"];
        pass = pass && all_pass(s);
        d += name + " slope " + num(e["energy_slope"]) + " vs " + num(e["energy_expected_slope"]) + " (with sqrt(lambda) term " +
             num(e["energy_slope_with_sqrt_term"]) + "), c0 " +
             num(e["c0_estimate"]) + " vs branches " + num(e["c0_branch_4pi"]) + " / " + num(e["c0_branch_6pi"]) +
             ", predicted " + num(e["c0_predicted_for_d_scale"]) + "; ";
    }
    report(6, pass, d + "slope within 1%");
}

void criterion7(const Run& c) {
    auto ratio = checks(c, "fixed point contraction ratio"), bound = checks(c, "phi / (lambda");
    report(7, all_pass(ratio) && all_pass(bound) && ratio.size() == 4,
           "(0,1) ladder: max contraction ratio " + num(worst(ratio)) + " (< 1), max phi/(lambda^(1/3)|log lambda|) " +
               num(worst(bound)) + " (<= 10)");
}

void criterion8(const Run& c) {
    auto rho = checks(c, "rho1 vs"), mass = checks(c, "mass of 2 lambda"), sup = checks(c, "rise of sup u2"),
         slope = checks(c, "slope of max u1");
    report(8, all_pass(rho) && all_pass(mass) && all_pass(sup) && all_pass(slope),
           "(0,1) Newton: rho1 " + num(worst(rho)) + " (2pi +- 5%), U_0.1 mass " + num(worst(mass)) +
               " (4pi +- 10%), sup u2 rise " + num(worst(sup)) + " (<= 1), max u1 slope " + num(worst(slope)) +
               " (2 +- 20%)");
}

void criterion9() {
    auto r = run(center_config(), "shadow", "shadow_center");
    auto done = checks(r, "shadow continuation completed"), res = checks(r, "shadow final residual"),
         cond = checks(r, "shadow condition"), grad = checks(r, "|grad Lambda|");
    report(9, all_pass(done) && all_pass(res) && all_pass(cond) && all_pass(grad),
           "(1,1) center continuation: residual " + num(worst(res)) + " (<= 1e-7), condition " + num(worst(cond)) +
               " (> 0), |grad Lambda| " + num(worst(grad)) + " (<= 1e-5)");
}

void criterion10() {
    ShadowContext ctx;
    ctx.surface = build_surface(0.025, 4);
    ctx.rho2 = kPi / 2;
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double R = disk_radius();
    const int layouts[5][2] = {{1, 1}, {0, 2}, {1, 2}, {2, 2}, {0, 1}};
    double worst_rel = 0.0;
    for (const auto& km : layouts) {
        std::vector<Point> pts;
        while (static_cast<int>(pts.size()) < km[1]) {
            bool interior = static_cast<int>(pts.size()) < km[0];
            Point p = interior ? Point((R - 0.1) * std::sqrt(U(rng)) * std::cos(2 * kPi * U(rng)),
                                       (R - 0.1) * std::sqrt(U(rng)) * std::sin(2 * kPi * U(rng)))
                               : boundary_point(2 * kPi * R * U(rng));
            if (interior && distance_to_boundary(p) < 0.1) continue;
            bool apart = true;
            for (const auto& q : pts) apart = apart && (p - q).norm() > 0.15;
            if (apart) pts.push_back(p);
        }
        auto xi = make_configuration(km[0], pts);
        auto s = lambda_km(ctx, xi);
        auto c = xi.coordinates();
        Eigen::VectorXd fd(xi.dof());
        for (int a = 0; a < xi.dof(); ++a) {
            auto cp = c, cm = c;
            cp[a] += 1e-4;
            cm[a] -= 1e-4;
            fd[a] = (lambda_km(ctx, xi.with_coordinates(cp), false).Lambda -
                     lambda_km(ctx, xi.with_coordinates(cm), false).Lambda) / 2e-4;
        }
        double rel = (s.gradLambda - fd).lpNorm<Eigen::Infinity>() / std::max(fd.lpNorm<Eigen::Infinity>(), 1e-12);
        worst_rel = std::max(worst_rel, rel);
    }
    report(10, worst_rel <= 1e-2, "grad Lambda vs central differences on 5 random configurations: worst relative error " +
                                      num(worst_rel) + " (<= 1e-2)");
}

}  // namespace

int main() {
    fs::create_directories(kScratch);
    try {
        criterion1();
        criterion2();
        auto single = run(base(), "verify-expansions", "verify_single");
        criterion3(single);
        criterion4(single);
        auto pair = run(pair_config(), "verify-expansions", "verify_pair");
        criterion5(pair, single);
        auto center = run(center_config(), "verify-expansions", "verify_center");
        criterion6({{"(0,1)", &single}, {"(1,1)", &center}, {"(0,2)", &pair}});
        RunConfig cc = base();
        cc.workers = 4;
        auto construct = run(cc, "construct", "construct");
        criterion7(construct);
        criterion8(construct);
        criterion9();
        criterion10();
    } catch (const std::exception& e) {
        std::cout << "acceptance aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures ? std::to_string(failures) + " criteria failing" : std::string("all criteria pass"))
              << std::endl;
    return failures ? 1 : 0;
}
