#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "toda/reduction.hpp"

using namespace toda;

namespace {

const std::vector<double> kLadder = {1e-2, 3e-3, 1e-3, 3e-4};

struct Family {
    Configuration xi;
    std::shared_ptr<const Background> bg;
};

Family family(int k, std::vector<Point> pts, double rho2, double h = 0.05, Potentials pot = {}) {
    Family f;
    f.xi = make_configuration(k, std::move(pts));
    auto cut = reduction_cutoff(f.xi);
    auto s = family_surface(f.xi, rho2, pot, cut, kLadder, h);
    f.bg = make_background(s, f.xi, rho2, pot, cut);
    return f;
}

const Family& center() {
    static Family f = family(1, {Point(0, 0)}, kPi / 2);
    return f;
}

const Family& boundary() {
    static Family f = family(0, {Point(disk_radius(), 0)}, kPi / 2);
    return f;
}

double qp_integral(const Surface& s, const Eigen::VectorXd& v) {
    double r = 0.0;
    for (size_t i = 0; i < v.size(); ++i) r += s.quad_points()[i].w * v[i];
    return r;
}

}  // namespace

TEST(Reduction, ApproximateSolutionHasZeroMean) {
    auto app = assemble_W(boundary().bg, 1e-3);
    const Surface& s = *app.bg->surface;
    EXPECT_NEAR(qp_integral(s, app.W1_qp), 0.0, 1e-9 * app.W1_qp.cwiseAbs().maxCoeff());
    EXPECT_NEAR(qp_integral(s, app.W2_qp), 0.0, 1e-9 * app.W2_qp.cwiseAbs().maxCoeff());
}

TEST(Reduction, ComponentsCombineToMeanField) {
    auto app = assemble_W(boundary().bg, 1e-3);
    const auto& s = *app.bg->surface;
    const auto& z = app.bg->mf->z;
    for (size_t i = 0; i < s.quad_points().size(); i += 37) {
        double expect = 1.5 * z.at(s.quad_points()[i]);
        EXPECT_NEAR(app.W1_qp[i] + 2.0 * app.W2_qp[i], expect, 1e-12 * (1.0 + std::abs(app.W1_qp[i])));
    }
}

TEST(Reduction, FarFieldMatchesGreenFunction) {
    // W1 -> 8 pi G(., 0) - z/2 away from the center; error budget C lambda |log lambda|.
    const auto& bg = center().bg;
    std::vector<Point> far = {Point(0.3, 0.1), Point(-0.2, -0.35), Point(0.05, 0.45)};
    for (double l : {1e-2, 1e-3}) {
        auto app = assemble_W(bg, l);
        for (const auto& x : far) {
            double expect = 8.0 * oracle::pi * oracle::green_center(x.x, x.y) - 0.5 * bg->mf->z(x);
            EXPECT_LT(std::abs(app.W1(x) - expect), 10.0 * l * std::abs(std::log(l)) + 2e-3);
        }
    }
}

TEST(Reduction, AssemblyRejectsUnresolvedBubble) {
    auto xi = make_configuration(1, {Point(0, 0)});
    auto cut = reduction_cutoff(xi);
    auto bg = make_background(build_surface(0.05, 4), xi, 0.0, {}, cut);
    EXPECT_THROW(assemble_W(bg, 1e-4), std::invalid_argument);
}

TEST(Reduction, ResidualHasZeroMeanAndRejectsLargeP) {
    auto app = assemble_W(boundary().bg, 3e-3);
    auto r = residual_norms(app, 1.2);
    EXPECT_NEAR(r.mean1, 0.0, 1e-9 * (1.0 + r.norm1));
    EXPECT_NEAR(r.mean2, 0.0, 1e-9 * (1.0 + r.norm2));
    // R2 = -R1/2 up to the mean-field terms, which carry 3/2 rho2 (p_W2 - p_z).
    EXPECT_GT(r.norm1, r.norm2);
    EXPECT_THROW(residual_norms(app, 2.0), std::invalid_argument);
    EXPECT_THROW(residual_norms(app, 1.0), std::invalid_argument);
}

TEST(Reduction, ResidualRateForAntipodalPair) {
    double R = disk_radius();
    auto f = family(0, {Point(R, 0), Point(-R, 0)}, kPi / 2);
    std::vector<double> norms;
    for (double l : kLadder) norms.push_back(residual_norms(assemble_W(f.bg, l), 1.2).total());
    double slope = fit_power(kLadder, norms).slope;
    EXPECT_NEAR(slope, 1.0 / 3.0, 0.15 / 3.0);
}

TEST(Reduction, ResidualBoundedByRateAtCenter) {
    // No first-order error term at a symmetric interior point: the rate is faster.
    std::vector<double> norms;
    for (double l : kLadder) norms.push_back(residual_norms(assemble_W(center().bg, l), 1.2).total());
    EXPECT_GT(fit_power(kLadder, norms).slope, 1.0 / 3.0);
}

TEST(Reduction, LineFitRecoversExactLine) {
    std::vector<double> x = {1, 2, 4, 7}, y;
    for (double v : x) y.push_back(3.0 - 0.5 * v);
    auto f = fit_line(x, y);
    EXPECT_NEAR(f.slope, -0.5, 1e-14);
    EXPECT_NEAR(f.intercept, 3.0, 1e-14);
    std::vector<double> p;
    for (double l : kLadder) p.push_back(2.0 * std::pow(l, 0.25));
    EXPECT_NEAR(fit_power(kLadder, p).slope, 0.25, 1e-12);
    EXPECT_THROW(fit_line({1.0}, {1.0}), std::invalid_argument);
}

TEST(Reduction, EnergyAtZero) {
    auto s = build_surface(0.05, 4);
    Potentials pot;
    pot.V1 = [](const Point& x) { return 1.0 + x.x * x.x; };
    pot.V2 = [](const Point& x) { return 2.0 + x.y; };
    PairField u{Field::zero(s), Field::zero(s)};
    const double l = 0.3, rho2 = 1.7, R2 = 1.0 / oracle::pi;
    // int (1 + x1^2) = 1 + pi R^4/4, int (2 + x2) = 2 on the unit-area disk.
    double expect = -l * (1.0 + oracle::pi * R2 * R2 / 4.0) - rho2 * std::log(2.0);
    EXPECT_NEAR(toda_energy(u, l, rho2, pot), expect, 1e-6);
}

TEST(Reduction, EnergyQuadraticInPerturbation) {
    auto app = assemble_W(center().bg, 1e-3);
    auto s = app.bg->surface;
    Eigen::VectorXd a(s->num_nodes()), b(s->num_nodes());
    for (int n = 0; n < s->num_nodes(); ++n) {
        const Point& x = s->nodes()[n];
        a[n] = std::cos(3.0 * x.x) + x.y;
        b[n] = x.x * x.y;
    }
    PairField phi{Field(s, a), Field(s, b)};
    phi.u1.project_mean_zero();
    phi.u2.project_mean_zero();
    auto Q = [&](double t) {
        PairField p = phi;
        p.u1.values *= t;
        p.u2.values *= t;
        return energy_W(app, &p).Q;
    };
    double q0 = energy_W(app).Q;
    EXPECT_NEAR(Q(0.0), q0, 1e-12 * std::abs(q0));
    // Second difference is 2 Q(phi, phi).
    double second = Q(1.0) - 2.0 * Q(0.0) + Q(-1.0);
    double qq = quad_form_Q(phi, phi);
    EXPECT_NEAR(second, 2.0 * qq, 1e-9 * std::abs(qq));
}

TEST(Reduction, MassConcentratesAtCenter) {
    std::vector<double> err;
    for (double l : kLadder) err.push_back(std::abs(energy_W(assemble_W(center().bg, l)).mass - 4.0 * kPi));
    for (size_t i = 1; i < err.size(); ++i) EXPECT_LT(err[i], err[i - 1]);
    EXPECT_LT(err.back(), 1e-3 * 4.0 * kPi);
}

TEST(Reduction, EnergySlopeAtCenter) {
    std::vector<double> E;
    for (double l : kLadder) E.push_back(energy_W(assemble_W(center().bg, l)).E);
    auto ex = reduced_energy_expansion(kLadder, E, 0.0, center().xi);
    EXPECT_NEAR(ex.expected_slope, -4.0 * kPi, 1e-14);
    EXPECT_NEAR(ex.slope, ex.expected_slope, 0.01 * std::abs(ex.expected_slope));
    EXPECT_THROW(reduced_energy_expansion({1e-2, 1e-3}, {1.0, 2.0}, 0.0, center().xi), std::invalid_argument);
}

TEST(Reduction, FixedPointContractsAndStaysOrthogonal) {
    for (double l : {1e-2, 1e-3}) {
        auto app = assemble_W(boundary().bg, l);
        auto r = solve_phi(app);
        ASSERT_TRUE(r.converged) << r.message;
        EXPECT_LT(r.max_ratio, 1.0);
        EXPECT_LT(r.orthogonality, 1e-10);
        EXPECT_NEAR(r.phi.u1.integral(), 0.0, 1e-12);
        EXPECT_NEAR(r.phi.u2.integral(), 0.0, 1e-12);
        EXPECT_LT(r.norm / (std::pow(l, 1.0 / 3.0) * std::abs(std::log(l))), 10.0);
        // At the fixed point F(phi) = sum c_k b_k modulo constants.
        auto F = toda_residual(app, r.phi);
        Eigen::VectorXd fit = F.F1;
        for (size_t k = 0; k < app.kernel_loads.size(); ++k) fit -= r.multipliers[k] * app.kernel_loads[k];
        const auto& m = app.bg->surface->neumann().mass_vector();
        fit -= (fit.dot(m) / m.squaredNorm()) * m;
        EXPECT_LT(dual_norm(*app.bg->surface, fit), 1e-8);
    }
}

TEST(Reduction, LinearSolveSatisfiesConstraints) {
    auto app = assemble_W(boundary().bg, 1e-3);
    const auto& s = *app.bg->surface;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> N;
    Eigen::VectorXd h1(s.num_nodes()), h2(s.num_nodes());
    for (int n = 0; n < s.num_nodes(); ++n) h1[n] = N(rng), h2[n] = N(rng);
    auto phi = solve_linear(app, h1, h2);
    EXPECT_NEAR(phi.u1.integral(), 0.0, 1e-10);
    EXPECT_NEAR(phi.u2.integral(), 0.0, 1e-10);
    for (const auto& b : app.kernel_loads) EXPECT_LT(std::abs(b.dot(phi.u1.values)), 1e-10 * b.norm() * phi.u1.values.norm());
}

TEST(Reduction, NewtonRecoversBoundaryBlowUp) {
    std::vector<double> max_u1, logs;
    double sup_u2_first = 0.0;
    PairField init;
    for (size_t i = 0; i < kLadder.size(); ++i) {
        auto app = assemble_W(boundary().bg, kLadder[i]);
        auto fp = solve_phi(app);
        ASSERT_TRUE(fp.converged);
        auto out = newton_polish(app, fp.phi);
        ASSERT_TRUE(out.converged) << out.message;
        EXPECT_LT(out.residual, 1e-8);
        EXPECT_LT(out.multipliers.lpNorm<Eigen::Infinity>(), 1e-6);
        if (i == 0) sup_u2_first = out.sup_u2;
        EXPECT_LE(out.sup_u2, sup_u2_first + 1.0);
        EXPECT_LT(out.sigma2[0][1], 0.1 * 4.0 * kPi);
        max_u1.push_back(out.max_u1);
        logs.push_back(-std::log(kLadder[i]));
        if (i + 1 == kLadder.size()) {
            EXPECT_NEAR(out.rho1, 2.0 * kPi, 0.05 * 2.0 * kPi);
            EXPECT_NEAR(out.sigma1[0][1], 4.0 * kPi, 0.1 * 4.0 * kPi);
        }
    }
    EXPECT_NEAR(fit_line(logs, max_u1).slope, 2.0, 0.4);
}
