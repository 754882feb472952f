#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "toda/shadow.hpp"

using namespace toda;

namespace {

std::shared_ptr<const Surface> mesh025() {
    static auto s = build_surface(0.025, 4);
    return s;
}

ShadowContext context(double rho2) {
    ShadowContext ctx;
    ctx.surface = mesh025();
    ctx.rho2 = rho2;
    return ctx;
}

Point rotate(const Point& p, double a) {
    return Point(std::cos(a) * p.x - std::sin(a) * p.y, std::sin(a) * p.x + std::cos(a) * p.y);
}

}  // namespace

TEST(Shadow, KirchhoffRouthAtCenterIsScaledRobin) {
    auto ctx = context(0.0);
    auto kr = kirchhoff_routh(ctx, make_configuration(1, {Point(0, 0)}), false);
    double expect = 64.0 * kPi * kPi * oracle::center_constant();
    EXPECT_NEAR(kr.value, expect, 1e-3 * std::abs(expect));
}

TEST(Shadow, KirchhoffRouthTwoInteriorPointsMatchesImages) {
    auto ctx = context(0.0);
    Point a(0.15, 0.05), b(-0.1, -0.2);
    auto kr = kirchhoff_routh(ctx, make_configuration(2, {a, b}), false);
    double r2 = 64.0 * kPi * kPi;
    double expect = r2 * (oracle::robin_interior(a.x, a.y) + oracle::robin_interior(b.x, b.y)) +
                    2.0 * r2 * oracle::green_images(a.x, a.y, b.x, b.y);
    EXPECT_NEAR(kr.value, expect, 1e-3 * std::abs(expect));
}

TEST(Shadow, KirchhoffRouthRotationInvariant) {
    // Invariance holds up to the mesh, which is not rotationally symmetric.
    auto ctx = context(0.0);
    std::vector<Point> pts = {Point(0.2, 0.1), Point(0.3, -0.35)};
    double f0 = kirchhoff_routh(ctx, make_configuration(1, pts), false).value;
    for (double a : {0.7, 2.1, 4.0}) {
        double f = kirchhoff_routh(ctx, make_configuration(1, {rotate(pts[0], a), rotate(pts[1], a)}), false).value;
        EXPECT_NEAR(f, f0, 1e-3 * std::abs(f0));
    }
}

TEST(Shadow, KirchhoffRouthDivergesTowardBoundary) {
    auto ctx = context(0.0);
    double R = disk_radius();
    std::vector<double> F;
    for (double d : {0.2, 0.12, 0.08, 0.05}) F.push_back(kirchhoff_routh(ctx, make_configuration(1, {Point(R - d, 0.0)}), false).value);
    EXPECT_LT(F[1], F[2]);
    EXPECT_LT(F[2], F[3]);
}

TEST(Shadow, KirchhoffRouthGradientMatchesFiniteDifferences) {
    auto ctx = context(0.0);
    auto xi = make_configuration(1, {Point(0.1, -0.12), Point(0.3, 1.0)});
    auto kr = kirchhoff_routh(ctx, xi, true);
    auto c = xi.coordinates();
    for (int a = 0; a < xi.dof(); ++a) {
        auto cp = c, cm = c;
        cp[a] += 1e-4;
        cm[a] -= 1e-4;
        double fd = (kirchhoff_routh(ctx, xi.with_coordinates(cp), false).value -
                     kirchhoff_routh(ctx, xi.with_coordinates(cm), false).value) / 2e-4;
        EXPECT_NEAR(kr.grad[a], fd, 1e-2 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Shadow, LambdaDecouplesAtZeroRho) {
    auto ctx = context(0.0);
    auto s = lambda_km(ctx, make_configuration(1, {Point(0.1, 0.05), Point(0.0, -1.0)}));
    EXPECT_NEAR(s.Lambda, -0.25 * s.F, 1e-12 * std::abs(s.F));
    EXPECT_LT(s.gradZ.lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(Shadow, LambdaGradientMatchesFiniteDifferences) {
    auto ctx = context(kPi / 2);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-0.25, 0.25), T(0.0, 2 * kPi * disk_radius());
    auto xi = make_configuration(1, {Point(U(rng), U(rng)), boundary_point(T(rng))});
    auto s = lambda_km(ctx, xi);
    auto c = xi.coordinates();
    for (int a = 0; a < xi.dof(); ++a) {
        auto cp = c, cm = c;
        cp[a] += 1e-4;
        cm[a] -= 1e-4;
        double fd = (lambda_km(ctx, xi.with_coordinates(cp), false).Lambda -
                     lambda_km(ctx, xi.with_coordinates(cm), false).Lambda) / 2e-4;
        EXPECT_NEAR(s.gradLambda[a], fd, 1e-2 * std::abs(fd));
    }
}

TEST(Shadow, AntipodalBoundaryGradientsCancel) {
    auto ctx = context(kPi / 2);
    double R = disk_radius();
    auto s = lambda_km(ctx, make_configuration(0, {Point(R, 0.0), Point(-R, 0.0)}));
    // Reflection through the diameter makes both vanish; the sum also cancels
    // under the half-turn.
    EXPECT_NEAR(s.gradLambda[0] + s.gradLambda[1], 0.0, 1e-3);
}

TEST(Shadow, ResidualAtTOneIsKirchhoffRouthGradient) {
    auto ctx = context(kPi / 2);
    auto xi = make_configuration(1, {Point(0.1, 0.05), Point(0.0, -1.0)});
    auto s = lambda_km(ctx, xi);
    ShadowState st;
    st.xi = xi;
    st.w = s.mf->z;
    st.t = 1.0;
    auto r = shadow_residual(ctx, st);
    EXPECT_LT((r.vector - s.gradF).norm(), 1e-12 * s.gradF.norm());
    EXPECT_LT(dual_norm(*ctx.surface, r.field), 1e-7);
}

TEST(Shadow, ResidualAffineInT) {
    auto ctx = context(kPi / 2);
    auto xi = make_configuration(1, {Point(0.1, 0.05), Point(0.0, -1.0)});
    ShadowState st;
    st.xi = xi;
    st.w = lambda_km(ctx, xi, false).mf->z;
    std::vector<ShadowResidual> r;
    for (double t : {0.0, 0.4, 1.0}) {
        st.t = t;
        r.push_back(shadow_residual(ctx, st));
    }
    EXPECT_EQ((r[0].field - r[2].field).norm(), 0.0);
    Eigen::VectorXd mid = 0.6 * r[0].vector + 0.4 * r[2].vector;
    EXPECT_LT((r[1].vector - mid).norm(), 1e-10 * (1.0 + r[1].vector.norm()));
}

TEST(Shadow, ContinuationKeepsCenterFixed) {
    auto ctx = context(kPi / 2);
    auto run = shadow_continuation(ctx, make_configuration(1, {Point(0.0, 0.0)}));
    ASSERT_TRUE(run.completed) << run.message;
    EXPECT_EQ(run.path.back().t, 0.0);
    for (const auto& s : run.path) {
        EXPECT_LT(s.residual, 1e-7);
        EXPECT_LT(s.xi.points[0].norm(), 1e-6);
    }
    const auto& last = run.path.back();
    EXPECT_GT(last.condition, 0.0);
    EXPECT_NEAR(last.w.surface->integrate_qp([&](const QuadPoint& q) { return last.w.at(q); }), 0.0, 1e-10);
    auto s = lambda_km(ctx, last.xi, true, &last.w);
    EXPECT_LT(s.gradLambda.lpNorm<Eigen::Infinity>(), 1e-5);
}

TEST(Shadow, CenterIsMinimizerOfRadialSlice) {
    auto ctx = context(kPi / 2);
    SearchOptions opts;
    opts.multistart = 2;
    auto cps = find_critical_points(ctx, 1, 1, opts);
    ASSERT_FALSE(cps.empty());
    // Brute-force scan of -Lambda along a radial slice.
    double best = 1e300, arg = 0.0;
    for (int i = -10; i <= 10; ++i) {
        double x = 0.002 * i;
        double v = -lambda_km(ctx, make_configuration(1, {Point(x, 0.0)}), false).Lambda;
        if (v < best) best = v, arg = x;
    }
    EXPECT_NEAR(arg, 0.0, 1e-12);
    for (const auto& c : cps) {
        EXPECT_LT(c.sample.xi.points[0].norm(), 1e-4);
        EXPECT_EQ(c.classification, "min");
        EXPECT_LT(c.sample.gradLambda.lpNorm<Eigen::Infinity>(), 1e-6);
    }
}

TEST(Shadow, BoundaryPointGivesDegenerateCircle) {
    auto ctx = context(0.0);
    SearchOptions opts;
    opts.multistart = 3;
    auto cps = find_critical_points(ctx, 0, 1, opts);
    ASSERT_FALSE(cps.empty());
    for (const auto& c : cps) {
        EXPECT_LT(c.sample.gradLambda.lpNorm<Eigen::Infinity>(), 1e-6);
        EXPECT_TRUE(c.degenerate);
    }
}
