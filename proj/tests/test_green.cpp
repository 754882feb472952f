#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "toda/green.hpp"

using namespace toda;

namespace {

std::shared_ptr<const Surface> mesh025() {
    static auto s = build_surface(0.025, 4);
    return s;
}

// Mesh refined around each pole for its cut-off radius.
std::shared_ptr<const Surface> graded(const std::vector<Point>& poles, const std::vector<double>& r0) {
    std::vector<RefinementSite> sites;
    for (const auto& p : poles)
        for (double r : r0) sites.push_back({p, r, 0.0});
    return build_surface(0.025, 4, sites);
}

// L2 distance between G and a reference on {|x - xi| > cut}.
double l2_away(const GreenTable& g, const std::function<double(const Point&)>& ref, double cut) {
    const auto& s = *g.surface;
    double e = 0.0;
    for (const auto& q : s.quad_points()) {
        if ((q.x - g.pole).norm() <= cut) continue;
        double d = g.at(q) - ref(q.x);
        e += q.w * d * d;
    }
    return std::sqrt(e);
}

}  // namespace

TEST(Green, WeightsByLocation) {
    EXPECT_DOUBLE_EQ(rho_weight(Point(0.1, 0.0)), 8 * kPi);
    EXPECT_DOUBLE_EQ(rho_weight(Point(disk_radius(), 0.0)), 4 * kPi);
}

TEST(Green, CenterPoleMatchesRadialOracle) {
    auto g = green_function(graded({Point(0, 0)}, {0.07}), Point(0, 0), CutOff(0.07));
    EXPECT_LT(g.solve_residual, 1e-10);
    double err = l2_away(g, [](const Point& x) { return oracle::green_center(x.x, x.y); }, 0.05);
    EXPECT_LT(err, 1e-4);
    EXPECT_NEAR(robin(g).value, oracle::center_constant(), 1e-4);
}

TEST(Green, OffCenterPoleMatchesImages) {
    Point xi(0.2, -0.15);
    auto g = green_function(graded({xi}, {0.039}), xi, CutOff(0.039));
    double err = l2_away(g, [&](const Point& x) { return oracle::green_images(x.x, x.y, xi.x, xi.y); }, 0.1);
    EXPECT_LT(err, 1e-3);
    EXPECT_NEAR(robin(g).value, oracle::robin_interior(xi.x, xi.y), 1e-4);
}

TEST(Green, ImageOracleHasZeroMean) {
    // Independent check of the oracle constant by polar quadrature around the pole.
    Point xi(0.2, -0.15);
    double R = oracle::radius();
    double s = 0.0;
    for (int k = 0; k < 256; ++k) {
        double t = 2 * oracle::pi * (k + 0.5) / 256;
        double c = std::cos(t), sn = std::sin(t);
        // Distance to the circle along the ray from xi.
        double b = xi.x * c + xi.y * sn;
        double L = -b + std::sqrt(b * b + R * R - xi.norm2());
        s += (2 * oracle::pi / 256) * oracle::integrate(
                 [&](double r) { return r * oracle::green_images(xi.x + r * c, xi.y + r * sn, xi.x, xi.y); },
                 0.0, L, 16);
    }
    EXPECT_NEAR(s, 0.0, 1e-8);
}

TEST(Green, BoundaryPoleRobin) {
    double R = disk_radius();
    auto g = green_function(graded({Point(0.0, R)}, {0.1}), Point(0.0, R), CutOff(0.1));
    EXPECT_NEAR(robin(g).value, oracle::robin_boundary(), 2e-4);
}

TEST(Green, MeanZero) {
    for (Point xi : {Point(0.1, 0.1), Point(disk_radius(), 0.0)}) {
        auto s = build_surface(0.025, 4, {{xi, 0.05, 1e-4}});
        auto g = green_function(s, xi, CutOff(0.05));
        auto rule = hybrid_rule(*s, {{g.chart, 0.05, 1e-4}});
        double total = integrate_rule(rule, [&](const QuadPoint& q) { return g.at(q); });
        EXPECT_NEAR(total, 0.0, 1e-7);
    }
}

TEST(Green, WeakLaplacian) {
    // int G (-Delta phi) = phi(xi) - int phi for a Neumann test function.
    double R = disk_radius(), k = kPi / R;
    auto phi = [&](const Point& x) { return std::cos(k * x.norm()); };
    auto lap = [&](const Point& x) {
        double r = x.norm();
        double sr = r < 1e-12 ? k : std::sin(k * r) / r;
        return k * k * std::cos(k * r) + k * sr;
    };
    Point xi(0.15, 0.1);
    auto s = graded({xi}, {0.04});
    auto g = green_function(s, xi, CutOff(0.04));
    auto rule = hybrid_rule(*s, {{g.chart, 0.04, 1e-4}});
    double lhs = integrate_rule(rule, [&](const QuadPoint& q) { return g.at(q) * lap(q.x); });
    double mean = s->integrate(phi);
    EXPECT_NEAR(lhs, phi(xi) - mean, 1e-4);
}

TEST(Green, Symmetry) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double R = disk_radius(), worst = 0.0;
    int pairs = 0;
    while (pairs < 20) {
        auto draw = [&] {
            double r = (R - 0.12) * std::sqrt(U(rng)), t = 2 * kPi * U(rng);
            return Point(r * std::cos(t), r * std::sin(t));
        };
        Point a = draw(), b = draw();
        if ((a - b).norm() < 0.15) continue;
        double r0 = std::min({0.05, distance_to_boundary(a) / 8, distance_to_boundary(b) / 8});
        CutOff cut(r0);
        auto s = mesh025();
        double gab = green_function(s, b, cut).smooth(a).value;
        double gba = green_function(s, a, cut).smooth(b).value;
        worst = std::max(worst, std::abs(gab - gba));
        ++pairs;
    }
    EXPECT_LT(worst, 2e-4);
}

TEST(Green, RobinIndependentOfCutoff) {
    Point xi(0.1, 0.05);
    auto s = graded({xi}, {0.05, 0.025});
    double a = robin(s, xi, CutOff(0.05)).value;
    double b = robin(s, xi, CutOff(0.025)).value;
    EXPECT_NEAR(a, b, 1e-5);
}

TEST(Green, RobinDivergesTowardBoundary) {
    double R = disk_radius();
    std::vector<double> v;
    for (double d : {0.2, 0.12, 0.08, 0.06}) {
        Point xi(R - d, 0.0);
        auto s = graded({xi}, {d / 8});
        v.push_back(robin(s, xi, CutOff(d / 8)).value);
        EXPECT_NEAR(v.back(), oracle::robin_interior(xi.x, xi.y), 2e-3);
    }
    EXPECT_LT(v[1], v[2]);
    EXPECT_LT(v[2], v[3]);
}

TEST(Green, GradientInXMatchesOracle) {
    auto g = green_function(graded({Point(0, 0)}, {0.07}), Point(0, 0), CutOff(0.07));
    Point x(-0.35, 0.05);
    Point grad = green_gradient(g, x, GreenDerivative::InX);
    double g1, g2;
    oracle::green_center_gradient(x.x, x.y, g1, g2);
    EXPECT_NEAR(grad.x, g1, 1e-3);
    EXPECT_NEAR(grad.y, g2, 1e-3);
}

TEST(Green, RobinGradientVanishesAtCenter) {
    Point g = robin_gradient(graded({Point(0, 0)}, {0.07}), Point(0, 0), CutOff(0.07), 1e-4);
    EXPECT_NEAR(g.x, 0.0, 1e-4);
    EXPECT_NEAR(g.y, 0.0, 1e-4);
}

TEST(Green, GradientInXiMatchesTransposedGradientInX) {
    CutOff cut(0.03);
    Point xi(0.1, -0.2), x(-0.2, 0.15);
    auto s = graded({xi, x}, {0.03});
    auto gxi = green_function(s, xi, cut);
    auto gx = green_function(s, x, cut);
    Point dxi = green_gradient(gxi, x, GreenDerivative::InXi, 1e-4);
    Point dx = green_gradient(gx, xi, GreenDerivative::InX);
    EXPECT_NEAR(dxi.x, dx.x, 2e-3);
    EXPECT_NEAR(dxi.y, dx.y, 2e-3);
}

TEST(Green, SlopeNearPole) {
    auto s = build_surface(0.025, 4, {{Point(0.1, 0.0), 0.1, 1e-3}, {Point(disk_radius(), 0.0), 0.1, 1e-3}});
    for (Point xi : {Point(0.1, 0.0), Point(disk_radius(), 0.0)}) {
        auto g = green_function(s, xi, CutOff(0.05));
        double h = s->local_h(xi, 0.0);
        // Least squares of G against log(1/|y|) along rays into the surface.
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        int n = 0;
        for (int i = 0; i <= 20; ++i) {
            double r = h * std::pow(0.025 / h, i / 20.0);
            for (double t : {0.5, 1.5, 2.5}) {
                Point y(r * std::cos(t), r * std::sin(t));
                double X = std::log(1.0 / r), Y = g(g.chart.to_surface(y));
                sx += X, sy += Y, sxx += X * X, sxy += X * Y, ++n;
            }
        }
        double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        double expect = g.chart.is_boundary() ? 1.0 / kPi : 1.0 / (2 * kPi);
        EXPECT_NEAR(slope, expect, 0.02 * expect);
    }
}

TEST(Green, MollifiedDiracConverges) {
    Point xi(0.1, 0.1);
    auto s = graded({xi}, {0.05});
    auto g = green_function(s, xi, CutOff(0.05));
    std::vector<double> errs;
    for (double eps : {0.16, 0.08, 0.04}) {
        // Normalized quadratic bump of radius eps.
        auto f = [&](const Point& x) {
            double t = (x - xi).norm2() / (eps * eps);
            return t < 1 ? 3.0 / (kPi * eps * eps) * (1 - t) * (1 - t) : 0.0;
        };
        Field u = solve_neumann(s, f);
        double e = 0.0;
        for (const auto& q : s->quad_points()) {
            if ((q.x - xi).norm() < 0.15) continue;
            double d = u.at(q) - g.at(q);
            e += q.w * d * d;
        }
        errs.push_back(std::sqrt(e));
    }
    EXPECT_LT(errs[1], errs[0]);
    EXPECT_LT(errs[2], errs[1]);
}

TEST(Green, CacheBuildsOncePerPole) {
    GreenCache cache(mesh025(), CutOff(0.05));
    const GreenTable& a = cache.get(Point(0.1, 0.0));
    const GreenTable& b = cache.get(Point(0.1, 0.0));
    EXPECT_EQ(&a, &b);
}

TEST(Green, RejectsLargeCutoff) {
    EXPECT_THROW(green_function(mesh025(), Point(0.4, 0.0), CutOff(0.1)), std::invalid_argument);
}
