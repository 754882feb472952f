#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "toda/meanfield.hpp"

using namespace toda;

namespace {

std::shared_ptr<const Surface> mesh() {
    static auto s = build_surface(0.025, 4);
    return s;
}

std::shared_ptr<const SingularWeight> weight_at(const Configuration& xi) {
    return std::make_shared<SingularWeight>(mesh(), xi, default_cutoff(xi), Potentials{}.V2);
}

MFSolution solve_at(const Configuration& xi, double rho2) {
    MFOptions o;
    o.newton_tol = 1e-11;
    auto sol = solve_mf(weight_at(xi), rho2, nullptr, o);
    EXPECT_TRUE(sol.converged);
    return sol;
}

// First zero of J1' by bisection; the first nonzero Neumann eigenvalue of
// the unit-area disk is (j'_{1,1})^2 pi.
double first_neumann_eigenvalue() {
    auto dj = [](double x) { return 0.5 * (std::cyl_bessel_j(0.0, x) - std::cyl_bessel_j(2.0, x)); };
    double a = 1.0, b = 3.0;
    for (int i = 0; i < 200; ++i) {
        double c = 0.5 * (a + b);
        (dj(a) * dj(c) <= 0 ? b : a) = c;
    }
    double j = 0.5 * (a + b);
    return j * j * oracle::pi;
}

double l2(const Field& a, const Field& b) {
    Field d(a.surface, a.values - b.values);
    return d.l2_norm();
}

}  // namespace

TEST(MeanField, ConstantWeightGivesZero) {
    auto w = weight_at(make_configuration(0, {}));
    auto sol = solve_mf(w, 3.0);
    EXPECT_TRUE(sol.converged);
    EXPECT_LT(sol.z.values.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(sol.energy, -6.0 * std::log(mesh()->integrate([](const Point&) { return 1.0; })), 1e-12);
}

TEST(MeanField, WeightVanishesAtPoints) {
    auto xi = make_configuration(1, {Point(0.1, 0.0), Point(0.0, -1.0)});
    auto w = weight_at(xi);
    for (const auto& p : xi.points) EXPECT_EQ((*w)(p), 0.0);
    EXPECT_GT(w->qp_values().minCoeff(), -1e-300);
    EXPECT_TRUE(std::isfinite(w->qp_values().maxCoeff()));
}

TEST(MeanField, EnergyAtZeroAndGradient) {
    auto xi = make_configuration(1, {Point(0.05, 0.1)});
    auto w = weight_at(xi);
    double rho2 = 2.0;
    Field z0 = Field::zero(mesh());
    double mass = mesh()->integrate_qp([&](const QuadPoint& q) { return w->at(q); });
    EXPECT_NEAR(mf_energy(z0, *w, rho2), -2 * rho2 * std::log(mass), 1e-12);
    // Directional derivative against central differences.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> N(0, 1);
    Eigen::VectorXd zv(mesh()->num_nodes()), dv(mesh()->num_nodes());
    for (int i = 0; i < zv.size(); ++i) zv[i] = 0.3 * std::sin(3 * mesh()->nodes()[i].x), dv[i] = N(rng);
    Field z(mesh(), zv);
    z.project_mean_zero();
    Field d(mesh(), dv);
    d.project_mean_zero();
    double h = 1e-6;
    Field zp(mesh(), z.values + h * d.values), zm(mesh(), z.values - h * d.values);
    double fd = (mf_energy(zp, *w, rho2) - mf_energy(zm, *w, rho2)) / (2 * h);
    double an = mf_residual(z, *w, rho2).dot(d.values);
    EXPECT_NEAR(an, fd, 1e-6 * std::abs(fd));
}

TEST(MeanField, SmallRhoStaysNearZero) {
    auto sol = solve_at(make_configuration(1, {Point(0, 0)}), 1e-3);
    EXPECT_LT(sol.z.values.cwiseAbs().maxCoeff(), 0.05);
}

TEST(MeanField, ConvergesAndIsUniqueAtSmallRho) {
    auto xi = make_configuration(1, {Point(0, 0)});
    auto w = weight_at(xi);
    double rho2 = kPi / 2;
    auto a = solve_mf(w, rho2);
    EXPECT_TRUE(a.converged);
    EXPECT_LE(a.residual, 1e-8);
    EXPECT_NEAR(a.z.integral(), 0.0, 1e-12);
    EXPECT_LE(a.energy, mf_energy(Field::zero(mesh()), *w, rho2));
    for (size_t i = 1; i < a.descent_energies.size(); ++i)
        EXPECT_LT(a.descent_energies[i], a.descent_energies[i - 1]);
    Eigen::VectorXd p(mesh()->num_nodes());
    for (int i = 0; i < p.size(); ++i) p[i] = std::cos(7 * mesh()->nodes()[i].y) + mesh()->nodes()[i].x;
    Field init(mesh(), p);
    auto b = solve_mf(w, rho2, &init);
    EXPECT_TRUE(b.converged);
    EXPECT_LT(l2(a.z, b.z), 1e-6);
}

TEST(MeanField, MarginAtZeroRhoIsNeumannEigenvalue) {
    auto xi = make_configuration(1, {Point(0, 0)});
    auto w = weight_at(xi);
    auto s0 = solve_mf(w, 0.0);
    double m0 = mf_linearized_margin(s0);
    EXPECT_NEAR(m0, first_neumann_eigenvalue(), 0.02 * first_neumann_eigenvalue());
    auto s1 = solve_mf(w, 1e-3);
    EXPECT_NEAR(mf_linearized_margin(s1), m0, 0.05 * m0);
    auto a = solve_mf(w, 2.0), b = solve_mf(w, 2.0 + 1e-4);
    double ma = mf_linearized_margin(a), mb = mf_linearized_margin(b);
    EXPECT_GT(ma, 1e-6);
    EXPECT_NEAR(ma, mb, 1e-2 * ma);
}

TEST(MeanField, ImplicitDerivativeMatchesFiniteDifferences) {
    double rho2 = kPi / 2, h = 1e-4;
    for (auto xi : {make_configuration(1, {Point(0.1, 0.05)}), make_configuration(0, {Point(0.2, 1.0)})}) {
        auto sol = solve_at(xi, rho2);
        for (int i = 0; i < xi.dims(0); ++i) {
            Field dz = dz_dxi(sol, 0, i);
            auto c = xi.coordinates();
            auto cp = c, cm = c;
            cp[i] += h, cm[i] -= h;
            auto zp = solve_at(xi.with_coordinates(cp), rho2).z, zm = solve_at(xi.with_coordinates(cm), rho2).z;
            Field fd(mesh(), (zp.values - zm.values) / (2 * h));
            EXPECT_LT(l2(dz, fd), 1e-3) << i;
        }
    }
}

TEST(MeanField, EnergyDerivativeIdentity) {
    // d/dxi I(z(xi), xi) = rho(xi)/2 d/dx z(x, xi) at x = xi.
    double rho2 = 2.0, h = 1e-4;
    for (auto xi : {make_configuration(1, {Point(0.1, -0.15)}), make_configuration(0, {Point(0.3, 1.0)})}) {
        auto sol = solve_at(xi, rho2);
        for (int i = 0; i < xi.dims(0); ++i) {
            auto c = xi.coordinates();
            auto cp = c, cm = c;
            cp[i] += h, cm[i] -= h;
            double fd = (solve_at(xi.with_coordinates(cp), rho2).energy -
                         solve_at(xi.with_coordinates(cm), rho2).energy) / (2 * h);
            double id = 0.5 * xi.weight(0) * z_derivative_at_point(sol, 0, i);
            EXPECT_NEAR(id, fd, 1e-3 * std::abs(fd) + 1e-7) << i;
        }
    }
}

TEST(MeanField, RotationDerivativeVanishesOnSymmetryAxis) {
    auto xi = make_configuration(0, {Point(1.0, 0.0)});
    auto sol = solve_at(xi, 2.0);
    EXPECT_NEAR(z_derivative_at_point(sol, 0, 0), 0.0, 1e-5);
}
