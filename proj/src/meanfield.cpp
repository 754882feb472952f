#include "toda/meanfield.hpp"

#include <algorithm>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace toda {

// ------------------------------------------------------------- Configuration

double Configuration::total_weight() const {
    double s = 0.0;
    for (int j = 0; j < m(); ++j) s += weight(j);
    return s;
}

std::vector<double> Configuration::coordinates() const {
    std::vector<double> c;
    for (int j = 0; j < m(); ++j) {
        if (interior(j)) {
            c.push_back(points[j].x);
            c.push_back(points[j].y);
        } else {
            c.push_back(boundary_arclength(points[j]));
        }
    }
    return c;
}

Configuration Configuration::with_coordinates(const std::vector<double>& c) const {
    if (static_cast<int>(c.size()) != dof()) throw std::invalid_argument("with_coordinates: size mismatch");
    Configuration out = *this;
    for (int j = 0; j < m(); ++j) {
        int o = offset(j);
        out.points[j] = interior(j) ? Point(c[o], c[o + 1]) : boundary_point(c[o]);
    }
    return out;
}

double Configuration::separation() const {
    double e = std::numeric_limits<double>::infinity();
    for (int j = 0; j < m(); ++j) {
        if (interior(j)) e = std::min(e, distance_to_boundary(points[j]));
        for (int l = j + 1; l < m(); ++l) e = std::min(e, (points[j] - points[l]).norm());
    }
    return e;
}

Configuration make_configuration(int k, std::vector<Point> points) {
    if (k < 0 || k > static_cast<int>(points.size())) throw std::invalid_argument("configuration: need 0 <= k <= m");
    const double R = disk_radius();
    for (int j = 0; j < static_cast<int>(points.size()); ++j) {
        double r = points[j].norm();
        if (j < k) {
            if (r >= R) throw std::invalid_argument("configuration: interior point outside the disk");
        } else {
            if (r < 1e-12) throw std::invalid_argument("configuration: boundary point at the center");
            points[j] = points[j] * (R / r);
            points[j] = boundary_point(boundary_arclength(points[j]));
        }
    }
    Configuration c{k, std::move(points)};
    if (c.m() > 1 && !(c.separation() > 0.0)) throw std::invalid_argument("configuration: coincident points");
    return c;
}

CutOff default_cutoff(const Configuration& xi) {
    double r0 = 0.05;
    for (int j = 0; j < xi.m(); ++j) {
        if (xi.interior(j)) r0 = std::min(r0, 0.95 * distance_to_boundary(xi.points[j]) / 8.0);
        for (int l = j + 1; l < xi.m(); ++l) r0 = std::min(r0, (xi.points[j] - xi.points[l]).norm() / 5.0);
    }
    return CutOff(r0);
}

std::vector<RefinementSite> configuration_sites(const Configuration& xi, double core) {
    CutOff cut = default_cutoff(xi);
    std::vector<RefinementSite> s;
    for (const auto& p : xi.points) s.push_back({p, cut.r0(), core});
    return s;
}

// ------------------------------------------------------------ SingularWeight

SingularWeight::SingularWeight(std::shared_ptr<const Surface> surface, const Configuration& xi,
                               const CutOff& cut, PointFunction V2)
    : surface_(std::move(surface)), xi_(xi), cut_(cut), V2_(std::move(V2)) {
    for (const auto& p : xi_.points) green_.push_back(green_function(surface_, p, cut_));
    const auto& qps = surface_->quad_points();
    qp_.resize(static_cast<Eigen::Index>(qps.size()));
    for (size_t i = 0; i < qps.size(); ++i) qp_[static_cast<Eigen::Index>(i)] = at(qps[i]);
}

double SingularWeight::operator()(const Point& x) const {
    double v = V2_(x), e = 0.0;
    for (size_t j = 0; j < green_.size(); ++j) {
        const auto& g = green_[j];
        v *= (x - g.pole).norm2();
        e += 0.5 * g.weight * (g.Ht(x) + g.constant);
    }
    return v * std::exp(-e);
}

double SingularWeight::at(const QuadPoint& q) const {
    double v = V2_(q.x), e = 0.0;
    for (const auto& g : green_) {
        v *= (q.x - g.pole).norm2();
        e += 0.5 * g.weight * (g.Ht.at(q) + g.constant);
    }
    return v * std::exp(-e);
}

Eigen::VectorXd SingularWeight::log_derivative(int j, int i, double step) const {
    auto d = pole_derivative(green_.at(j), i, step);
    const auto& qps = surface_->quad_points();
    Eigen::VectorXd out(static_cast<Eigen::Index>(qps.size()));
    double half = 0.5 * green_[j].weight;
    for (size_t k = 0; k < qps.size(); ++k) out[static_cast<Eigen::Index>(k)] = -half * d.at(qps[k]);
    return out;
}

// ------------------------------------------------------------------ energies

namespace {

struct Density {
    // Normalized density p = W e^z / int W e^z at the quadrature points.
    Eigen::VectorXd p;
    // log int W e^z.
    double log_mass = 0.0;
};

Density density(const Field& z, const SingularWeight& w) {
    const auto& s = *z.surface;
    const auto& qps = s.quad_points();
    Eigen::VectorXd zq(static_cast<Eigen::Index>(qps.size()));
    for (size_t k = 0; k < qps.size(); ++k) zq[static_cast<Eigen::Index>(k)] = z.at(qps[k]);
    double zmax = zq.maxCoeff();
    Density d;
    d.p.resize(zq.size());
    double mass = 0.0;
    for (Eigen::Index k = 0; k < zq.size(); ++k) {
        d.p[k] = qps[static_cast<size_t>(k)].w * w.qp_values()[k] * std::exp(zq[k] - zmax);
        mass += d.p[k];
    }
    if (!(mass > 0.0)) throw std::runtime_error("mean-field weight has zero mass");
    d.p /= mass;
    d.log_mass = zmax + std::log(mass);
    return d;
}

// b_n = int p psi_n where p already carries the quadrature weights.
Eigen::VectorXd density_load(const Surface& s, const Eigen::VectorXd& pw) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(s.num_nodes());
    const auto& qps = s.quad_points();
    for (size_t k = 0; k < qps.size(); ++k) {
        const auto& t = s.elements()[qps[k].elem];
        for (int i = 0; i < 3; ++i) b[t[i]] += pw[static_cast<Eigen::Index>(k)] * qps[k].bary[i];
    }
    return b;
}

Field mean_zero(Field z) {
    z.project_mean_zero();
    return z;
}

}  // namespace

double mf_energy(const Field& z, const SingularWeight& weight, double rho2) {
    const auto& K = z.surface->neumann().stiffness();
    double dir = 0.5 * z.values.dot(K * z.values);
    if (rho2 == 0.0) return dir;
    return dir - 2.0 * rho2 * density(z, weight).log_mass;
}

Eigen::VectorXd mf_residual(const Field& z, const SingularWeight& weight, double rho2) {
    const auto& op = z.surface->neumann();
    Eigen::VectorXd r = op.stiffness() * z.values;
    if (rho2 == 0.0) return r;
    Density d = density(z, weight);
    r -= 2.0 * rho2 * (density_load(*z.surface, d.p) - op.mass_vector());
    return r;
}

MFHessian mf_hessian(const Field& z, const SingularWeight& weight, double rho2) {
    const auto& s = *z.surface;
    MFHessian h;
    h.A = s.neumann().stiffness();
    h.b = Eigen::VectorXd::Zero(s.num_nodes());
    if (rho2 == 0.0) return h;
    Density d = density(z, weight);
    // Quadrature weights are already inside p; divide them back out.
    Eigen::VectorXd coef(d.p.size());
    const auto& qps = s.quad_points();
    for (Eigen::Index k = 0; k < d.p.size(); ++k) coef[k] = d.p[k] / qps[static_cast<size_t>(k)].w;
    h.A -= 2.0 * rho2 * assemble_weighted_mass(s, qps, coef);
    h.b = density_load(s, d.p);
    h.beta = 2.0 * rho2;
    return h;
}

HessianSolver::HessianSolver(const Surface& surface, const MFHessian& h) : n_(surface.num_nodes()) {
    const auto& m = surface.neumann().mass_vector();
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(h.A.nonZeros() + 4 * n_ + 1);
    for (int k = 0; k < h.A.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(h.A, k); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < n_; ++i) {
        t.emplace_back(i, n_, m[i]);
        t.emplace_back(n_, i, m[i]);
        if (h.beta != 0.0 && h.b[i] != 0.0) {
            t.emplace_back(i, n_ + 1, h.beta * h.b[i]);
            t.emplace_back(n_ + 1, i, -h.b[i]);
        }
    }
    t.emplace_back(n_ + 1, n_ + 1, 1.0);
    S_.resize(n_ + 2, n_ + 2);
    S_.setFromTriplets(t.begin(), t.end());
    S_.makeCompressed();
    lu_.analyzePattern(S_);
    lu_.factorize(S_);
    if (lu_.info() != Eigen::Success) throw std::runtime_error("mean-field Hessian is singular");
}

Eigen::VectorXd HessianSolver::solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(n_ + 2);
    r.head(n_) = rhs;
    Eigen::VectorXd x = lu_.solve(r);
    return x.head(n_);
}

// ------------------------------------------------------------------- solver

MFSolution solve_mf(std::shared_ptr<const SingularWeight> weight, double rho2, const Field* init,
                    const MFOptions& opts) {
    if (!(rho2 >= 0.0)) throw std::invalid_argument("solve_mf: rho2 must be non-negative");
    const auto& surface = weight->surface();
    const auto& op = surface->neumann();
    const bool coercive = rho2 < 2.0 * kPi;
    if (!coercive && !init)
        throw std::invalid_argument("solve_mf: rho2 >= 2 pi requires an initial guess (Newton only)");

    MFSolution sol;
    sol.weight = weight;
    sol.rho2 = rho2;
    sol.z = init ? mean_zero(*init) : Field::zero(surface);
    if (init && init->surface != surface) throw std::invalid_argument("solve_mf: init lives on another mesh");

    const auto& w = *weight;
    if (coercive) {
        double I = mf_energy(sol.z, w, rho2);
        sol.descent_energies.push_back(I);
        for (int it = 0; it < opts.max_descent; ++it) {
            Eigen::VectorXd g = mf_residual(sol.z, w, rho2);
            Eigen::VectorXd d = -op.solve(g);
            double gn2 = -g.dot(d);
            if (std::sqrt(std::max(0.0, gn2)) <= opts.descent_tol) break;
            double t = 1.0;
            bool accepted = false;
            for (int k = 0; k < 40; ++k, t *= 0.5) {
                Field trial(surface, sol.z.values + t * d, true);
                double It = mf_energy(trial, w, rho2);
                if (It <= I - 1e-4 * t * gn2 && It < I) {
                    sol.z = trial;
                    I = It;
                    accepted = true;
                    break;
                }
            }
            if (!accepted) break;
            sol.descent_energies.push_back(I);
            ++sol.descent_iterations;
        }
    }

    double res = dual_norm(*surface, mf_residual(sol.z, w, rho2));
    for (int it = 0; it < opts.max_newton && res > opts.newton_tol; ++it) {
        HessianSolver hs(*surface, mf_hessian(sol.z, w, rho2));
        Eigen::VectorXd dz = hs.solve(-mf_residual(sol.z, w, rho2));
        double t = 1.0;
        bool accepted = false;
        for (int k = 0; k < 7; ++k, t *= 0.5) {
            Field trial(surface, sol.z.values + t * dz, true);
            trial.project_mean_zero();
            double rt = dual_norm(*surface, mf_residual(trial, w, rho2));
            if (rt < (1.0 - 0.25 * t) * res || rt <= opts.newton_tol) {
                sol.z = trial;
                res = rt;
                accepted = true;
                break;
            }
        }
        ++sol.newton_iterations;
        if (!accepted) break;
    }
    sol.residual = res;
    sol.energy = mf_energy(sol.z, w, rho2);
    sol.converged = res <= opts.newton_tol;
    return sol;
}

double mf_linearized_margin(const MFSolution& sol, int max_iterations) {
    const auto& s = *sol.z.surface;
    const auto& op = s.neumann();
    MFHessian h = mf_hessian(sol.z, *sol.weight, sol.rho2);
    HessianSolver hs(s, h);
    auto apply = [&](const Eigen::VectorXd& x) { return h.A * x + h.beta * h.b * h.b.dot(x); };

    std::mt19937_64 rng(7);
    std::normal_distribution<double> N(0.0, 1.0);
    Eigen::VectorXd x(s.num_nodes());
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = N(rng);
    x.array() -= op.mass_vector().dot(x);
    double mu = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        x /= std::sqrt(x.dot(op.mass() * x));
        Eigen::VectorXd y = hs.solve(op.mass() * x);
        y /= std::sqrt(y.dot(op.mass() * y));
        double next = y.dot(apply(y));
        x = y;
        if (it > 2 && std::abs(next - mu) <= 1e-12 * std::abs(next)) {
            mu = next;
            break;
        }
        mu = next;
    }
    if (!std::isfinite(mu)) throw std::runtime_error("mf_linearized_margin: eigen iteration failed");
    return std::abs(mu);
}

Field dz_dxi(const MFSolution& sol, int j, int i, double step) {
    const auto& s = *sol.z.surface;
    const auto& w = *sol.weight;
    if (sol.rho2 == 0.0) return Field::zero(sol.z.surface);
    Eigen::VectorXd D = w.log_derivative(j, i, step);
    Density d = density(sol.z, w);
    Eigen::VectorXd pd = d.p.cwiseProduct(D);
    Eigen::VectorXd rhs = 2.0 * sol.rho2 * (density_load(s, pd) - density_load(s, d.p) * pd.sum());
    HessianSolver hs(s, mf_hessian(sol.z, w, sol.rho2));
    return Field(sol.z.surface, hs.solve(rhs), true);
}

double z_derivative_at_point(const MFSolution& sol, int j, int i, double step) {
    if (sol.rho2 == 0.0) return 0.0;
    const auto& s = *sol.z.surface;
    auto pd = pole_derivative(sol.weight->green().at(j), i, step);
    Density d = density(sol.z, *sol.weight);
    const auto& qps = s.quad_points();
    double v = 0.0;
    for (size_t k = 0; k < qps.size(); ++k) v += d.p[static_cast<Eigen::Index>(k)] * pd.at(qps[k]);
    return 2.0 * sol.rho2 * v;
}

}  // namespace toda
