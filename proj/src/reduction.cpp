#include "toda/reduction.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace toda {

namespace {

// b_n = sum_q w_q v_q psi_n(q) over the mesh quadrature points.
Eigen::VectorXd qp_load(const Surface& s, const Eigen::VectorXd& v) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(s.num_nodes());
    const auto& qps = s.quad_points();
    for (size_t i = 0; i < qps.size(); ++i) {
        const auto& q = qps[i];
        const auto& t = s.elements()[q.elem];
        double f = q.w * v[i];
        for (int k = 0; k < 3; ++k) b[t[k]] += f * q.bary[k];
    }
    return b;
}

double qp_integral(const Surface& s, const Eigen::VectorXd& v) {
    double r = 0.0;
    const auto& qps = s.quad_points();
    for (size_t i = 0; i < qps.size(); ++i) r += qps[i].w * v[i];
    return r;
}

Eigen::VectorXd qp_values(const Surface& s, const Eigen::VectorXd& nodal) {
    const auto& qps = s.quad_points();
    Eigen::VectorXd v(qps.size());
    for (size_t i = 0; i < qps.size(); ++i) v[i] = s.interpolate(nodal, qps[i]);
    return v;
}

// Normalized density V e^{u} / int V e^{u} at the quadrature points, and log int V e^u.
Eigen::VectorXd density(const Surface& s, const Eigen::VectorXd& V, const Eigen::VectorXd& u, double* log_int) {
    double mx = u.maxCoeff();
    Eigen::VectorXd e = V.array() * (u.array() - mx).exp();
    double I = qp_integral(s, e);
    if (log_int) *log_int = std::log(I) + mx;
    return e / I;
}

Eigen::VectorXd potential_qp(const Surface& s, const PointFunction& V) {
    const auto& qps = s.quad_points();
    Eigen::VectorXd v(qps.size());
    for (size_t i = 0; i < qps.size(); ++i) v[i] = V(qps[i].x);
    return v;
}

// chi e^{-phi} e^U (times Z^index when index >= 0) at the quadrature points.
Eigen::VectorXd bubble_profile_qp(const Surface& s, const BubbleParams& b, int index) {
    const auto& qps = s.quad_points();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(qps.size());
    const double r2 = 2.0 * b.cut.r0();
    for (size_t i = 0; i < qps.size(); ++i) {
        if ((qps[i].x - b.xi).norm() > 4.0 * r2) continue;
        Point y = b.chart.to_local(qps[i].x);
        double r = y.norm();
        if (r >= r2) continue;
        double f = b.cut(r) * b.chart.inv_conformal_at(qps[i].x) * std::exp(bubble_U(b.delta, y));
        if (index >= 0) f *= kernel_Z(b, index, y);
        v[i] = f;
    }
    return v;
}

double h1_norm(const Surface& s, const PairField& phi) {
    const auto& K = s.neumann().stiffness();
    return std::sqrt(phi.u1.values.dot(K * phi.u1.values) + phi.u2.values.dot(K * phi.u2.values));
}

// Bordered linearization with unknowns [phi1, phi2, s, mu1, mu2, c_k]:
//   (K - Ma) phi1 + rho2 (Mp phi2 - q s) - mu1 m - sum c_k b_k
//   Ma phi1 / 2 + (K - 2 rho2 Mp) phi2 + 2 rho2 q s - mu2 m
//   q^T phi2 - s = 0,  m^T phi1 = m^T phi2 = 0,  b_k^T phi1 = 0.
// The sparse block is factorized once and the dense borders are eliminated
// through their Schur complement.
class BorderedSystem {
public:
    BorderedSystem(const Surface& surface, const Eigen::VectorXd& a_qp, const Eigen::VectorXd& p_qp, double rho2,
                   const std::vector<Eigen::VectorXd>& kernel)
        : n_(surface.num_nodes()), nk_(static_cast<int>(kernel.size())) {
        const auto& op = surface.neumann();
        const auto& K = op.stiffness();
        const Eigen::VectorXd& m = op.mass_vector();
        SparseMatrix Ma = assemble_weighted_mass(surface, surface.quad_points(), a_qp);
        SparseMatrix Mp = assemble_weighted_mass(surface, surface.quad_points(), p_qp);
        Eigen::VectorXd q = qp_load(surface, p_qp);
        std::vector<Eigen::Triplet<double>> t;
        auto add = [&](const SparseMatrix& A, int r0, int c0, double s) {
            for (int k = 0; k < A.outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(A, k); it; ++it) t.emplace_back(r0 + it.row(), c0 + it.col(), s * it.value());
        };
        const int n = n_;
        add(K, 0, 0, 1.0);
        add(Ma, 0, 0, -1.0);
        add(Mp, 0, n, rho2);
        add(Ma, n, 0, 0.5);
        add(K, n, n, 1.0);
        add(Mp, n, n, -2.0 * rho2);
        A_.resize(2 * n, 2 * n);
        A_.setFromTriplets(t.begin(), t.end());
        A_.makeCompressed();
        lu_.compute(A_);
        if (lu_.info() != Eigen::Success) throw std::runtime_error("reduction: singular linearization");

        const int nb = 3 + nk_;
        B_ = Eigen::MatrixXd::Zero(2 * n, nb);
        C_ = Eigen::MatrixXd::Zero(2 * n, nb);
        D_ = Eigen::MatrixXd::Zero(nb, nb);
        B_.col(0).head(n) = -rho2 * q;
        B_.col(0).tail(n) = 2.0 * rho2 * q;
        C_.col(0).tail(n) = q;
        D_(0, 0) = -1.0;
        B_.col(1).head(n) = -m;
        C_.col(1).head(n) = m;
        B_.col(2).tail(n) = -m;
        C_.col(2).tail(n) = m;
        // Kernel loads scaled to unit norm; scale_ maps back.
        for (int k = 0; k < nk_; ++k) {
            double nb_k = kernel[k].norm();
            scale_.push_back(nb_k);
            B_.col(3 + k).head(n) = -kernel[k] / nb_k;
            C_.col(3 + k).head(n) = kernel[k] / nb_k;
        }
        AinvB_ = lu_.solve(B_);
        schur_ = (D_ - C_.transpose() * AinvB_).fullPivLu();
        if (!schur_.isInvertible()) throw std::runtime_error("reduction: singular constraint block");
    }

    // Solves with right-hand side (r1, r2) and homogeneous constraints.
    void solve(const Eigen::VectorXd& r1, const Eigen::VectorXd& r2, Eigen::VectorXd& x1, Eigen::VectorXd& x2,
               Eigen::VectorXd* multipliers = nullptr) const {
        Eigen::VectorXd r(2 * n_);
        r << r1, r2;
        Eigen::VectorXd x, y;
        solve_block(r, Eigen::VectorXd::Zero(D_.rows()), x, y);
        // One step of iterative refinement keeps the constraints at round-off level.
        Eigen::VectorXd dx, dy;
        solve_block(r - A_ * x - B_ * y, -C_.transpose() * x - D_ * y, dx, dy);
        x += dx;
        y += dy;
        x1 = x.head(n_);
        x2 = x.tail(n_);
        if (multipliers) {
            multipliers->resize(nk_);
            for (int k = 0; k < nk_; ++k) (*multipliers)[k] = y[3 + k] / scale_[k];
        }
    }

private:
    void solve_block(const Eigen::VectorXd& r, const Eigen::VectorXd& g, Eigen::VectorXd& x, Eigen::VectorXd& y) const {
        Eigen::VectorXd x0 = lu_.solve(r);
        y = schur_.solve(g - C_.transpose() * x0);
        x = x0 - AinvB_ * y;
    }

    int n_, nk_;
    std::vector<double> scale_;
    SparseMatrix A_;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
    Eigen::MatrixXd B_, C_, D_, AinvB_;
    Eigen::FullPivLU<Eigen::MatrixXd> schur_;
};

struct NonlinearState {
    Eigen::VectorXd u1, u2;  // at quadrature points
    Eigen::VectorXd e1;      // 2 lambda V1 e^{u1}
    Eigen::VectorXd p2;      // V2 e^{u2} / int
    double log_int2 = 0.0;
};

NonlinearState nonlinear_state(const ApproxSolution& app, const PairField& phi, const Eigen::VectorXd& V1,
                               const Eigen::VectorXd& V2) {
    const Surface& s = *app.bg->surface;
    NonlinearState st;
    st.u1 = app.W1_qp + qp_values(s, phi.u1.values);
    st.u2 = app.W2_qp + qp_values(s, phi.u2.values);
    st.e1 = 2.0 * app.lambda * (V1.array() * st.u1.array().exp()).matrix();
    st.p2 = density(s, V2, st.u2, &st.log_int2);
    return st;
}

TodaResidual residual_from_state(const ApproxSolution& app, const PairField& phi, const NonlinearState& st) {
    const Surface& s = *app.bg->surface;
    const auto& K = s.neumann().stiffness();
    const double rho2 = app.bg->rho2;
    Eigen::VectorXd B = qp_load(s, st.e1), P = qp_load(s, st.p2);
    TodaResidual r;
    r.F1 = K * phi.u1.values + app.lap1 - B + rho2 * P;
    r.F2 = K * phi.u2.values + app.lap2 - 2.0 * rho2 * P + 0.5 * B;
    double a = dual_norm(s, r.F1), b = dual_norm(s, r.F2);
    r.norm = std::sqrt(a * a + b * b);
    return r;
}

PairField zero_pair(const std::shared_ptr<const Surface>& s) { return {Field::zero(s), Field::zero(s)}; }

}  // namespace

// ---------------------------------------------------------------- background

std::shared_ptr<const Background> make_background(std::shared_ptr<const Surface> surface, const Configuration& xi,
                                                  double rho2, const Potentials& potentials, const CutOff& cut,
                                                  const MFOptions& mf) {
    auto bg = std::make_shared<Background>();
    bg->surface = surface;
    bg->xi = xi;
    bg->rho2 = rho2;
    bg->potentials = potentials;
    bg->cut = cut;
    auto weight = std::make_shared<SingularWeight>(surface, xi, cut, potentials.V2);
    bg->weight = weight;
    auto sol = solve_mf(weight, rho2, nullptr, mf);
    if (!sol.converged) {
        std::ostringstream msg;
        msg << "make_background: mean-field solver failed (residual " << sol.residual << ")";
        throw std::runtime_error(msg.str());
    }
    bg->mf = std::make_shared<const MFSolution>(std::move(sol));
    const auto& green = weight->green();
    for (int j = 0; j < xi.m(); ++j) {
        const Point& p = xi.points[j];
        double t = xi.weight(j) * robin(green[j]).value + std::log(potentials.V1(p)) - 0.5 * bg->mf->z(p);
        for (int l = 0; l < xi.m(); ++l)
            if (l != j) t += xi.weight(l) * green[l].smooth(p).value;
        bg->tau.push_back(t);
    }
    return bg;
}

CutOff reduction_cutoff(const Configuration& xi) {
    double r0 = 0.25 * disk_radius();
    for (int j = 0; j < xi.m(); ++j) {
        if (xi.interior(j)) r0 = std::min(r0, 0.95 * distance_to_boundary(xi.points[j]) / 8.0);
        for (int l = j + 1; l < xi.m(); ++l) r0 = std::min(r0, (xi.points[j] - xi.points[l]).norm() / 5.0);
    }
    return CutOff(0.999 * r0);
}

std::shared_ptr<const Surface> family_surface(const Configuration& xi, double rho2, const Potentials& potentials,
                                              const CutOff& cut, const std::vector<double>& lambdas, double h,
                                              int quad_order, double d_scale) {
    if (lambdas.empty()) throw std::invalid_argument("family_surface: empty ladder");
    std::vector<RefinementSite> sites;
    for (const auto& p : xi.points) sites.push_back({p, cut.r0(), 0.0});
    auto coarse = build_surface(h, quad_order, sites);
    auto bg = make_background(coarse, xi, rho2, potentials, cut);
    double lmin = *std::min_element(lambdas.begin(), lambdas.end());
    double dmin = 1e300;
    for (double t : bg->tau) dmin = std::min(dmin, bubble_d(t, d_scale));
    double core = dmin * std::sqrt(lmin) / 8.0;
    for (auto& s : sites) s.core = core;
    return build_surface(h, quad_order, sites);
}

// ---------------------------------------------------------------- assembly

ApproxSolution assemble_W(std::shared_ptr<const Background> bg, double lambda, double d_scale) {
    if (!(lambda > 0.0)) throw std::invalid_argument("assemble_W: lambda must be positive");
    const auto& surface = bg->surface;
    const Surface& s = *surface;
    const auto& xi = bg->xi;
    const auto& green = bg->weight->green();
    ApproxSolution app;
    app.bg = bg;
    app.lambda = lambda;
    app.d_scale = d_scale;

    CompositeField sumPU;
    sumPU.surface = surface;
    sumPU.fem = Eigen::VectorXd::Zero(s.num_nodes());
    const auto& K = s.neumann().stiffness();
    Eigen::VectorXd bubble_load = Eigen::VectorXd::Zero(s.num_nodes());
    app.bubble_qp = Eigen::VectorXd::Zero(s.quad_points().size());
    for (int j = 0; j < xi.m(); ++j) {
        auto b = make_bubble(xi.points[j], bg->cut, lambda, bubble_d(bg->tau[j], d_scale));
        // The P1 space cannot represent a bubble smaller than the local element.
        double hloc = s.local_h(b.xi, b.delta);
        if (hloc > b.delta) {
            std::ostringstream msg;
            msg << "assemble_W: mesh size " << hloc << " does not resolve delta = " << b.delta;
            throw std::invalid_argument(msg.str());
        }
        app.bubbles.push_back(b);
        app.pu.push_back(project_bubble(green[j], b));
        sumPU.axpy(1.0, app.pu.back().PU);
        Eigen::VectorXd prof = bubble_profile_qp(s, b, -1);
        app.bubble_qp += prof;
        bubble_load += qp_load(s, prof);
        for (int i = 0; i < kernel_dimension(b); ++i) {
            app.kernel_loads.push_back(qp_load(s, bubble_profile_qp(s, b, i)));
            app.kernel_labels.push_back({j, i});
        }
    }
    CompositeField z = CompositeField::from_field(bg->mf->z);
    app.W1 = sumPU;
    app.W1.axpy(-0.5, z);
    app.W2 = z;
    app.W2.axpy(-0.5, sumPU);

    const auto& qps = s.quad_points();
    app.W1_qp.resize(qps.size());
    app.W2_qp.resize(qps.size());
    for (size_t i = 0; i < qps.size(); ++i) {
        double P = sumPU.at(qps[i]), zq = bg->mf->z.at(qps[i]);
        app.W1_qp[i] = P - 0.5 * zq;
        app.W2_qp[i] = zq - 0.5 * P;
    }
    Eigen::VectorXd Kz = K * bg->mf->z.values;
    app.lap1 = bubble_load - 0.5 * Kz;
    app.lap2 = Kz - 0.5 * bubble_load;
    return app;
}

// ---------------------------------------------------------------- residual

ResidualReport residual_norms(const ApproxSolution& app, double p) {
    if (!(p > 1.0 && p < 2.0)) throw std::invalid_argument("residual_norms: p must lie in (1, 2)");
    const Surface& s = *app.bg->surface;
    const double rho2 = app.bg->rho2;
    Eigen::VectorXd V1 = potential_qp(s, app.bg->potentials.V1), V2 = potential_qp(s, app.bg->potentials.V2);
    Eigen::VectorXd D = 2.0 * app.lambda * (V1.array() * app.W1_qp.array().exp()).matrix() - app.bubble_qp;
    const double area = qp_integral(s, Eigen::VectorXd::Ones(D.size()));
    Eigen::VectorXd Dc = D.array() - qp_integral(s, D) / area;
    Eigen::VectorXd z_qp = qp_values(s, app.bg->mf->z.values);
    Eigen::VectorXd pz = density(s, app.bg->weight->qp_values(), z_qp, nullptr);
    Eigen::VectorXd pw = density(s, V2, app.W2_qp, nullptr);
    Eigen::VectorXd R1 = Dc + rho2 * (pz - pw);
    Eigen::VectorXd R2 = -0.5 * Dc + 2.0 * rho2 * (pw - pz);
    auto lp = [&](const Eigen::VectorXd& f) { return std::pow(qp_integral(s, f.array().abs().pow(p).matrix()), 1.0 / p); };
    ResidualReport r;
    r.lambda = app.lambda;
    r.p = p;
    r.norm1 = lp(R1);
    r.norm2 = lp(R2);
    r.diff_norm = lp(D);
    r.mean1 = qp_integral(s, R1);
    r.mean2 = qp_integral(s, R2);
    return r;
}

LineFit fit_power(const std::vector<double>& lambdas, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (double l : lambdas) lx.push_back(std::log(l));
    for (double v : y) ly.push_back(std::log(v));
    return fit_line(lx, ly);
}

// ---------------------------------------------------------------- energy

double toda_energy(const PairField& u, double lambda, double rho2, const Potentials& potentials) {
    require_same_surface(u.u1, u.u2);
    const Surface& s = *u.u1.surface;
    Eigen::VectorXd u1 = qp_values(s, u.u1.values), u2 = qp_values(s, u.u2.values);
    Eigen::VectorXd V1 = potential_qp(s, potentials.V1), V2 = potential_qp(s, potentials.V2);
    double mass = lambda * qp_integral(s, (V1.array() * u1.array().exp()).matrix());
    double log_int = 0.0;
    density(s, V2, u2, &log_int);
    return quad_form_Q(u, u) - mass - rho2 * log_int;
}

EnergyParts energy_W(const ApproxSolution& app, const PairField* phi) {
    const Surface& s = *app.bg->surface;
    const auto& K = s.neumann().stiffness();
    const Field& z = app.bg->mf->z;
    // int grad PU_j . grad f = int chi_j e^{-phi_j} e^{U_j} f for mean-zero f.
    double PP = 0.0, Pz = 0.0;
    for (const auto& b : app.bubbles) {
        auto rule = bubble_rule(s, b);
        for (const auto& q : rule) {
            for (const auto& pu : app.pu) PP += q.w * pu.PU.at(q);
            Pz += q.w * z.at(q);
        }
    }
    double zz = z.values.dot(K * z.values);
    EnergyParts e;
    e.Q = 0.25 * (zz + PP - Pz);
    Eigen::VectorXd u1 = app.W1_qp, u2 = app.W2_qp;
    if (phi) {
        const Eigen::VectorXd &a = phi->u1.values, &b = phi->u2.values;
        // 2 Q(W, phi) + Q(phi, phi) with Q(v, w) = (v1.w1 + v2.w2 + (v1.w2 + v2.w1)/2)/3 in H^1 pairings.
        double cross = app.lap1.dot(a) + app.lap2.dot(b) + 0.5 * (app.lap1.dot(b) + app.lap2.dot(a));
        double self = a.dot(K * a) + b.dot(K * b) + a.dot(K * b);
        e.Q += (2.0 * cross + self) / 3.0;
        u1 += qp_values(s, a);
        u2 += qp_values(s, b);
    }
    Eigen::VectorXd V1 = potential_qp(s, app.bg->potentials.V1), V2 = potential_qp(s, app.bg->potentials.V2);
    e.mass = app.lambda * qp_integral(s, (V1.array() * u1.array().exp()).matrix());
    density(s, V2, u2, &e.log_integral);
    e.E = e.Q - e.mass - app.bg->rho2 * e.log_integral;
    return e;
}

EnergyExpansion reduced_energy_expansion(const std::vector<double>& lambdas, const std::vector<double>& energies,
                                         double Lambda, const Configuration& xi, double d_scale) {
    if (lambdas.size() < 3) throw std::invalid_argument("reduced_energy_expansion: ladder needs at least 3 points");
    std::vector<double> lx;
    for (double l : lambdas) lx.push_back(std::log(l));
    auto f = fit_line(lx, energies);
    const double km = xi.k + xi.m();
    EnergyExpansion r;
    r.slope = f.slope;
    r.expected_slope = -2.0 * kPi * km;
    r.intercept = f.intercept;
    r.Lambda = Lambda;
    r.c0 = f.intercept - Lambda - 2.0 * kPi * km * std::log(8.0);
    r.c0_four = -4.0 * kPi * km;
    r.c0_six = -6.0 * kPi * km;
    // With d^2 = scale e^tau: c0 = 2 pi (k+m) (log(1/scale) - log 8) - 2 pi (k+m) (1 + 1/(4 scale)),
    // where lambda int V1 e^{W1} tends to 2 pi (k+m)/(4 scale).
    r.c0_predicted = 2.0 * kPi * km * (std::log(1.0 / d_scale) - std::log(8.0)) - 2.0 * kPi * km * (1.0 + 0.25 / d_scale);
    r.nearest = std::abs(r.c0 - r.c0_four) <= std::abs(r.c0 - r.c0_six) ? "-4pi(k+m)" : "-6pi(k+m)";
    return r;
}

// ---------------------------------------------------------------- fixed point

TodaResidual toda_residual(const ApproxSolution& app, const PairField& phi) {
    const Surface& s = *app.bg->surface;
    Eigen::VectorXd V1 = potential_qp(s, app.bg->potentials.V1), V2 = potential_qp(s, app.bg->potentials.V2);
    return residual_from_state(app, phi, nonlinear_state(app, phi, V1, V2));
}

namespace {

BorderedSystem linear_operator(const ApproxSolution& app) {
    const Surface& s = *app.bg->surface;
    Eigen::VectorXd V2 = potential_qp(s, app.bg->potentials.V2);
    Eigen::VectorXd pw = density(s, V2, app.W2_qp, nullptr);
    return BorderedSystem(s, app.bubble_qp, pw, app.bg->rho2, app.kernel_loads);
}

double max_orthogonality(const ApproxSolution& app, const PairField& phi) {
    const Surface& s = *app.bg->surface;
    double n1 = std::sqrt(phi.u1.values.dot(s.neumann().stiffness() * phi.u1.values));
    if (n1 == 0.0) return 0.0;
    double worst = 0.0;
    // <phi1, PZ>_{H^1} = int (chi e^{-phi} e^U Z - mean) phi1 = b^T phi1 for mean-zero phi1.
    for (const auto& b : app.kernel_loads) worst = std::max(worst, std::abs(b.dot(phi.u1.values)) / b.norm());
    return worst / n1;
}

}  // namespace

PairField solve_linear(const ApproxSolution& app, const Eigen::VectorXd& h1, const Eigen::VectorXd& h2) {
    auto L = linear_operator(app);
    PairField out = zero_pair(app.bg->surface);
    L.solve(h1, h2, out.u1.values, out.u2.values);
    return out;
}

PhiResult solve_phi(const ApproxSolution& app, const PhiOptions& opts, const PairField* init) {
    const auto& surface = app.bg->surface;
    const Surface& s = *surface;
    Eigen::VectorXd V1 = potential_qp(s, app.bg->potentials.V1), V2 = potential_qp(s, app.bg->potentials.V2);
    auto L = linear_operator(app);
    PhiResult r;
    r.phi = init ? *init : zero_pair(surface);
    double prev_step = 0.0;
    for (int it = 0; it < opts.max_iterations; ++it) {
        auto st = nonlinear_state(app, r.phi, V1, V2);
        auto F = residual_from_state(app, r.phi, st);
        // phi_{n+1} = phi_n - L^{-1} F(phi_n): L phi_{n+1} = S(phi_n) + N(phi_n) + R on K^perp.
        PairField d = zero_pair(surface);
        L.solve(-F.F1, -F.F2, d.u1.values, d.u2.values, &r.multipliers);
        r.phi.u1.values += d.u1.values;
        r.phi.u2.values += d.u2.values;
        r.iterations = it + 1;
        double step = h1_norm(s, d);
        if (it > 0 && prev_step > 0.0) r.ratios.push_back(step / prev_step);
        prev_step = step;
        double nphi = h1_norm(s, r.phi);
        if (!std::isfinite(step) || nphi > 1e6) {
            r.message = "fixed point diverged";
            break;
        }
        if (step <= opts.tol * std::max(nphi, 1e-300)) {
            r.converged = true;
            break;
        }
    }
    for (double q : r.ratios) r.max_ratio = std::max(r.max_ratio, q);
    r.norm = h1_norm(s, r.phi);
    r.orthogonality = max_orthogonality(app, r.phi);
    r.phi.u1.mean_zero = r.phi.u2.mean_zero = true;
    if (!r.converged && r.message.empty()) {
        std::ostringstream msg;
        msg << "no contraction within " << opts.max_iterations << " iterations (last ratio "
            << (r.ratios.empty() ? 0.0 : r.ratios.back()) << ")";
        r.message = msg.str();
    }
    return r;
}

// ---------------------------------------------------------------- Newton

SolveOutcome newton_polish(const ApproxSolution& app, const PairField& phi_init, const NewtonOptions& opts) {
    const auto& surface = app.bg->surface;
    const Surface& s = *surface;
    const double rho2 = app.bg->rho2;
    Eigen::VectorXd V1 = potential_qp(s, app.bg->potentials.V1), V2 = potential_qp(s, app.bg->potentials.V2);
    SolveOutcome out;
    out.lambda = app.lambda;
    out.phi = phi_init;
    auto st = nonlinear_state(app, out.phi, V1, V2);
    auto F = residual_from_state(app, out.phi, st);
    const std::vector<Eigen::VectorXd> none;
    for (int it = 0; it < opts.max_iterations && F.norm > opts.tol; ++it) {
        BorderedSystem J(s, st.e1, st.p2, rho2, none);
        PairField d = zero_pair(surface);
        J.solve(-F.F1, -F.F2, d.u1.values, d.u2.values);
        bool accepted = false;
        for (double t = 1.0; t >= 1.0 / 128; t *= 0.5) {
            PairField trial = out.phi;
            trial.u1.values += t * d.u1.values;
            trial.u2.values += t * d.u2.values;
            auto st2 = nonlinear_state(app, trial, V1, V2);
            auto F2 = residual_from_state(app, trial, st2);
            if (std::isfinite(F2.norm) && F2.norm < F.norm) {
                out.phi = trial;
                st = st2;
                F = F2;
                accepted = true;
                break;
            }
        }
        out.iterations = it + 1;
        if (!accepted) {
            out.message = "Newton step rejected by the line search";
            break;
        }
    }
    out.residual = F.norm;
    out.converged = F.norm <= opts.tol;
    if (!out.converged && out.message.empty()) out.message = "Newton did not reach the tolerance";
    out.phi_norm = h1_norm(s, out.phi);
    // Multipliers: least-squares fit of F1 by the kernel loads modulo constants.
    const int nk = static_cast<int>(app.kernel_loads.size());
    if (nk > 0) {
        const Eigen::VectorXd& m = s.neumann().mass_vector();
        Eigen::MatrixXd Bk(s.num_nodes(), nk + 1);
        for (int k = 0; k < nk; ++k) Bk.col(k) = app.kernel_loads[k];
        Bk.col(nk) = m;
        Eigen::VectorXd c = Bk.colPivHouseholderQr().solve(F.F1);
        out.multipliers = c.head(nk);
    }

    // Diagnostics.
    const auto& qps = s.quad_points();
    out.rho1 = 0.5 * qp_integral(s, st.e1);
    const auto& xi = app.bg->xi;
    for (int j = 0; j < xi.m(); ++j) {
        std::array<double, 3> m1{}, m2{};
        for (size_t i = 0; i < qps.size(); ++i) {
            double r = (qps[i].x - xi.points[j]).norm();
            for (int k = 0; k < 3; ++k) {
                if (r >= kMassRadii[k]) continue;
                m1[k] += qps[i].w * st.e1[i];
                m2[k] += qps[i].w * 2.0 * rho2 * st.p2[i];
            }
        }
        out.sigma1.push_back(m1);
        out.sigma2.push_back(m2);
    }
    out.max_u1 = -1e300;
    out.sup_u2 = -1e300;
    for (int n = 0; n < s.num_nodes(); ++n) {
        const Point& x = s.nodes()[n];
        out.max_u1 = std::max(out.max_u1, app.W1(x) + out.phi.u1.values[n]);
        out.sup_u2 = std::max(out.sup_u2, app.W2(x) + out.phi.u2.values[n]);
    }
    const auto& green = app.bg->weight->green();
    double dev = 0.0;
    for (size_t i = 0; i < qps.size(); ++i) {
        double ref = app.bg->mf->z.at(qps[i]);
        for (int j = 0; j < xi.m(); ++j) ref -= 0.5 * xi.weight(j) * green[j].at(qps[i]);
        double d = st.u2[i] - ref;
        dev += qps[i].w * d * d;
    }
    out.u2_deviation = std::sqrt(dev);
    return out;
}

}  // namespace toda
