#include "toda/shadow.hpp"

#include <algorithm>
#include <future>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace toda {

namespace {

double log_potential_derivative(const PointFunction& V, const Point& x, int i) {
    const double h = 1e-6;
    double p = std::log(V(shift_point(x, i, h))), m = std::log(V(shift_point(x, i, -h)));
    return (p - m) / (2.0 * h);
}

double component(const Point& g, int i) { return i == 0 ? g.x : g.y; }

}  // namespace

KRValue kirchhoff_routh(const ShadowContext& ctx, const Configuration& xi, const std::vector<GreenTable>& green,
                        bool with_gradient) {
    const int m = xi.m();
    if (static_cast<int>(green.size()) != m) throw std::invalid_argument("kirchhoff_routh: table count");
    double h = ctx.surface->local_h(Point(0, 0), disk_radius());
    if (m > 1 && xi.separation() < 4.0 * std::min(h, 0.025))
        throw std::invalid_argument("kirchhoff_routh: points closer than the mesh can resolve");
    KRValue out;
    for (int j = 0; j < m; ++j) {
        double rj = xi.weight(j);
        out.value += rj * rj * robin(green[j]).value + 2.0 * rj * std::log(ctx.potentials.V1(xi.points[j]));
        for (int l = 0; l < m; ++l)
            if (l != j) out.value += rj * xi.weight(l) * green[l].smooth(xi.points[j]).value;
    }
    if (!with_gradient) return out;
    out.grad = Eigen::VectorXd::Zero(xi.dof());
    for (int j = 0; j < m; ++j) {
        double rj = xi.weight(j);
        Point rg = robin_gradient(ctx.surface, xi.points[j], green[j].cut, ctx.step);
        for (int i = 0; i < xi.dims(j); ++i) {
            double g = rj * rj * component(rg, i);
            g += 2.0 * rj * log_potential_derivative(ctx.potentials.V1, xi.points[j], i);
            for (int l = 0; l < m; ++l)
                if (l != j) g += 2.0 * rj * xi.weight(l) * component(green[l].smooth(xi.points[j]).grad, i);
            out.grad[xi.offset(j) + i] = g;
        }
    }
    return out;
}

KRValue kirchhoff_routh(const ShadowContext& ctx, const Configuration& xi, bool with_gradient) {
    CutOff cut = default_cutoff(xi);
    std::vector<GreenTable> green;
    for (const auto& p : xi.points) green.push_back(green_function(ctx.surface, p, cut));
    return kirchhoff_routh(ctx, xi, green, with_gradient);
}

LandscapeSample lambda_km(const ShadowContext& ctx, const Configuration& xi, bool with_gradient, const Field* init) {
    auto weight = std::make_shared<SingularWeight>(ctx.surface, xi, default_cutoff(xi), ctx.potentials.V2);
    LandscapeSample s;
    s.xi = xi;
    s.mf = std::make_shared<MFSolution>(solve_mf(weight, ctx.rho2, init, ctx.mf));
    if (!s.mf->converged) {
        std::ostringstream msg;
        msg << "mean-field solver failed (residual " << s.mf->residual << ")";
        throw std::runtime_error(msg.str());
    }
    s.I = s.mf->energy;
    auto kr = kirchhoff_routh(ctx, xi, weight->green(), with_gradient);
    s.F = kr.value;
    s.Lambda = 0.5 * s.I - 0.25 * s.F;
    if (with_gradient) {
        s.gradF = kr.grad;
        s.gradZ = Eigen::VectorXd::Zero(xi.dof());
        for (int j = 0; j < xi.m(); ++j)
            for (int i = 0; i < xi.dims(j); ++i)
                s.gradZ[xi.offset(j) + i] = xi.weight(j) * z_derivative_at_point(*s.mf, j, i, ctx.step);
        s.gradLambda = 0.25 * s.gradZ - 0.25 * s.gradF;
        s.has_gradient = true;
    }
    return s;
}

// ------------------------------------------------------------------- shadow

ShadowResidual shadow_residual(const ShadowContext& ctx, const ShadowState& state) {
    const auto& xi = state.xi;
    auto weight = std::make_shared<SingularWeight>(ctx.surface, xi, default_cutoff(xi), ctx.potentials.V2);
    ShadowResidual r;
    r.field = mf_residual(state.w, *weight, ctx.rho2);
    auto kr = kirchhoff_routh(ctx, xi, weight->green(), true);
    // w enters the balance condition through its equation: grad w(xi_j) is
    // evaluated from the representation with the density of w.
    MFSolution view;
    view.weight = weight;
    view.rho2 = ctx.rho2;
    view.z = state.w;
    r.vector = kr.grad;
    for (int j = 0; j < xi.m(); ++j)
        for (int i = 0; i < xi.dims(j); ++i)
            r.vector[xi.offset(j) + i] -=
                (1.0 - state.t) * xi.weight(j) * z_derivative_at_point(view, j, i, ctx.step);
    double f = dual_norm(*ctx.surface, r.field);
    r.norm = std::sqrt(f * f + r.vector.squaredNorm());
    return r;
}

namespace {

struct Balance {
    LandscapeSample sample;
    Eigen::VectorXd g;
    double norm = 0.0;
};

Balance balance(const ShadowContext& ctx, const Configuration& xi, double t, const Field* init) {
    Balance b;
    b.sample = lambda_km(ctx, xi, true, init);
    b.g = b.sample.gradF - (1.0 - t) * b.sample.gradZ;
    b.norm = std::sqrt(b.g.squaredNorm() + b.sample.mf->residual * b.sample.mf->residual);
    return b;
}

double guard_for(const ShadowContext& ctx) {
    return std::max(4.0 * std::min(0.025, ctx.surface->local_h(Point(0, 0), disk_radius())), 0.02);
}

bool admissible(const Configuration& xi, double guard) {
    return xi.m() < 2 && xi.k == 0 ? true : xi.separation() >= guard;
}

Eigen::MatrixXd balance_jacobian(const ShadowContext& ctx, const Configuration& xi, double t, const Field* init) {
    const double h = 10.0 * ctx.step;
    auto c = xi.coordinates();
    Eigen::MatrixXd J(xi.dof(), xi.dof());
    for (int a = 0; a < xi.dof(); ++a) {
        auto cp = c, cm = c;
        cp[a] += h;
        cm[a] -= h;
        auto gp = balance(ctx, xi.with_coordinates(cp), t, init).g;
        auto gm = balance(ctx, xi.with_coordinates(cm), t, init).g;
        J.col(a) = (gp - gm) / (2.0 * h);
    }
    return J;
}

}  // namespace

ShadowState solve_shadow(const ShadowContext& ctx, double t, const ShadowState& init, const ShadowOptions& opts) {
    ShadowState s = init;
    s.t = t;
    s.rho2 = ctx.rho2;
    const double guard = guard_for(ctx);
    const Field* warm = init.w.surface == ctx.surface ? &init.w : nullptr;
    Balance cur = balance(ctx, s.xi, t, warm);
    Eigen::MatrixXd J;
    for (int it = 0; it < opts.max_newton && cur.norm > opts.tol; ++it) {
        J = balance_jacobian(ctx, s.xi, t, &cur.sample.mf->z);
        Eigen::VectorXd d = J.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(-cur.g);
        auto c = s.xi.coordinates();
        bool accepted = false;
        for (double lam = 1.0; lam >= 1.0 / 32; lam *= 0.5) {
            auto cn = c;
            for (int a = 0; a < s.xi.dof(); ++a) cn[a] += lam * d[a];
            auto xn = s.xi.with_coordinates(cn);
            if (!admissible(xn, guard)) continue;
            Balance next = balance(ctx, xn, t, &cur.sample.mf->z);
            if (next.norm < cur.norm) {
                s.xi = xn;
                cur = next;
                accepted = true;
                break;
            }
        }
        ++s.newton_iterations;
        if (!accepted) break;
        J.resize(0, 0);
    }
    if (J.size() == 0) J = balance_jacobian(ctx, s.xi, t, &cur.sample.mf->z);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    s.condition = svd.singularValues().minCoeff();
    s.w = cur.sample.mf->z;
    s.residual = cur.norm;
    s.margin = mf_linearized_margin(*cur.sample.mf);
    s.converged = cur.norm <= opts.tol;
    return s;
}

ShadowRun shadow_continuation(const ShadowContext& ctx, const Configuration& start, const ShadowOptions& opts) {
    ShadowRun run;
    ShadowState init;
    init.xi = start;
    ShadowState s = solve_shadow(ctx, 1.0, init, opts);
    run.path.push_back(s);
    if (!s.converged) {
        run.message = "no solution of the decoupled system at t = 1";
        return run;
    }
    double t = 1.0, step = 0.1;
    while (t > 0.0) {
        double tn = std::max(0.0, t - step);
        if (tn < 1e-12) tn = 0.0;
        ShadowState next = solve_shadow(ctx, tn, s, opts);
        if (next.converged) {
            s = next;
            t = tn;
            run.path.push_back(s);
            continue;
        }
        step *= 0.5;
        if (step < 1.0 / 64 - 1e-15) {
            std::ostringstream msg;
            msg << "continuation stalled at t = " << t;
            run.message = msg.str();
            return run;
        }
    }
    run.completed = true;
    return run;
}

// ----------------------------------------------------------- critical points

Eigen::MatrixXd neg_lambda_hessian(const ShadowContext& ctx, const Configuration& xi) {
    const double h = 10.0 * ctx.step;
    auto c = xi.coordinates();
    const int n = xi.dof();
    Eigen::MatrixXd H(n, n);
    for (int a = 0; a < n; ++a) {
        auto cp = c, cm = c;
        cp[a] += h;
        cm[a] -= h;
        auto gp = lambda_km(ctx, xi.with_coordinates(cp)).gradLambda;
        auto gm = lambda_km(ctx, xi.with_coordinates(cm)).gradLambda;
        H.col(a) = -(gp - gm) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

namespace {

Configuration random_configuration(int k, int m, double guard, std::mt19937_64& rng) {
    const double R = disk_radius();
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int attempt = 0; attempt < 10000; ++attempt) {
        std::vector<Point> pts;
        for (int j = 0; j < k; ++j) {
            double r = (R - 3.0 * guard) * std::sqrt(U(rng)), th = 2.0 * kPi * U(rng);
            pts.emplace_back(r * std::cos(th), r * std::sin(th));
        }
        for (int j = k; j < m; ++j) pts.push_back(boundary_point(2.0 * kPi * R * U(rng)));
        auto c = make_configuration(k, pts);
        if (m == 1 && k == 0) return c;
        if (c.separation() >= 3.0 * guard) return c;
    }
    throw std::runtime_error("find_critical_points: cannot sample an admissible start");
}

// Smallest point-set distance over permutations within each point class.
double configuration_distance(const Configuration& a, const Configuration& b) {
    auto best = [](std::vector<Point> p, const std::vector<Point>& q) {
        double d = std::numeric_limits<double>::infinity();
        std::vector<int> idx(p.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        do {
            double s = 0.0;
            for (size_t i = 0; i < idx.size(); ++i) s = std::max(s, (p[idx[i]] - q[i]).norm());
            d = std::min(d, s);
        } while (std::next_permutation(idx.begin(), idx.end()));
        return idx.empty() ? 0.0 : d;
    };
    std::vector<Point> ai(a.points.begin(), a.points.begin() + a.k), bi(b.points.begin(), b.points.begin() + b.k);
    std::vector<Point> ab(a.points.begin() + a.k, a.points.end()), bb(b.points.begin() + b.k, b.points.end());
    return std::max(best(ai, bi), best(ab, bb));
}

CriticalPoint descend(const ShadowContext& ctx, Configuration xi, const SearchOptions& opts) {
    const double guard = std::max(opts.guard, guard_for(ctx));
    LandscapeSample cur = lambda_km(ctx, xi);
    const int n = xi.dof();
    Eigen::MatrixXd B = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd g = -cur.gradLambda;
    // Initial inverse-Hessian scale: step of size 0.02 along the gradient.
    double scale = 0.02 / std::max(g.norm(), 1e-12);
    B *= scale;
    for (int it = 0; it < opts.max_iterations && g.lpNorm<Eigen::Infinity>() > opts.grad_tol; ++it) {
        Eigen::VectorXd d = -B * g;
        if (d.dot(g) >= 0) {
            B = Eigen::MatrixXd::Identity(n, n) * scale;
            d = -B * g;
        }
        // Cap the step so a point moves at most 0.05.
        double dn = d.lpNorm<Eigen::Infinity>();
        if (dn > 0.05) d *= 0.05 / dn;
        auto c = xi.coordinates();
        bool accepted = false;
        LandscapeSample next;
        Eigen::VectorXd s;
        for (double lam = 1.0; lam >= 1.0 / 1024; lam *= 0.5) {
            auto cn = c;
            for (int a = 0; a < n; ++a) cn[a] += lam * d[a];
            auto xn = xi.with_coordinates(cn);
            if (!admissible(xn, guard)) continue;
            next = lambda_km(ctx, xn, true, &cur.mf->z);
            // Armijo, or near convergence (where energy differences reach
            // rounding) a halved gradient without energy increase.
            bool armijo = -next.Lambda <= -cur.Lambda + 1e-4 * lam * g.dot(d);
            bool flat = next.gradLambda.norm() < 0.5 * g.norm() &&
                        -next.Lambda <= -cur.Lambda + 1e-10 * (1.0 + std::abs(cur.Lambda));
            if (armijo || flat) {
                s = lam * d;
                accepted = true;
                break;
            }
        }
        if (!accepted) break;
        Eigen::VectorXd gn = -next.gradLambda, y = gn - g;
        double sy = s.dot(y);
        if (sy > 1e-14) {
            Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
            double r = 1.0 / sy;
            B = (I - r * s * y.transpose()) * B * (I - r * y * s.transpose()) + r * s * s.transpose();
        }
        xi = next.xi;
        cur = next;
        g = gn;
    }
    // Newton polish with the finite-difference Hessian.
    Eigen::MatrixXd H = neg_lambda_hessian(ctx, xi);
    for (int it = 0; it < 5 && g.lpNorm<Eigen::Infinity>() > opts.grad_tol; ++it) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
        if (es.eigenvalues().minCoeff() <= 0.0) break;
        Eigen::VectorXd d = -H.ldlt().solve(g);
        auto c = xi.coordinates();
        for (int a = 0; a < n; ++a) c[a] += d[a];
        auto xn = xi.with_coordinates(c);
        if (!admissible(xn, guard)) break;
        auto next = lambda_km(ctx, xn, true, &cur.mf->z);
        if (next.gradLambda.norm() >= g.norm()) break;
        xi = xn;
        cur = next;
        g = -cur.gradLambda;
        H = neg_lambda_hessian(ctx, xi);
    }
    CriticalPoint cp;
    cp.sample = cur;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    cp.hessian_eigenvalues = es.eigenvalues();
    double wsum = 0.0;
    for (int j = 0; j < xi.m(); ++j) wsum += xi.weight(j) * xi.weight(j);
    // Relative to the curvature scale sum rho_j^2 of F.
    const double tol = 2e-3 * wsum;
    int pos = 0, neg = 0, zero = 0;
    for (int a = 0; a < n; ++a) {
        double e = cp.hessian_eigenvalues[a];
        (std::abs(e) <= tol ? zero : e > 0 ? pos : neg)++;
    }
    cp.degenerate = zero > 0;
    if (neg == 0 && zero == 0) cp.classification = "min";
    else if (pos == 0 && zero == 0) cp.classification = "max";
    else if (zero == 0) cp.classification = "saddle";
    else if (neg == 0) cp.classification = "degenerate-min";
    else cp.classification = "degenerate";
    return cp;
}

}  // namespace

std::vector<CriticalPoint> find_critical_points(const ShadowContext& ctx, int k, int m, const SearchOptions& opts) {
    if (m < 1 || k < 0 || k > m) throw std::invalid_argument("find_critical_points: need 0 <= k <= m, m >= 1");
    const double guard = std::max(opts.guard, guard_for(ctx));
    std::mt19937_64 rng(opts.seed);
    std::vector<Configuration> starts;
    for (int s = 0; s < opts.multistart; ++s) starts.push_back(random_configuration(k, m, guard, rng));

    std::vector<CriticalPoint> found(starts.size());
    std::vector<bool> ok(starts.size(), false);
    const int workers = std::max(1, opts.workers);
    for (size_t base = 0; base < starts.size(); base += workers) {
        std::vector<std::future<void>> tasks;
        for (size_t i = base; i < std::min(starts.size(), base + workers); ++i) {
            tasks.push_back(std::async(workers > 1 ? std::launch::async : std::launch::deferred, [&, i] {
                try {
                    found[i] = descend(ctx, starts[i], opts);
                    ok[i] = true;
                } catch (const std::exception&) {
                }
            }));
        }
        for (auto& t : tasks) t.get();
    }

    std::vector<CriticalPoint> out;
    for (size_t i = 0; i < found.size(); ++i) {
        if (!ok[i]) continue;
        const auto& c = found[i];
        if (c.sample.gradLambda.lpNorm<Eigen::Infinity>() > opts.grad_tol) continue;
        bool dup = false;
        for (const auto& o : out) dup = dup || configuration_distance(o.sample.xi, c.sample.xi) < 1e-3;
        if (!dup) out.push_back(c);
    }
    if (out.empty()) throw std::runtime_error("find_critical_points: no start converged (all hit the guard or stalled)");
    return out;
}

}  // namespace toda
