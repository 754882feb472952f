#include "toda/bubble.hpp"

#include <stdexcept>

namespace toda {

double bubble_mass(double delta, double r) {
    double d2 = delta * delta;
    return 8.0 * kPi * (1.0 - d2 / (d2 + r * r));
}

double bubble_mass_quadrature(double delta, double r) {
    double d2 = delta * delta;
    auto f = [&](double s) { return 2.0 * kPi * s * 8.0 * d2 / ((d2 + s * s) * (d2 + s * s)); };
    return integrate_graded(f, 0.0, r, delta / 4.0, 12);
}

BubbleParams make_bubble(const Point& xi, const CutOff& cut, double lambda, double d) {
    if (!(lambda > 0.0) || !(d > 0.0)) throw std::invalid_argument("make_bubble: lambda and d must be positive");
    BubbleParams b;
    b.chart = make_chart(xi);
    b.xi = b.chart.center();
    b.cut = cut;
    b.weight = rho_weight(b.xi);
    b.lambda = lambda;
    b.d = d;
    b.delta = d * std::sqrt(lambda);
    if (!b.chart.is_boundary() && cut.r0() > distance_to_boundary(b.xi) / 8.0 * (1.0 + 1e-12))
        throw std::invalid_argument("make_bubble: r0 exceeds dist(xi, boundary)/8");
    return b;
}

double bubble_d(double tau, double scale) { return std::sqrt(scale * std::exp(tau)); }

double bubble_U(double delta, const Point& y) {
    double d2 = delta * delta, q = d2 + y.norm2();
    return std::log(8.0 * d2 / (q * q));
}

std::vector<QuadPoint> bubble_rule(const Surface& surface, const BubbleParams& b, int angular,
                                   int radial_per_panel) {
    const double r0 = b.cut.r0();
    auto inner = chart_rule(b.chart, r0, b.delta, angular, radial_per_panel, false);
    for (auto& cp : inner) cp.w *= std::exp(bubble_U(b.delta, cp.y));
    auto ring = annulus_rule(b.chart, r0, 2.0 * r0, 2 * angular, 2 * radial_per_panel);
    for (auto& cp : ring) {
        cp.w *= std::exp(-b.chart.phi_hat(cp.y)) * b.cut(cp.y.norm()) * std::exp(bubble_U(b.delta, cp.y));
        inner.push_back(cp);
    }
    return locate_chart_points(surface, inner);
}

Peak bubble_peak(const BubbleParams& b) { return {b.chart, b.cut.r0(), b.delta}; }

double kernel_Z(const BubbleParams& b, int index, const Point& y) {
    double d2 = b.delta * b.delta, q = d2 + y.norm2();
    if (index == 0) return 2.0 * (d2 - y.norm2()) / q;
    return 4.0 * (index == 1 ? y.x : y.y) / q;
}

int kernel_dimension(const BubbleParams& b) { return b.chart.is_boundary() ? 2 : 3; }

namespace {

// Load of a source given in chart coordinates on the cut-off annulus,
// -Delta_x f = e^{-phi} source_y.
Eigen::VectorXd annulus_load(const Surface& surface, const BubbleParams& b,
                             const std::function<double(const Point&)>& source_y) {
    const double r0 = b.cut.r0();
    auto ring = annulus_rule(b.chart, r0, 2.0 * r0, 128, 24);
    for (auto& cp : ring) cp.w *= std::exp(-b.chart.phi_hat(cp.y)) * source_y(cp.y);
    auto pts = locate_chart_points(surface, ring);
    return assemble_load(surface, pts, [](const QuadPoint&) { return 1.0; });
}

// int chi f dv over the chart ball.
double chart_integral(const BubbleParams& b, const std::function<double(const Point&)>& f) {
    const double r0 = b.cut.r0();
    double s = 0.0;
    for (const auto& cp : chart_rule(b.chart, r0, b.delta, 48, 10, true)) s += cp.w * f(cp.y);
    for (const auto& cp : annulus_rule(b.chart, r0, 2.0 * r0, 96, 16)) s += cp.w * b.cut(cp.y.norm()) * f(cp.y);
    return s;
}

}  // namespace

double ProjectedBubble::remainder(const Point& x) const { return eta(x) + eta_constant; }

ProjectedBubble project_bubble(const GreenTable& green, const BubbleParams& b) {
    if ((green.pole - b.xi).norm() > 1e-12) throw std::invalid_argument("project_bubble: Green pole mismatch");
    const auto& surface = green.surface;
    const double d2 = b.delta * b.delta;
    // ell = log(1 + delta^2/|y|^2) = chi-free difference between log|y|^2 and log(delta^2+|y|^2).
    auto ell = [&](double s) { return std::log1p(d2 / (s * s)); };
    auto dell = [&](double s) { return -2.0 * d2 / (s * (s * s + d2)); };
    auto source = [&](const Point& y) {
        double s = y.norm();
        return -2.0 * (b.cut.laplacian(s) * ell(s) + 2.0 * b.cut.d1(s) * dell(s));
    };

    ProjectedBubble pb;
    pb.params = b;
    Eigen::VectorXd load = annulus_load(*surface, b, source);
    pb.eta = solve_neumann_load(surface, load, &pb.solve_residual);
    pb.eta_constant = 2.0 * chart_integral(b, [&](const Point& y) { return ell(y.norm()); });

    AnalyticTerm lb;
    lb.chart = b.chart;
    lb.cut = b.cut;
    lb.kind = TermKind::LogBubble;
    lb.delta = b.delta;
    pb.PU.surface = surface;
    pb.PU.terms.push_back(lb);
    pb.PU.axpy(b.weight, green.regular_composite());
    pb.PU.fem += pb.eta.values;
    pb.PU.constant += pb.eta_constant;
    return pb;
}

ProjectedKernel project_kernel(std::shared_ptr<const Surface> surface, const BubbleParams& b, int index) {
    if (index < 0 || index >= kernel_dimension(b)) throw std::invalid_argument("project_kernel: bad index");
    const double d2 = b.delta * b.delta;
    // Profile Zt (Z^0 + 2 for the radial element) and its radial derivative.
    auto zt = [&](const Point& y) {
        return index == 0 ? 4.0 * d2 / (d2 + y.norm2()) : kernel_Z(b, index, y);
    };
    auto dzt = [&](const Point& y) {
        double s = y.norm(), q = d2 + s * s;
        if (index == 0) return -8.0 * d2 * s / (q * q);
        double yi = index == 1 ? y.x : y.y;
        return 4.0 * yi * (d2 - s * s) / (s * q * q);
    };
    auto source = [&](const Point& y) {
        double s = y.norm();
        return b.cut.laplacian(s) * zt(y) + 2.0 * b.cut.d1(s) * dzt(y);
    };

    ProjectedKernel k;
    k.params = b;
    k.index = index;
    Eigen::VectorXd load = annulus_load(*surface, b, source);
    k.remainder = solve_neumann_load(surface, load, &k.solve_residual);
    k.constant = -chart_integral(b, zt);

    AnalyticTerm t;
    t.chart = b.chart;
    t.cut = b.cut;
    t.kind = index == 0 ? TermKind::KernelRadial : TermKind::KernelLinear;
    t.delta = b.delta;
    t.component = index == 0 ? 0 : index - 1;
    k.PZ.surface = surface;
    k.PZ.terms.push_back(t);
    k.PZ.fem = k.remainder.values;
    k.PZ.constant = k.constant;
    return k;
}

Eigen::MatrixXd gram_matrix(const Surface& surface, const std::vector<ProjectedKernel>& basis) {
    const int n = static_cast<int>(basis.size());
    Eigen::MatrixXd g(n, n);
    for (int a = 0; a < n; ++a) {
        const auto& pa = basis[a].params;
        auto rule = bubble_rule(surface, pa);
        for (int c = 0; c < n; ++c) {
            double s = 0.0;
            for (const auto& q : rule)
                s += q.w * kernel_Z(pa, basis[a].index, pa.chart.to_local(q.x)) * basis[c].PZ.at(q);
            g(a, c) = s;
        }
    }
    return 0.5 * (g + g.transpose());
}

double gram_normalization(const ProjectedKernel& k) {
    double f = kPi / (8.0 * k.params.weight);
    return k.index == 0 ? f : f * k.params.delta * k.params.delta;
}

std::vector<IdentityRow> quadrature_identities(double r) {
    // Radial integrals over the plane, int f(|y|) dy = pi int_0^inf f(sqrt t) dt.
    auto plane = [](const std::function<double(double)>& g) {
        return kPi * integrate_graded(g, 0.0, 1e12, 1e-3, 12);
    };
    std::vector<IdentityRow> rows;
    rows.push_back({"bubble mass", plane([](double t) { return 8.0 / ((1 + t) * (1 + t)); }), 8.0 * kPi});
    rows.push_back({"log moment 8 log(1+|y|^2)/(1+|y|^2)^2",
                    plane([](double t) { return 8.0 * std::log1p(t) / ((1 + t) * (1 + t)); }), 8.0 * kPi});
    rows.push_back({"kernel log moment e^U Z0 log(1+|y|^2)",
                    plane([](double t) { return 8.0 * (1 - t) * std::log1p(t) / std::pow(1 + t, 3); }),
                    -4.0 * kPi});
    rows.push_back({"4 y_i^2/(1+|y|^2)^3", plane([](double t) { return 2.0 * t / std::pow(1 + t, 3); }), kPi});
    rows.push_back({"D0 (1-|y|^2)/(1+|y|^2)^4", plane([](double t) { return (1 - t) / std::pow(1 + t, 4); }),
                    kPi / 6.0});
    rows.push_back({"D1 |y|^2/(1+|y|^2)^4", plane([](double t) { return t / std::pow(1 + t, 4); }), kPi / 6.0});
    double r2 = r * r;
    double fin = kPi * integrate_graded([](double t) { return 8.0 * std::log1p(t) / ((1 + t) * (1 + t)); }, 0.0,
                                        r2, 1e-3, 12);
    rows.push_back({"finite-r log moment", fin, 8.0 * kPi * (1.0 - (std::log1p(r2) + 1.0) / (1.0 + r2))});
    rows.push_back({"finite-r bubble mass", bubble_mass_quadrature(1.0, r), bubble_mass(1.0, r)});
    return rows;
}

std::vector<ExpansionFit> projection_expansion_fits(const GreenTable& green, double d,
                                                    const std::vector<double>& lambdas,
                                                    const std::vector<Point>& samples) {
    ExpansionFit pu{"PU", {}, {}}, pz{"PZ0", {}, {}};
    for (double l : lambdas) {
        auto b = make_bubble(green.pole, green.cut, l, d);
        auto pb = project_bubble(green, b);
        auto pk = project_kernel(green.surface, b, 0);
        double eu = 0.0, ez = 0.0;
        for (const auto& x : samples) {
            eu = std::max(eu, std::abs(pb.remainder(x)));
            Point y = b.chart.to_local(x);
            double ref = b.cut(y.norm()) * 4.0 * b.delta * b.delta / (b.delta * b.delta + y.norm2());
            ez = std::max(ez, std::abs(pk.PZ(x) - ref));
        }
        pu.deltas.push_back(b.delta);
        pz.deltas.push_back(b.delta);
        pu.errors.push_back(eu);
        pz.errors.push_back(ez);
    }
    for (auto* f : {&pu, &pz}) {
        std::vector<double> lx, ly;
        for (size_t i = 0; i < f->deltas.size(); ++i) {
            lx.push_back(std::log(f->deltas[i] / green.cut.r0()));
            ly.push_back(std::log(f->errors[i] / std::abs(std::log(f->deltas[i]))));
        }
        auto fit = fit_line(lx, ly);
        f->exponent = fit.slope;
        f->constant = std::exp(fit.intercept);
    }
    return {pu, pz};
}

std::vector<GramRow> gram_structure(std::shared_ptr<const Surface> surface, const Point& xi, const CutOff& cut,
                                    double d, const std::vector<double>& lambdas) {
    std::vector<GramRow> rows;
    for (double l : lambdas) {
        auto b = make_bubble(xi, cut, l, d);
        std::vector<ProjectedKernel> basis;
        for (int i = 0; i < kernel_dimension(b); ++i) basis.push_back(project_kernel(surface, b, i));
        auto G = gram_matrix(*surface, basis);
        GramRow r;
        r.delta = b.delta;
        for (int i = 0; i < G.rows(); ++i) {
            r.normalized_diagonal.push_back(G(i, i) * gram_normalization(basis[i]));
            for (int j = 0; j < G.cols(); ++j)
                if (i != j) r.off_diagonal = std::max(r.off_diagonal, std::abs(G(i, j)) / std::sqrt(G(i, i) * G(j, j)));
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace toda
