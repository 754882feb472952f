#include "toda/elliptic.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace toda {

// ----------------------------------------------------------- NeumannOperator

NeumannOperator::NeumannOperator(const Surface& s) {
    const int n = s.num_nodes();
    std::vector<Eigen::Triplet<double>> kt, mt;
    kt.reserve(9 * s.num_elements());
    for (int e = 0; e < s.num_elements(); ++e) {
        const auto& t = s.elements()[e];
        const auto& g = s.basis_gradients(e);
        double area = s.element_measure(e);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) kt.emplace_back(t[i], t[j], area * g[i].dot(g[j]));
    }
    for (const auto& q : s.quad_points()) {
        const auto& t = s.elements()[q.elem];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) mt.emplace_back(t[i], t[j], q.w * q.bary[i] * q.bary[j]);
    }
    K_.resize(n, n);
    K_.setFromTriplets(kt.begin(), kt.end());
    M_.resize(n, n);
    M_.setFromTriplets(mt.begin(), mt.end());
    m_ = M_ * Eigen::VectorXd::Ones(n);

    std::vector<Eigen::Triplet<double>> at;
    at.reserve(K_.nonZeros() + 2 * n);
    for (int k = 0; k < K_.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(K_, k); it; ++it) at.emplace_back(it.row(), it.col(), it.value());
    for (int i = 0; i < n; ++i) {
        at.emplace_back(i, n, m_[i]);
        at.emplace_back(n, i, m_[i]);
    }
    A_.resize(n + 1, n + 1);
    A_.setFromTriplets(at.begin(), at.end());
    A_.makeCompressed();
    lu_.analyzePattern(A_);
    lu_.factorize(A_);
    if (lu_.info() != Eigen::Success) {
        // Locate a degenerate element for the message.
        for (int e = 0; e < s.num_elements(); ++e) {
            if (!(s.triangle_area(e) > 1e-300)) {
                std::ostringstream msg;
                msg << "singular stiffness: degenerate element " << e;
                throw std::runtime_error(msg.str());
            }
        }
        throw std::runtime_error("singular stiffness: factorization failed (" + lu_.lastErrorMessage() + ")");
    }
}

Eigen::VectorXd NeumannOperator::solve(const Eigen::VectorXd& load, double mean,
                                       double* residual) const {
    const int n = static_cast<int>(m_.size());
    if (load.size() != n) throw std::invalid_argument("NeumannOperator::solve: load size mismatch");
    Eigen::VectorXd rhs(n + 1);
    rhs.head(n) = load;
    rhs[n] = mean;
    Eigen::VectorXd x = lu_.solve(rhs);
    if (residual) {
        double nr = rhs.norm();
        double r = (A_ * x - rhs).norm();
        *residual = nr > 0 ? r / nr : r;
    }
    return x.head(n);
}

const NeumannOperator& Surface::neumann() const {
    std::call_once(neumann_once_, [this] { neumann_ = std::make_unique<NeumannOperator>(*this); });
    return *neumann_;
}

// --------------------------------------------------------------------- Field

Field Field::zero(std::shared_ptr<const Surface> s) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(s->num_nodes());
    return Field(std::move(s), std::move(v), true);
}

Point Field::gradient(int elem) const {
    const auto& t = surface->elements()[elem];
    const auto& g = surface->basis_gradients(elem);
    return g[0] * values[t[0]] + g[1] * values[t[1]] + g[2] * values[t[2]];
}

double Field::integral() const { return surface->neumann().mass_vector().dot(values); }

double Field::l2_norm() const {
    return std::sqrt(std::max(0.0, values.dot(surface->neumann().mass() * values)));
}

void Field::project_mean_zero() {
    values.array() -= integral();
    mean_zero = true;
}

void require_same_surface(const Field& a, const Field& b) {
    if (a.surface != b.surface) throw std::invalid_argument("fields live on different meshes");
}

Field solve_neumann_load(std::shared_ptr<const Surface> surface, const Eigen::VectorXd& load,
                         double* residual) {
    Eigen::VectorXd u = surface->neumann().solve(load, 0.0, residual);
    return Field(std::move(surface), std::move(u), true);
}

Field solve_neumann(std::shared_ptr<const Surface> surface,
                    const std::function<double(const QuadPoint&)>& f, double* residual) {
    for (const auto& q : surface->quad_points()) {
        if (!std::isfinite(f(q))) throw std::domain_error("solve_neumann: non-finite source value");
    }
    Eigen::VectorXd b = surface->load(f);
    return solve_neumann_load(std::move(surface), b, residual);
}

Field solve_neumann(std::shared_ptr<const Surface> surface, const PointFunction& f,
                    double* residual) {
    return solve_neumann(std::move(surface), [&](const QuadPoint& q) { return f(q.x); }, residual);
}

double h1_inner(const Field& u, const Field& v) {
    require_same_surface(u, v);
    return u.values.dot(u.surface->neumann().stiffness() * v.values);
}

double quad_form_Q(const PairField& v, const PairField& w) {
    require_same_surface(v.u1, w.u1);
    require_same_surface(v.u2, w.u2);
    require_same_surface(v.u1, v.u2);
    return h1_inner(v.u1, w.u1) / 3.0 + h1_inner(v.u2, w.u2) / 3.0 + h1_inner(v.u2, w.u1) / 6.0 +
           h1_inner(v.u1, w.u2) / 6.0;
}

void write_field_csv(const Field& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "index,value\n";
    char buf[64];
    for (int i = 0; i < f.values.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%d,%.17g\n", i, f.values[i]);
        out << buf;
    }
}

Field read_field_csv(std::shared_ptr<const Surface> surface, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string line;
    std::getline(in, line);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(surface->num_nodes());
    int count = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto comma = line.find(',');
        if (comma == std::string::npos) throw std::runtime_error("malformed field row: " + line);
        int idx = std::stoi(line.substr(0, comma));
        if (idx < 0 || idx >= v.size()) throw std::runtime_error("field index out of range");
        v[idx] = std::stod(line.substr(comma + 1));
        ++count;
    }
    if (count != v.size()) throw std::runtime_error("field file does not match the mesh");
    return Field(std::move(surface), std::move(v), false);
}

// ---------------------------------------------------------- rules and loads

Eigen::VectorXd assemble_load(const Surface& surface, const std::vector<QuadPoint>& rule,
                              const std::function<double(const QuadPoint&)>& f) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(surface.num_nodes());
    for (const auto& q : rule) {
        double v = q.w * f(q);
        const auto& t = surface.elements()[q.elem];
        b[t[0]] += v * q.bary[0];
        b[t[1]] += v * q.bary[1];
        b[t[2]] += v * q.bary[2];
    }
    return b;
}

SparseMatrix assemble_weighted_mass(const Surface& surface, const std::vector<QuadPoint>& rule,
                                    const Eigen::VectorXd& coef) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(9 * rule.size());
    for (size_t k = 0; k < rule.size(); ++k) {
        const auto& q = rule[k];
        const auto& e = surface.elements()[q.elem];
        double w = q.w * coef[static_cast<Eigen::Index>(k)];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) t.emplace_back(e[i], e[j], w * q.bary[i] * q.bary[j]);
    }
    SparseMatrix M(surface.num_nodes(), surface.num_nodes());
    M.setFromTriplets(t.begin(), t.end());
    return M;
}

double dual_norm(const Surface& surface, const Eigen::VectorXd& residual) {
    const auto& op = surface.neumann();
    Eigen::VectorXd r = residual - op.mass_vector() * residual.sum() / op.mass_vector().sum();
    Eigen::VectorXd u = op.solve(r);
    return std::sqrt(std::max(0.0, r.dot(u)));
}

std::vector<QuadPoint> locate_chart_points(const Surface& surface,
                                           const std::vector<ChartPoint>& points) {
    std::vector<QuadPoint> out;
    out.reserve(points.size());
    for (const auto& cp : points) {
        auto loc = surface.locate(cp.x);
        if (!loc) continue;
        QuadPoint q;
        q.x = cp.x;
        q.w = cp.w;
        q.elem = loc->elem;
        q.bary = loc->bary;
        out.push_back(q);
    }
    return out;
}

std::vector<QuadPoint> hybrid_rule(const Surface& surface, const std::vector<Peak>& peaks,
                                   int angular, int radial_per_panel) {
    std::vector<QuadPoint> rule;
    auto psi_sum = [&](const Point& x) {
        double s = 0.0;
        for (const auto& pk : peaks) {
            if ((x - pk.chart.center()).norm() >= pk.r0) continue;
            CutOff c(0.5 * pk.r0);
            s += c(pk.chart.to_local(x).norm());
        }
        return s;
    };
    for (const auto& q : surface.quad_points()) {
        double w = 1.0 - psi_sum(q.x);
        if (w <= 0.0) continue;
        QuadPoint r = q;
        r.w *= w;
        rule.push_back(r);
    }
    for (const auto& pk : peaks) {
        CutOff c(0.5 * pk.r0);
        auto pts = chart_rule(pk.chart, pk.r0, pk.scale, angular, radial_per_panel);
        for (auto& cp : pts) cp.w *= c(cp.y.norm());
        for (auto& q : locate_chart_points(surface, pts)) rule.push_back(q);
    }
    return rule;
}

double integrate_rule(const std::vector<QuadPoint>& rule,
                      const std::function<double(const QuadPoint&)>& f) {
    double s = 0.0;
    for (const auto& q : rule) s += q.w * f(q);
    return s;
}

// -------------------------------------------------------- mean-value stencil

MeanValueStencil::MeanValueStencil(const Surface& surface, const Chart& chart, double radius)
    : chart_(chart), radius_(radius) {
    // Refined element quadrature of the P1 data against the smooth stencil
    // weight, so the result varies smoothly with the chart center.
    const double r2 = radius * radius;
    const Point c = chart.center();
    for (int e = 0; e < surface.num_elements(); ++e) {
        const auto& tr = surface.elements()[e];
        const double diam = surface.element_diameter(e);
        if ((surface.nodes()[tr[0]] - c).norm() > 1.5 * radius + diam) continue;
        const int n = std::max(1, static_cast<int>(std::ceil(8.0 * diam / radius)));
        for (const auto& qp : surface.refined_rule(e, n)) {
            Point y = chart.to_local(qp.x);
            if (chart.is_boundary() && y.y < 0.0) continue;
            double t = 1.0 - y.norm2() / r2;
            if (t <= 0.0) continue;
            double w = qp.w * chart.inv_conformal_at(qp.x);
            samples_.push_back(qp);
            local_.push_back(y);
            // Radial weight t^3 and its gradient, C^1 at the rim.
            w_.push_back(w * t * t * t);
            wx_.push_back(w * (-6.0 * y.x / r2) * t * t);
            wy_.push_back(w * (-6.0 * y.y / r2) * t * t);
        }
    }
    if (samples_.empty()) throw std::runtime_error("mean-value stencil: no quadrature points inside");
    // Exact weight mass: pi r^2/4 on a disk, half on a half-disk.
    wsum_ = (chart.is_boundary() ? 0.5 : 1.0) * kPi * r2 / 4.0;
}

SmoothValue MeanValueStencil::eval(double lap, const std::function<double(const QuadPoint&)>& f,
                                   double neumann) const {
    const double R = disk_radius();
    const Point p = chart_.center();
    auto q = [&](const Point& x) {
        if (!chart_.is_boundary()) return 0.25 * lap * (x - p).norm2();
        double r = x.norm();
        return lap * (0.25 * r * r - 0.5 * R * R * std::log(r)) + neumann * R * std::log(r);
    };
    double avg = 0.0, gx = 0.0, gy = 0.0;
    for (size_t i = 0; i < samples_.size(); ++i) {
        double h = f(samples_[i]) - q(samples_[i].x);
        avg += w_[i] * h;
        gx -= wx_[i] * h;
        gy -= wy_[i] * h;
    }
    SmoothValue out;
    out.value = avg / wsum_ + q(p);
    if (chart_.is_boundary()) {
        out.grad = Point(gx / wsum_, 0.0);
    } else {
        out.grad = Point(gx / wsum_, gy / wsum_);
    }
    return out;
}

SmoothValue mean_value_eval(const Surface& surface, const Chart& chart, double radius, double lap,
                            const std::function<double(const QuadPoint&)>& f, double neumann) {
    return MeanValueStencil(surface, chart, radius).eval(lap, f, neumann);
}

// ------------------------------------------------------------ analytic terms

double AnalyticTerm::local(const Point& y) const {
    double s = y.norm();
    double c = cut(s);
    if (c == 0.0) return 0.0;
    double d2 = delta * delta, s2 = y.norm2();
    double v = 0.0;
    switch (kind) {
        case TermKind::LogPole: v = -std::log(s); break;
        case TermKind::LogBubble: v = -2.0 * std::log(d2 + s2); break;
        case TermKind::KernelRadial: v = 4.0 * d2 / (d2 + s2); break;
        case TermKind::KernelLinear: v = 4.0 * (component == 0 ? y.x : y.y) / (d2 + s2); break;
        case TermKind::LogGlobal:
        case TermKind::GreenShift: throw std::logic_error("AnalyticTerm::local: global term");
    }
    return coef * c * v;
}

bool AnalyticTerm::may_touch(const Point& x) const {
    return global() || (x - chart.center()).norm() < 2.0 * cut.r0();
}

double AnalyticTerm::operator()(const Point& x) const {
    const Point& c = chart.center();
    if (kind == TermKind::LogGlobal) return -coef * std::log((x - c).norm());
    if (kind == TermKind::GreenShift) {
        double d = (x - c).norm();
        if (d >= 2.0 * cut.r0() || !chart.is_boundary()) {
            double ch = cut(d);
            return ch < 1.0 ? -coef * (1.0 - ch) * std::log(d) : 0.0;
        }
        // chi log(|y| / |x - c|) + (1 - chi) log(1/|x - c|), with
        // |y| / |x - c| = 2R / |R + z| on boundary charts.
        double R = disk_radius();
        Point z(x.x * std::cos(chart.angle()) + x.y * std::sin(chart.angle()),
                -x.x * std::sin(chart.angle()) + x.y * std::cos(chart.angle()));
        double ratio = 2.0 * R / std::hypot(R + z.x, z.y);
        double s = d * ratio;
        double ch = cut(s);
        double tail = ch < 1.0 ? -(1.0 - ch) * std::log(d) : 0.0;
        return coef * (ch * std::log(ratio) + tail);
    }
    if (!may_touch(x)) return 0.0;
    return local(chart.to_local(x));
}

CompositeField CompositeField::from_field(const Field& f) {
    CompositeField c;
    c.surface = f.surface;
    c.fem = f.values;
    return c;
}

double CompositeField::analytic(const Point& x) const {
    double s = 0.0;
    for (const auto& t : terms) s += t(x);
    return s;
}

double CompositeField::operator()(const Point& x) const {
    double v = analytic(x) + constant;
    if (fem.size() > 0) v += surface->interpolate(fem, x);
    return v;
}

double CompositeField::at(const QuadPoint& q) const {
    double v = analytic(q.x) + constant;
    if (fem.size() > 0) v += surface->interpolate(fem, q);
    return v;
}

CompositeField& CompositeField::axpy(double s, const CompositeField& other) {
    if (!surface) surface = other.surface;
    if (other.surface && surface != other.surface)
        throw std::invalid_argument("composite fields live on different meshes");
    for (auto t : other.terms) {
        t.coef *= s;
        terms.push_back(t);
    }
    if (other.fem.size() > 0) {
        if (fem.size() == 0) fem = Eigen::VectorXd::Zero(other.fem.size());
        fem += s * other.fem;
    }
    constant += s * other.constant;
    return *this;
}

CompositeField CompositeField::scaled(double s) const {
    CompositeField c;
    c.surface = surface;
    c.axpy(s, *this);
    return c;
}

}  // namespace toda
