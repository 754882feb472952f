#include "toda/green.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace toda {

std::vector<ChartPoint> annulus_rule(const Chart& chart, double a, double b, int angular,
                                     int radial) {
    std::vector<double> gx, gw, ax, aw;
    gauss_legendre(radial, gx, gw);
    std::vector<double> th, thw;
    if (chart.is_boundary()) {
        gauss_legendre(angular / 2, ax, aw);
        for (size_t i = 0; i < ax.size(); ++i) th.push_back(kPi * ax[i]), thw.push_back(kPi * aw[i]);
    } else {
        for (int k = 0; k < angular; ++k)
            th.push_back(2.0 * kPi * (k + 0.5) / angular), thw.push_back(2.0 * kPi / angular);
    }
    std::vector<ChartPoint> out;
    for (size_t i = 0; i < gx.size(); ++i) {
        double s = a + (b - a) * gx[i];
        for (size_t k = 0; k < th.size(); ++k) {
            ChartPoint cp;
            cp.y = Point(s * std::cos(th[k]), s * std::sin(th[k]));
            cp.x = chart.to_surface(cp.y);
            cp.w = gw[i] * (b - a) * s * thw[k] * std::exp(chart.phi_hat(cp.y));
            out.push_back(cp);
        }
    }
    return out;
}

double rho_weight(const Point& xi) { return on_boundary(xi) ? 4.0 * kPi : 8.0 * kPi; }

Point shift_point(const Point& xi, int i, double h) {
    if (on_boundary(xi)) {
        (void)i;
        return boundary_point(boundary_arclength(xi) + h);
    }
    return i == 0 ? Point(xi.x + h, xi.y) : Point(xi.x, xi.y + h);
}

namespace {

// H(xi) and its gradient at the pole; the shift term vanishes there to
// first order along the surface.
SmoothValue robin_stencil(const GreenTable& t) {
    const double R = disk_radius();
    auto ht = [&](const QuadPoint& q) { return t.Ht.at(q); };
    SmoothValue v;
    if (t.chart.is_boundary()) {
        v = mean_value_eval(*t.surface, t.chart, 0.1, 1.0, ht, 1.0 / (2.0 * kPi * R));
        v.grad.x *= t.chart.arc_orientation();
    } else {
        double rho = std::min(0.1, 0.5 * distance_to_boundary(t.pole));
        v = mean_value_eval(*t.surface, t.chart, rho, 1.0, ht);
    }
    v.value += t.constant;
    return v;
}

}  // namespace

double GreenTable::gamma(const Point& x) const {
    if ((x - chart.center()).norm() >= 2.0 * cut.r0()) return 0.0;
    double s = chart.to_local(x).norm();
    if (s >= 2.0 * cut.r0()) return 0.0;
    return coef() * cut(s) * std::log(1.0 / s);
}

double GreenTable::regular(const Point& x) const { return shift_term()(x) + Ht(x) + constant; }
double GreenTable::regular_at(const QuadPoint& q) const {
    return shift_term()(q.x) + Ht.at(q) + constant;
}
double GreenTable::operator()(const Point& x) const { return log_term()(x) + Ht(x) + constant; }
double GreenTable::at(const QuadPoint& q) const { return log_term()(q.x) + Ht.at(q) + constant; }

AnalyticTerm GreenTable::singular_term() const {
    AnalyticTerm t;
    t.chart = chart;
    t.cut = cut;
    t.kind = TermKind::LogPole;
    t.coef = coef();
    return t;
}

AnalyticTerm GreenTable::log_term() const {
    AnalyticTerm t = singular_term();
    t.kind = TermKind::LogGlobal;
    return t;
}

AnalyticTerm GreenTable::shift_term() const {
    AnalyticTerm t = singular_term();
    t.kind = TermKind::GreenShift;
    return t;
}

CompositeField GreenTable::as_composite() const {
    CompositeField c;
    c.surface = surface;
    c.fem = Ht.values;
    c.constant = constant;
    c.terms.push_back(log_term());
    return c;
}

CompositeField GreenTable::regular_composite() const {
    CompositeField c = as_composite();
    c.terms[0] = shift_term();
    return c;
}

namespace {

// Neumann data -dGamma0/dn on the circle.
double neumann_data(const GreenTable& t, const Point& x) {
    if (t.chart.is_boundary()) return 1.0 / (2.0 * kPi * disk_radius());
    Point d = x - t.pole;
    return t.coef() * d.dot(x / x.norm()) / d.norm2();
}

// int_{circle} g psi_n ds with panels resolving the distance to the pole.
Eigen::VectorXd boundary_load(const GreenTable& t) {
    const Surface& s = *t.surface;
    const double R = disk_radius();
    std::vector<double> gx, gw;
    gauss_legendre(8, gx, gw);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(s.num_nodes());
    for (const auto& be : s.boundary_edges()) {
        const auto& tri = s.elements()[be.elem];
        double dth = be.theta_b - be.theta_a;
        int panels = 1;
        if (!t.chart.is_boundary()) {
            double thm = be.theta_a + 0.5 * dth;
            double dm = (Point(R * std::cos(thm), R * std::sin(thm)) - t.pole).norm();
            panels = std::clamp(static_cast<int>(std::ceil(4.0 * R * dth / dm)), 1, 256);
        }
        for (int p = 0; p < panels; ++p) {
            for (size_t i = 0; i < gx.size(); ++i) {
                double th = be.theta_a + dth * (p + gx[i]) / panels;
                Point x(R * std::cos(th), R * std::sin(th));
                double v = gw[i] * R * dth / panels * neumann_data(t, x);
                auto bc = s.barycentric(be.elem, x);
                for (int k = 0; k < 3; ++k) b[tri[k]] += v * bc[k];
            }
        }
    }
    return b;
}

}  // namespace

GreenTable green_function(std::shared_ptr<const Surface> surface, const Point& xi, const CutOff& cut) {
    const double R = disk_radius();
    if (xi.norm() > R * (1.0 + 1e-12)) throw std::invalid_argument("green_function: pole outside the surface");
    GreenTable t;
    t.surface = surface;
    t.chart = make_chart(xi);
    t.pole = t.chart.center();
    t.weight = t.chart.is_boundary() ? 4.0 * kPi : 8.0 * kPi;
    t.cut = cut;
    if (!t.chart.is_boundary()) {
        double dist = distance_to_boundary(xi);
        if (dist <= 0.0) throw std::invalid_argument("green_function: interior pole on the boundary");
        if (cut.r0() > 0.25 * (0.5 * dist) * (1.0 + 1e-12)) {
            std::ostringstream msg;
            msg << "green_function: r0 = " << cut.r0() << " too large for a pole at distance " << dist
                << " from the boundary";
            throw std::invalid_argument(msg.str());
        }
    } else if (cut.r0() > 0.25 * R) {
        throw std::invalid_argument("green_function: r0 too large");
    }

    const auto& op = surface->neumann();
    Eigen::VectorXd load = boundary_load(t) - op.mass_vector();
    t.Ht = Field(surface, op.solve(load, 0.0, &t.solve_residual), true);
    // int_disk log|x - p| = |D| log R - (pi/2)(R^2 - |p|^2).
    double p2 = std::min(t.pole.norm2(), R * R);
    t.constant = t.coef() * (std::log(R) - 0.5 * kPi * (R * R - p2));
    return t;
}

SmoothValue GreenTable::smooth(const Point& x) const {
    const double R = disk_radius();
    const bool bnd = on_boundary(x, 1e-12);
    const double d = (x - pole).norm();
    const double rn = 1.0 / (2.0 * kPi * R);
    auto ht = [&](const QuadPoint& q) { return Ht.at(q); };

    if (d < 1e-14) return robin_stencil(*this);

    SmoothValue out;
    Point ga = (x - pole) * (-coef() / (d * d));
    if (bnd) {
        Chart c = make_chart(x);
        Point tangent(-x.y / R, x.x / R);
        if (chart.is_boundary()) {
            out = mean_value_eval(*surface, c, 0.1, 1.0, ht, rn);
            out.grad.x *= c.arc_orientation();
            out.value += constant - coef() * std::log(d);
            out.grad.x += ga.dot(tangent);
        } else {
            double rho = std::min(0.1, 0.5 * d);
            out = mean_value_eval(*surface, c, rho, 1.0, [&](const QuadPoint& q) { return at(q); });
            out.grad.x *= c.arc_orientation();
        }
        out.grad.y = 0.0;
        return out;
    }
    double rho = std::min(0.1, 0.9 * (R - x.norm()));
    if (rho < 3.0 * surface->local_h(x, 0.0)) {
        auto loc = surface->locate(x);
        if (!loc) throw std::out_of_range("GreenTable::smooth: point outside the surface");
        out.value = Ht(x);
        out.grad = Ht.gradient(loc->elem);
    } else {
        out = mean_value_eval(*surface, Chart(x, ChartKind::Interior, rho), rho, 1.0, ht);
    }
    out.value += constant - coef() * std::log(d);
    out.grad += ga;
    return out;
}

RobinValue robin(const GreenTable& table) { return {table.pole, robin_stencil(table).value}; }

RobinValue robin(std::shared_ptr<const Surface> surface, const Point& xi, const CutOff& cut) {
    return robin(green_function(std::move(surface), xi, cut));
}

Point green_gradient(const GreenTable& table, const Point& x, GreenDerivative which, double step) {
    if (which == GreenDerivative::InX) return table.smooth(x).grad;
    if (step <= 0.0) step = 1e-4;
    if (step < 1e-9) throw std::invalid_argument("green_gradient: step underflow");
    int dims = on_boundary(table.pole) ? 1 : 2;
    Point g;
    for (int i = 0; i < dims; ++i) {
        auto tp = green_function(table.surface, shift_point(table.pole, i, step), table.cut);
        auto tm = green_function(table.surface, shift_point(table.pole, i, -step), table.cut);
        double d = (tp.smooth(x).value - tm.smooth(x).value) / (2.0 * step);
        (i == 0 ? g.x : g.y) = d;
    }
    return g;
}

Point robin_gradient(std::shared_ptr<const Surface> surface, const Point& xi, const CutOff& cut,
                     double step) {
    if (step < 1e-9) throw std::invalid_argument("robin_gradient: step underflow");
    int dims = on_boundary(xi) ? 1 : 2;
    Point g;
    for (int i = 0; i < dims; ++i) {
        double p = robin(surface, shift_point(xi, i, step), cut).value;
        double m = robin(surface, shift_point(xi, i, -step), cut).value;
        (i == 0 ? g.x : g.y) = (p - m) / (2.0 * step);
    }
    return g;
}

Point coordinate_direction(const Point& xi, int i) {
    if (on_boundary(xi)) {
        double R = disk_radius();
        return Point(-xi.y / R, xi.x / R);
    }
    return i == 0 ? Point(1.0, 0.0) : Point(0.0, 1.0);
}

double PoleDerivative::operator()(const Point& x) const {
    Point d = x - pole;
    return coef * d.dot(direction) / d.norm2() + dHt(x) + dconstant;
}

double PoleDerivative::at(const QuadPoint& q) const {
    Point d = q.x - pole;
    return coef * d.dot(direction) / d.norm2() + dHt.at(q) + dconstant;
}

PoleDerivative pole_derivative(const GreenTable& table, int i, double step) {
    if (step < 1e-9) throw std::invalid_argument("pole_derivative: step underflow");
    auto tp = green_function(table.surface, shift_point(table.pole, i, step), table.cut);
    auto tm = green_function(table.surface, shift_point(table.pole, i, -step), table.cut);
    PoleDerivative d;
    d.pole = table.pole;
    d.direction = coordinate_direction(table.pole, i);
    d.coef = table.coef();
    d.dHt = Field(table.surface, (tp.Ht.values - tm.Ht.values) / (2.0 * step), true);
    d.dconstant = (tp.constant - tm.constant) / (2.0 * step);
    return d;
}

const GreenTable& GreenCache::get(const Point& xi) {
    std::lock_guard<std::mutex> lock(mu_);
    auto key = std::make_pair(xi.x, xi.y);
    auto it = tables_.find(key);
    if (it != tables_.end()) return *it->second;
    auto t = std::make_unique<GreenTable>(green_function(surface_, xi, cut_));
    return *tables_.emplace(key, std::move(t)).first->second;
}

void write_green_csv(const GreenTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "node,gamma,H,G\n";
    char buf[160];
    const auto& nodes = table.surface->nodes();
    for (int i = 0; i < static_cast<int>(nodes.size()); ++i) {
        double g = table.gamma(nodes[i]);
        double h = table.shift_term()(nodes[i]) + table.Ht.values[i] + table.constant;
        if ((nodes[i] - table.pole).norm() < 1e-14)
            std::snprintf(buf, sizeof buf, "%d,,%.17g,\n", i, h);
        else
            std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g\n", i, g, h, g + h);
        out << buf;
    }
}

}  // namespace toda
