#pragma once

#include <map>
#include <mutex>
#include <string>

#include "toda/elliptic.hpp"

namespace toda {

// Polar rule on the annulus a < |y| < b of a chart (half annulus on the
// boundary) with surface-measure weights.
std::vector<ChartPoint> annulus_rule(const Chart& chart, double a, double b, int angular = 96,
                                     int radial = 12);

// Local blow-up quantum: 8 pi inside, 4 pi on the boundary.
double rho_weight(const Point& xi);

// G(., xi) = Gamma0 + Ht + c with Gamma0 = (4/rho) log(1/|x - xi|) on the
// whole surface, Ht the P1 solution of -Delta Ht = -1, dHt/dn = -dGamma0/dn
// with zero mean, and c = -int Gamma0 in closed form. The cut-off
// splitting G = Gamma + H with Gamma = (4/rho) chi log(1/|y_xi|) is recovered
// analytically: H = Gamma0 - Gamma + Ht + c.
struct GreenTable {
    std::shared_ptr<const Surface> surface;
    Point pole;
    double weight = 0.0;
    Chart chart;
    CutOff cut;
    Field Ht;
    double constant = 0.0;
    double solve_residual = 0.0;

    double coef() const { return 4.0 / weight; }
    // Cut-off singular part Gamma.
    double gamma(const Point& x) const;
    // Regular part H = G - Gamma, smooth across the pole.
    double regular(const Point& x) const;
    double regular_at(const QuadPoint& q) const;
    double operator()(const Point& x) const;
    double at(const QuadPoint& q) const;

    AnalyticTerm singular_term() const;
    AnalyticTerm log_term() const;
    AnalyticTerm shift_term() const;
    // G as a composite field.
    CompositeField as_composite() const;
    // H as a composite field.
    CompositeField regular_composite() const;

    // Value and gradient of G at x != xi (of H at x = xi) from mean values;
    // falls back to P1 interpolation of Ht where no clean stencil fits.
    // On the boundary grad.x is the counterclockwise arc-length derivative.
    SmoothValue smooth(const Point& x) const;
};

GreenTable green_function(std::shared_ptr<const Surface> surface, const Point& xi, const CutOff& cut);

struct RobinValue {
    Point xi;
    double value = 0.0;
};

// H(xi, xi) from a mean-value stencil of Ht.
RobinValue robin(const GreenTable& table);
RobinValue robin(std::shared_ptr<const Surface> surface, const Point& xi, const CutOff& cut);

enum class GreenDerivative { InX, InXi };

// Gradient of G(x, xi) in x (InX) or in xi (InXi, central differences with
// re-solved regular parts). Boundary variables differentiate along the arc;
// the derivative is returned in .x.
Point green_gradient(const GreenTable& table, const Point& x, GreenDerivative which,
                     double step = 0.0);

// Derivative of the Robin function at xi by central differences.
Point robin_gradient(std::shared_ptr<const Surface> surface, const Point& xi, const CutOff& cut,
                     double step);

// Moves xi by h along coordinate i: Cartesian inside, arc length on the boundary.
Point shift_point(const Point& xi, int i, double h);

// d/dxi G(x, xi) along coordinate i of the pole (arc length on the
// boundary): analytic log part plus the central-difference derivative of the
// regular P1 part.
struct PoleDerivative {
    Point pole;
    Point direction;
    double coef = 0.0;
    Field dHt;
    double dconstant = 0.0;

    double operator()(const Point& x) const;
    double at(const QuadPoint& q) const;
};

PoleDerivative pole_derivative(const GreenTable& table, int i, double step = 1e-4);

// Unit direction of coordinate i at xi (counterclockwise tangent on the boundary).
Point coordinate_direction(const Point& xi, int i);

// Build-once cache of Green tables per pole on one surface.
class GreenCache {
public:
    GreenCache(std::shared_ptr<const Surface> surface, const CutOff& cut) : surface_(std::move(surface)), cut_(cut) {}
    const GreenTable& get(const Point& xi);
    const std::shared_ptr<const Surface>& surface() const { return surface_; }
    const CutOff& cut() const { return cut_; }

private:
    std::shared_ptr<const Surface> surface_;
    CutOff cut_;
    std::mutex mu_;
    std::map<std::pair<double, double>, std::unique_ptr<GreenTable>> tables_;
};

// CSV of (node, Gamma, H, G); G is left empty at the pole.
void write_green_csv(const GreenTable& table, const std::string& path);

}  // namespace toda
