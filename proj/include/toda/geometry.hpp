#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

namespace toda {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

// Radius of the flat disk with unit area.
inline double disk_radius() { return 1.0 / std::sqrt(kPi); }

struct Point {
    double x = 0.0;
    double y = 0.0;

    Point() = default;
    Point(double a, double b) : x(a), y(b) {}

    Point operator+(const Point& o) const { return {x + o.x, y + o.y}; }
    Point operator-(const Point& o) const { return {x - o.x, y - o.y}; }
    Point operator*(double s) const { return {x * s, y * s}; }
    Point operator/(double s) const { return {x / s, y / s}; }
    Point operator-() const { return {-x, -y}; }
    Point& operator+=(const Point& o) { x += o.x; y += o.y; return *this; }
    Point& operator-=(const Point& o) { x -= o.x; y -= o.y; return *this; }
    double dot(const Point& o) const { return x * o.x + y * o.y; }
    double cross(const Point& o) const { return x * o.y - y * o.x; }
    double norm2() const { return x * x + y * y; }
    double norm() const { return std::hypot(x, y); }
};

inline Point operator*(double s, const Point& p) { return p * s; }

using PointFunction = std::function<double(const Point&)>;

// Quadrature node with the P1 barycentric coordinates of its host element.
// Nodes on curved boundary segments carry extrapolated coordinates.
struct QuadPoint {
    Point x;
    double w = 0.0;
    int elem = -1;
    std::array<double, 3> bary{};
};

// Radial cut-off chi(|y|/r0): 1 on [0,1], 0 beyond 2, C^2 quintic transition.
class CutOff {
public:
    explicit CutOff(double r0 = 0.1) : r0_(r0) {}

    double r0() const { return r0_; }
    static double profile(double s);
    static double profile_d1(double s);
    static double profile_d2(double s);

    double operator()(double dist) const { return profile(dist / r0_); }
    // d/dr and d^2/dr^2 of chi(r/r0).
    double d1(double dist) const { return profile_d1(dist / r0_) / r0_; }
    double d2(double dist) const { return profile_d2(dist / r0_) / (r0_ * r0_); }
    // Planar Laplacian of the radial function chi(|y|/r0) at |y| = dist > 0.
    double laplacian(double dist) const;

private:
    double r0_;
};

enum class ChartKind { Interior, Boundary };

// Isothermal coordinates y at a point xi: interior charts are translations,
// boundary charts a rotated Moebius map onto the upper half-plane with
// |dy/dx| = 1 at xi. The metric pulls back to exp(phi_hat(y)) |dy|^2.
class Chart {
public:
    Chart() = default;
    Chart(Point center, ChartKind kind, double radius);

    const Point& center() const { return center_; }
    ChartKind kind() const { return kind_; }
    bool is_boundary() const { return kind_ == ChartKind::Boundary; }
    double radius() const { return radius_; }
    // Angle of a boundary center on the circle.
    double angle() const { return angle_; }

    Point to_local(const Point& x) const;
    Point to_surface(const Point& y) const;
    double phi_hat(const Point& y) const;
    // exp(-phi_hat) evaluated at a surface point, i.e. |dy/dx|^2.
    double inv_conformal_at(const Point& x) const;
    // Jacobian d(x)/d(y) at y as a 2x2 matrix [[a, b], [c, d]] (row-major).
    std::array<double, 4> jacobian(const Point& y) const;
    // Unit surface vector d x / d y1 at the center.
    Point tangent() const;
    // +1 if increasing y1 moves counterclockwise along the boundary.
    double arc_orientation() const;

private:
    Point center_{};
    ChartKind kind_ = ChartKind::Interior;
    double radius_ = 0.0;
    double angle_ = 0.0;
    double R_ = 0.0;
};

// Weighted node of a polar rule in chart coordinates. The weight already
// contains the polar Jacobian s and the conformal factor exp(phi_hat).
struct ChartPoint {
    Point y;
    Point x;
    double w = 0.0;
};

// Polar rule over {|y| < outer} (half-disk for boundary charts), radially
// graded toward the center starting at inner_scale. With surface_measure the
// weights include exp(phi_hat); otherwise they integrate against dy.
std::vector<ChartPoint> chart_rule(const Chart& chart, double outer, double inner_scale,
                                   int angular = 48, int radial_per_panel = 8,
                                   bool surface_measure = true);

// Gauss-Legendre nodes and weights on [0, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

// Composite Gauss-Legendre integral of f over [a, b] with geometric panels
// clustered at a (ratio 2, first panel length `first`).
double integrate_graded(const std::function<double(double)>& f, double a, double b,
                        double first, int per_panel = 10);

// Least-squares line through (x_i, y_i).
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct RefinementSite {
    Point center;
    double r0 = 0.1;
    // Target element size at the center (0: only the factor-4 refinement).
    double core = 0.0;
};

struct MeshStats {
    double h_max = 0.0;
    double h_min = 0.0;
    double min_angle_deg = 0.0;
};

struct BoundaryEdge {
    int a = -1;
    int b = -1;
    int elem = -1;
    double theta_a = 0.0;
    double theta_b = 0.0;
};

struct Location {
    int elem = -1;
    std::array<double, 3> bary{};
};

class NeumannOperator;

// Area-normalized flat disk with a P1 triangulation. Boundary triangles own
// the circular segment cut off by their chord; P1 functions extend
// polynomially into it, so integrals live on the exact disk.
class Surface {
public:
    Surface(std::vector<Point> nodes, std::vector<std::array<int, 3>> elements, int quad_order);
    ~Surface();
    Surface(const Surface&) = delete;
    Surface& operator=(const Surface&) = delete;

    double radius() const { return radius_; }
    int quad_order() const { return quad_order_; }
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    int num_elements() const { return static_cast<int>(elems_.size()); }
    const std::vector<Point>& nodes() const { return nodes_; }
    const std::vector<std::array<int, 3>>& elements() const { return elems_; }
    const std::vector<BoundaryEdge>& boundary_edges() const { return bedges_; }
    const std::vector<QuadPoint>& quad_points() const { return qps_; }
    const std::array<int, 3>& neighbors(int e) const { return nbr_[e]; }
    // Product rule on the n x n uniform subdivision of element e, its segment
    // split into n angular panels.
    std::vector<QuadPoint> refined_rule(int e, int n) const;
    // Quadrature nodes of element e occupy [qp_begin(e), qp_begin(e+1)).
    int qp_begin(int e) const { return qp_offset_[e]; }
    // Gradients of the three P1 basis functions of element e.
    const std::array<Point, 3>& basis_gradients(int e) const { return grads_[e]; }
    // Triangle area plus attached segment area.
    double element_measure(int e) const { return measure_[e]; }
    double triangle_area(int e) const { return tri_area_[e]; }
    double element_diameter(int e) const;
    MeshStats stats() const;
    // Largest element diameter among elements touching the ball B(x, r).
    double local_h(const Point& x, double r) const;

    std::optional<Location> locate(const Point& x) const;
    // Barycentric coordinates of x with respect to element e (extrapolated outside).
    std::array<double, 3> barycentric(int e, const Point& x) const;
    double interpolate(const Eigen::VectorXd& nodal, const Point& x) const;
    double interpolate(const Eigen::VectorXd& nodal, const QuadPoint& q) const {
        const auto& t = elems_[q.elem];
        return q.bary[0] * nodal[t[0]] + q.bary[1] * nodal[t[1]] + q.bary[2] * nodal[t[2]];
    }

    double integrate(const PointFunction& f) const;
    double integrate_qp(const std::function<double(const QuadPoint&)>& f) const;
    double boundary_length() const;

    // Load vector b_n = int f psi_n.
    Eigen::VectorXd load(const std::function<double(const QuadPoint&)>& f) const;

    const NeumannOperator& neumann() const;

    void write(const std::string& path) const;
    static std::shared_ptr<const Surface> read(const std::string& path, int quad_order);

private:
    void build_geometry();
    void build_locator();

    double radius_;
    int quad_order_;
    std::vector<Point> nodes_;
    std::vector<std::array<int, 3>> elems_;
    std::vector<BoundaryEdge> bedges_;
    std::vector<int> elem_bedge_;
    std::vector<std::array<Point, 3>> grads_;
    std::vector<double> tri_area_;
    std::vector<double> measure_;
    std::vector<QuadPoint> qps_;
    std::vector<int> qp_offset_;

    // Neighbor across the edge opposite local vertex k, -1 on the boundary.
    std::vector<std::array<int, 3>> nbr_;
    // Coarse grid of walk start elements for point location.
    double cell_ = 0.0;
    int grid_n_ = 0;
    std::vector<int> start_;

    mutable std::once_flag neumann_once_;
    mutable std::unique_ptr<NeumannOperator> neumann_;
};

// Graded mesh of the unit-area disk. Elements have diameter <= h_target away
// from refinement sites; inside U_{2 r0}(site) the size drops to
// min(h_target/4, r0/8) and grades geometrically down to `core` at the site.
// The mesh is symmetric under both coordinate reflections.
std::shared_ptr<const Surface> build_surface(double h_target, int quad_order,
                                             const std::vector<RefinementSite>& sites = {});

// Chart at a surface point: boundary kind when |xi| is within 1e-12 of R.
Chart make_chart(const Surface& surface, const Point& xi);
Chart make_chart(const Point& xi);

double distance_to_boundary(const Point& x);
bool on_boundary(const Point& x, double tol = 1e-12);
// Point on the circle at arc length s (counterclockwise from (R, 0)).
Point boundary_point(double s);
double boundary_arclength(const Point& x);

}  // namespace toda
