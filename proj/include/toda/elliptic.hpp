#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "toda/geometry.hpp"

namespace toda {

using SparseMatrix = Eigen::SparseMatrix<double>;

// P1 stiffness, mass and the bordered mean-zero Neumann system
//   [K m; m^T 0] [u; mu] = [b; c],
// factorized once and shared read-only.
class NeumannOperator {
public:
    explicit NeumannOperator(const Surface& surface);

    const SparseMatrix& stiffness() const { return K_; }
    const SparseMatrix& mass() const { return M_; }
    // m_n = int psi_n.
    const Eigen::VectorXd& mass_vector() const { return m_; }

    // Solves K u = b - mu m with int u = mean. The relative residual of the
    // bordered system is stored in *residual when requested.
    Eigen::VectorXd solve(const Eigen::VectorXd& load, double mean = 0.0,
                          double* residual = nullptr) const;

private:
    SparseMatrix K_;
    SparseMatrix M_;
    Eigen::VectorXd m_;
    SparseMatrix A_;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

// Nodal P1 function on a surface.
struct Field {
    std::shared_ptr<const Surface> surface;
    Eigen::VectorXd values;
    bool mean_zero = false;

    Field() = default;
    Field(std::shared_ptr<const Surface> s, Eigen::VectorXd v, bool mz = false)
        : surface(std::move(s)), values(std::move(v)), mean_zero(mz) {}
    static Field zero(std::shared_ptr<const Surface> s);

    double operator()(const Point& x) const { return surface->interpolate(values, x); }
    double at(const QuadPoint& q) const { return surface->interpolate(values, q); }
    Point gradient(int elem) const;
    double integral() const;
    double l2_norm() const;
    // Subtracts the mean and sets the flag.
    void project_mean_zero();
};

struct PairField {
    Field u1;
    Field u2;
};

void require_same_surface(const Field& a, const Field& b);

// -Delta u = f - mean(f), du/dn = 0, int u = 0.
Field solve_neumann(std::shared_ptr<const Surface> surface,
                    const std::function<double(const QuadPoint&)>& f, double* residual = nullptr);
Field solve_neumann(std::shared_ptr<const Surface> surface, const PointFunction& f,
                    double* residual = nullptr);
// Same with a precomputed load vector b_n = int f psi_n.
Field solve_neumann_load(std::shared_ptr<const Surface> surface, const Eigen::VectorXd& load,
                         double* residual = nullptr);

double h1_inner(const Field& u, const Field& v);
double quad_form_Q(const PairField& v, const PairField& w);

// Node-indexed CSV (index,value).
void write_field_csv(const Field& f, const std::string& path);
Field read_field_csv(std::shared_ptr<const Surface> surface, const std::string& path);

// Load vector of f against an arbitrary rule whose points carry host
// elements and barycentric coordinates.
Eigen::VectorXd assemble_load(const Surface& surface, const std::vector<QuadPoint>& rule,
                              const std::function<double(const QuadPoint&)>& f);

// Weighted mass matrix sum_q w_q c_q psi_i psi_j over a located rule.
SparseMatrix assemble_weighted_mass(const Surface& surface, const std::vector<QuadPoint>& rule,
                                    const Eigen::VectorXd& coef);

// Dual H^1 norm of a load vector: sqrt(r^T u) with K u = r - mean, int u = 0.
double dual_norm(const Surface& surface, const Eigen::VectorXd& residual);

// Chart points converted into located samples. Points outside the surface
// (rounding at the rim) are dropped.
std::vector<QuadPoint> locate_chart_points(const Surface& surface,
                                           const std::vector<ChartPoint>& points);

// Neighborhood of a concentration point for hybrid integration.
struct Peak {
    Chart chart;
    double r0 = 0.1;
    // Smallest feature size at the center (bubble scale).
    double scale = 0.01;
};

// Rule integrating over the surface: polar chart rules weighted by the
// partition functions psi_j = chi(|y_j| / (r0/2)) near each peak, mesh
// quadrature weighted by 1 - sum psi_j elsewhere.
std::vector<QuadPoint> hybrid_rule(const Surface& surface, const std::vector<Peak>& peaks,
                                   int angular = 48, int radial_per_panel = 8);

double integrate_rule(const std::vector<QuadPoint>& rule,
                      const std::function<double(const QuadPoint&)>& f);

// Value and gradient at a chart center of a function f with constant
// Laplacian `lap` on the chart ball of the given radius, computed from
// weighted averages. Boundary charts require constant Neumann data
// `neumann` on the arc and return the arc-length derivative in grad.x.
struct SmoothValue {
    double value = 0.0;
    Point grad;
};
SmoothValue mean_value_eval(const Surface& surface, const Chart& chart, double radius,
                            double lap, const std::function<double(const QuadPoint&)>& f,
                            double neumann = 0.0);

// Cached sampling of the mean-value stencil so several functions can share it.
class MeanValueStencil {
public:
    MeanValueStencil(const Surface& surface, const Chart& chart, double radius);
    SmoothValue eval(double lap, const std::function<double(const QuadPoint&)>& f,
                     double neumann = 0.0) const;
    const std::vector<QuadPoint>& samples() const { return samples_; }

private:
    Chart chart_;
    double radius_;
    std::vector<QuadPoint> samples_;
    std::vector<Point> local_;
    std::vector<double> w_, wx_, wy_;
    double wsum_ = 0.0;
};

// Radial profiles in chart coordinates used by the projected bubbles and
// kernel elements.
enum class TermKind {
    LogPole,       // chi log(1/|y|)
    LogBubble,     // chi log(1/(delta^2+|y|^2)^2)
    KernelRadial,  // chi 4 delta^2/(delta^2+|y|^2)
    KernelLinear,  // chi 4 y_i/(delta^2+|y|^2)
    LogGlobal,     // log(1/|x - center|), no cut-off
    GreenShift,    // log(1/|x - center|) - chi log(1/|y|), no cut-off
};

struct AnalyticTerm {
    Chart chart;
    CutOff cut;
    TermKind kind = TermKind::LogPole;
    double coef = 1.0;
    double delta = 0.0;
    int component = 0;

    // Value from chart coordinates (cut-off kinds only).
    double local(const Point& y) const;
    double operator()(const Point& x) const;
    bool global() const { return kind == TermKind::LogGlobal || kind == TermKind::GreenShift; }
    // Cheap support test in surface coordinates.
    bool may_touch(const Point& x) const;
};

// analytic terms + P1 remainder + constant.
struct CompositeField {
    std::shared_ptr<const Surface> surface;
    std::vector<AnalyticTerm> terms;
    Eigen::VectorXd fem;
    double constant = 0.0;

    static CompositeField from_field(const Field& f);
    double analytic(const Point& x) const;
    double operator()(const Point& x) const;
    double at(const QuadPoint& q) const;
    // this += s * other
    CompositeField& axpy(double s, const CompositeField& other);
    CompositeField scaled(double s) const;
};

}  // namespace toda
