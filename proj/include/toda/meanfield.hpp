#pragma once

#include <string>
#include <vector>

#include "toda/green.hpp"

namespace toda {

// Smooth positive potentials; both default to 1.
struct Potentials {
    PointFunction V1 = [](const Point&) { return 1.0; };
    PointFunction V2 = [](const Point&) { return 1.0; };
};

// k interior points followed by m - k boundary points. Coordinates are
// Cartesian for interior points and arc length for boundary points.
struct Configuration {
    int k = 0;
    std::vector<Point> points;

    int m() const { return static_cast<int>(points.size()); }
    bool interior(int j) const { return j < k; }
    double weight(int j) const { return interior(j) ? 8.0 * kPi : 4.0 * kPi; }
    int dof() const { return m() + k; }
    // Sum of the local quanta.
    double total_weight() const;
    std::vector<double> coordinates() const;
    Configuration with_coordinates(const std::vector<double>& c) const;
    // Coordinate index range of point j.
    int offset(int j) const { return j < k ? 2 * j : 2 * k + (j - k); }
    int dims(int j) const { return interior(j) ? 2 : 1; }
    // Minimum of pairwise distances and interior distances to the boundary.
    double separation() const;
};

// Projects boundary points onto the circle and checks the layout.
Configuration make_configuration(int k, std::vector<Point> points);

// Common cut-off radius admissible at every point of the configuration,
// with slack for finite-difference moves of the points.
CutOff default_cutoff(const Configuration& xi);

// Refinement sites around each point with the given core size.
std::vector<RefinementSite> configuration_sites(const Configuration& xi, double core = 0.0);

// V2 exp(-sum rho_j/2 G(., xi_j)) = V2 prod |x - xi_j|^2 exp(-sum rho_j/2 (Ht_j + c_j)),
// so the vanishing at each xi_j is exact.
class SingularWeight {
public:
    SingularWeight(std::shared_ptr<const Surface> surface, const Configuration& xi, const CutOff& cut,
                   PointFunction V2);

    const std::shared_ptr<const Surface>& surface() const { return surface_; }
    const Configuration& configuration() const { return xi_; }
    const std::vector<GreenTable>& green() const { return green_; }
    const PointFunction& V2() const { return V2_; }
    const CutOff& cut() const { return cut_; }
    double operator()(const Point& x) const;
    double at(const QuadPoint& q) const;
    // Values at the mesh quadrature points.
    const Eigen::VectorXd& qp_values() const { return qp_; }
    // d/d(coordinate i of xi_j) of log(weight) at the mesh quadrature points.
    Eigen::VectorXd log_derivative(int j, int i, double step = 1e-4) const;

private:
    std::shared_ptr<const Surface> surface_;
    Configuration xi_;
    CutOff cut_;
    PointFunction V2_;
    std::vector<GreenTable> green_;
    Eigen::VectorXd qp_;
};

struct MFOptions {
    double descent_tol = 1e-4;
    double newton_tol = 1e-8;
    int max_descent = 400;
    int max_newton = 50;
};

struct MFSolution {
    std::shared_ptr<const SingularWeight> weight;
    double rho2 = 0.0;
    Field z;
    double energy = 0.0;
    // Dual H^1 norm of the discrete weak residual.
    double residual = 0.0;
    bool converged = false;
    int descent_iterations = 0;
    int newton_iterations = 0;
    // Energies along accepted descent steps.
    std::vector<double> descent_energies;
};

// I(z) = 1/2 int |grad z|^2 - 2 rho2 log int W e^z, with max-shifted exponentials.
double mf_energy(const Field& z, const SingularWeight& weight, double rho2);
// Weak residual K z - 2 rho2 (b(z)/int W e^z - m), the gradient of I.
Eigen::VectorXd mf_residual(const Field& z, const SingularWeight& weight, double rho2);

MFSolution solve_mf(std::shared_ptr<const SingularWeight> weight, double rho2, const Field* init = nullptr,
                    const MFOptions& opts = {});

// Hessian K - 2 rho2 (M_p - b b^T) of I at z, with p = W e^z / int W e^z.
struct MFHessian {
    SparseMatrix A;
    Eigen::VectorXd b;
    double beta = 0.0;
};
MFHessian mf_hessian(const Field& z, const SingularWeight& weight, double rho2);

// Solves (A + beta b b^T) x = rhs with int x = 0.
class HessianSolver {
public:
    HessianSolver(const Surface& surface, const MFHessian& h);
    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;

private:
    int n_ = 0;
    SparseMatrix S_;
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

// Smallest |mu| of the linearized operator on mean-zero fields against the
// mass matrix, (K - 2 rho2 (M_p - b b^T)) psi = mu M psi.
double mf_linearized_margin(const MFSolution& sol, int max_iterations = 500);

// Derivative of z along coordinate i of xi_j from the implicit function theorem.
Field dz_dxi(const MFSolution& sol, int j, int i, double step = 1e-4);

// d/d(coordinate i) of z at x = xi_j from the representation
// z(x) = 2 rho2 int G(x, y) p(y) dy.
double z_derivative_at_point(const MFSolution& sol, int j, int i, double step = 1e-4);

}  // namespace toda
