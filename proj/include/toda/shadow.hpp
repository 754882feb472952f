#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "toda/meanfield.hpp"

namespace toda {

struct ShadowContext {
    std::shared_ptr<const Surface> surface;
    Potentials potentials;
    double rho2 = 0.0;
    // Central-difference step for xi-derivatives of Green data.
    double step = 1e-4;
    MFOptions mf;
};

// F = sum rho_j^2 R(xi_j) + sum_{j != l} rho_j rho_l G(xi_j, xi_l) + sum 2 rho_j log V1(xi_j)
// and its gradient in configuration coordinates.
struct KRValue {
    double value = 0.0;
    Eigen::VectorXd grad;
};
KRValue kirchhoff_routh(const ShadowContext& ctx, const Configuration& xi, bool with_gradient = true);
KRValue kirchhoff_routh(const ShadowContext& ctx, const Configuration& xi, const std::vector<GreenTable>& green,
                        bool with_gradient);

// Lambda = I/2 - F/4 with z = z(., xi) from the mean-field solver.
struct LandscapeSample {
    Configuration xi;
    double F = 0.0;
    double I = 0.0;
    double Lambda = 0.0;
    Eigen::VectorXd gradF;
    // rho_j d/dx z(x, xi) at x = xi_j per coordinate.
    Eigen::VectorXd gradZ;
    Eigen::VectorXd gradLambda;
    bool has_gradient = false;
    std::shared_ptr<MFSolution> mf;
};
LandscapeSample lambda_km(const ShadowContext& ctx, const Configuration& xi, bool with_gradient = true,
                          const Field* init = nullptr);

struct ShadowState {
    Configuration xi;
    Field w;
    double t = 1.0;
    double rho2 = 0.0;
    double residual = 0.0;
    // Smallest singular value of the reduced Jacobian d/dxi of the balance condition.
    double condition = 0.0;
    // Non-degeneracy margin of the field block.
    double margin = 0.0;
    int newton_iterations = 0;
    bool converged = false;
};

// Field part K w - 2 rho2 (b/int - m) and vector part grad f_t with
// f_t = F - (1 - t) sum rho_j w(xi_j), w held fixed.
struct ShadowResidual {
    Eigen::VectorXd field;
    Eigen::VectorXd vector;
    double norm = 0.0;
};
ShadowResidual shadow_residual(const ShadowContext& ctx, const ShadowState& state);

struct ShadowOptions {
    double tol = 1e-7;
    int max_newton = 30;
};

// Newton on the balance condition with w = z(., xi) eliminated by the
// mean-field solve (Schur-reduced system).
ShadowState solve_shadow(const ShadowContext& ctx, double t, const ShadowState& init,
                         const ShadowOptions& opts = {});

// Continuation t = 1 -> 0 in steps of 0.1, halving on failure down to 1/64.
struct ShadowRun {
    std::vector<ShadowState> path;
    bool completed = false;
    std::string message;
};
ShadowRun shadow_continuation(const ShadowContext& ctx, const Configuration& start, const ShadowOptions& opts = {});

struct SearchOptions {
    int multistart = 8;
    std::uint64_t seed = 1;
    // Minimum separation allowed during the search.
    double guard = 0.02;
    double grad_tol = 1e-6;
    int max_iterations = 80;
    int workers = 1;
};

struct CriticalPoint {
    LandscapeSample sample;
    // Eigenvalues of the Hessian of -Lambda (central differences of the gradient).
    Eigen::VectorXd hessian_eigenvalues;
    std::string classification;
    bool degenerate = false;
};

// Multistart quasi-Newton minimization of -Lambda over the configuration space.
std::vector<CriticalPoint> find_critical_points(const ShadowContext& ctx, int k, int m, const SearchOptions& opts = {});

// Hessian of -Lambda by central differences of the gradient.
Eigen::MatrixXd neg_lambda_hessian(const ShadowContext& ctx, const Configuration& xi);

}  // namespace toda
