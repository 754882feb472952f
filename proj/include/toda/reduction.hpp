#pragma once

#include <array>
#include <string>
#include <vector>

#include "toda/bubble.hpp"
#include "toda/meanfield.hpp"

namespace toda {

// lambda-independent data of a configuration: Green tables, z(., xi) and the
// exponents tau_j = rho H(xi_j, xi_j) + sum' rho_l G(xi_j, xi_l) + log V1(xi_j) - z(xi_j)/2.
struct Background {
    std::shared_ptr<const Surface> surface;
    Configuration xi;
    double rho2 = 0.0;
    Potentials potentials;
    CutOff cut;
    std::shared_ptr<const SingularWeight> weight;
    std::shared_ptr<const MFSolution> mf;
    std::vector<double> tau;
};

std::shared_ptr<const Background> make_background(std::shared_ptr<const Surface> surface, const Configuration& xi,
                                                  double rho2, const Potentials& potentials, const CutOff& cut,
                                                  const MFOptions& mf = {});

// Largest admissible common cut-off: the bubble expansions are asymptotic in
// delta/r0, so the reduction uses the widest radius the Green tables allow.
CutOff reduction_cutoff(const Configuration& xi);

// Mesh graded around the configuration so its core size is delta_min/8 for
// the smallest lambda of the ladder (tau estimated on a coarse mesh first).
std::shared_ptr<const Surface> family_surface(const Configuration& xi, double rho2, const Potentials& potentials,
                                              const CutOff& cut, const std::vector<double>& lambdas, double h,
                                              int quad_order = 4, double d_scale = 0.25);

// Approximate solution W1 = sum PU_j - z/2, W2 = z - sum PU_j / 2.
struct ApproxSolution {
    std::shared_ptr<const Background> bg;
    double lambda = 0.0;
    double d_scale = 0.25;
    std::vector<BubbleParams> bubbles;
    std::vector<ProjectedBubble> pu;
    CompositeField W1, W2;
    // Values at the mesh quadrature points.
    Eigen::VectorXd W1_qp, W2_qp;
    // sum_j chi_j e^{-phi_j} e^{U_j} at the quadrature points.
    Eigen::VectorXd bubble_qp;
    // Weak Laplacians int grad W_i . grad psi_n, up to multiples of the mass vector.
    Eigen::VectorXd lap1, lap2;
    // Loads of chi_j e^{-phi_j} e^{U_j} Z^i_j and their (j, i) labels.
    std::vector<Eigen::VectorXd> kernel_loads;
    std::vector<std::array<int, 2>> kernel_labels;
};

ApproxSolution assemble_W(std::shared_ptr<const Background> bg, double lambda, double d_scale = 0.25);

// Pointwise error terms from the projection identities:
//   R1 = D - mean(D) + rho2 (p_z - p_W2),  R2 = -(D - mean(D))/2 + 2 rho2 (p_W2 - p_z)
// with D = 2 lambda V1 e^{W1} - sum chi e^{-phi} e^U, p_z = V~2 e^z / int, p_W2 = V2 e^{W2} / int.
struct ResidualReport {
    double lambda = 0.0;
    double p = 0.0;
    double norm1 = 0.0;
    double norm2 = 0.0;
    // ||2 lambda V1 e^{W1} - sum chi e^{-phi} e^U||_p.
    double diff_norm = 0.0;
    double mean1 = 0.0;
    double mean2 = 0.0;
    double total() const { return norm1 + norm2; }
};
ResidualReport residual_norms(const ApproxSolution& app, double p);

// Exponent of y ~ C lambda^a: fit of log y against log lambda.
LineFit fit_power(const std::vector<double>& lambdas, const std::vector<double>& y);

// E(u) = int Q(u, u) - lambda int V1 e^{u1} - rho2 log int V2 e^{u2} for P1 fields.
double toda_energy(const PairField& u, double lambda, double rho2, const Potentials& potentials);

struct EnergyParts {
    double Q = 0.0;
    // lambda int V1 e^{u1}.
    double mass = 0.0;
    double log_integral = 0.0;
    double E = 0.0;
};
// Energy of W (+ phi when given), with the W pairings evaluated from the projection identities.
EnergyParts energy_W(const ApproxSolution& app, const PairField* phi = nullptr);

struct EnergyExpansion {
    double slope = 0.0;
    double expected_slope = 0.0;
    double intercept = 0.0;
    double Lambda = 0.0;
    // intercept - Lambda - 2 pi (k+m) log 8.
    double c0 = 0.0;
    // Candidates -4 pi (k+m), -6 pi (k+m) and the value predicted by the d scale in use.
    double c0_four = 0.0;
    double c0_six = 0.0;
    double c0_predicted = 0.0;
    std::string nearest;
};
EnergyExpansion reduced_energy_expansion(const std::vector<double>& lambdas, const std::vector<double>& energies,
                                         double Lambda, const Configuration& xi, double d_scale = 0.25);

struct PhiOptions {
    int max_iterations = 200;
    double tol = 1e-10;
};

struct PhiResult {
    PairField phi;
    int iterations = 0;
    double norm = 0.0;
    // ||phi_{n+1} - phi_n|| / ||phi_n - phi_{n-1}||.
    std::vector<double> ratios;
    double max_ratio = 0.0;
    bool converged = false;
    // Multipliers c_ij with F(phi) = sum c_ij (load of chi e^{-phi} e^U Z^i_j) modulo constants.
    Eigen::VectorXd multipliers;
    // max |<phi1, PZ^i_j>_{H^1}| / ||phi1||.
    double orthogonality = 0.0;
    std::string message;
};

// Fixed point phi = Pi^perp L^{-1}(S(phi) + N(phi) + R) on K^perp, with L
// factorized once.
PhiResult solve_phi(const ApproxSolution& app, const PhiOptions& opts = {}, const PairField* init = nullptr);

// Solution of L phi = h on K^perp for a load vector pair h.
PairField solve_linear(const ApproxSolution& app, const Eigen::VectorXd& h1, const Eigen::VectorXd& h2);

// Weak residual of the Toda system at u = W + phi, with dual H^1 norm.
struct TodaResidual {
    Eigen::VectorXd F1, F2;
    double norm = 0.0;
};
TodaResidual toda_residual(const ApproxSolution& app, const PairField& phi);

struct NewtonOptions {
    double tol = 1e-8;
    int max_iterations = 50;
};

struct SolveOutcome {
    double lambda = 0.0;
    PairField phi;
    double phi_norm = 0.0;
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;
    // lambda int V1 e^{u1}.
    double rho1 = 0.0;
    // Masses of 2 lambda V1 e^{u1} and 2 rho2 V2 e^{u2}/int on U_r(xi_j), r in {0.2, 0.1, 0.05}.
    std::vector<std::array<double, 3>> sigma1, sigma2;
    double max_u1 = 0.0;
    double sup_u2 = 0.0;
    // L2 distance of u2 from z - sum rho_j G(., xi_j)/2.
    double u2_deviation = 0.0;
    Eigen::VectorXd multipliers;
};

inline constexpr std::array<double, 3> kMassRadii = {0.2, 0.1, 0.05};

// Damped Newton on the full discrete system (mean constraints only).
SolveOutcome newton_polish(const ApproxSolution& app, const PairField& phi_init, const NewtonOptions& opts = {});

}  // namespace toda
