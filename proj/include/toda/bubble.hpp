#pragma once

#include <string>
#include <vector>

#include "toda/green.hpp"

namespace toda {

// Mass of the standard bubble 8 delta^2/(delta^2+|y|^2)^2 on the plane disk of
// radius r: closed form and polar quadrature.
double bubble_mass(double delta, double r);
double bubble_mass_quadrature(double delta, double r);

// Concentration data at one point. delta = d sqrt(lambda).
struct BubbleParams {
    Point xi;
    Chart chart;
    CutOff cut;
    double weight = 0.0;
    double lambda = 0.0;
    double d = 0.0;
    double delta = 0.0;
};

BubbleParams make_bubble(const Point& xi, const CutOff& cut, double lambda, double d);

// d from tau = rho H(xi,xi) + sum' rho_l G(xi, xi_l) + log V1(xi) - z(xi)/2.
// The leading term of the error function vanishes for scale = 1/4.
double bubble_d(double tau, double scale = 0.25);

// U(y) = log(8 delta^2 / (delta^2 + |y|^2)^2).
double bubble_U(double delta, const Point& y);

// Located rule over the chart ball |y| < 2 r0 whose weights carry
// chi(|y|) e^{U(y)} dy, so sum w f(q) = int chi e^{-phi} e^U f dv.
std::vector<QuadPoint> bubble_rule(const Surface& surface, const BubbleParams& b, int angular = 48,
                                   int radial_per_panel = 8);

// Peak description of a bubble for hybrid integration.
Peak bubble_peak(const BubbleParams& b);

// Raw kernel elements: Z^0 = 2(delta^2-|y|^2)/(delta^2+|y|^2),
// Z^i = 4 y_i/(delta^2+|y|^2).
double kernel_Z(const BubbleParams& b, int index, const Point& y);

// PU: -Delta PU = chi e^{-phi} e^U - mean, int PU = 0, represented as
//   chi (U - log 8 delta^2) + rho H + eta + c
// with eta the P1 response to the cut-off annulus source.
struct ProjectedBubble {
    BubbleParams params;
    CompositeField PU;
    Field eta;
    double eta_constant = 0.0;
    double solve_residual = 0.0;

    // PU - chi (U - log 8 delta^2) - rho H.
    double remainder(const Point& x) const;
};

ProjectedBubble project_bubble(const GreenTable& green, const BubbleParams& b);

// PZ^i: -Delta PZ = chi e^{-phi} e^U Z^i - mean, int PZ = 0. Index 0 is
// radial, 1..2 the chart directions (boundary charts only have 1).
struct ProjectedKernel {
    BubbleParams params;
    int index = 0;
    CompositeField PZ;
    Field remainder;
    double constant = 0.0;
    double solve_residual = 0.0;
};

ProjectedKernel project_kernel(std::shared_ptr<const Surface> surface, const BubbleParams& b, int index);
int kernel_dimension(const BubbleParams& b);

// <PZ_a, PZ_b>_{H^1} = int chi_a e^{-phi} e^{U_a} Z_a PZ_b.
Eigen::MatrixXd gram_matrix(const Surface& surface, const std::vector<ProjectedKernel>& basis);

// Normalized diagonal entry: pi/(8 rho) for index 0, pi delta^2/(8 rho) otherwise.
double gram_normalization(const ProjectedKernel& k);

// Ladder fit of the projection expansions at one point: the largest sample
// error e of PU - chi (U - log 8 delta^2) - rho H and of
// PZ^0 - 4 chi delta^2/(delta^2 + |y|^2), fitted as e / |log delta| = C (delta/r0)^a.
struct ExpansionFit {
    std::string name;
    std::vector<double> deltas;
    std::vector<double> errors;
    double exponent = 0.0;
    double constant = 0.0;
};
std::vector<ExpansionFit> projection_expansion_fits(const GreenTable& green, double d,
                                                    const std::vector<double>& lambdas,
                                                    const std::vector<Point>& samples);

// Normalized Gram diagonal and largest |G_ab| / sqrt(G_aa G_bb), a != b, per ladder entry.
struct GramRow {
    double delta = 0.0;
    std::vector<double> normalized_diagonal;
    double off_diagonal = 0.0;
};
std::vector<GramRow> gram_structure(std::shared_ptr<const Surface> surface, const Point& xi, const CutOff& cut,
                                    double d, const std::vector<double>& lambdas);

struct IdentityRow {
    std::string name;
    double computed = 0.0;
    double expected = 0.0;
};

// Plane integrals of the bubble and kernel profiles used by the expansions.
std::vector<IdentityRow> quadrature_identities(double r = 20.0);

}  // namespace toda
