#pragma once

// Reference implementations used only by tests. They deliberately avoid the
// library's numerical routines.

#include <Eigen/Dense>

#include <vector>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Moments {
    double mean = 0.0;
    double variance = 0.0;  // population
};

// Welford's one-pass update.
Moments welford(const std::vector<double>& values);

// Textbook two-pass Pearson correlation.
double pearson_two_pass(const std::vector<double>& x, const std::vector<double>& y);

// Plain double loop over the support.
Matrix surplus_double_loop(const Matrix& A, const Vector& lambda, const Matrix& x, const Matrix& y,
                           const Eigen::MatrixXi& x_cat, const Eigen::MatrixXi& y_cat);

// E_pi[phi] - sigma * sum pi log(pi / (f g)).
double entropic_objective(const Matrix& pi, const Matrix& phi, const Vector& f, const Vector& g,
                          double sigma);

// Maximizes the entropic objective over couplings with marginals (f, g) by
// projected gradient ascent on the affine marginal subspace (double-centred
// gradients), starting from f g'. Returns the optimal coupling.
Matrix projected_gradient_coupling(const Matrix& phi, const Vector& f, const Vector& g, double sigma,
                                   int max_iterations = 200000, double tolerance = 1e-12);

// pi_11 for the symmetric two-point market {-1, +1}, masses 1/2, A = [a],
// sigma = s: the fixed point gives pi_11 = e^{a/s} / (2 (e^{a/s} + e^{-a/s})).
double two_point_pi11(double a, double sigma);

// Homogamy rates by explicit counting over couples (rows = couples).
struct HomogamyCounts {
    Matrix rate;  // NaN where undefined or not applicable
    Eigen::MatrixXi counts;
};
HomogamyCounts homogamy_by_counting(const std::vector<int>& head, const std::vector<int>& partner,
                                    int labels, bool unordered);

}  // namespace oracle
