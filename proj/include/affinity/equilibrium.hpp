#pragma once

#include "affinity/common.hpp"
#include "affinity/market_data.hpp"

namespace affinity {

inline constexpr double kMinSigma = 1e-6;

// Surplus Phi(x, y) = x' A y + sum_c lambda_c 1{x_c = y_c}, scaled by the
// heterogeneity sigma in the matching problem.
struct AffinityModel {
    Matrix A;       // K x K, continuous block
    Vector lambda;  // one homogamy weight per categorical
    double sigma = 1.0;

    static AffinityModel zero(Eigen::Index K, Eigen::Index C, double sigma = 1.0) {
        return {Matrix::Zero(K, K), Vector::Zero(C), sigma};
    }
    AffinityModel scaled(double k) const { return {k * A, k * lambda, k * sigma}; }

    // Throws DimensionError / DataError when the model cannot be used on a
    // market of the given kind and sizes.
    void validate(Eigen::Index K, Eigen::Index C, MarketKind kind) const;
};

struct SurplusMatrix {
    Matrix values;
};

struct SolveOptions {
    double tolerance = 1e-10;
    int max_iterations = 10000;
    // If false, a non-converged solve is returned with converged == false
    // instead of throwing ConvergenceError.
    bool throw_on_failure = true;
};

// Solution of the entropic matching problem on a (deduplicated) support.
struct EquilibriumMatching {
    Matrix weights;      // coupling pi, total mass 1
    Vector potential_a;  // over rows
    Vector potential_b;  // over columns; equals potential_a in unipartite mode
    double social_gain = 0.0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

SurplusMatrix surplus_matrix(const AffinityModel& model, const DiscreteMarket& market);
// Evaluated on the coupling's full (non-deduplicated) support.
SurplusMatrix surplus_matrix(const AffinityModel& model, const EmpiricalCoupling& coupling);

// `warm_start` (optional) supplies initial potentials and receives the final
// ones, which lets callers re-solve nearby models cheaply.
EquilibriumMatching solve(const AffinityModel& model, const DiscreteMarket& market,
                          const SolveOptions& options = {},
                          EquilibriumMatching* warm_start = nullptr);
// Solves on coupling.market(), the deduplicated support of the coupling.
EquilibriumMatching solve(const AffinityModel& model, const EmpiricalCoupling& coupling,
                          const SolveOptions& options = {});

// E_pi[Phi] - sigma * MI(pi), where MI is the mutual information of pi
// relative to the product of its target marginals.
double social_gain(const AffinityModel& model, const DiscreteMarket& market,
                   const SolveOptions& options = {});
double social_gain(const AffinityModel& model, const EmpiricalCoupling& coupling,
                   const SolveOptions& options = {});

// Objective E_pi[Phi] - sigma * MI(pi) for an arbitrary coupling `pi` on
// the market support.
double regularized_objective(const Matrix& pi, const SurplusMatrix& surplus, double sigma,
                             const DiscreteMarket& market);

// U(x, x') = (Phi(x, x') + a(x) - a(x')) / 2, the systematic utility that the
// row type obtains from a match with the column type.
Matrix equilibrium_utilities(const EquilibriumMatching& match, const SurplusMatrix& surplus);

}  // namespace affinity
