#pragma once

#include "affinity/equilibrium.hpp"

#include <string>
#include <vector>

namespace affinity {

// unipartite_symmetric: A is constrained symmetric (upper triangle is free).
// bipartite_free: all K*K entries of A are free and rows/columns are
// distinct populations.
enum class FitMode { unipartite_symmetric, bipartite_free };

inline const char* to_string(FitMode mode) {
    return mode == FitMode::unipartite_symmetric ? "unipartite_symmetric" : "bipartite_free";
}

inline constexpr double kLambdaBound = 50.0;
// A continuous coefficient beyond this (standardized units) means the fit is
// running off to infinity: the observed moments sit on the boundary of what
// any finite A can produce (e.g. a perfectly segmented sample).
inline constexpr double kDivergenceBound = 1e3;

struct FitOptions {
    double outer_tolerance = 1e-7;  // max abs moment residual at convergence
    int max_outer_iterations = 500;
    SolveOptions inner;
    FitMode mode = FitMode::unipartite_symmetric;
};

struct FitResult {
    AffinityModel model;  // sigma == 1
    FitMode mode = FitMode::unipartite_symmetric;
    EquilibriumMatching matching;  // on coupling.market() support
    Matrix moment_residual;        // E_model[x y'] - E_data[x y']
    Vector category_residual;      // per categorical same-category frequency gap
    double objective_value = 0.0;  // W(A) - <A, data moments>
    double social_gain = 0.0;      // W(A, 1)
    int iterations = 0;
    bool converged = false;
    bool diverged = false;  // stopped at kDivergenceBound; converged is false
    std::vector<bool> lambda_at_bound;  // per categorical
    std::vector<std::string> warnings;

    double max_moment_residual() const;
};

// Mapping between AffinityModel and the free parameter vector of the
// estimation problem. Layout: continuous entries first (upper triangle,
// row-major, in symmetric mode; all entries row-major otherwise), then one
// lambda per categorical.
class ParameterLayout {
public:
    ParameterLayout(Eigen::Index K, Eigen::Index C, FitMode mode);

    Eigen::Index size() const { return size_; }
    Eigen::Index K() const { return K_; }
    Eigen::Index C() const { return C_; }
    FitMode mode() const { return mode_; }

    // Index of A(i, j); in symmetric mode (i, j) and (j, i) share an index.
    Eigen::Index index_of(Eigen::Index i, Eigen::Index j) const;
    Eigen::Index lambda_index(Eigen::Index c) const { return continuous_size() + c; }
    Eigen::Index continuous_size() const { return size_ - C_; }

    Vector pack(const AffinityModel& model) const;
    AffinityModel unpack(const Vector& theta, double sigma = 1.0) const;
    // Sufficient statistics in parameter coordinates: d<theta, stats>/d theta
    // equals the derivative of E[Phi] with respect to theta.
    Vector statistics(const Matrix& cross_moments, const Vector& same_category) const;

    std::vector<std::string> names(const std::vector<std::string>& continuous,
                                   const std::vector<std::string>& categorical) const;

private:
    Eigen::Index K_, C_;
    FitMode mode_;
    Eigen::Index size_;
};

// The convex estimation objective theta -> W(theta) - <theta, data stats>,
// whose gradient is E_model[stats] - data stats by the envelope theorem.
class MomentObjective {
public:
    MomentObjective(DiscreteMarket market, Matrix target_moments, Vector target_same_category,
                    FitMode mode, SolveOptions inner = {});

    const ParameterLayout& layout() const { return layout_; }
    const DiscreteMarket& market() const { return market_; }
    const Vector& target() const { return target_; }

    double value(const Vector& theta);
    double value_and_gradient(const Vector& theta, Vector& gradient);
    // Solution of the most recent evaluation.
    const EquilibriumMatching& last_matching() const { return matching_; }
    void set_inner_tolerance(double tol) { inner_.tolerance = tol; }

private:
    ParameterLayout layout_;
    DiscreteMarket market_;
    Matrix target_moments_;
    Vector target_same_category_;
    Vector target_;
    SolveOptions inner_;
    EquilibriumMatching matching_;  // warm start for the next evaluation
};

// Moment-matching estimator on a symmetrized (unipartite) coupling. Uses the
// mode in `options`; a bipartite_free mode here behaves as fit_bipartite.
FitResult fit(const EmpiricalCoupling& coupling, const TraitSchema& schema,
              const FitOptions& options = {});
// Unconstrained A, rows and columns treated as separate populations.
FitResult fit_bipartite(const EmpiricalCoupling& coupling, const TraitSchema& schema,
                        FitOptions options = {});

struct NormalizedModel {
    AffinityModel model;  // W(model) == 1
    double scale_k = 1.0;
    double sigma_report = 1.0;
};

// Rescales (A, 1) to (kA, k) with k = 1 / W(A, 1).
NormalizedModel normalize(const FitResult& fit, const EmpiricalCoupling& coupling,
                          const SolveOptions& inner = {});
// Same, with W(A, 1) supplied by the caller.
NormalizedModel normalize_with_gain(const AffinityModel& unit_sigma_model, double social_gain);

// A_ij * E_data[x^i y^j]: share of average surplus due to the (i, j)
// interaction when W is normalized to one.
double surplus_share(const NormalizedModel& model, const EmpiricalCoupling& coupling,
                     Eigen::Index i, Eigen::Index j);
// lambda_c * Pr_data(same category c).
double categorical_share(const NormalizedModel& model, const EmpiricalCoupling& coupling,
                         Eigen::Index c);
// E_data[Phi] under the model; equals the sum of all shares.
double average_surplus(const AffinityModel& model, const EmpiricalCoupling& coupling);

}  // namespace affinity
