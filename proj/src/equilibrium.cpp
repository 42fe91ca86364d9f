#include "affinity/equilibrium.hpp"

#include "affinity/kernels.hpp"

#include <cmath>
#include <sstream>

namespace affinity {

void AffinityModel::validate(Eigen::Index K, Eigen::Index C, MarketKind kind) const {
    if (A.rows() != K || A.cols() != K || lambda.size() != C)
        throw DimensionError("affinity model does not match the trait layout");
    if (!(sigma >= kMinSigma)) throw DataError("sigma must be at least 1e-6");
    if (!A.allFinite() || !lambda.allFinite()) throw DataError("affinity model has non-finite entries");
    if (kind == MarketKind::unipartite && (A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw DataError("unipartite affinity matrix must be symmetric");
}

SurplusMatrix surplus_matrix(const AffinityModel& model, const DiscreteMarket& market) {
    model.validate(market.K(), market.C(), market.kind);
    SurplusMatrix s;
    s.values = market.x * model.A * market.y.transpose();
    for (Eigen::Index c = 0; c < market.C(); ++c)
        s.values += model.lambda(c) * market.same_category[static_cast<std::size_t>(c)];
    if (market.kind == MarketKind::unipartite)
        s.values = (0.5 * (s.values + s.values.transpose())).eval();
    return s;
}

SurplusMatrix surplus_matrix(const AffinityModel& model, const EmpiricalCoupling& coupling) {
    model.validate(coupling.support_x.cols(), coupling.support_x_cat.cols(), coupling.kind);
    SurplusMatrix s;
    s.values = coupling.support_x * model.A * coupling.support_y.transpose();
    for (Eigen::Index j = 0; j < s.values.cols(); ++j)
        for (Eigen::Index i = 0; i < s.values.rows(); ++i)
            for (Eigen::Index c = 0; c < coupling.support_x_cat.cols(); ++c)
                if (coupling.support_x_cat(i, c) == coupling.support_y_cat(j, c))
                    s.values(i, j) += model.lambda(c);
    if (coupling.kind == MarketKind::unipartite)
        s.values = (0.5 * (s.values + s.values.transpose())).eval();
    return s;
}

double regularized_objective(const Matrix& pi, const SurplusMatrix& surplus, double sigma,
                             const DiscreteMarket& market) {
    return pi.cwiseProduct(surplus.values).sum() -
           sigma * kernels::mutual_information(pi, market.f, market.g);
}

EquilibriumMatching solve(const AffinityModel& model, const DiscreteMarket& market,
                          const SolveOptions& options, EquilibriumMatching* warm_start) {
    const SurplusMatrix surplus = surplus_matrix(model, market);
    if ((market.f.array() <= 0).any() || (market.g.array() <= 0).any())
        throw DataError("marginal masses must be strictly positive");

    const bool symmetric = market.kind == MarketKind::unipartite;
    kernels::SinkhornState<double> state;
    if (warm_start) {
        state.a = warm_start->potential_a;
        state.b = warm_start->potential_b;
    }
    // Iterate to half the tolerance so the final log-domain recompute of pi
    // stays within it.
    kernels::sinkhorn<double>(surplus.values, market.f, market.g, model.sigma, symmetric,
                              0.5 * options.tolerance, options.max_iterations, state);

    EquilibriumMatching out;
    out.potential_a = state.a;
    out.potential_b = symmetric ? state.a : state.b;
    out.weights = kernels::gibbs(surplus.values, out.potential_a, out.potential_b, model.sigma);
    out.iterations = state.iterations;
    out.residual = kernels::marginal_residual(out.weights, market.f, market.g);
    out.converged = state.converged && out.residual <= options.tolerance;
    out.social_gain = regularized_objective(out.weights, surplus, model.sigma, market);

    if (warm_start) {
        warm_start->potential_a = out.potential_a;
        warm_start->potential_b = out.potential_b;
    }
    if (!out.converged && options.throw_on_failure) {
        std::ostringstream msg;
        msg << "equilibrium did not converge after " << out.iterations
            << " sweeps (marginal residual " << out.residual << ")";
        throw ConvergenceError(msg.str(), out.residual);
    }
    return out;
}

EquilibriumMatching solve(const AffinityModel& model, const EmpiricalCoupling& coupling,
                          const SolveOptions& options) {
    return solve(model, coupling.market(), options);
}

double social_gain(const AffinityModel& model, const DiscreteMarket& market,
                   const SolveOptions& options) {
    return solve(model, market, options).social_gain;
}

double social_gain(const AffinityModel& model, const EmpiricalCoupling& coupling,
                   const SolveOptions& options) {
    return social_gain(model, coupling.market(), options);
}

Matrix equilibrium_utilities(const EquilibriumMatching& match, const SurplusMatrix& surplus) {
    if (surplus.values.rows() != match.potential_a.size() ||
        surplus.values.cols() != match.potential_b.size())
        throw DimensionError("surplus and matching supports differ");
    Matrix u = surplus.values;
    u.colwise() += match.potential_a;
    u.rowwise() -= match.potential_b.transpose();
    return 0.5 * u;
}

}  // namespace affinity
