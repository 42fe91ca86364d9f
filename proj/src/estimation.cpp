#include "affinity/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace affinity {

double FitResult::max_moment_residual() const {
    double r = moment_residual.size() ? moment_residual.cwiseAbs().maxCoeff() : 0.0;
    for (Eigen::Index c = 0; c < category_residual.size(); ++c)
        if (!lambda_at_bound[static_cast<std::size_t>(c)])
            r = std::max(r, std::abs(category_residual(c)));
    return r;
}

// ---------------------------------------------------------------------------
// ParameterLayout

ParameterLayout::ParameterLayout(Eigen::Index K, Eigen::Index C, FitMode mode)
    : K_(K), C_(C), mode_(mode) {
    size_ = (mode == FitMode::unipartite_symmetric ? K * (K + 1) / 2 : K * K) + C;
}

Eigen::Index ParameterLayout::index_of(Eigen::Index i, Eigen::Index j) const {
    if (mode_ == FitMode::bipartite_free) return i * K_ + j;
    if (i > j) std::swap(i, j);
    // Row-major upper triangle: rows before i contribute K + (K-1) + ... .
    return i * K_ - i * (i - 1) / 2 + (j - i);
}

Vector ParameterLayout::pack(const AffinityModel& model) const {
    Vector theta(size_);
    for (Eigen::Index i = 0; i < K_; ++i)
        for (Eigen::Index j = mode_ == FitMode::bipartite_free ? 0 : i; j < K_; ++j)
            theta(index_of(i, j)) = model.A(i, j);
    for (Eigen::Index c = 0; c < C_; ++c) theta(lambda_index(c)) = model.lambda(c);
    return theta;
}

AffinityModel ParameterLayout::unpack(const Vector& theta, double sigma) const {
    AffinityModel m = AffinityModel::zero(K_, C_, sigma);
    for (Eigen::Index i = 0; i < K_; ++i)
        for (Eigen::Index j = 0; j < K_; ++j) m.A(i, j) = theta(index_of(i, j));
    for (Eigen::Index c = 0; c < C_; ++c) m.lambda(c) = theta(lambda_index(c));
    return m;
}

Vector ParameterLayout::statistics(const Matrix& cross_moments, const Vector& same_category) const {
    Vector s = Vector::Zero(size_);
    for (Eigen::Index i = 0; i < K_; ++i)
        for (Eigen::Index j = 0; j < K_; ++j) s(index_of(i, j)) += cross_moments(i, j);
    for (Eigen::Index c = 0; c < C_; ++c) s(lambda_index(c)) = same_category(c);
    return s;
}

std::vector<std::string> ParameterLayout::names(const std::vector<std::string>& continuous,
                                                const std::vector<std::string>& categorical) const {
    std::vector<std::string> out(static_cast<std::size_t>(size_));
    for (Eigen::Index i = 0; i < K_; ++i)
        for (Eigen::Index j = mode_ == FitMode::bipartite_free ? 0 : i; j < K_; ++j)
            out[static_cast<std::size_t>(index_of(i, j))] =
                "A[" + continuous[static_cast<std::size_t>(i)] + "," +
                continuous[static_cast<std::size_t>(j)] + "]";
    for (Eigen::Index c = 0; c < C_; ++c)
        out[static_cast<std::size_t>(lambda_index(c))] =
            "lambda[" + categorical[static_cast<std::size_t>(c)] + "]";
    return out;
}

// ---------------------------------------------------------------------------
// MomentObjective

MomentObjective::MomentObjective(DiscreteMarket market, Matrix target_moments,
                                 Vector target_same_category, FitMode mode, SolveOptions inner)
    : layout_(market.K(), market.C(), mode),
      market_(std::move(market)),
      target_moments_(std::move(target_moments)),
      target_same_category_(std::move(target_same_category)),
      inner_(inner) {
    market_.kind = mode == FitMode::bipartite_free ? MarketKind::bipartite : MarketKind::unipartite;
    target_ = layout_.statistics(target_moments_, target_same_category_);
    inner_.throw_on_failure = false;
}

double MomentObjective::value(const Vector& theta) {
    Vector unused;
    return value_and_gradient(theta, unused);
}

double MomentObjective::value_and_gradient(const Vector& theta, Vector& gradient) {
    const AffinityModel model = layout_.unpack(theta);
    EquilibriumMatching warm = matching_;
    matching_ = solve(model, market_, inner_, warm.potential_a.size() ? &warm : nullptr);
    gradient = layout_.statistics(cross_moments(market_, matching_.weights),
                                  same_category_mass(market_, matching_.weights)) -
               target_;
    return matching_.social_gain - theta.dot(target_);
}

// ---------------------------------------------------------------------------
// fit

namespace {

void check_identifiable(const EmpiricalCoupling& coupling, const TraitSchema& schema) {
    if (coupling.couples < 2) throw DataError("moments degenerate: need at least two couples");
    if (coupling.support_x.cols() != schema.K() || coupling.support_x_cat.cols() != schema.C())
        throw DimensionError("coupling does not match the schema");
    for (Eigen::Index c = 0; c < schema.C(); ++c) {
        const int first = coupling.support_x_cat(0, c);
        const bool single = (coupling.support_x_cat.col(c).array() == first).all() &&
                            (coupling.support_y_cat.col(c).array() == first).all();
        if (single)
            throw DataError("categorical '" + schema.categorical[static_cast<std::size_t>(c)].name +
                            "' takes a single label in the sample; its weight is unidentified");
    }
}

struct Evaluation {
    Vector theta;
    Vector gradient;
    double value = 0.0;
};

}  // namespace

FitResult fit(const EmpiricalCoupling& coupling, const TraitSchema& schema, const FitOptions& options) {
    if (!(options.outer_tolerance > 0) || !(options.inner.tolerance > 0))
        throw DataError("tolerances must be positive");
    check_identifiable(coupling, schema);
    if (options.mode == FitMode::unipartite_symmetric && coupling.kind != MarketKind::unipartite)
        throw DataError("symmetric fit requires a symmetrized unipartite coupling");

    MomentObjective objective(coupling.market(), coupling.cross_moments,
                              coupling.same_category_freq, options.mode, options.inner);
    const ParameterLayout& layout = objective.layout();
    const Eigen::Index dim = layout.size();

    FitResult result;
    result.mode = options.mode;
    result.lambda_at_bound.assign(static_cast<std::size_t>(layout.C()), false);

    // Free-parameter mask. A same-category frequency of exactly 0 or 1 sends
    // lambda to -inf / +inf; pin it at the bound instead.
    Vector free_mask = Vector::Ones(dim);
    Vector theta = Vector::Zero(dim);
    for (Eigen::Index c = 0; c < layout.C(); ++c) {
        // Frequencies are sums of weights, so exact 0 / 1 carry rounding.
        const double freq = coupling.same_category_freq(c);
        if (freq <= 1e-12 || freq >= 1.0 - 1e-12) {
            const Eigen::Index k = layout.lambda_index(c);
            theta(k) = freq >= 0.5 ? kLambdaBound : -kLambdaBound;
            free_mask(k) = 0.0;
            result.lambda_at_bound[static_cast<std::size_t>(c)] = true;
            result.warnings.push_back("lambda[" + schema.categorical[static_cast<std::size_t>(c)].name +
                                      "] clamped at the bound: observed same-category frequency is " +
                                      (freq >= 0.5 ? "1" : "0"));
        }
    }
    auto project = [&](Vector& t) {
        for (Eigen::Index c = 0; c < layout.C(); ++c) {
            const Eigen::Index k = layout.lambda_index(c);
            if (std::abs(t(k)) > kLambdaBound) {
                t(k) = std::clamp(t(k), -kLambdaBound, kLambdaBound);
                if (!result.lambda_at_bound[static_cast<std::size_t>(c)]) {
                    result.lambda_at_bound[static_cast<std::size_t>(c)] = true;
                    result.warnings.push_back(
                        "lambda[" + schema.categorical[static_cast<std::size_t>(c)].name +
                        "] reached the bound; estimate flagged as boundary");
                }
            }
        }
    };
    auto inner_tolerance = [&](const Vector& g) {
        return std::max(1e-14, std::min(options.inner.tolerance, 1e-2 * g.cwiseAbs().maxCoeff()));
    };
    auto converged = [&](const Vector& g) {
        return g.cwiseProduct(free_mask).cwiseAbs().maxCoeff() <= options.outer_tolerance;
    };

    Evaluation current;
    current.theta = theta;
    current.value = objective.value_and_gradient(current.theta, current.gradient);

    // BFGS on the inverse Hessian, restricted to the free coordinates.
    Matrix H = Matrix::Identity(dim, dim);
    bool first_step = true;
    int iteration = 0;
    bool done = converged(current.gradient);
    while (!done && iteration < options.max_outer_iterations) {
        ++iteration;
        objective.set_inner_tolerance(inner_tolerance(current.gradient));
        const Vector g = current.gradient.cwiseProduct(free_mask);
        Vector direction = -(H * g).cwiseProduct(free_mask);
        double slope = g.dot(direction);
        if (!(slope < 0)) {
            H.setIdentity();
            direction = -g;
            slope = g.dot(direction);
        }

        // Line search. For a convex objective, a non-positive directional
        // derivative at the trial point certifies the objective did not
        // increase along the step; otherwise require Armijo decrease.
        double step = 1.0;
        Evaluation trial;
        bool accepted = false;
        for (int attempt = 0; attempt < 40; ++attempt) {
            trial.theta = current.theta + step * direction;
            project(trial.theta);
            trial.value = objective.value_and_gradient(trial.theta, trial.gradient);
            const double trial_slope = trial.gradient.cwiseProduct(free_mask).dot(direction);
            if (std::isfinite(trial.value) &&
                (trial_slope <= 0 || trial.value <= current.value + 1e-4 * step * slope)) {
                accepted = true;
                break;
            }
            // Secant estimate of the 1-D minimizer, safeguarded.
            double next = step * slope / (slope - trial_slope);
            if (!std::isfinite(next)) next = 0.5 * step;
            step = std::clamp(next, 0.1 * step, 0.5 * step);
        }
        if (!accepted) {
            result.warnings.push_back("line search failed to make progress");
            break;
        }

        const Vector s = (trial.theta - current.theta).cwiseProduct(free_mask);
        const Vector y = (trial.gradient - current.gradient).cwiseProduct(free_mask);
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm() && sy > 0) {
            if (first_step) {
                H *= sy / y.squaredNorm();
                first_step = false;
            }
            const double rho = 1.0 / sy;
            const Matrix I = Matrix::Identity(dim, dim);
            H = (I - rho * s * y.transpose()) * H * (I - rho * y * s.transpose()) +
                rho * s * s.transpose();
        }
        current = std::move(trial);
        done = converged(current.gradient);
        if (!done && current.theta.head(layout.continuous_size()).cwiseAbs().maxCoeff() > kDivergenceBound) {
            result.diverged = true;
            result.warnings.push_back(
                "estimate diverging (|A| > 1000): the sample moments have no finite solution, "
                "e.g. a perfectly segmented sample");
            break;
        }
    }

    // Final evaluation at full inner accuracy.
    objective.set_inner_tolerance(options.inner.tolerance);
    current.value = objective.value_and_gradient(current.theta, current.gradient);

    result.model = layout.unpack(current.theta);
    result.matching = objective.last_matching();
    result.objective_value = current.value;
    result.social_gain = result.matching.social_gain;
    result.iterations = iteration;
    const DiscreteMarket& market = objective.market();
    result.moment_residual = cross_moments(market, result.matching.weights) - coupling.cross_moments;
    result.category_residual =
        same_category_mass(market, result.matching.weights) - coupling.same_category_freq;
    result.converged = result.matching.converged && converged(current.gradient);
    if (!result.converged) result.warnings.push_back("estimation did not converge");
    return result;
}

FitResult fit_bipartite(const EmpiricalCoupling& coupling, const TraitSchema& schema,
                        FitOptions options) {
    options.mode = FitMode::bipartite_free;
    return fit(coupling, schema, options);
}

// ---------------------------------------------------------------------------
// normalization and shares

NormalizedModel normalize_with_gain(const AffinityModel& unit_sigma_model, double social_gain) {
    if (!(social_gain > 0))
        throw DataError("normalization undefined: W(A, 1) <= 0 (market is essentially random)");
    NormalizedModel out;
    out.scale_k = 1.0 / social_gain;
    out.model = unit_sigma_model.scaled(out.scale_k);
    out.sigma_report = out.scale_k;
    return out;
}

NormalizedModel normalize(const FitResult& fit, const EmpiricalCoupling& coupling,
                          const SolveOptions& inner) {
    AffinityModel unit = fit.model;
    unit.sigma = 1.0;
    DiscreteMarket market = coupling.market();
    if (fit.mode == FitMode::bipartite_free) market.kind = MarketKind::bipartite;
    return normalize_with_gain(unit, social_gain(unit, market, inner));
}

double surplus_share(const NormalizedModel& model, const EmpiricalCoupling& coupling,
                     Eigen::Index i, Eigen::Index j) {
    return model.model.A(i, j) * coupling.cross_moments(i, j);
}

double categorical_share(const NormalizedModel& model, const EmpiricalCoupling& coupling,
                         Eigen::Index c) {
    return model.model.lambda(c) * coupling.same_category_freq(c);
}

double average_surplus(const AffinityModel& model, const EmpiricalCoupling& coupling) {
    return model.A.cwiseProduct(coupling.cross_moments).sum() +
           model.lambda.dot(coupling.same_category_freq);
}

}  // namespace affinity
