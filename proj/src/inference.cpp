#include "affinity/inference.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <thread>

namespace affinity {

namespace {

struct Replicate {
    Vector raw;
    Vector normalized;
    bool ok = false;
    bool converged = false;
    std::string error;
};

Replicate run_replicate(const MarketSample& sample, const FitOptions& options, std::uint64_t seed,
                        int b) {
    Replicate rep;
    try {
        Rng rng(seed, static_cast<std::uint64_t>(b));
        const auto n = static_cast<std::size_t>(sample.size());
        std::vector<Eigen::Index> rows(n);
        for (auto& r : rows) r = static_cast<Eigen::Index>(rng.below(n));
        const MarketSample resampled = restandardize(select_rows(sample, rows));
        const EmpiricalCoupling coupling = build_coupling(resampled);
        const FitResult result = fit(coupling, resampled.schema, options);
        const ParameterLayout layout(sample.schema.K(), sample.schema.C(), options.mode);
        rep.raw = layout.pack(result.model);
        if (!(result.social_gain > 0)) throw DataError("replicate has W(A, 1) <= 0");
        rep.normalized = rep.raw / result.social_gain;
        rep.converged = result.converged;
        rep.ok = rep.raw.allFinite();
        if (!rep.ok) rep.error = "non-finite estimate";
    } catch (const std::exception& e) {
        rep.error = e.what();
    }
    return rep;
}

Matrix covariance_of(const Matrix& draws) {
    const Eigen::Index b = draws.rows();
    const Vector mean = draws.colwise().mean().transpose();
    const Matrix centered = draws.rowwise() - mean.transpose();
    Matrix cov = (centered.transpose() * centered) / static_cast<double>(std::max<Eigen::Index>(b - 1, 1));
    return 0.5 * (cov + cov.transpose());
}

}  // namespace

BootstrapResult bootstrap(const MarketSample& sample, const FitOptions& options,
                          const BootstrapOptions& boot) {
    if (boot.B < 2) throw DataError("bootstrap needs at least two replicates");
    FitOptions fit_options = options;
    if (sample.kind == MarketKind::bipartite) fit_options.mode = FitMode::bipartite_free;

    std::vector<Replicate> reps(static_cast<std::size_t>(boot.B));
    const int threads = std::max(1, std::min(boot.threads, boot.B));
    auto worker = [&](int t) {
        for (int b = t; b < boot.B; b += threads)
            reps[static_cast<std::size_t>(b)] = run_replicate(sample, fit_options, boot.seed, b);
    };
    if (threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker, t);
        for (auto& th : pool) th.join();
    }

    BootstrapResult out;
    out.B = boot.B;
    out.seed = boot.seed;
    out.mode = fit_options.mode;
    const ParameterLayout layout(sample.schema.K(), sample.schema.C(), fit_options.mode);
    std::vector<const Replicate*> good;
    for (int b = 0; b < boot.B; ++b) {
        const Replicate& r = reps[static_cast<std::size_t>(b)];
        if (r.ok) {
            good.push_back(&r);
            if (!r.converged) ++out.nonconverged;
        } else {
            ++out.failures;
            out.failure_messages.push_back("replicate " + std::to_string(b) + ": " + r.error);
        }
    }
    if (out.failures > boot.max_failure_fraction * boot.B || good.size() < 2)
        throw DataError("bootstrap aborted: " + std::to_string(out.failures) + " of " +
                        std::to_string(boot.B) + " replicate fits failed");

    const auto rows = static_cast<Eigen::Index>(good.size());
    out.replicates.resize(rows, layout.size());
    out.normalized_replicates.resize(rows, layout.size());
    for (Eigen::Index r = 0; r < rows; ++r) {
        out.replicates.row(r) = good[static_cast<std::size_t>(r)]->raw.transpose();
        out.normalized_replicates.row(r) = good[static_cast<std::size_t>(r)]->normalized.transpose();
    }
    out.covariance = covariance_of(out.replicates);
    out.normalized_covariance = covariance_of(out.normalized_replicates);
    out.standard_errors = out.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    out.normalized_standard_errors = out.normalized_covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    return out;
}

BootstrapResult bootstrap(const MarketSample& sample, const FitOptions& options, int B,
                          std::uint64_t seed, int threads) {
    BootstrapOptions boot;
    boot.B = B;
    boot.seed = seed;
    boot.threads = threads;
    return bootstrap(sample, options, boot);
}

double two_sided_normal_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

const SymmetryTest::Pair& SymmetryTest::pair(Eigen::Index i, Eigen::Index j) const {
    for (const auto& p : pairs)
        if (p.i == i && p.j == j) return p;
    throw DimensionError("no such pair in symmetry test");
}

SymmetryTest test_symmetry(const FitResult& bipartite_fit, const BootstrapResult& boot) {
    if (bipartite_fit.mode != FitMode::bipartite_free || boot.mode != FitMode::bipartite_free)
        throw DataError("symmetry test needs a bipartite fit and a bipartite bootstrap");
    const Eigen::Index K = bipartite_fit.model.A.rows();
    const ParameterLayout layout(K, bipartite_fit.model.lambda.size(), FitMode::bipartite_free);
    if (boot.covariance.rows() != layout.size()) throw DimensionError("bootstrap layout differs");

    SymmetryTest test;
    for (Eigen::Index i = 0; i < K; ++i) {
        for (Eigen::Index j = 0; j < K; ++j) {
            if (i == j) continue;
            SymmetryTest::Pair p;
            p.i = i;
            p.j = j;
            const Eigen::Index ij = layout.index_of(i, j), ji = layout.index_of(j, i);
            p.difference = bipartite_fit.model.A(i, j) - bipartite_fit.model.A(j, i);
            const double var = boot.covariance(ij, ij) + boot.covariance(ji, ji) -
                               2.0 * boot.covariance(ij, ji);
            if (!(var > 1e-300)) {
                p.valid = false;
                p.statistic = 0.0;
                p.p_value = std::numeric_limits<double>::quiet_NaN();
                p.diagnostic = "bootstrap variance of the difference is zero; p-value omitted";
            } else {
                // Same rounding for (i, j) and (j, i) so the pair statistics negate exactly.
                const double se = std::sqrt(var);
                p.statistic = p.difference / se;
                p.p_value = two_sided_normal_p(p.statistic);
            }
            test.pairs.push_back(std::move(p));
        }
    }
    return test;
}

RoleScheme parse_role_scheme(const std::string& name) {
    if (name == "householder") return RoleScheme::householder;
    if (name == "older") return RoleScheme::older;
    if (name == "higher-income" || name == "higher_income" || name == "higher-value")
        return RoleScheme::higher_value;
    throw DataError("unknown role scheme: " + name);
}

RoleAssignment assign_roles(const MarketSample& sample, RoleScheme scheme,
                            const std::string& role_trait) {
    const Matrix raw_head = sample.raw_head();
    const Matrix raw_partner = sample.raw_partner();
    Matrix h = raw_head, p = raw_partner;
    IndexMatrix hc = sample.head_cat, pc = sample.partner_cat;
    RoleAssignment out;
    if (scheme != RoleScheme::householder) {
        const int k = sample.schema.continuous_index(role_trait);
        if (k < 0) throw DataError("role trait not in schema: " + role_trait);
        for (Eigen::Index i = 0; i < sample.size(); ++i) {
            const double a = raw_head(i, k), b = raw_partner(i, k);
            if (a == b) {
                ++out.ties;
                out.tied_rows.push_back(static_cast<std::size_t>(i));
            } else if (b > a) {
                h.row(i) = raw_partner.row(i);
                p.row(i) = raw_head.row(i);
                hc.row(i) = sample.partner_cat.row(i);
                pc.row(i) = sample.head_cat.row(i);
            }
        }
    }
    out.sample = make_sample(sample.schema, MarketKind::bipartite, h, p, std::move(hc), std::move(pc));
    return out;
}

}  // namespace affinity
