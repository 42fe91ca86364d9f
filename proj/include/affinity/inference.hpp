#pragma once

#include "affinity/estimation.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace affinity {

// Nonparametric bootstrap over couples. Each replicate resamples couples
// with replacement, re-standardizes, rebuilds the coupling for the fit mode
// and re-fits. Replicate b draws from substream b of the root seed, so the
// result does not depend on the thread count or scheduling.
//
// The mirrored-sample caveat for analytic standard errors (inflating them
// by sqrt(2) because mirroring does not double the effective sample size)
// does not apply here: the resampling unit is the couple, not the mirrored
// household, so no correction factor is used.
struct BootstrapResult {
    Matrix replicates;             // B_ok x P, raw (sigma = 1) parameters
    Matrix normalized_replicates;  // B_ok x P, parameters divided by W(A, 1)
    Vector standard_errors;        // raw
    Vector normalized_standard_errors;
    Matrix covariance;  // raw parameter covariance
    Matrix normalized_covariance;
    int B = 0;  // requested replicates
    std::uint64_t seed = 0;
    int failures = 0;        // replicates that threw and were excluded
    int nonconverged = 0;    // replicates kept but flagged non-converged
    std::vector<std::string> failure_messages;
    FitMode mode = FitMode::unipartite_symmetric;
};

struct BootstrapOptions {
    int B = 200;
    std::uint64_t seed = 0;
    int threads = 1;
    double max_failure_fraction = 0.2;
};

BootstrapResult bootstrap(const MarketSample& sample, const FitOptions& options,
                          const BootstrapOptions& boot);
BootstrapResult bootstrap(const MarketSample& sample, const FitOptions& options, int B,
                          std::uint64_t seed, int threads = 1);

struct SymmetryTest {
    struct Pair {
        Eigen::Index i = 0, j = 0;
        double difference = 0.0;  // A_ij - A_ji
        double statistic = 0.0;   // difference / SE(difference)
        double p_value = 1.0;     // two-sided normal
        bool valid = true;        // false when SE(difference) is zero
        std::string diagnostic;
    };
    std::vector<Pair> pairs;  // every ordered (i, j), i != j

    const Pair& pair(Eigen::Index i, Eigen::Index j) const;
};

// Tests A_ij == A_ji for every off-diagonal pair of an unconstrained fit,
// using the bootstrap covariance of the same (bipartite) parametrization.
SymmetryTest test_symmetry(const FitResult& bipartite_fit, const BootstrapResult& boot);

double two_sided_normal_p(double z);

// How head and partner roles are assigned before a bipartite fit.
enum class RoleScheme { householder, older, higher_value };

RoleScheme parse_role_scheme(const std::string& name);

struct RoleAssignment {
    MarketSample sample;  // bipartite, re-standardized per side
    std::size_t ties = 0;  // rows where the role trait tied (record order kept)
    std::vector<std::size_t> tied_rows;  // 0-based
};

// Reorders each couple so the head satisfies the scheme: householder keeps
// the recorded order; older / higher_value put the partner with the larger
// raw value of `role_trait` first. Ties keep the recorded order.
RoleAssignment assign_roles(const MarketSample& sample, RoleScheme scheme,
                            const std::string& role_trait = {});

}  // namespace affinity
