#pragma once

#include "affinity/descriptives.hpp"
#include "affinity/inference.hpp"
#include "affinity/saliency.hpp"

#include "json.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace affinity {

// Everything the estimate / saliency / compare reports need for one market.
struct MarketEstimate {
    std::string name;
    TraitSchema schema;
    MarketKind kind = MarketKind::unipartite;
    Eigen::Index couples = 0;
    std::size_t rejected_rows = 0;
    EmpiricalCoupling coupling;
    FitResult fit;
    NormalizedModel normalized;
    std::optional<BootstrapResult> bootstrap;

    bool converged() const;
    // Normalized-scale standard errors, NaN without a bootstrap.
    Matrix A_se() const;
    Vector lambda_se() const;
};

// Fit (symmetric for unipartite samples, unconstrained for bipartite ones),
// normalize and optionally bootstrap.
MarketEstimate estimate_market(const std::string& name, const MarketSample& sample,
                               const FitOptions& options,
                               const std::optional<BootstrapOptions>& boot);

inline constexpr const char* kEntropyConvention =
    "mutual information of the coupling relative to the product of its marginals";

nlohmann::json estimate_json(const MarketEstimate& e);
void write_estimate_text(std::ostream& out, const MarketEstimate& e);

nlohmann::json saliency_json(const MarketEstimate& e, const SaliencyDecomposition& d);
void write_saliency_text(std::ostream& out, const MarketEstimate& e, const SaliencyDecomposition& d);

// Normalized diagonals, categorical weights and sigma_report per market.
nlohmann::json compare_json(const std::vector<MarketEstimate>& markets);
void write_compare_text(std::ostream& out, const std::vector<MarketEstimate>& markets);

struct SymmetryReport {
    std::string market;
    std::string role_scheme;
    std::string role_trait;
    std::size_t ties = 0;
    MarketEstimate estimate;  // bipartite fit on the role-assigned sample
    SymmetryTest test;
};

nlohmann::json symmetry_json(const SymmetryReport& r);
void write_symmetry_text(std::ostream& out, const SymmetryReport& r);

nlohmann::json descriptives_json(const DescriptiveReport& r, const std::string& market);

}  // namespace affinity
