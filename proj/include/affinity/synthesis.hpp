#pragma once

#include "affinity/equilibrium.hpp"
#include "affinity/market_data.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace affinity {

struct CategoricalLaw {
    CategoricalDef definition;
    std::vector<double> probabilities;  // one per label, summing to 1
};

// Support individuals pinned to fixed values on some continuous traits,
// e.g. gender / orientation groups. Group sizes are allocated
// deterministically from the shares (largest remainder).
struct FixedGroup {
    std::string label;
    double share = 0.0;
    std::vector<std::pair<std::string, double>> values;  // trait name -> value
};

struct TraitLaw {
    std::vector<std::string> continuous;
    Vector mean;
    Matrix covariance;
    std::vector<CategoricalLaw> categorical;
    std::vector<FixedGroup> groups;
    // Rescale each drawn Gaussian trait so its support mean and standard
    // deviation equal the declared ones exactly.
    bool match_support_moments = true;

    TraitSchema schema() const;
};

struct ScenarioSpec {
    std::string name = "scenario";
    MarketKind kind = MarketKind::unipartite;
    Eigen::Index n_support = 100;
    TraitLaw traits;
    AffinityModel model;  // planted truth, in raw trait units
    Eigen::Index n_couples = 1000;
    std::uint64_t seed = 0;
    std::string note;  // free text carried into the truth sidecar

    // Throws DataError when the spec cannot be simulated.
    void validate() const;
};

struct SyntheticMarket {
    MarketSample sample;
    DiscreteMarket support;       // the drawn support with uniform masses
    EquilibriumMatching matching;  // planted equilibrium on the support
};

// Draws the support, solves the planted equilibrium on it and samples
// couples from the coupling. Unipartite couples are emitted once with a
// fair coin deciding the head.
SyntheticMarket generate_market(const ScenarioSpec& spec, const SolveOptions& inner = {});
MarketSample generate(const ScenarioSpec& spec, const SolveOptions& inner = {});

// Unipartite pooled market with gender and orientation traits. Traits:
// `econ` (Gaussian), `gender` (+1 female, -1 male) and `orientation`
// (+1 attracted to women, -1 attracted to men). The blockwise affinity has
// gender-orientation interaction `a_go` and gender-gender term `a_gg`.
// Magnitudes are demonstrative.
ScenarioSpec pooled_market_preset(std::uint64_t seed, double a_go = 2.0, double a_gg = -1.0);

// Share of couples whose pairing contradicts the orientation of at least one
// partner (partner gender differs from the one the person is attracted to).
double orientation_mismatch_fraction(const MarketSample& sample);

// Scenario spec as structured JSON ("version": 1).
nlohmann::json scenario_to_json(const ScenarioSpec& spec);
ScenarioSpec scenario_from_json(const nlohmann::json& j);
// Planted parameters, seed and support moments.
nlohmann::json truth_sidecar(const ScenarioSpec& spec, const SyntheticMarket& market);

}  // namespace affinity
