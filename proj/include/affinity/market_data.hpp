#pragma once

#include "affinity/common.hpp"

#include <Eigen/SparseCore>

#include <iosfwd>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace affinity {

struct CategoricalDef {
    std::string name;
    std::vector<std::string> labels;

    int cardinality() const { return static_cast<int>(labels.size()); }
    int label_index(const std::string& label) const;  // -1 if absent
};

// Ordered trait layout. The order is the canonical column order of every
// matrix built downstream.
struct TraitSchema {
    std::vector<std::string> continuous;
    std::vector<CategoricalDef> categorical;

    Eigen::Index K() const { return static_cast<Eigen::Index>(continuous.size()); }
    Eigen::Index C() const { return static_cast<Eigen::Index>(categorical.size()); }
    int continuous_index(const std::string& name) const;   // -1 if absent
    int categorical_index(const std::string& name) const;  // -1 if absent

    // Throws DataError on duplicate names or a categorical with fewer than
    // two labels.
    void validate() const;
};

struct IndividualProfile {
    Vector continuous;
    std::vector<int> categorical;
};

struct Standardization {
    Vector mean;
    Vector sd;
};

// Observed couples. Continuous traits are held standardized; `head_scale`
// and `partner_scale` hold the raw-unit (mean, sd) used. In unipartite mode
// both scales are the same pooled one.
struct MarketSample {
    TraitSchema schema;
    MarketKind kind = MarketKind::unipartite;
    Matrix head;     // n x K, standardized
    Matrix partner;  // n x K, standardized
    IndexMatrix head_cat;     // n x C label indices
    IndexMatrix partner_cat;  // n x C
    Standardization head_scale;
    Standardization partner_scale;

    Eigen::Index size() const { return head.rows(); }
    IndividualProfile head_profile(Eigen::Index i) const;
    IndividualProfile partner_profile(Eigen::Index i) const;
    Matrix raw_head() const;
    Matrix raw_partner() const;
};

// Builds a sample from raw-unit values, standardizing pooled (unipartite)
// or per side (bipartite). Throws DataError on n < 2 or zero variance.
MarketSample make_sample(TraitSchema schema, MarketKind kind, const Matrix& raw_head,
                         const Matrix& raw_partner, IndexMatrix head_cat,
                         IndexMatrix partner_cat);

// Re-standardizes an already standardized sample on its own moments (used
// after resampling).
MarketSample restandardize(const MarketSample& sample);

// Subset of rows, keeping the scale metadata of `sample` untouched.
MarketSample select_rows(const MarketSample& sample, const std::vector<Eigen::Index>& rows);

struct RowDiagnostic {
    std::size_t row;  // 1-based data row (header excluded)
    std::string message;
};

struct RangeFilter {
    std::string trait;
    double min = -std::numeric_limits<double>::infinity();
    double max = std::numeric_limits<double>::infinity();
};

struct IngestOptions {
    // Per-column value substituted for an empty or unparseable numeric cell,
    // keyed by full column name (e.g. "head_wage"). Absent: row rejected.
    std::map<std::string, double> fill_values;
    // Rows where either partner's raw value falls outside a range are dropped.
    std::vector<RangeFilter> filters;
};

struct IngestResult {
    MarketSample sample;
    std::vector<RowDiagnostic> rejected;
};

IngestResult ingest(std::istream& csv, const TraitSchema& schema, MarketKind kind,
                    const IngestOptions& options = {});
IngestResult ingest_file(const std::string& path, const TraitSchema& schema, MarketKind kind,
                         const IngestOptions& options = {});

// Writes raw-unit values in the format read by ingest. Values are printed
// with 17 significant digits so the file round-trips exactly.
void write_csv(std::ostream& out, const MarketSample& sample);

// Discrete market on deduplicated support: identical profiles are merged
// and their masses summed. This is what the equilibrium solver consumes.
struct DiscreteMarket {
    MarketKind kind = MarketKind::unipartite;
    Matrix x;          // Nx x K
    Matrix y;          // Ny x K (equal to x in unipartite mode)
    IndexMatrix x_cat;  // Nx x C
    IndexMatrix y_cat;
    Vector f;  // row masses
    Vector g;  // column masses
    Matrix observed;  // empirical weights on this support (zero if synthetic)
    std::vector<Matrix> same_category;  // per categorical, Nx x Ny indicator

    Eigen::Index K() const { return x.cols(); }
    Eigen::Index C() const { return x_cat.cols(); }
};

// Empirical distribution of observed couples over the listed individuals.
// Unipartite: support is the 2n pooled individuals (heads then partners).
struct EmpiricalCoupling {
    MarketKind kind = MarketKind::unipartite;
    Eigen::Index couples = 0;
    Matrix support_x;
    Matrix support_y;
    IndexMatrix support_x_cat;
    IndexMatrix support_y_cat;
    Eigen::SparseMatrix<double> weights;
    Matrix cross_moments;      // K x K, E[x^i y^j]
    Vector same_category_freq;  // per categorical

    Vector row_marginal() const;
    Vector column_marginal() const;

    // Deduplicated support with the empirical weights mapped onto it.
    DiscreteMarket market() const;
};

EmpiricalCoupling symmetrize(const MarketSample& sample);
EmpiricalCoupling build_bipartite(const MarketSample& sample);
// Dispatches on sample.kind.
EmpiricalCoupling build_coupling(const MarketSample& sample);

// Market on explicit support points with given masses (no dedup).
DiscreteMarket make_market(MarketKind kind, Matrix x, Matrix y, IndexMatrix x_cat,
                           IndexMatrix y_cat, Vector f, Vector g);

// Moments E_w[x y'] for an arbitrary weight matrix on a discrete market.
template <typename Derived>
Matrix cross_moments(const DiscreteMarket& market, const Eigen::MatrixBase<Derived>& weights) {
    return market.x.transpose() * weights * market.y;
}

template <typename Derived>
Vector same_category_mass(const DiscreteMarket& market, const Eigen::MatrixBase<Derived>& weights) {
    Vector out(market.C());
    for (Eigen::Index c = 0; c < market.C(); ++c)
        out(c) = market.same_category[static_cast<std::size_t>(c)].cwiseProduct(weights.derived()).sum();
    return out;
}

}  // namespace affinity
