#pragma once

#include "affinity/market_data.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace affinity {

// Missing statistics (zero variance, zero expected share) are NaN.

struct SampleMeans {
    Vector head;     // raw units
    Vector partner;
    Vector pooled;
    Vector head_sd;  // population sd, raw units
    Vector partner_sd;
    std::vector<Vector> head_category_shares;  // per categorical, per label
    std::vector<Vector> partner_category_shares;
    Eigen::Index couples = 0;
};

struct HomogamyTable {
    std::string categorical;
    std::vector<std::string> labels;
    bool upper_triangular = true;  // unipartite: unordered couples, r <= s
    Matrix observed_share;  // NaN below the diagonal when upper_triangular
    Matrix expected_share;
    Matrix rate;
    IndexMatrix counts;
    Eigen::Index couples = 0;
};

struct DescriptiveReport {
    MarketKind kind = MarketKind::unipartite;
    std::vector<std::string> traits;
    SampleMeans means;
    Vector correlations;  // per continuous trait
    std::vector<HomogamyTable> homogamy;
    Eigen::Index couples = 0;
};

// Head-partner Pearson correlation per continuous trait. Unipartite samples
// use the mirrored pair set, so the value does not depend on row order.
Vector correlations(const MarketSample& sample);

// Observed share of each couple type over its share under random matching.
// Unipartite: pooled shares p, expected p_r^2 on the diagonal and 2 p_r p_s
// above it. Bipartite: p_r(head) p_s(partner) on every cell.
HomogamyTable homogamy_rates(const MarketSample& sample, const std::string& categorical);

SampleMeans sample_means(const MarketSample& sample);

DescriptiveReport describe(const MarketSample& sample);

void write_text(std::ostream& out, const DescriptiveReport& report, const std::string& market = {});
void write_csv(std::ostream& out, const DescriptiveReport& report, const std::string& market = {});

}  // namespace affinity
