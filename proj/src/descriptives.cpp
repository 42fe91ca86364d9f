#include "affinity/descriptives.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>

namespace affinity {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double pearson(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
    const double mx = x.mean(), my = y.mean();
    const Vector dx = x.array() - mx, dy = y.array() - my;
    const double sxx = dx.squaredNorm(), syy = dy.squaredNorm();
    if (!(sxx > 0) || !(syy > 0)) return kNaN;
    const double r = dx.dot(dy) / std::sqrt(sxx * syy);
    return std::clamp(r, -1.0, 1.0);
}

std::string fmt(double v, int precision = 2) {
    if (std::isnan(v)) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

std::string csv_num(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

Vector correlations(const MarketSample& sample) {
    if (sample.size() < 2) throw DataError("correlations need at least two couples");
    const Matrix h = sample.raw_head(), p = sample.raw_partner();
    const Eigen::Index n = sample.size(), K = sample.schema.K();
    Vector out(K);
    for (Eigen::Index k = 0; k < K; ++k) {
        if (sample.kind == MarketKind::unipartite) {
            Vector x(2 * n), y(2 * n);
            x << h.col(k), p.col(k);
            y << p.col(k), h.col(k);
            out(k) = pearson(x, y);
        } else {
            out(k) = pearson(h.col(k), p.col(k));
        }
    }
    return out;
}

HomogamyTable homogamy_rates(const MarketSample& sample, const std::string& categorical) {
    const int c = sample.schema.categorical_index(categorical);
    if (c < 0) throw DataError("categorical not in schema: " + categorical);
    const auto& def = sample.schema.categorical[static_cast<std::size_t>(c)];
    const Eigen::Index R = def.cardinality(), n = sample.size();
    if (n < 1) throw DataError("empty sample");

    HomogamyTable t;
    t.categorical = def.name;
    t.labels = def.labels;
    t.couples = n;
    t.upper_triangular = sample.kind == MarketKind::unipartite;
    t.counts = IndexMatrix::Zero(R, R);
    Vector head_share = Vector::Zero(R), partner_share = Vector::Zero(R);
    for (Eigen::Index i = 0; i < n; ++i) {
        int r = sample.head_cat(i, c), s = sample.partner_cat(i, c);
        head_share(r) += 1.0;
        partner_share(s) += 1.0;
        if (t.upper_triangular && r > s) std::swap(r, s);
        ++t.counts(r, s);
    }
    head_share /= static_cast<double>(n);
    partner_share /= static_cast<double>(n);
    const Vector pooled = 0.5 * (head_share + partner_share);

    t.observed_share = Matrix::Constant(R, R, kNaN);
    t.expected_share = Matrix::Constant(R, R, kNaN);
    t.rate = Matrix::Constant(R, R, kNaN);
    for (Eigen::Index r = 0; r < R; ++r) {
        for (Eigen::Index s = 0; s < R; ++s) {
            double expected;
            if (t.upper_triangular) {
                if (s < r) continue;
                expected = r == s ? pooled(r) * pooled(r) : 2.0 * pooled(r) * pooled(s);
            } else {
                expected = head_share(r) * partner_share(s);
            }
            const double observed = static_cast<double>(t.counts(r, s)) / static_cast<double>(n);
            t.observed_share(r, s) = observed;
            t.expected_share(r, s) = expected;
            if (expected > 0) t.rate(r, s) = observed / expected;
        }
    }
    return t;
}

SampleMeans sample_means(const MarketSample& sample) {
    const Matrix h = sample.raw_head(), p = sample.raw_partner();
    const Eigen::Index n = sample.size();
    SampleMeans m;
    m.couples = n;
    m.head = h.colwise().mean().transpose();
    m.partner = p.colwise().mean().transpose();
    m.pooled = 0.5 * (m.head + m.partner);
    m.head_sd = ((h.rowwise() - m.head.transpose()).array().square().colwise().mean()).sqrt().transpose();
    m.partner_sd =
        ((p.rowwise() - m.partner.transpose()).array().square().colwise().mean()).sqrt().transpose();
    for (Eigen::Index c = 0; c < sample.schema.C(); ++c) {
        const Eigen::Index R = sample.schema.categorical[static_cast<std::size_t>(c)].cardinality();
        Vector hs = Vector::Zero(R), ps = Vector::Zero(R);
        for (Eigen::Index i = 0; i < n; ++i) {
            hs(sample.head_cat(i, c)) += 1.0;
            ps(sample.partner_cat(i, c)) += 1.0;
        }
        m.head_category_shares.push_back(hs / static_cast<double>(n));
        m.partner_category_shares.push_back(ps / static_cast<double>(n));
    }
    return m;
}

DescriptiveReport describe(const MarketSample& sample) {
    DescriptiveReport r;
    r.kind = sample.kind;
    r.traits = sample.schema.continuous;
    r.couples = sample.size();
    r.means = sample_means(sample);
    r.correlations = correlations(sample);
    for (const auto& def : sample.schema.categorical) r.homogamy.push_back(homogamy_rates(sample, def.name));
    return r;
}

void write_text(std::ostream& out, const DescriptiveReport& r, const std::string& market) {
    const bool uni = r.kind == MarketKind::unipartite;
    const char* h = uni ? "Head" : "Row side";
    const char* p = uni ? "Partner" : "Column side";
    out << "Sample means" << (market.empty() ? "" : " (" + market + ")") << "\n";
    out << std::left << std::setw(22) << "" << std::right << std::setw(12) << h << std::setw(12) << p
        << std::setw(12) << "All" << "\n";
    for (std::size_t k = 0; k < r.traits.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        out << std::left << std::setw(22) << r.traits[k] << std::right << std::setw(12)
            << fmt(r.means.head(i)) << std::setw(12) << fmt(r.means.partner(i)) << std::setw(12)
            << fmt(r.means.pooled(i)) << "\n";
    }
    for (std::size_t c = 0; c < r.homogamy.size(); ++c) {
        const auto& t = r.homogamy[c];
        for (std::size_t l = 0; l < t.labels.size(); ++l) {
            const auto i = static_cast<Eigen::Index>(l);
            const double hs = r.means.head_category_shares[c](i);
            const double ps = r.means.partner_category_shares[c](i);
            out << std::left << std::setw(22) << (t.categorical + ": " + t.labels[l]) << std::right
                << std::setw(12) << fmt(hs) << std::setw(12) << fmt(ps) << std::setw(12)
                << fmt(0.5 * (hs + ps)) << "\n";
        }
    }
    out << std::left << std::setw(22) << "Couples" << std::right << std::setw(12) << r.couples << "\n\n";

    out << "Couples' Pearson correlation coefficients\n";
    for (std::size_t k = 0; k < r.traits.size(); ++k)
        out << std::left << std::setw(22) << r.traits[k] << std::right << std::setw(12)
            << fmt(r.correlations(static_cast<Eigen::Index>(k))) << "\n";
    out << "\n";

    for (const auto& t : r.homogamy) {
        out << "Homogamy rates: " << t.categorical
            << " (observed / random-matching share; couple counts in brackets)\n";
        std::size_t width = 14;
        for (const auto& l : t.labels) width = std::max(width, l.size() + 2);
        out << std::left << std::setw(static_cast<int>(width)) << "";
        for (const auto& l : t.labels) out << std::right << std::setw(static_cast<int>(width)) << l;
        out << "\n";
        for (std::size_t a = 0; a < t.labels.size(); ++a) {
            out << std::left << std::setw(static_cast<int>(width)) << t.labels[a];
            for (std::size_t b = 0; b < t.labels.size(); ++b) {
                const auto i = static_cast<Eigen::Index>(a), j = static_cast<Eigen::Index>(b);
                std::string cell;
                if (!(t.upper_triangular && j < i))
                    cell = fmt(t.rate(i, j)) + " [" + std::to_string(t.counts(i, j)) + "]";
                out << std::right << std::setw(static_cast<int>(width)) << cell;
            }
            out << "\n";
        }
        out << "\n";
    }
}

void write_csv(std::ostream& out, const DescriptiveReport& r, const std::string& market) {
    out << "market,table,item,row,column,value,count\n";
    const auto line = [&](const char* table, const std::string& item, const std::string& row,
                          const std::string& col, double value, long long count) {
        out << market << ',' << table << ',' << item << ',' << row << ',' << col << ','
            << csv_num(value) << ',' << count << '\n';
    };
    for (std::size_t k = 0; k < r.traits.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(k);
        line("means", r.traits[k], "head", "", r.means.head(i), r.couples);
        line("means", r.traits[k], "partner", "", r.means.partner(i), r.couples);
        line("means", r.traits[k], "all", "", r.means.pooled(i), 2 * r.couples);
    }
    for (std::size_t c = 0; c < r.homogamy.size(); ++c) {
        const auto& t = r.homogamy[c];
        for (std::size_t l = 0; l < t.labels.size(); ++l) {
            const auto i = static_cast<Eigen::Index>(l);
            line("category_shares", t.categorical, "head", t.labels[l],
                 r.means.head_category_shares[c](i), r.couples);
            line("category_shares", t.categorical, "partner", t.labels[l],
                 r.means.partner_category_shares[c](i), r.couples);
        }
    }
    for (std::size_t k = 0; k < r.traits.size(); ++k)
        line("correlation", r.traits[k], "", "", r.correlations(static_cast<Eigen::Index>(k)), r.couples);
    for (const auto& t : r.homogamy) {
        for (std::size_t a = 0; a < t.labels.size(); ++a)
            for (std::size_t b = 0; b < t.labels.size(); ++b) {
                const auto i = static_cast<Eigen::Index>(a), j = static_cast<Eigen::Index>(b);
                if (t.upper_triangular && j < i) continue;
                line("homogamy", t.categorical, t.labels[a], t.labels[b], t.rate(i, j), t.counts(i, j));
            }
    }
}

}  // namespace affinity
