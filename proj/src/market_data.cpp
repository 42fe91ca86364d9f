#include "affinity/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace affinity {

int CategoricalDef::label_index(const std::string& label) const {
    auto it = std::find(labels.begin(), labels.end(), label);
    return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

int TraitSchema::continuous_index(const std::string& name) const {
    auto it = std::find(continuous.begin(), continuous.end(), name);
    return it == continuous.end() ? -1 : static_cast<int>(it - continuous.begin());
}

int TraitSchema::categorical_index(const std::string& name) const {
    for (std::size_t c = 0; c < categorical.size(); ++c)
        if (categorical[c].name == name) return static_cast<int>(c);
    return -1;
}

void TraitSchema::validate() const {
    std::set<std::string> seen;
    for (const auto& name : continuous)
        if (!seen.insert(name).second) throw DataError("duplicate trait name: " + name);
    for (const auto& def : categorical) {
        if (!seen.insert(def.name).second) throw DataError("duplicate trait name: " + def.name);
        if (def.labels.size() < 2)
            throw DataError("categorical '" + def.name + "' needs at least two labels");
        std::set<std::string> labels(def.labels.begin(), def.labels.end());
        if (labels.size() != def.labels.size())
            throw DataError("categorical '" + def.name + "' has duplicate labels");
    }
}

IndividualProfile MarketSample::head_profile(Eigen::Index i) const {
    IndividualProfile p;
    p.continuous = head.row(i).transpose();
    for (Eigen::Index c = 0; c < head_cat.cols(); ++c) p.categorical.push_back(head_cat(i, c));
    return p;
}

IndividualProfile MarketSample::partner_profile(Eigen::Index i) const {
    IndividualProfile p;
    p.continuous = partner.row(i).transpose();
    for (Eigen::Index c = 0; c < partner_cat.cols(); ++c) p.categorical.push_back(partner_cat(i, c));
    return p;
}

namespace {

Matrix destandardize(const Matrix& z, const Standardization& s) {
    return (z.array().rowwise() * s.sd.transpose().array()).rowwise() +
           s.mean.transpose().array();
}

Matrix standardize(const Matrix& raw, const Standardization& s) {
    return (raw.array().rowwise() - s.mean.transpose().array()).rowwise() /
           s.sd.transpose().array();
}

// Two-pass population moments of the columns of `values`.
Standardization moments(const Matrix& values, const TraitSchema& schema) {
    Standardization s;
    const double n = static_cast<double>(values.rows());
    s.mean = values.colwise().sum().transpose() / n;
    s.sd.resize(values.cols());
    for (Eigen::Index k = 0; k < values.cols(); ++k) {
        const double var = (values.col(k).array() - s.mean(k)).square().sum() / n;
        const double scale = std::max(1.0, std::abs(s.mean(k)));
        if (!(var > 1e-24 * scale * scale))
            throw DataError("zero-variance trait: " + schema.continuous[static_cast<std::size_t>(k)]);
        s.sd(k) = std::sqrt(var);
    }
    return s;
}

Standardization compose(const Standardization& outer, const Standardization& inner) {
    // raw = (z' * inner.sd + inner.mean) * outer.sd + outer.mean
    Standardization s;
    s.sd = inner.sd.cwiseProduct(outer.sd);
    s.mean = inner.mean.cwiseProduct(outer.sd) + outer.mean;
    return s;
}

void check_shapes(const TraitSchema& schema, const Matrix& h, const Matrix& p, const IndexMatrix& hc,
                  const IndexMatrix& pc) {
    if (h.cols() != schema.K() || p.cols() != schema.K() || hc.cols() != schema.C() ||
        pc.cols() != schema.C() || p.rows() != h.rows() || hc.rows() != h.rows() ||
        pc.rows() != h.rows())
        throw DimensionError("sample matrices do not match the schema");
    for (Eigen::Index c = 0; c < schema.C(); ++c) {
        const int r = schema.categorical[static_cast<std::size_t>(c)].cardinality();
        for (Eigen::Index i = 0; i < h.rows(); ++i)
            if (hc(i, c) < 0 || hc(i, c) >= r || pc(i, c) < 0 || pc(i, c) >= r)
                throw DataError("categorical label index out of range");
    }
}

}  // namespace

Matrix MarketSample::raw_head() const { return destandardize(head, head_scale); }
Matrix MarketSample::raw_partner() const { return destandardize(partner, partner_scale); }

MarketSample make_sample(TraitSchema schema, MarketKind kind, const Matrix& raw_head,
                         const Matrix& raw_partner, IndexMatrix head_cat, IndexMatrix partner_cat) {
    schema.validate();
    check_shapes(schema, raw_head, raw_partner, head_cat, partner_cat);
    if (raw_head.rows() == 0) throw DataError("empty sample");
    if (raw_head.rows() < 2) throw DataError("sample needs at least two couples");

    MarketSample s;
    s.kind = kind;
    s.head_cat = std::move(head_cat);
    s.partner_cat = std::move(partner_cat);
    if (kind == MarketKind::unipartite) {
        Matrix pooled(2 * raw_head.rows(), raw_head.cols());
        pooled << raw_head, raw_partner;
        s.head_scale = moments(pooled, schema);
        s.partner_scale = s.head_scale;
    } else {
        s.head_scale = moments(raw_head, schema);
        s.partner_scale = moments(raw_partner, schema);
    }
    s.head = standardize(raw_head, s.head_scale);
    s.partner = standardize(raw_partner, s.partner_scale);
    s.schema = std::move(schema);
    return s;
}

MarketSample restandardize(const MarketSample& sample) {
    MarketSample s = sample;
    if (s.kind == MarketKind::unipartite) {
        Matrix pooled(2 * s.size(), s.head.cols());
        pooled << s.head, s.partner;
        const Standardization inner = moments(pooled, s.schema);
        s.head = standardize(s.head, inner);
        s.partner = standardize(s.partner, inner);
        s.head_scale = compose(sample.head_scale, inner);
        s.partner_scale = s.head_scale;
    } else {
        const Standardization hi = moments(s.head, s.schema);
        const Standardization pi = moments(s.partner, s.schema);
        s.head = standardize(s.head, hi);
        s.partner = standardize(s.partner, pi);
        s.head_scale = compose(sample.head_scale, hi);
        s.partner_scale = compose(sample.partner_scale, pi);
    }
    return s;
}

MarketSample select_rows(const MarketSample& sample, const std::vector<Eigen::Index>& rows) {
    MarketSample s;
    s.schema = sample.schema;
    s.kind = sample.kind;
    s.head_scale = sample.head_scale;
    s.partner_scale = sample.partner_scale;
    const auto n = static_cast<Eigen::Index>(rows.size());
    s.head.resize(n, sample.head.cols());
    s.partner.resize(n, sample.partner.cols());
    s.head_cat.resize(n, sample.head_cat.cols());
    s.partner_cat.resize(n, sample.partner_cat.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        const Eigen::Index i = rows[static_cast<std::size_t>(r)];
        s.head.row(r) = sample.head.row(i);
        s.partner.row(r) = sample.partner.row(i);
        s.head_cat.row(r) = sample.head_cat.row(i);
        s.partner_cat.row(r) = sample.partner_cat.row(i);
    }
    return s;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field.push_back('"');
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field.push_back(ch);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
    if (text.empty()) return false;
    const char* begin = text.data();
    const char* end = begin + text.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

IngestResult ingest(std::istream& csv, const TraitSchema& schema, MarketKind kind,
                    const IngestOptions& options) {
    schema.validate();
    std::string line;
    if (!std::getline(csv, line)) throw DataError("empty input: header row required");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);

    std::map<std::string, std::size_t> column;
    {
        const auto header = split_csv_line(line);
        for (std::size_t i = 0; i < header.size(); ++i) column[trim(header[i])] = i;
    }
    auto locate = [&](const std::string& name) {
        auto it = column.find(name);
        if (it == column.end()) throw DataError("missing column: " + name);
        return it->second;
    };
    const auto K = static_cast<std::size_t>(schema.K());
    const auto C = static_cast<std::size_t>(schema.C());
    std::vector<std::size_t> head_cols(K), partner_cols(K), head_cat_cols(C), partner_cat_cols(C);
    for (std::size_t k = 0; k < K; ++k) {
        head_cols[k] = locate("head_" + schema.continuous[k]);
        partner_cols[k] = locate("partner_" + schema.continuous[k]);
    }
    for (std::size_t c = 0; c < C; ++c) {
        head_cat_cols[c] = locate("head_" + schema.categorical[c].name);
        partner_cat_cols[c] = locate("partner_" + schema.categorical[c].name);
    }
    std::vector<std::pair<std::size_t, std::size_t>> filter_cols;  // (head col, partner col)
    std::vector<const RangeFilter*> filters;
    for (const auto& f : options.filters) {
        if (schema.continuous_index(f.trait) < 0) throw DataError("filter on unknown trait: " + f.trait);
        filter_cols.emplace_back(locate("head_" + f.trait), locate("partner_" + f.trait));
        filters.push_back(&f);
    }

    IngestResult result;
    std::vector<double> head_vals, partner_vals;
    std::vector<int> head_labels, partner_labels;
    std::size_t row = 0;
    std::size_t kept = 0;
    while (std::getline(csv, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_csv_line(line);
        std::string problem;
        auto cell = [&](std::size_t idx) -> std::string {
            return idx < fields.size() ? trim(fields[idx]) : std::string();
        };
        auto numeric = [&](std::size_t idx, const std::string& name, double& out) {
            if (parse_double(cell(idx), out)) return true;
            auto fill = options.fill_values.find(name);
            if (fill != options.fill_values.end()) {
                out = fill->second;
                return true;
            }
            if (problem.empty()) problem = "unparseable numeric value in column " + name;
            return false;
        };
        std::vector<double> h(K), p(K);
        std::vector<int> hl(C), pl(C);
        for (std::size_t k = 0; k < K; ++k) {
            numeric(head_cols[k], "head_" + schema.continuous[k], h[k]);
            numeric(partner_cols[k], "partner_" + schema.continuous[k], p[k]);
        }
        for (std::size_t c = 0; c < C; ++c) {
            const auto& def = schema.categorical[c];
            hl[c] = def.label_index(cell(head_cat_cols[c]));
            pl[c] = def.label_index(cell(partner_cat_cols[c]));
            if ((hl[c] < 0 || pl[c] < 0) && problem.empty())
                problem = "undeclared label for categorical " + def.name;
        }
        if (!problem.empty()) {
            result.rejected.push_back({row, problem});
            continue;
        }
        bool keep = true;
        for (std::size_t f = 0; f < filters.size(); ++f) {
            const int k = schema.continuous_index(filters[f]->trait);
            const double hv = h[static_cast<std::size_t>(k)], pv = p[static_cast<std::size_t>(k)];
            if (hv < filters[f]->min || hv > filters[f]->max || pv < filters[f]->min ||
                pv > filters[f]->max)
                keep = false;
        }
        if (!keep) continue;
        head_vals.insert(head_vals.end(), h.begin(), h.end());
        partner_vals.insert(partner_vals.end(), p.begin(), p.end());
        head_labels.insert(head_labels.end(), hl.begin(), hl.end());
        partner_labels.insert(partner_labels.end(), pl.begin(), pl.end());
        ++kept;
    }
    if (kept == 0) throw DataError("empty sample");

    const auto n = static_cast<Eigen::Index>(kept);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using RowMajorI = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto Ki = static_cast<Eigen::Index>(K), Ci = static_cast<Eigen::Index>(C);
    Matrix raw_head = Eigen::Map<RowMajor>(head_vals.data(), n, Ki);
    Matrix raw_partner = Eigen::Map<RowMajor>(partner_vals.data(), n, Ki);
    IndexMatrix hc = Eigen::Map<RowMajorI>(head_labels.data(), n, Ci);
    IndexMatrix pc = Eigen::Map<RowMajorI>(partner_labels.data(), n, Ci);
    result.sample = make_sample(schema, kind, raw_head, raw_partner, std::move(hc), std::move(pc));
    return result;
}

IngestResult ingest_file(const std::string& path, const TraitSchema& schema, MarketKind kind,
                         const IngestOptions& options) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return ingest(in, schema, kind, options);
}

void write_csv(std::ostream& out, const MarketSample& sample) {
    const auto& schema = sample.schema;
    bool first = true;
    auto sep = [&] {
        if (!first) out << ',';
        first = false;
    };
    for (const std::string side : {"head_", "partner_"}) {
        for (const auto& name : schema.continuous) {
            sep();
            out << side << name;
        }
        for (const auto& def : schema.categorical) {
            sep();
            out << side << def.name;
        }
    }
    out << '\n';
    const Matrix h = sample.raw_head();
    const Matrix p = sample.raw_partner();
    const auto old_precision = out.precision(17);
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        first = true;
        for (int side = 0; side < 2; ++side) {
            const Matrix& vals = side == 0 ? h : p;
            const IndexMatrix& cats = side == 0 ? sample.head_cat : sample.partner_cat;
            for (Eigen::Index k = 0; k < vals.cols(); ++k) {
                sep();
                out << vals(i, k);
            }
            for (Eigen::Index c = 0; c < cats.cols(); ++c) {
                sep();
                out << schema.categorical[static_cast<std::size_t>(c)].labels[static_cast<std::size_t>(cats(i, c))];
            }
        }
        out << '\n';
    }
    out.precision(old_precision);
}

// ---------------------------------------------------------------------------
// Couplings

namespace {

void finish_moments(EmpiricalCoupling& ec) {
    const Eigen::Index K = ec.support_x.cols();
    const Eigen::Index C = ec.support_x_cat.cols();
    ec.cross_moments = Matrix::Zero(K, K);
    ec.same_category_freq = Vector::Zero(C);
    for (int outer = 0; outer < ec.weights.outerSize(); ++outer) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(ec.weights, outer); it; ++it) {
            ec.cross_moments.noalias() +=
                it.value() * ec.support_x.row(it.row()).transpose() * ec.support_y.row(it.col());
            for (Eigen::Index c = 0; c < C; ++c)
                if (ec.support_x_cat(it.row(), c) == ec.support_y_cat(it.col(), c))
                    ec.same_category_freq(c) += it.value();
        }
    }
    if (ec.kind == MarketKind::unipartite)
        ec.cross_moments = (0.5 * (ec.cross_moments + ec.cross_moments.transpose())).eval();
}

}  // namespace

EmpiricalCoupling symmetrize(const MarketSample& sample) {
    if (sample.kind != MarketKind::unipartite)
        throw DataError("symmetrize requires a unipartite sample");
    const Eigen::Index n = sample.size();
    EmpiricalCoupling ec;
    ec.kind = MarketKind::unipartite;
    ec.couples = n;
    ec.support_x.resize(2 * n, sample.head.cols());
    ec.support_x << sample.head, sample.partner;
    ec.support_x_cat.resize(2 * n, sample.head_cat.cols());
    ec.support_x_cat << sample.head_cat, sample.partner_cat;
    ec.support_y = ec.support_x;
    ec.support_y_cat = ec.support_x_cat;

    const double w = 1.0 / (2.0 * static_cast<double>(n));
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(2 * n));
    for (Eigen::Index i = 0; i < n; ++i) {
        triplets.emplace_back(static_cast<int>(i), static_cast<int>(n + i), w);
        triplets.emplace_back(static_cast<int>(n + i), static_cast<int>(i), w);
    }
    ec.weights.resize(2 * n, 2 * n);
    ec.weights.setFromTriplets(triplets.begin(), triplets.end());
    finish_moments(ec);
    return ec;
}

EmpiricalCoupling build_bipartite(const MarketSample& sample) {
    if (sample.kind != MarketKind::bipartite)
        throw DataError("build_bipartite requires a bipartite sample");
    const Eigen::Index n = sample.size();
    EmpiricalCoupling ec;
    ec.kind = MarketKind::bipartite;
    ec.couples = n;
    ec.support_x = sample.head;
    ec.support_y = sample.partner;
    ec.support_x_cat = sample.head_cat;
    ec.support_y_cat = sample.partner_cat;
    const double w = 1.0 / static_cast<double>(n);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        triplets.emplace_back(static_cast<int>(i), static_cast<int>(i), w);
    ec.weights.resize(n, n);
    ec.weights.setFromTriplets(triplets.begin(), triplets.end());
    finish_moments(ec);
    return ec;
}

EmpiricalCoupling build_coupling(const MarketSample& sample) {
    return sample.kind == MarketKind::unipartite ? symmetrize(sample) : build_bipartite(sample);
}

Vector EmpiricalCoupling::row_marginal() const {
    Vector out = Vector::Zero(weights.rows());
    for (int outer = 0; outer < weights.outerSize(); ++outer)
        for (Eigen::SparseMatrix<double>::InnerIterator it(weights, outer); it; ++it)
            out(it.row()) += it.value();
    return out;
}

Vector EmpiricalCoupling::column_marginal() const {
    Vector out = Vector::Zero(weights.cols());
    for (int outer = 0; outer < weights.outerSize(); ++outer)
        for (Eigen::SparseMatrix<double>::InnerIterator it(weights, outer); it; ++it)
            out(it.col()) += it.value();
    return out;
}

namespace {

struct Dedup {
    std::vector<Eigen::Index> representative;  // first occurrence of each atom
    std::vector<Eigen::Index> atom_of;         // support row -> atom
};

Dedup deduplicate(const Matrix& values, const IndexMatrix& cats) {
    Dedup d;
    std::map<std::vector<double>, Eigen::Index> index;
    d.atom_of.resize(static_cast<std::size_t>(values.rows()));
    std::vector<double> key(static_cast<std::size_t>(values.cols() + cats.cols()));
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        std::size_t p = 0;
        for (Eigen::Index k = 0; k < values.cols(); ++k) key[p++] = values(i, k);
        for (Eigen::Index c = 0; c < cats.cols(); ++c) key[p++] = cats(i, c);
        auto [it, inserted] = index.emplace(key, static_cast<Eigen::Index>(d.representative.size()));
        if (inserted) d.representative.push_back(i);
        d.atom_of[static_cast<std::size_t>(i)] = it->second;
    }
    return d;
}

template <typename M>
M gather_rows(const M& src, const std::vector<Eigen::Index>& rows) {
    M out(static_cast<Eigen::Index>(rows.size()), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = src.row(rows[r]);
    return out;
}

}  // namespace

DiscreteMarket make_market(MarketKind kind, Matrix x, Matrix y, IndexMatrix x_cat, IndexMatrix y_cat,
                           Vector f, Vector g) {
    if (x.cols() != y.cols() || x_cat.cols() != y_cat.cols() || x.rows() != x_cat.rows() ||
        y.rows() != y_cat.rows() || f.size() != x.rows() || g.size() != y.rows())
        throw DimensionError("inconsistent market dimensions");
    DiscreteMarket m;
    m.kind = kind;
    m.x = std::move(x);
    m.y = std::move(y);
    m.x_cat = std::move(x_cat);
    m.y_cat = std::move(y_cat);
    m.f = std::move(f);
    m.g = std::move(g);
    m.observed = Matrix::Zero(m.x.rows(), m.y.rows());
    for (Eigen::Index c = 0; c < m.C(); ++c) {
        Matrix s(m.x.rows(), m.y.rows());
        for (Eigen::Index j = 0; j < m.y.rows(); ++j)
            for (Eigen::Index i = 0; i < m.x.rows(); ++i)
                s(i, j) = m.x_cat(i, c) == m.y_cat(j, c) ? 1.0 : 0.0;
        m.same_category.push_back(std::move(s));
    }
    return m;
}

DiscreteMarket EmpiricalCoupling::market() const {
    const Dedup dx = deduplicate(support_x, support_x_cat);
    const Dedup dy = kind == MarketKind::unipartite ? dx : deduplicate(support_y, support_y_cat);
    const auto nx = static_cast<Eigen::Index>(dx.representative.size());
    const auto ny = static_cast<Eigen::Index>(dy.representative.size());

    Matrix observed = Matrix::Zero(nx, ny);
    for (int outer = 0; outer < weights.outerSize(); ++outer)
        for (Eigen::SparseMatrix<double>::InnerIterator it(weights, outer); it; ++it)
            observed(dx.atom_of[static_cast<std::size_t>(it.row())],
                     dy.atom_of[static_cast<std::size_t>(it.col())]) += it.value();
    if (kind == MarketKind::unipartite) observed = (0.5 * (observed + observed.transpose())).eval();

    Vector f = observed.rowwise().sum();
    Vector g = observed.colwise().sum().transpose();
    if (kind == MarketKind::unipartite) g = f;
    DiscreteMarket m = make_market(kind, gather_rows(support_x, dx.representative),
                                   gather_rows(support_y, dy.representative),
                                   gather_rows(support_x_cat, dx.representative),
                                   gather_rows(support_y_cat, dy.representative), std::move(f),
                                   std::move(g));
    m.observed = std::move(observed);
    return m;
}

}  // namespace affinity
