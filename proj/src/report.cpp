#include "affinity/report.hpp"

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <sstream>

namespace affinity {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kLabel = 30;
constexpr int kCell = 11;

std::string num(double v, int precision = 2) {
    if (std::isnan(v)) return "-";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    // Avoid printing "-0.00".
    if (std::string(buf).find_first_not_of("-0.") == std::string::npos && buf[0] == '-')
        return std::string(buf + 1);
    return buf;
}

std::string estimate_cell(double v, double se) {
    std::string s = num(v);
    if (!std::isnan(se) && se > 0 && std::abs(v / se) > 1.96) s += "*";
    return s;
}

std::string se_cell(double se) { return std::isnan(se) ? "" : "(" + num(se) + ")"; }

json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

std::vector<std::string> categorical_names(const TraitSchema& s) {
    std::vector<std::string> out;
    for (const auto& c : s.categorical) out.push_back(c.name);
    return out;
}

void label(std::ostream& out, const std::string& text) {
    out << std::left << std::setw(kLabel) << text;
    if (text.size() >= static_cast<std::size_t>(kLabel)) out << ' ';
}
void cell(std::ostream& out, const std::string& text) {
    if (text.size() >= static_cast<std::size_t>(kCell)) out << ' ';
    out << std::right << std::setw(kCell) << text;
}

void banner(std::ostream& out, const MarketEstimate& e) {
    if (!e.converged()) {
        out << "*** NONCONVERGED: max moment residual " << std::scientific << std::setprecision(3)
            << e.fit.max_moment_residual() << std::defaultfloat << " after " << e.fit.iterations
            << " iterations; estimates below are not an optimum ***\n";
    }
}

json bootstrap_json(const std::optional<BootstrapResult>& b) {
    if (!b) return nullptr;
    return {{"B", b->B},
            {"seed", b->seed},
            {"failures", b->failures},
            {"nonconverged", b->nonconverged},
            {"failure_messages", b->failure_messages},
            {"resampling_unit", "couple"}};
}

}  // namespace

bool MarketEstimate::converged() const {
    return fit.converged && (!bootstrap || bootstrap->nonconverged == 0);
}

Matrix MarketEstimate::A_se() const {
    const Eigen::Index K = schema.K();
    Matrix se = Matrix::Constant(K, K, kNaN);
    if (!bootstrap) return se;
    const ParameterLayout layout(K, schema.C(), fit.mode);
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = 0; j < K; ++j)
            se(i, j) = bootstrap->normalized_standard_errors(layout.index_of(i, j));
    return se;
}

Vector MarketEstimate::lambda_se() const {
    const Eigen::Index C = schema.C();
    Vector se = Vector::Constant(C, kNaN);
    if (!bootstrap) return se;
    const ParameterLayout layout(schema.K(), C, fit.mode);
    for (Eigen::Index c = 0; c < C; ++c) se(c) = bootstrap->normalized_standard_errors(layout.lambda_index(c));
    return se;
}

MarketEstimate estimate_market(const std::string& name, const MarketSample& sample,
                               const FitOptions& options,
                               const std::optional<BootstrapOptions>& boot) {
    MarketEstimate e;
    e.name = name;
    e.schema = sample.schema;
    e.kind = sample.kind;
    e.couples = sample.size();
    e.coupling = build_coupling(sample);
    FitOptions fo = options;
    fo.mode = sample.kind == MarketKind::unipartite ? FitMode::unipartite_symmetric
                                                    : FitMode::bipartite_free;
    e.fit = fit(e.coupling, sample.schema, fo);
    e.normalized = normalize(e.fit, e.coupling, fo.inner);
    if (boot) e.bootstrap = bootstrap(sample, fo, *boot);
    return e;
}

// ---------------------------------------------------------------------------
// estimate

json estimate_json(const MarketEstimate& e) {
    json j;
    j["version"] = 1;
    j["market"] = e.name;
    j["kind"] = to_string(e.kind);
    j["mode"] = to_string(e.fit.mode);
    j["couples"] = e.couples;
    j["rejected_rows"] = e.rejected_rows;
    j["converged"] = e.converged();
    j["fit"] = {{"converged", e.fit.converged},
                {"iterations", e.fit.iterations},
                {"max_moment_residual", e.fit.max_moment_residual()},
                {"objective_value", e.fit.objective_value},
                {"social_gain_unit_sigma", e.fit.social_gain}};
    j["traits"] = e.schema.continuous;
    j["categoricals"] = categorical_names(e.schema);
    j["normalized"] = {{"A", matrix_json(e.normalized.model.A)},
                       {"A_se", matrix_json(e.A_se())},
                       {"lambda", vector_json(e.normalized.model.lambda)},
                       {"lambda_se", vector_json(e.lambda_se())},
                       {"sigma_report", e.normalized.sigma_report},
                       {"scale_k", e.normalized.scale_k}};
    j["unit_sigma"] = {{"A", matrix_json(e.fit.model.A)}, {"lambda", vector_json(e.fit.model.lambda)}};
    if (e.bootstrap) {
        const ParameterLayout layout(e.schema.K(), e.schema.C(), e.fit.mode);
        j["unit_sigma"]["se"] = vector_json(e.bootstrap->standard_errors);
        j["parameter_names"] = layout.names(e.schema.continuous, categorical_names(e.schema));
    }
    j["bootstrap"] = bootstrap_json(e.bootstrap);
    j["entropy_convention"] = kEntropyConvention;
    j["warnings"] = e.fit.warnings;
    return j;
}

void write_estimate_text(std::ostream& out, const MarketEstimate& e) {
    const Eigen::Index K = e.schema.K(), C = e.schema.C();
    const bool full = e.fit.mode == FitMode::bipartite_free;
    const Matrix& A = e.normalized.model.A;
    const Matrix se = e.A_se();
    const Vector lse = e.lambda_se();

    out << "Affinity matrix: " << e.name << " (" << e.couples << " couples)\n";
    banner(out, e);
    if (full) out << "rows: heads, columns: partners\n";
    label(out, "");
    for (const auto& t : e.schema.continuous) cell(out, t);
    for (const auto& c : e.schema.categorical) cell(out, c.name);
    out << "\n";
    for (Eigen::Index i = 0; i < K + C; ++i) {
        std::ostringstream est, err;
        for (Eigen::Index j = 0; j < K + C; ++j) {
            std::string v, s;
            if (i < K && j < K && (full || j >= i)) {
                v = estimate_cell(A(i, j), se(i, j));
                s = se_cell(se(i, j));
            } else if (i >= K && j == i) {
                v = estimate_cell(e.normalized.model.lambda(i - K), lse(i - K));
                s = se_cell(lse(i - K));
            }
            cell(est, v);
            cell(err, s);
        }
        label(out, i < K ? e.schema.continuous[static_cast<std::size_t>(i)]
                         : e.schema.categorical[static_cast<std::size_t>(i - K)].name);
        out << est.str() << "\n";
        label(out, "");
        out << err.str() << "\n";
    }
    label(out, "sigma");
    cell(out, num(e.normalized.sigma_report));
    out << "\n";
    if (e.bootstrap)
        out << "Bootstrap standard errors in parentheses (B = " << e.bootstrap->B
            << ", failed = " << e.bootstrap->failures << ", nonconverged = " << e.bootstrap->nonconverged
            << "); * marks |estimate / SE| > 1.96.\n";
    else
        out << "No bootstrap requested; standard errors omitted.\n";
    out << "Scale: W(A, sigma) = 1. Entropy term: " << kEntropyConvention << ".\n";
    for (const auto& w : e.fit.warnings) out << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// saliency

json saliency_json(const MarketEstimate& e, const SaliencyDecomposition& d) {
    json j;
    j["version"] = 1;
    j["market"] = e.name;
    j["bipartite"] = d.bipartite;
    j["traits"] = e.schema.continuous;
    j["categoricals"] = categorical_names(e.schema);
    json indices = json::array();
    const auto order = d.report_order();
    for (std::size_t r = 0; r < order.size(); ++r) {
        const Eigen::Index p = order[r];
        json idx = {{"name", "I" + std::to_string(r + 1)},
                    {"value", d.values(p)},
                    {"loadings", vector_json(d.loadings.row(p).transpose())},
                    {"share", d.index_shares(p)}};
        if (d.bipartite) idx["right_loadings"] = vector_json(d.right_loadings.row(p).transpose());
        indices.push_back(std::move(idx));
    }
    j["indices"] = indices;
    j["categorical_shares"] = vector_json(d.categorical_shares);
    j["total_share"] = d.total_share();
    j["converged"] = e.converged();
    return j;
}

void write_saliency_text(std::ostream& out, const MarketEstimate& e, const SaliencyDecomposition& d) {
    const auto order = d.report_order();
    const Eigen::Index K = e.schema.K(), C = e.schema.C();
    out << "Saliency analysis: " << e.name << " (" << e.couples << " couples)\n";
    banner(out, e);
    if (d.bipartite) out << "singular value decomposition; head-side loadings shown\n";
    label(out, "");
    for (std::size_t r = 0; r < order.size(); ++r) cell(out, "I" + std::to_string(r + 1));
    for (const auto& c : e.schema.categorical) cell(out, c.name);
    out << "\n";
    for (Eigen::Index k = 0; k < K; ++k) {
        label(out, e.schema.continuous[static_cast<std::size_t>(k)]);
        for (const Eigen::Index p : order) cell(out, num(d.loadings(p, k)));
        out << "\n";
    }
    if (d.bipartite) {
        for (Eigen::Index k = 0; k < K; ++k) {
            label(out, e.schema.continuous[static_cast<std::size_t>(k)] + " (partner)");
            for (const Eigen::Index p : order) cell(out, num(d.right_loadings(p, k)));
            out << "\n";
        }
    }
    label(out, "value");
    for (const Eigen::Index p : order) cell(out, num(d.values(p)));
    out << "\n";
    label(out, "Share of systematic surplus");
    const double total = d.total_share();
    const auto pct = [&](double s) { return num(100.0 * s / total, 0) + "%"; };
    for (const Eigen::Index p : order) cell(out, pct(d.index_shares(p)));
    for (Eigen::Index c = 0; c < C; ++c) cell(out, pct(d.categorical_shares(c)));
    out << "\n";
    out << "Shares sum: " << num(100.0 * (d.index_shares.sum() + d.categorical_shares.sum()) / total, 1)
        << "% of systematic surplus " << num(total, 4) << " (W normalized to 1).\n";
}

// ---------------------------------------------------------------------------
// compare

namespace {

const char* kComparabilityCaveat =
    "Comparability caveat: each market is scaled so that its social gain W equals 1. Across "
    "markets this is a substantive assumption (equal systematic surplus scale), not an innocuous "
    "normalization; read level differences with it in mind. Traits are standardized within "
    "each market, so coefficients are per market standard deviation.";

}  // namespace

json compare_json(const std::vector<MarketEstimate>& markets) {
    json j;
    j["version"] = 1;
    j["caveat"] = kComparabilityCaveat;
    j["entropy_convention"] = kEntropyConvention;
    json rows = json::array();
    for (const auto& e : markets) {
        const Matrix se = e.A_se();
        rows.push_back({{"market", e.name},
                        {"couples", e.couples},
                        {"traits", e.schema.continuous},
                        {"categoricals", categorical_names(e.schema)},
                        {"diagonal", vector_json(e.normalized.model.A.diagonal())},
                        {"diagonal_se", vector_json(se.diagonal())},
                        {"lambda", vector_json(e.normalized.model.lambda)},
                        {"lambda_se", vector_json(e.lambda_se())},
                        {"sigma_report", e.normalized.sigma_report},
                        {"converged", e.converged()}});
    }
    j["markets"] = rows;
    return j;
}

void write_compare_text(std::ostream& out, const std::vector<MarketEstimate>& markets) {
    if (markets.empty()) return;
    const TraitSchema& s = markets.front().schema;
    out << "Summary: diagonal affinity coefficients by market\n";
    label(out, "");
    for (const auto& t : s.continuous) cell(out, t);
    for (const auto& c : s.categorical) cell(out, c.name);
    cell(out, "sigma");
    out << "\n";
    for (const auto& e : markets) {
        if (e.schema.continuous != s.continuous || e.schema.C() != s.C())
            throw DataError("compare: market '" + e.name + "' has a different trait schema");
        const Matrix se = e.A_se();
        const Vector lse = e.lambda_se();
        std::ostringstream est, err;
        for (Eigen::Index k = 0; k < s.K(); ++k) {
            cell(est, estimate_cell(e.normalized.model.A(k, k), se(k, k)));
            cell(err, se_cell(se(k, k)));
        }
        for (Eigen::Index c = 0; c < s.C(); ++c) {
            cell(est, estimate_cell(e.normalized.model.lambda(c), lse(c)));
            cell(err, se_cell(lse(c)));
        }
        cell(est, num(e.normalized.sigma_report));
        label(out, e.name + (e.converged() ? "" : " [NONCONVERGED]"));
        out << est.str() << "\n";
        label(out, "");
        out << err.str() << "\n";
    }
    out << "Standard errors in parentheses; * marks |estimate / SE| > 1.96.\n";
    out << kComparabilityCaveat << "\n";
}

// ---------------------------------------------------------------------------
// symmetry

json symmetry_json(const SymmetryReport& r) {
    json j;
    j["version"] = 1;
    j["market"] = r.market;
    j["role_scheme"] = r.role_scheme;
    if (!r.role_trait.empty()) j["role_trait"] = r.role_trait;
    j["ties"] = r.ties;
    j["couples"] = r.estimate.couples;
    j["converged"] = r.estimate.converged();
    j["A_unit_sigma"] = matrix_json(r.estimate.fit.model.A);
    json pairs = json::array();
    const auto& names = r.estimate.schema.continuous;
    for (const auto& p : r.test.pairs) {
        if (p.j < p.i) continue;
        json item = {{"i", names[static_cast<std::size_t>(p.i)]},
                     {"j", names[static_cast<std::size_t>(p.j)]},
                     {"difference", p.difference},
                     {"statistic", p.statistic},
                     {"p_value", p.valid ? json(p.p_value) : json(nullptr)},
                     {"valid", p.valid}};
        if (!p.diagnostic.empty()) item["diagnostic"] = p.diagnostic;
        pairs.push_back(std::move(item));
    }
    j["pairs"] = pairs;
    j["bootstrap"] = bootstrap_json(r.estimate.bootstrap);
    return j;
}

void write_symmetry_text(std::ostream& out, const SymmetryReport& r) {
    const auto& names = r.estimate.schema.continuous;
    const Matrix& A = r.estimate.fit.model.A;
    out << "Symmetry test: " << r.market << " (" << r.estimate.couples << " couples, roles by "
        << r.role_scheme << (r.role_trait.empty() ? "" : " on " + r.role_trait) << ", " << r.ties
        << " ties)\n";
    banner(out, r.estimate);
    label(out, "pair");
    for (const char* h : {"A_ij", "A_ji", "diff", "z", "p"}) cell(out, h);
    out << "\n";
    for (const auto& p : r.test.pairs) {
        if (p.j < p.i) continue;
        label(out, names[static_cast<std::size_t>(p.i)] + " x " + names[static_cast<std::size_t>(p.j)]);
        cell(out, num(A(p.i, p.j), 3));
        cell(out, num(A(p.j, p.i), 3));
        cell(out, num(p.difference, 3));
        cell(out, p.valid ? num(p.statistic, 2) : "-");
        cell(out, p.valid ? num(p.p_value, 3) : "-");
        if (p.valid && p.p_value < 0.05) out << "  <- asymmetric at 5%";
        if (!p.valid) out << "  " << p.diagnostic;
        out << "\n";
    }
}

json descriptives_json(const DescriptiveReport& r, const std::string& market) {
    json j;
    j["version"] = 1;
    j["market"] = market;
    j["kind"] = to_string(r.kind);
    j["couples"] = r.couples;
    j["traits"] = r.traits;
    j["means"] = {{"head", vector_json(r.means.head)},
                  {"partner", vector_json(r.means.partner)},
                  {"pooled", vector_json(r.means.pooled)},
                  {"head_sd", vector_json(r.means.head_sd)},
                  {"partner_sd", vector_json(r.means.partner_sd)}};
    j["correlations"] = vector_json(r.correlations);
    json tables = json::array();
    for (std::size_t c = 0; c < r.homogamy.size(); ++c) {
        const auto& t = r.homogamy[c];
        json counts = json::array();
        for (Eigen::Index a = 0; a < t.counts.rows(); ++a) {
            json row = json::array();
            for (Eigen::Index b = 0; b < t.counts.cols(); ++b) row.push_back(t.counts(a, b));
            counts.push_back(std::move(row));
        }
        tables.push_back({{"categorical", t.categorical},
                          {"labels", t.labels},
                          {"upper_triangular", t.upper_triangular},
                          {"rate", matrix_json(t.rate)},
                          {"observed_share", matrix_json(t.observed_share)},
                          {"expected_share", matrix_json(t.expected_share)},
                          {"counts", counts},
                          {"head_shares", vector_json(r.means.head_category_shares[c])},
                          {"partner_shares", vector_json(r.means.partner_category_shares[c])}});
    }
    j["homogamy"] = tables;
    return j;
}

}  // namespace affinity
