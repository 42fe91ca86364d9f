#include "affinity/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace affinity {

using nlohmann::json;

TraitSchema TraitLaw::schema() const {
    TraitSchema s;
    s.continuous = continuous;
    for (const auto& law : categorical) s.categorical.push_back(law.definition);
    return s;
}

void ScenarioSpec::validate() const {
    const auto K = static_cast<Eigen::Index>(traits.continuous.size());
    const auto C = static_cast<Eigen::Index>(traits.categorical.size());
    traits.schema().validate();
    if (n_support < 2) throw DataError("n_support must be at least 2");
    if (n_couples < 2) throw DataError("n_couples must be at least 2");
    if (traits.mean.size() != K || traits.covariance.rows() != K || traits.covariance.cols() != K)
        throw DataError("trait mean / covariance do not match the trait list");
    if ((traits.covariance - traits.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw DataError("trait covariance must be symmetric");
    if (K > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(traits.covariance);
        if (es.eigenvalues().minCoeff() < -1e-10) throw DataError("trait covariance must be PSD");
    }
    for (const auto& law : traits.categorical) {
        if (law.probabilities.size() != law.definition.labels.size())
            throw DataError("categorical '" + law.definition.name + "' needs one probability per label");
        double total = 0.0;
        for (double p : law.probabilities) {
            if (!(p >= 0)) throw DataError("category probabilities must be nonnegative");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw DataError("category probabilities of '" + law.definition.name + "' must sum to 1");
    }
    if (!traits.groups.empty()) {
        double total = 0.0;
        for (const auto& g : traits.groups) {
            if (!(g.share >= 0)) throw DataError("group shares must be nonnegative");
            total += g.share;
            for (const auto& [name, value] : g.values)
                if (std::find(traits.continuous.begin(), traits.continuous.end(), name) ==
                    traits.continuous.end())
                    throw DataError("group '" + g.label + "' fixes unknown trait " + name);
        }
        if (std::abs(total - 1.0) > 1e-9) throw DataError("group shares must sum to 1");
    }
    model.validate(K, C, kind);
}

namespace {

struct SupportDraw {
    Matrix values;
    IndexMatrix labels;
};

std::vector<Eigen::Index> group_sizes(const std::vector<FixedGroup>& groups, Eigen::Index n) {
    std::vector<Eigen::Index> sizes(groups.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    Eigen::Index assigned = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const double exact = groups[g].share * static_cast<double>(n);
        sizes[g] = static_cast<Eigen::Index>(std::floor(exact));
        assigned += sizes[g];
        remainders.emplace_back(exact - std::floor(exact), g);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++sizes[remainders[r % remainders.size()].second];
    return sizes;
}

SupportDraw draw_support(const TraitLaw& law, Eigen::Index n, Rng& rng) {
    const auto K = static_cast<Eigen::Index>(law.continuous.size());
    const auto C = static_cast<Eigen::Index>(law.categorical.size());
    SupportDraw d;
    d.values.resize(n, K);
    d.labels.resize(n, C);

    Matrix root = Matrix::Zero(K, K);
    if (K > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(law.covariance);
        root = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
               es.eigenvectors().transpose();
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        Vector z(K);
        for (Eigen::Index k = 0; k < K; ++k) z(k) = rng.normal();
        d.values.row(i) = (law.mean + root * z).transpose();
        for (Eigen::Index c = 0; c < C; ++c) {
            const auto& probs = law.categorical[static_cast<std::size_t>(c)].probabilities;
            const double u = rng.uniform();
            double cum = 0.0;
            int label = static_cast<int>(probs.size()) - 1;
            for (std::size_t r = 0; r < probs.size(); ++r) {
                cum += probs[r];
                if (u < cum) {
                    label = static_cast<int>(r);
                    break;
                }
            }
            d.labels(i, c) = label;
        }
    }

    std::set<Eigen::Index> fixed;
    if (!law.groups.empty()) {
        const auto sizes = group_sizes(law.groups, n);
        Eigen::Index row = 0;
        for (std::size_t g = 0; g < law.groups.size(); ++g) {
            for (Eigen::Index r = 0; r < sizes[g]; ++r, ++row) {
                for (const auto& [name, value] : law.groups[g].values) {
                    const auto k = static_cast<Eigen::Index>(
                        std::find(law.continuous.begin(), law.continuous.end(), name) -
                        law.continuous.begin());
                    d.values(row, k) = value;
                    fixed.insert(k);
                }
            }
        }
    }
    if (law.match_support_moments && n > 1) {
        for (Eigen::Index k = 0; k < K; ++k) {
            if (fixed.count(k)) continue;
            const double target_sd = std::sqrt(std::max(law.covariance(k, k), 0.0));
            auto col = d.values.col(k);
            const double mean = col.mean();
            const double sd = std::sqrt((col.array() - mean).square().mean());
            if (sd > 0 && target_sd > 0)
                col = ((col.array() - mean) * (target_sd / sd) + law.mean(k)).matrix();
        }
    }
    return d;
}

Vector population_sd(const Matrix& values) {
    Vector sd(values.cols());
    for (Eigen::Index k = 0; k < values.cols(); ++k) {
        const double mean = values.col(k).mean();
        sd(k) = std::sqrt((values.col(k).array() - mean).square().mean());
    }
    return sd;
}

}  // namespace

SyntheticMarket generate_market(const ScenarioSpec& spec, const SolveOptions& inner) {
    spec.validate();
    Rng support_rng(spec.seed, 0);
    Rng sample_rng(spec.seed, 1);
    const Eigen::Index N = spec.n_support;

    const SupportDraw xs = draw_support(spec.traits, N, support_rng);
    const SupportDraw ys =
        spec.kind == MarketKind::unipartite ? xs : draw_support(spec.traits, N, support_rng);
    const Vector uniform = Vector::Constant(N, 1.0 / static_cast<double>(N));

    SyntheticMarket out;
    out.support = make_market(spec.kind, xs.values, ys.values, xs.labels, ys.labels, uniform, uniform);
    out.matching = solve(spec.model, out.support, inner);

    // Inverse-CDF sampling over the cells in column-major order.
    const Matrix& pi = out.matching.weights;
    std::vector<double> cdf(static_cast<std::size_t>(pi.size()));
    double running = 0.0;
    for (Eigen::Index c = 0; c < pi.size(); ++c) {
        running += pi.data()[c];
        cdf[static_cast<std::size_t>(c)] = running;
    }
    const Eigen::Index K = out.support.K(), C = out.support.C();
    Matrix head(spec.n_couples, K), partner(spec.n_couples, K);
    IndexMatrix head_cat(spec.n_couples, C), partner_cat(spec.n_couples, C);
    for (Eigen::Index r = 0; r < spec.n_couples; ++r) {
        const double u = sample_rng.uniform() * running;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        if (it == cdf.end()) --it;
        const auto cell = static_cast<Eigen::Index>(it - cdf.begin());
        Eigen::Index i = cell % pi.rows(), j = cell / pi.rows();
        const Matrix* hx = &out.support.x;
        const Matrix* py = &out.support.y;
        const IndexMatrix* hc = &out.support.x_cat;
        const IndexMatrix* pc = &out.support.y_cat;
        if (spec.kind == MarketKind::unipartite && sample_rng.coin()) std::swap(i, j);
        head.row(r) = hx->row(i);
        partner.row(r) = py->row(j);
        head_cat.row(r) = hc->row(i);
        partner_cat.row(r) = pc->row(j);
    }
    out.sample = make_sample(spec.traits.schema(), spec.kind, head, partner, std::move(head_cat),
                             std::move(partner_cat));
    return out;
}

MarketSample generate(const ScenarioSpec& spec, const SolveOptions& inner) {
    return generate_market(spec, inner).sample;
}

ScenarioSpec pooled_market_preset(std::uint64_t seed, double a_go, double a_gg) {
    ScenarioSpec spec;
    spec.name = "pooled-orientation-market";
    spec.kind = MarketKind::unipartite;
    spec.n_support = 200;
    spec.n_couples = 2000;
    spec.seed = seed;
    spec.traits.continuous = {"econ", "gender", "orientation"};
    spec.traits.mean = Vector::Zero(3);
    spec.traits.covariance = Matrix::Identity(3, 3);
    spec.traits.groups = {
        {"straight men", 0.45, {{"gender", -1.0}, {"orientation", 1.0}}},
        {"straight women", 0.45, {{"gender", 1.0}, {"orientation", -1.0}}},
        {"gay men", 0.05, {{"gender", -1.0}, {"orientation", -1.0}}},
        {"lesbians", 0.05, {{"gender", 1.0}, {"orientation", 1.0}}},
    };
    Matrix A = Matrix::Zero(3, 3);
    A(0, 0) = 0.5;           // economic homogamy
    A(1, 1) = a_gg;          // same-gender term
    A(1, 2) = A(2, 1) = a_go;  // gender x orientation
    spec.model = {A, Vector::Zero(0), 1.0};
    spec.note =
        "demonstrative preset: magnitudes are illustrative, not estimates. A large "
        "gender-orientation affinity drives the pooled market toward full segmentation into "
        "same-sex and different-sex submarkets.";
    return spec;
}

double orientation_mismatch_fraction(const MarketSample& sample) {
    const int g = sample.schema.continuous_index("gender");
    const int o = sample.schema.continuous_index("orientation");
    if (g < 0 || o < 0) throw DataError("sample has no gender / orientation traits");
    const Matrix h = sample.raw_head(), p = sample.raw_partner();
    Eigen::Index mismatched = 0;
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
        const bool head_ok = (h(i, o) > 0) == (p(i, g) > 0);
        const bool partner_ok = (p(i, o) > 0) == (h(i, g) > 0);
        if (!head_ok || !partner_ok) ++mismatched;
    }
    return static_cast<double>(mismatched) / static_cast<double>(sample.size());
}

// ---------------------------------------------------------------------------
// JSON

namespace {

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

Matrix matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw DataError(std::string("scenario: bad shape for ") + what);
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw DataError(std::string("scenario: bad shape for ") + what);
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Vector vector_from(const json& j, Eigen::Index size, const char* what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != size)
        throw DataError(std::string("scenario: bad length for ") + what);
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v(i) = j[static_cast<std::size_t>(i)].get<double>();
    return v;
}

}  // namespace

json scenario_to_json(const ScenarioSpec& spec) {
    json traits;
    traits["continuous"] = spec.traits.continuous;
    traits["mean"] = vector_json(spec.traits.mean);
    traits["covariance"] = matrix_json(spec.traits.covariance);
    traits["categorical"] = json::array();
    for (const auto& law : spec.traits.categorical)
        traits["categorical"].push_back({{"name", law.definition.name},
                                         {"labels", law.definition.labels},
                                         {"probabilities", law.probabilities}});
    traits["groups"] = json::array();
    for (const auto& g : spec.traits.groups) {
        json values = json::object();
        for (const auto& [name, value] : g.values) values[name] = value;
        traits["groups"].push_back({{"label", g.label}, {"share", g.share}, {"values", values}});
    }
    traits["match_support_moments"] = spec.traits.match_support_moments;

    json j;
    j["version"] = 1;
    j["name"] = spec.name;
    j["kind"] = to_string(spec.kind);
    j["n_support"] = spec.n_support;
    j["n_couples"] = spec.n_couples;
    j["seed"] = spec.seed;
    j["traits"] = traits;
    j["model"] = {{"A", matrix_json(spec.model.A)},
                  {"lambda", vector_json(spec.model.lambda)},
                  {"sigma", spec.model.sigma}};
    j["note"] = spec.note;
    return j;
}

ScenarioSpec scenario_from_json(const json& j) {
    try {
        if (j.value("version", 0) != 1) throw DataError("scenario: unsupported or missing version");
        ScenarioSpec spec;
        spec.name = j.value("name", std::string("scenario"));
        const std::string kind = j.value("kind", std::string("unipartite"));
        if (kind == "unipartite")
            spec.kind = MarketKind::unipartite;
        else if (kind == "bipartite")
            spec.kind = MarketKind::bipartite;
        else
            throw DataError("scenario: unknown kind " + kind);
        spec.n_support = j.at("n_support").get<Eigen::Index>();
        spec.n_couples = j.at("n_couples").get<Eigen::Index>();
        spec.seed = j.value("seed", std::uint64_t{0});
        spec.note = j.value("note", std::string());

        const json& t = j.at("traits");
        spec.traits.continuous = t.at("continuous").get<std::vector<std::string>>();
        const auto K = static_cast<Eigen::Index>(spec.traits.continuous.size());
        spec.traits.mean = t.contains("mean") ? vector_from(t["mean"], K, "mean") : Vector::Zero(K);
        spec.traits.covariance = t.contains("covariance")
                                     ? matrix_from(t["covariance"], K, K, "covariance")
                                     : Matrix::Identity(K, K);
        for (const auto& c : t.value("categorical", json::array())) {
            CategoricalLaw law;
            law.definition.name = c.at("name").get<std::string>();
            law.definition.labels = c.at("labels").get<std::vector<std::string>>();
            law.probabilities = c.at("probabilities").get<std::vector<double>>();
            spec.traits.categorical.push_back(std::move(law));
        }
        for (const auto& g : t.value("groups", json::array())) {
            FixedGroup group;
            group.label = g.value("label", std::string());
            group.share = g.at("share").get<double>();
            for (const auto& [name, value] : g.at("values").items())
                group.values.emplace_back(name, value.get<double>());
            spec.traits.groups.push_back(std::move(group));
        }
        spec.traits.match_support_moments = t.value("match_support_moments", true);

        const json& m = j.at("model");
        const auto C = static_cast<Eigen::Index>(spec.traits.categorical.size());
        spec.model.A = matrix_from(m.at("A"), K, K, "A");
        spec.model.lambda = m.contains("lambda") ? vector_from(m["lambda"], C, "lambda") : Vector::Zero(C);
        spec.model.sigma = m.value("sigma", 1.0);
        spec.validate();
        return spec;
    } catch (const json::exception& e) {
        throw DataError(std::string("scenario: ") + e.what());
    }
}

json truth_sidecar(const ScenarioSpec& spec, const SyntheticMarket& market) {
    // Standardization rescales traits, so the affinity the estimator targets
    // is D_x A D_y with D the support standard deviations (means only shift
    // the potentials).
    const Vector sd_x = population_sd(market.support.x);
    const Vector sd_y = population_sd(market.support.y);
    const Matrix standardized = sd_x.asDiagonal() * spec.model.A * sd_y.asDiagonal();

    json j;
    j["version"] = 1;
    j["seed"] = spec.seed;
    j["scenario"] = scenario_to_json(spec);
    j["planted"] = {{"A", matrix_json(spec.model.A)},
                    {"lambda", vector_json(spec.model.lambda)},
                    {"sigma", spec.model.sigma}};
    j["planted_standardized"] = {{"A", matrix_json(standardized / spec.model.sigma)},
                                 {"lambda", vector_json(spec.model.lambda / spec.model.sigma)},
                                 {"sigma", 1.0}};
    j["support"] = {{"n", spec.n_support},
                    {"sd_x", vector_json(sd_x)},
                    {"sd_y", vector_json(sd_y)}};
    j["equilibrium"] = {{"iterations", market.matching.iterations},
                        {"residual", market.matching.residual},
                        {"social_gain", market.matching.social_gain}};
    if (!spec.note.empty()) j["note"] = spec.note;
    return j;
}

}  // namespace affinity
