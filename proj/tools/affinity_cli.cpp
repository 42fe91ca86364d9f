// affinity: batch front end for estimation, saliency, simulation, comparison,
// descriptives and symmetry tests. See README.md for the config format.

#include "affinity/report.hpp"
#include "affinity/synthesis.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace affinity;

namespace {

enum Exit { kOk = 0, kOther = 1, kDataError = 2, kNonConverged = 3 };

struct MarketInput {
    std::string name;
    fs::path path;
    MarketKind kind = MarketKind::unipartite;
};

struct RunConfig {
    fs::path base;  // directory of the config file
    std::uint64_t seed = 0;
    int threads = 1;
    fs::path out = "out";
    TraitSchema schema;
    std::vector<MarketInput> markets;
    IngestOptions ingest;
    FitOptions fit;
    int B = 200;
    bool bootstrap = true;
    std::string role_scheme = "householder";
    std::string role_trait;
    json simulate;
    json raw;
};

MarketKind parse_kind(const std::string& s) {
    if (s == "unipartite") return MarketKind::unipartite;
    if (s == "bipartite") return MarketKind::bipartite;
    throw DataError("config: unknown market kind " + s);
}

TraitSchema parse_schema(const json& j) {
    TraitSchema s;
    s.continuous = j.value("continuous", std::vector<std::string>{});
    for (const auto& c : j.value("categorical", json::array()))
        s.categorical.push_back({c.at("name").get<std::string>(), c.at("labels").get<std::vector<std::string>>()});
    s.validate();
    return s;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config: " + path.string());
    RunConfig c;
    try {
        c.raw = json::parse(in);
        const json& j = c.raw;
        if (j.value("version", 0) != 1) throw DataError("config: unsupported or missing version");
        c.base = path.parent_path();
        c.seed = j.value("seed", std::uint64_t{0});
        c.threads = j.value("threads", 1);
        if (j.contains("out")) c.out = c.base / j["out"].get<std::string>();
        if (j.contains("schema")) c.schema = parse_schema(j["schema"]);
        std::set<std::string> names;
        for (const auto& m : j.value("markets", json::array())) {
            MarketInput mi;
            mi.name = m.at("name").get<std::string>();
            mi.path = c.base / m.at("path").get<std::string>();
            mi.kind = parse_kind(m.value("kind", std::string("unipartite")));
            if (!names.insert(mi.name).second) throw DataError("config: duplicate market name " + mi.name);
            c.markets.push_back(std::move(mi));
        }
        if (j.contains("ingest")) {
            const json& g = j["ingest"];
            for (const auto& [k, v] : g.value("fill_values", json::object()).items())
                c.ingest.fill_values[k] = v.get<double>();
            for (const auto& f : g.value("filters", json::array())) {
                RangeFilter rf;
                rf.trait = f.at("trait").get<std::string>();
                if (f.contains("min")) rf.min = f["min"].get<double>();
                if (f.contains("max")) rf.max = f["max"].get<double>();
                c.ingest.filters.push_back(rf);
            }
        }
        if (j.contains("estimation")) {
            const json& e = j["estimation"];
            c.fit.outer_tolerance = e.value("outer_tolerance", c.fit.outer_tolerance);
            c.fit.max_outer_iterations = e.value("max_outer_iterations", c.fit.max_outer_iterations);
            c.fit.inner.tolerance = e.value("inner_tolerance", c.fit.inner.tolerance);
            c.fit.inner.max_iterations = e.value("max_inner_iterations", c.fit.inner.max_iterations);
        }
        if (j.contains("bootstrap")) {
            c.B = j["bootstrap"].value("B", c.B);
            c.bootstrap = j["bootstrap"].value("enabled", true);
        }
        if (j.contains("symmetry")) {
            c.role_scheme = j["symmetry"].value("role_scheme", c.role_scheme);
            c.role_trait = j["symmetry"].value("role_trait", std::string());
        }
        if (j.contains("simulate")) c.simulate = j["simulate"];
    } catch (const json::exception& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    return c;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

IngestResult load_market(const RunConfig& c, const MarketInput& m) {
    if (!fs::exists(m.path)) throw DataError("input file not found: " + m.path.string());
    IngestResult r = ingest_file(m.path.string(), c.schema, m.kind, c.ingest);
    for (const auto& d : r.rejected)
        std::cerr << m.name << ": row " << d.row << " rejected: " << d.message << "\n";
    return r;
}

// Every market bootstraps from the root seed, so a market listed twice gives
// identical columns.
std::optional<BootstrapOptions> boot_options(const RunConfig& c) {
    if (!c.bootstrap) return std::nullopt;
    BootstrapOptions b;
    b.B = c.B;
    b.seed = c.seed;
    b.threads = c.threads;
    return b;
}

std::vector<MarketEstimate> estimate_all(const RunConfig& c) {
    if (c.markets.empty()) throw DataError("config lists no markets");
    std::vector<MarketEstimate> out;
    for (std::size_t i = 0; i < c.markets.size(); ++i) {
        const IngestResult r = load_market(c, c.markets[i]);
        MarketEstimate e = estimate_market(c.markets[i].name, r.sample, c.fit, boot_options(c));
        e.rejected_rows = r.rejected.size();
        out.push_back(std::move(e));
    }
    return out;
}

int status(const std::vector<MarketEstimate>& es) {
    for (const auto& e : es)
        if (!e.converged()) return kNonConverged;
    return kOk;
}

int cmd_estimate(const RunConfig& c) {
    const auto es = estimate_all(c);
    for (const auto& e : es) {
        std::ostringstream text;
        write_estimate_text(text, e);
        write_file(c.out / ("estimate_" + e.name + ".json"), dump(estimate_json(e)));
        write_file(c.out / ("estimate_" + e.name + ".txt"), text.str());
        std::cout << text.str() << "\n";
    }
    return status(es);
}

int cmd_saliency(const RunConfig& c) {
    const auto es = estimate_all(c);
    for (const auto& e : es) {
        const SaliencyDecomposition d = e.fit.mode == FitMode::bipartite_free
                                            ? decompose_bipartite(e.normalized.model, e.coupling)
                                            : decompose(e.normalized, e.coupling);
        std::ostringstream text;
        write_saliency_text(text, e, d);
        write_file(c.out / ("saliency_" + e.name + ".json"), dump(saliency_json(e, d)));
        write_file(c.out / ("saliency_" + e.name + ".txt"), text.str());
        std::cout << text.str() << "\n";
    }
    return status(es);
}

int cmd_compare(const RunConfig& c) {
    if (c.markets.size() < 2) throw DataError("compare needs at least two markets");
    const auto es = estimate_all(c);
    std::ostringstream text;
    write_compare_text(text, es);
    write_file(c.out / "compare.json", dump(compare_json(es)));
    write_file(c.out / "compare.txt", text.str());
    std::cout << text.str();
    return status(es);
}

int cmd_descriptives(const RunConfig& c) {
    if (c.markets.empty()) throw DataError("config lists no markets");
    for (const auto& m : c.markets) {
        const IngestResult r = load_market(c, m);
        const DescriptiveReport d = describe(r.sample);
        std::ostringstream text, csv;
        write_text(text, d, m.name);
        write_csv(csv, d, m.name);
        write_file(c.out / ("descriptives_" + m.name + ".json"), dump(descriptives_json(d, m.name)));
        write_file(c.out / ("descriptives_" + m.name + ".txt"), text.str());
        write_file(c.out / ("descriptives_" + m.name + ".csv"), csv.str());
        std::cout << text.str();
    }
    return kOk;
}

int cmd_test_symmetry(const RunConfig& c) {
    if (c.markets.empty()) throw DataError("config lists no markets");
    const RoleScheme scheme = parse_role_scheme(c.role_scheme);
    int code = kOk;
    for (std::size_t i = 0; i < c.markets.size(); ++i) {
        const auto& m = c.markets[i];
        const IngestResult r = load_market(c, m);
        const RoleAssignment roles = assign_roles(r.sample, scheme, c.role_trait);
        BootstrapOptions b;
        b.B = c.B;
        b.seed = c.seed;
        b.threads = c.threads;
        SymmetryReport rep;
        rep.market = m.name;
        rep.role_scheme = c.role_scheme;
        rep.role_trait = scheme == RoleScheme::householder ? std::string() : c.role_trait;
        rep.ties = roles.ties;
        rep.estimate = estimate_market(m.name, roles.sample, c.fit, b);
        rep.test = test_symmetry(rep.estimate.fit, *rep.estimate.bootstrap);
        std::ostringstream text;
        write_symmetry_text(text, rep);
        write_file(c.out / ("symmetry_" + m.name + ".json"), dump(symmetry_json(rep)));
        write_file(c.out / ("symmetry_" + m.name + ".txt"), text.str());
        std::cout << text.str() << "\n";
        if (!rep.estimate.converged()) code = kNonConverged;
    }
    return code;
}

int cmd_simulate(const RunConfig& c, bool seed_from_cli) {
    const json& s = c.simulate;
    if (s.is_null()) throw DataError("config has no simulate section");
    ScenarioSpec spec;
    try {
        if (s.contains("preset")) {
            if (s["preset"].get<std::string>() != "pooled")
                throw DataError("unknown preset: " + s["preset"].get<std::string>());
            spec = pooled_market_preset(c.seed, s.value("a_go", 2.0), s.value("a_gg", -1.0));
            if (s.contains("n_couples")) spec.n_couples = s["n_couples"].get<Eigen::Index>();
            if (s.contains("n_support")) spec.n_support = s["n_support"].get<Eigen::Index>();
        } else if (s.contains("scenario_path")) {
            std::ifstream in(c.base / s["scenario_path"].get<std::string>());
            if (!in) throw DataError("cannot open scenario " + s["scenario_path"].get<std::string>());
            spec = scenario_from_json(json::parse(in));
            if (seed_from_cli || !spec.seed) spec.seed = c.seed;
        } else {
            spec = scenario_from_json(s.at("scenario"));
            if (seed_from_cli || !s["scenario"].contains("seed")) spec.seed = c.seed;
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("scenario: ") + e.what());
    }
    SolveOptions inner = c.fit.inner;
    const SyntheticMarket market = generate_market(spec, inner);
    const std::string name = s.value("name", spec.name);
    std::ostringstream csv;
    write_csv(csv, market.sample);
    write_file(c.out / (name + ".csv"), csv.str());
    write_file(c.out / (name + ".truth.json"), dump(truth_sidecar(spec, market)));
    std::cout << "wrote " << (c.out / (name + ".csv")).string() << " (" << market.sample.size()
              << " couples) and " << (c.out / (name + ".truth.json")).string() << "\n";
    if (!spec.note.empty()) std::cout << "note: " << spec.note << "\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Affinity-matrix estimation for matching markets"};
    app.require_subcommand(1);
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out_dir;
    app.add_option("--config", config_path, "Run configuration (JSON)")->required();
    app.add_option("--seed", seed, "Root seed (overrides config)");
    app.add_option("--threads", threads, "Worker threads for bootstrap replicates")->check(CLI::PositiveNumber);
    app.add_option("--out", out_dir, "Output directory (overrides config)");
    const std::pair<const char*, const char*> commands[] = {
        {"estimate", "Fit, normalize and bootstrap each market"},
        {"saliency", "Sorting indices and surplus shares of each fitted market"},
        {"simulate", "Generate a synthetic market and its truth sidecar"},
        {"compare", "Side-by-side normalized estimates for two or more markets"},
        {"descriptives", "Means, partner correlations and homogamy rates"},
        {"test-symmetry", "Bipartite fit under a role scheme and symmetry tests"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help);
    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig c = load_config(config_path);
        if (seed) c.seed = *seed;
        if (const char* env = std::getenv("AFFINITY_THREADS")) c.threads = std::max(1, std::atoi(env));
        if (threads) c.threads = *threads;
        if (!out_dir.empty()) c.out = out_dir;

        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "estimate") return cmd_estimate(c);
        if (cmd == "saliency") return cmd_saliency(c);
        if (cmd == "simulate") return cmd_simulate(c, seed.has_value());
        if (cmd == "compare") return cmd_compare(c);
        if (cmd == "descriptives") return cmd_descriptives(c);
        return cmd_test_symmetry(c);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const DimensionError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const ConvergenceError& e) {
        std::cerr << "not converged: " << e.what() << "\n";
        return kNonConverged;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kOther;
    }
}
