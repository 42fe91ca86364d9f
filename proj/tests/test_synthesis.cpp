#include "affinity/descriptives.hpp"
#include "affinity/estimation.hpp"
#include "affinity/synthesis.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

#include "doctest.h"

#include <cmath>
#include <sstream>

using namespace affinity;

TEST_SUITE("synthesis") {

TEST_CASE("zero affinity samples independent partners") {
    const Eigen::Index n = 5000;
    const MarketSample s = generate(fixtures::planted(Matrix::Zero(2, 2), 0.0, n, 1, false, MarketKind::bipartite));
    const Matrix h = s.raw_head(), p = s.raw_partner();
    for (Eigen::Index i = 0; i < 2; ++i)
        for (Eigen::Index j = 0; j < 2; ++j) {
            std::vector<double> x(h.col(i).data(), h.col(i).data() + n), y(p.col(j).data(), p.col(j).data() + n);
            CHECK(std::abs(oracle::pearson_two_pass(x, y)) <= 3 / std::sqrt(static_cast<double>(n)));
        }
}

TEST_CASE("two-point scenario reproduces the closed-form cell frequencies") {
    ScenarioSpec spec;
    spec.kind = MarketKind::unipartite;
    spec.n_support = 2;
    spec.n_couples = 20000;
    spec.seed = 3;
    spec.traits.continuous = {"v"};
    spec.traits.mean = Vector::Zero(1);
    spec.traits.covariance = Matrix::Zero(1, 1);
    spec.traits.groups = {{"low", 0.5, {{"v", -1.0}}}, {"high", 0.5, {{"v", 1.0}}}};
    spec.model = {Matrix::Constant(1, 1, 1.0), Vector(0), 1.0};
    const SyntheticMarket m = generate_market(spec);
    const double p11 = oracle::two_point_pi11(1.0, 1.0);
    CHECK(std::abs(m.matching.weights(0, 0) - p11) < 1e-10);
    const Matrix h = m.sample.raw_head(), p = m.sample.raw_partner();
    double same = 0;
    for (Eigen::Index i = 0; i < spec.n_couples; ++i) same += h(i, 0) == p(i, 0);
    const double n = static_cast<double>(spec.n_couples);
    const double expected = 2 * p11;  // both diagonal cells
    CHECK(std::abs(same / n - expected) <= 4 * std::sqrt(expected * (1 - expected) / n));
}

TEST_CASE("unipartite head order is randomized") {
    const MarketSample s = generate(fixtures::planted(fixtures::reference_A(), 1.0, 6000, 4));
    const Matrix M = s.head.transpose() * s.partner / 6000.0;
    CHECK(std::abs(M(0, 1) - M(1, 0)) < 4 / std::sqrt(6000.0));
    CHECK(std::abs(s.head.col(0).mean() - s.partner.col(0).mean()) < 4 * std::sqrt(2.0 / 6000));
}

TEST_CASE("sampled coupling converges to the planted one") {
    auto tv = [](Eigen::Index n) {
        ScenarioSpec spec = fixtures::planted(fixtures::reference_A(), 1.0, n, 5, true, MarketKind::bipartite, 20);
        const SyntheticMarket m = generate_market(spec);
        // Map sampled couples back to support cells through raw trait values.
        Matrix counts = Matrix::Zero(20, 20);
        const Matrix h = m.sample.raw_head(), p = m.sample.raw_partner();
        for (Eigen::Index r = 0; r < n; ++r) {
            Eigen::Index i = 0, j = 0;
            (m.support.x.rowwise() - h.row(r)).rowwise().squaredNorm().minCoeff(&i);
            (m.support.y.rowwise() - p.row(r)).rowwise().squaredNorm().minCoeff(&j);
            counts(i, j) += 1;
        }
        return 0.5 * (counts / static_cast<double>(n) - m.matching.weights).cwiseAbs().sum();
    };
    const double small = tv(1000), large = tv(16000);
    CHECK(large < small);
    CHECK(large < 0.6 * small);
}

TEST_CASE("generation is deterministic and round-trips through ingest") {
    const ScenarioSpec spec = fixtures::planted(fixtures::reference_A(), 1.0, 300, 6);
    const MarketSample a = generate(spec), b = generate(spec);
    std::ostringstream ca, cb;
    write_csv(ca, a);
    write_csv(cb, b);
    CHECK(ca.str() == cb.str());
    std::istringstream in(ca.str());
    const IngestResult r = ingest(in, a.schema, a.kind);
    CHECK(r.rejected.empty());
    CHECK((r.sample.raw_head() - a.raw_head()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((r.sample.raw_partner() - a.raw_partner()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.sample.head_cat == a.head_cat);
}

TEST_CASE("scenario json round trip") {
    ScenarioSpec spec = pooled_market_preset(17);
    spec.traits.categorical.push_back({{"region", {"n", "s"}}, {0.4, 0.6}});
    spec.model.lambda = Vector::Constant(1, 0.7);
    const nlohmann::json j = scenario_to_json(spec);
    CHECK(j.at("version") == 1);
    const ScenarioSpec back = scenario_from_json(j);
    CHECK(scenario_to_json(back).dump() == j.dump());
    CHECK(back.model.A == spec.model.A);
    CHECK(back.traits.groups.size() == 4);
    CHECK(back.seed == 17);

    nlohmann::json bad = j;
    bad["version"] = 2;
    CHECK_THROWS_AS(scenario_from_json(bad), DataError);
    bad = j;
    bad["traits"]["covariance"] = {{1.0}};
    CHECK_THROWS_AS(scenario_from_json(bad), DataError);
}

TEST_CASE("spec validation") {
    ScenarioSpec spec = fixtures::planted(fixtures::reference_A(), 1.0, 100, 1);
    CHECK_NOTHROW(spec.validate());
    SUBCASE("support") {
        spec.n_support = 1;
        CHECK_THROWS_AS(spec.validate(), DataError);
    }
    SUBCASE("covariance") {
        spec.traits.covariance(0, 0) = -1;
        CHECK_THROWS_AS(spec.validate(), DataError);
    }
    SUBCASE("probabilities") {
        spec.traits.categorical[0].probabilities = {0.5, 0.5, 0.5};
        CHECK_THROWS_AS(spec.validate(), DataError);
    }
    SUBCASE("asymmetric unipartite model") {
        spec.model.A(0, 1) = 0.4;
        CHECK_THROWS_AS(spec.validate(), DataError);
    }
}

TEST_CASE("pooled preset content") {
    const ScenarioSpec spec = pooled_market_preset(1);
    CHECK(spec.kind == MarketKind::unipartite);
    const TraitSchema schema = spec.traits.schema();
    const int g = schema.continuous_index("gender"), o = schema.continuous_index("orientation");
    REQUIRE(g >= 0);
    REQUIRE(o >= 0);
    CHECK(schema.continuous_index("econ") >= 0);
    CHECK(spec.model.A(g, o) > 0);
    CHECK(spec.model.A(g, g) < 0);
    CHECK(spec.note.find("demonstrative") != std::string::npos);
}

TEST_CASE("strong gender-orientation affinity segments the market") {
    ScenarioSpec spec = pooled_market_preset(2, 20.0, -1.0);
    spec.n_couples = 3000;
    const MarketSample s = generate(spec);
    CHECK(orientation_mismatch_fraction(s) < 0.01);
}

TEST_CASE("no gender-orientation interaction: partner gender ignores orientation") {
    ScenarioSpec spec = pooled_market_preset(3, 0.0, 0.0);
    spec.n_couples = 6000;
    const MarketSample s = generate(spec);
    const int g = s.schema.continuous_index("gender"), o = s.schema.continuous_index("orientation");
    const Matrix h = s.raw_head(), p = s.raw_partner();
    // P(partner female | own orientation) for both orientations, both roles.
    double female[2] = {0, 0}, total[2] = {0, 0};
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        for (int side = 0; side < 2; ++side) {
            const auto& me = side ? p : h;
            const auto& other = side ? h : p;
            const int k = me(i, o) > 0 ? 1 : 0;
            total[k] += 1;
            female[k] += other(i, g) > 0;
        }
    }
    const double p0 = female[0] / total[0], p1 = female[1] / total[1];
    const double se = std::sqrt(0.25 / total[0] + 0.25 / total[1]);
    CHECK(std::abs(p0 - p1) <= 3 * se);
}

TEST_CASE("default preset: fit recovers the block signs") {
    const ScenarioSpec spec = pooled_market_preset(5);
    const MarketSample s = generate(spec);
    const FitResult r = fit(symmetrize(s), s.schema);
    CHECK(r.converged);
    const int g = s.schema.continuous_index("gender"), o = s.schema.continuous_index("orientation");
    CHECK(r.model.A(g, o) > 0);
    CHECK(r.model.A(g, g) < 0);
}

TEST_CASE("truth sidecar") {
    ScenarioSpec spec = pooled_market_preset(4);
    spec.n_couples = 200;
    const SyntheticMarket m = generate_market(spec);
    const nlohmann::json t = truth_sidecar(spec, m);
    CHECK(t.at("seed") == 4);
    CHECK(t.contains("planted"));
    CHECK(t.contains("planted_standardized"));
}

}  // TEST_SUITE
