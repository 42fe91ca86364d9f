#include "affinity/market_data.hpp"
#include "oracles.hpp"

#include "doctest.h"

#include <cmath>
#include <sstream>

using namespace affinity;

namespace {

TraitSchema age_schema() {
    TraitSchema s;
    s.continuous = {"age"};
    return s;
}

MarketSample random_sample(MarketKind kind, Eigen::Index n, std::uint64_t seed, Eigen::Index K = 2,
                           bool with_cat = true) {
    TraitSchema s;
    for (Eigen::Index k = 0; k < K; ++k) s.continuous.push_back("t" + std::to_string(k));
    if (with_cat) s.categorical.push_back({"race", {"a", "b", "c"}});
    Rng rng(seed);
    Matrix h(n, K), p(n, K);
    IndexMatrix hc(n, s.C()), pc(n, s.C());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index k = 0; k < K; ++k) {
            h(i, k) = 30 + 5 * rng.normal();
            p(i, k) = 0.5 * h(i, k) + 15 + 4 * rng.normal();
        }
        for (Eigen::Index c = 0; c < s.C(); ++c) {
            hc(i, c) = static_cast<int>(rng.below(3));
            pc(i, c) = static_cast<int>(rng.below(3));
        }
    }
    return make_sample(s, kind, h, p, hc, pc);
}

Matrix dense(const Eigen::SparseMatrix<double>& m) { return Matrix(m); }

}  // namespace

TEST_SUITE("market_data") {

TEST_CASE("two-couple pooled standardization") {
    Matrix h(2, 1), p(2, 1);
    h << 30, 40;
    p << 40, 30;
    const MarketSample s = make_sample(age_schema(), MarketKind::unipartite, h, p, IndexMatrix(2, 0),
                                       IndexMatrix(2, 0));
    CHECK(s.head_scale.mean(0) == doctest::Approx(35.0).epsilon(1e-15));
    CHECK(s.head_scale.sd(0) == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(s.head(0, 0) == doctest::Approx(-1.0));
    CHECK(s.head(1, 0) == doctest::Approx(1.0));
    CHECK(s.partner(0, 0) == doctest::Approx(1.0));
    CHECK(s.partner(1, 0) == doctest::Approx(-1.0));
}

TEST_CASE("zero-variance trait is rejected") {
    TraitSchema schema;
    schema.continuous = {"age", "wage"};
    std::istringstream csv(
        "head_age,head_wage,partner_age,partner_wage\n30,12,31,12\n40,12,38,12\n50,12,52,12\n");
    CHECK_THROWS_WITH_AS(ingest(csv, schema, MarketKind::unipartite), "zero-variance trait: wage",
                         DataError);
}

TEST_CASE("recorded standardization matches a one-pass reference") {
    Rng rng(11);
    std::ostringstream csv;
    csv << "head_x,partner_x\n";
    std::vector<double> pooled, heads, partners;
    csv.precision(17);
    for (int i = 0; i < 20; ++i) {
        const double a = 10 + 3 * rng.normal(), b = -2 + 0.5 * rng.normal();
        csv << a << "," << b << "\n";
        pooled.push_back(a);
        pooled.push_back(b);
        heads.push_back(a);
        partners.push_back(b);
    }
    TraitSchema schema;
    schema.continuous = {"x"};
    {
        std::istringstream in(csv.str());
        const auto r = ingest(in, schema, MarketKind::unipartite);
        const auto ref = oracle::welford(pooled);
        CHECK(std::abs(r.sample.head_scale.mean(0) - ref.mean) < 1e-12);
        CHECK(std::abs(r.sample.head_scale.sd(0) - std::sqrt(ref.variance)) < 1e-12);
    }
    {
        std::istringstream in(csv.str());
        const auto r = ingest(in, schema, MarketKind::bipartite);
        const auto rh = oracle::welford(heads), rp = oracle::welford(partners);
        CHECK(std::abs(r.sample.head_scale.mean(0) - rh.mean) < 1e-12);
        CHECK(std::abs(r.sample.head_scale.sd(0) - std::sqrt(rh.variance)) < 1e-12);
        CHECK(std::abs(r.sample.partner_scale.mean(0) - rp.mean) < 1e-12);
        CHECK(std::abs(r.sample.partner_scale.sd(0) - std::sqrt(rp.variance)) < 1e-12);
    }
}

TEST_CASE("standardized traits have mean 0 and variance 1") {
    for (MarketKind kind : {MarketKind::unipartite, MarketKind::bipartite}) {
        const MarketSample s = random_sample(kind, 200, 3);
        for (Eigen::Index k = 0; k < 2; ++k) {
            if (kind == MarketKind::unipartite) {
                Vector pooled(400);
                pooled << s.head.col(k), s.partner.col(k);
                CHECK(std::abs(pooled.mean()) < 1e-10);
                CHECK(std::abs(pooled.squaredNorm() / 400 - 1) < 1e-10);
            } else {
                for (const Matrix* m : {&s.head, &s.partner}) {
                    CHECK(std::abs(m->col(k).mean()) < 1e-10);
                    CHECK(std::abs(m->col(k).squaredNorm() / 200 - 1) < 1e-10);
                }
            }
        }
    }
}

TEST_CASE("standardization is idempotent") {
    const MarketSample s = random_sample(MarketKind::unipartite, 100, 5);
    const MarketSample again = make_sample(s.schema, s.kind, s.head, s.partner, s.head_cat, s.partner_cat);
    CHECK((again.head - s.head).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((again.partner - s.partner).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("ingest diagnostics, fill values and filters") {
    TraitSchema schema;
    schema.continuous = {"age", "wage"};
    schema.categorical = {{"race", {"white", "black"}}};
    const std::string text =
        "\xEF\xBB\xBFhead_age,head_wage,head_race,partner_age,partner_wage,partner_race\n"
        "30,10,white,32,,black\n"
        "41,abc,white,39,20,white\n"
        "35,15,\"black\",36,12,purple\n"
        "60,30,white,61,25,white\n"
        "28,8,black,27,9,black\n"
        "33,11,white,30,14,black\n";
    SUBCASE("rejects by default") {
        std::istringstream in(text);
        const auto r = ingest(in, schema, MarketKind::unipartite);
        REQUIRE(r.rejected.size() == 3);
        CHECK(r.rejected[0].row == 1);
        CHECK(r.rejected[1].row == 2);
        CHECK(r.rejected[2].row == 3);
        CHECK(r.rejected[2].message.find("race") != std::string::npos);
        CHECK(r.sample.size() == 3);
    }
    SUBCASE("fill values and range filter") {
        IngestOptions opts;
        opts.fill_values["partner_wage"] = 0.0;
        opts.fill_values["head_wage"] = 0.0;
        opts.filters.push_back({"age", 25, 50});
        std::istringstream in(text);
        const auto r = ingest(in, schema, MarketKind::unipartite, opts);
        CHECK(r.rejected.size() == 1);  // the undeclared label
        CHECK(r.sample.size() == 4);    // age 60 couple filtered out
        CHECK(r.sample.raw_partner()(0, 1) == doctest::Approx(0.0));
        CHECK(r.sample.head_cat(0, 0) == 0);
        CHECK(r.sample.partner_cat(0, 0) == 1);
    }
}

TEST_CASE("ingest errors") {
    TraitSchema schema = age_schema();
    std::istringstream empty("");
    CHECK_THROWS_AS(ingest(empty, schema, MarketKind::unipartite), DataError);
    std::istringstream header_only("head_age,partner_age\n");
    CHECK_THROWS_WITH_AS(ingest(header_only, schema, MarketKind::unipartite), "empty sample", DataError);
    std::istringstream missing("head_age,partner_wage\n1,2\n");
    CHECK_THROWS_WITH_AS(ingest(missing, schema, MarketKind::unipartite), "missing column: partner_age",
                         DataError);
    TraitSchema dup;
    dup.continuous = {"a", "a"};
    CHECK_THROWS_AS(dup.validate(), DataError);
    TraitSchema one_label;
    one_label.categorical = {{"c", {"x"}}};
    CHECK_THROWS_AS(one_label.validate(), DataError);
}

TEST_CASE("csv round trip") {
    const MarketSample s = random_sample(MarketKind::bipartite, 30, 9);
    std::ostringstream out;
    write_csv(out, s);
    std::istringstream in(out.str());
    const auto r = ingest(in, s.schema, s.kind);
    CHECK(r.rejected.empty());
    CHECK((r.sample.raw_head() - s.raw_head()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((r.sample.head - s.head).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(r.sample.head_cat == s.head_cat);
    CHECK(r.sample.partner_cat == s.partner_cat);
}

TEST_CASE("symmetrize: one couple mirrors") {
    MarketSample s;
    s.schema = age_schema();
    s.kind = MarketKind::unipartite;
    s.head = Matrix::Constant(1, 1, 0.3);
    s.partner = Matrix::Constant(1, 1, -0.7);
    s.head_cat = IndexMatrix(1, 0);
    s.partner_cat = IndexMatrix(1, 0);
    const EmpiricalCoupling c = symmetrize(s);
    const Matrix w = dense(c.weights);
    REQUIRE(w.rows() == 2);
    CHECK(w(0, 1) == 0.5);
    CHECK(w(1, 0) == 0.5);
    CHECK(w(0, 0) == 0.0);
    CHECK(w(1, 1) == 0.0);
}

TEST_CASE("perfect negative sorting gives cross moment -1") {
    Matrix h(2, 1), p(2, 1);
    h << -1, 1;
    p << 1, -1;
    const auto none = IndexMatrix(2, 0);
    const MarketSample u = make_sample(age_schema(), MarketKind::unipartite, h, p, none, none);
    CHECK(symmetrize(u).cross_moments(0, 0) == doctest::Approx(-1.0));
    const MarketSample b = make_sample(age_schema(), MarketKind::bipartite, h, p, none, none);
    const EmpiricalCoupling c = build_bipartite(b);
    CHECK(c.cross_moments(0, 0) == doctest::Approx(-1.0));
    CHECK(c.support_x.rows() == 2);
}

TEST_CASE("bipartite one couple puts mass 1 on a single cell") {
    MarketSample s;
    s.schema = age_schema();
    s.kind = MarketKind::bipartite;
    s.head = Matrix::Constant(1, 1, 1.0);
    s.partner = Matrix::Constant(1, 1, 2.0);
    s.head_cat = IndexMatrix(1, 0);
    s.partner_cat = IndexMatrix(1, 0);
    const Matrix w = dense(build_bipartite(s).weights);
    REQUIRE(w.size() == 1);
    CHECK(w(0, 0) == 1.0);
}

TEST_CASE("symmetrized coupling invariants") {
    const MarketSample s = random_sample(MarketKind::unipartite, 50, 21);
    const EmpiricalCoupling c = symmetrize(s);
    const Matrix w = dense(c.weights);
    CHECK(w.rows() == 100);
    CHECK(w == w.transpose());  // bitwise
    CHECK(std::abs(w.sum() - 1.0) < 1e-14);
    CHECK((c.row_marginal().array() - 1.0 / 100).abs().maxCoeff() < 1e-14);
    CHECK((w.rowwise().sum().array() - 1.0 / 100).abs().maxCoeff() < 1e-14);
    // (M + M') / 2 with M the head-by-partner moment matrix.
    const Matrix M = s.head.transpose() * s.partner / 50.0;
    CHECK((c.cross_moments - 0.5 * (M + M.transpose())).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(c.cross_moments == c.cross_moments.transpose());
    // Recompute from weights and support.
    const Matrix recomputed = c.support_x.transpose() * w * c.support_y;
    CHECK((recomputed - c.cross_moments).cwiseAbs().maxCoeff() < 1e-12);
    double same = 0;
    for (Eigen::Index i = 0; i < 50; ++i) same += s.head_cat(i, 0) == s.partner_cat(i, 0);
    CHECK(c.same_category_freq(0) == doctest::Approx(same / 50));
}

TEST_CASE("bipartite coupling invariants") {
    const MarketSample s = random_sample(MarketKind::bipartite, 50, 22);
    const EmpiricalCoupling c = build_bipartite(s);
    CHECK((c.row_marginal().array() - 1.0 / 50).abs().maxCoeff() < 1e-14);
    CHECK((c.column_marginal().array() - 1.0 / 50).abs().maxCoeff() < 1e-14);
    const Matrix M = s.head.transpose() * s.partner / 50.0;
    CHECK((c.cross_moments - M).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("deduplicated market keeps masses and moments") {
    // Heavy duplication: integer-valued traits.
    TraitSchema schema;
    schema.continuous = {"a"};
    schema.categorical = {{"g", {"x", "y"}}};
    Rng rng(4);
    const Eigen::Index n = 300;
    Matrix h(n, 1), p(n, 1);
    IndexMatrix hc(n, 1), pc(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        h(i, 0) = static_cast<double>(rng.below(4));
        p(i, 0) = static_cast<double>(rng.below(4));
        hc(i, 0) = static_cast<int>(rng.below(2));
        pc(i, 0) = static_cast<int>(rng.below(2));
    }
    const MarketSample s = make_sample(schema, MarketKind::unipartite, h, p, hc, pc);
    const EmpiricalCoupling c = symmetrize(s);
    const DiscreteMarket m = c.market();
    CHECK(m.x.rows() <= 8);
    CHECK(std::abs(m.f.sum() - 1.0) < 1e-14);
    CHECK((m.f - m.observed.rowwise().sum()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(m.observed == m.observed.transpose());
    CHECK((cross_moments(m, m.observed) - c.cross_moments).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(same_category_mass(m, m.observed)(0) - c.same_category_freq(0)) < 1e-14);
}

TEST_CASE("restandardize composes scales") {
    const MarketSample s = random_sample(MarketKind::unipartite, 60, 8);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < 60; i += 2) rows.push_back(i);
    const MarketSample sub = restandardize(select_rows(s, rows));
    CHECK(sub.size() == 30);
    Matrix expected(30, 2);
    for (Eigen::Index r = 0; r < 30; ++r) expected.row(r) = s.raw_head().row(rows[static_cast<std::size_t>(r)]);
    CHECK((sub.raw_head() - expected).cwiseAbs().maxCoeff() < 1e-9);
    Vector pooled(60);
    pooled << sub.head.col(0), sub.partner.col(0);
    CHECK(std::abs(pooled.mean()) < 1e-10);
}

}  // TEST_SUITE
