#include "affinity/equilibrium.hpp"
#include "affinity/kernels.hpp"
#include "oracles.hpp"

#include "doctest.h"

#include <cmath>

using namespace affinity;

namespace {

// Random market on explicit support with non-uniform positive masses.
DiscreteMarket random_market(MarketKind kind, Eigen::Index n, Eigen::Index K, Eigen::Index C,
                             std::uint64_t seed) {
    Rng rng(seed);
    auto draw = [&](Eigen::Index rows) {
        Matrix m(rows, K);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
        return m;
    };
    auto labels = [&](Eigen::Index rows) {
        IndexMatrix m(rows, C);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<int>(rng.below(3));
        return m;
    };
    auto masses = [&](Eigen::Index rows) {
        Vector v(rows);
        for (Eigen::Index i = 0; i < rows; ++i) v(i) = 0.2 + rng.uniform();
        return Vector(v / v.sum());
    };
    const Matrix x = draw(n);
    const IndexMatrix xc = labels(n);
    const Vector f = masses(n);
    if (kind == MarketKind::unipartite) return make_market(kind, x, x, xc, xc, f, f);
    const Matrix y = draw(n + 1);
    const IndexMatrix yc = labels(n + 1);
    return make_market(kind, x, y, xc, yc, f, masses(n + 1));
}

AffinityModel random_model(Eigen::Index K, Eigen::Index C, bool symmetric, std::uint64_t seed) {
    Rng rng(seed, 7);
    AffinityModel m = AffinityModel::zero(K, C);
    for (Eigen::Index i = 0; i < m.A.size(); ++i) m.A.data()[i] = 0.6 * rng.normal();
    if (symmetric) m.A = (0.5 * (m.A + m.A.transpose())).eval();
    for (Eigen::Index c = 0; c < C; ++c) m.lambda(c) = rng.normal();
    return m;
}

DiscreteMarket two_point() {
    Matrix x(2, 1);
    x << -1, 1;
    return make_market(MarketKind::unipartite, x, x, IndexMatrix(2, 0), IndexMatrix(2, 0),
                       Vector::Constant(2, 0.5), Vector::Constant(2, 0.5));
}

}  // namespace

TEST_SUITE("equilibrium") {

TEST_CASE("surplus: zero model and hand example") {
    const DiscreteMarket m = random_market(MarketKind::bipartite, 4, 2, 1, 1);
    CHECK(surplus_matrix(AffinityModel::zero(2, 1), m).values.cwiseAbs().maxCoeff() == 0.0);

    Matrix x(1, 1), y(1, 1);
    x << 0.5;
    y << -1;
    IndexMatrix c(1, 1);
    c << 1;
    const DiscreteMarket one = make_market(MarketKind::bipartite, x, y, c, c, Vector::Ones(1), Vector::Ones(1));
    AffinityModel model{Matrix::Constant(1, 1, 2.0), Vector::Constant(1, 3.0), 1.0};
    CHECK(surplus_matrix(model, one).values(0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("surplus matches a double-loop evaluator") {
    for (MarketKind kind : {MarketKind::unipartite, MarketKind::bipartite}) {
        const DiscreteMarket m = random_market(kind, 4, 3, 2, 5);
        const AffinityModel model = random_model(3, 2, kind == MarketKind::unipartite, 5);
        const Matrix ref = oracle::surplus_double_loop(model.A, model.lambda, m.x, m.y, m.x_cat, m.y_cat);
        CHECK((surplus_matrix(model, m).values - ref).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("surplus errors") {
    const DiscreteMarket m = random_market(MarketKind::unipartite, 4, 2, 1, 2);
    CHECK_THROWS_AS(surplus_matrix(AffinityModel::zero(3, 1), m), DimensionError);
    AffinityModel asym = AffinityModel::zero(2, 1);
    asym.A(0, 1) = 1.0;
    CHECK_THROWS_AS(surplus_matrix(asym, m), DataError);
    CHECK_THROWS_AS(solve(AffinityModel::zero(2, 1, 1e-7), m), DataError);
}

TEST_CASE("zero affinity gives independence") {
    for (double sigma : {0.1, 1.0, 7.0}) {
        const DiscreteMarket m = random_market(MarketKind::bipartite, 6, 2, 1, 3);
        const EquilibriumMatching e = solve(AffinityModel::zero(2, 1, sigma), m);
        CHECK((e.weights - m.f * m.g.transpose()).cwiseAbs().maxCoeff() < 1e-14);
        CHECK(std::abs(e.social_gain) < 1e-14);
        // Potentials are constant up to the gauge a + b.
        const Matrix sum = e.potential_a.replicate(1, m.y.rows()) +
                           e.potential_b.transpose().replicate(m.x.rows(), 1);
        const Matrix expected_log = (m.f * m.g.transpose()).array().log().matrix();
        CHECK((-sum / sigma - expected_log).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("two-point closed form") {
    const DiscreteMarket m = two_point();
    AffinityModel model{Matrix::Constant(1, 1, 1.0), Vector(0), 1.0};
    const EquilibriumMatching e = solve(model, m);
    const double p11 = oracle::two_point_pi11(1.0, 1.0);
    CHECK(std::abs(p11 - std::exp(1.0) / (2 * (std::exp(1.0) + std::exp(-1.0)))) < 1e-15);
    CHECK(std::abs(e.weights(1, 1) - p11) < 1e-10);
    CHECK(std::abs(e.weights(0, 0) - p11) < 1e-10);
    CHECK(std::abs(e.weights(0, 1) - (0.5 - p11)) < 1e-10);
    CHECK(e.weights(0, 0) == doctest::Approx(0.44040).epsilon(1e-5));

    // W by direct summation over the four cells.
    double w = 0;
    const double phi[2][2] = {{1, -1}, {-1, 1}};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
            const double p = e.weights(i, j);
            w += p * phi[i][j] - p * std::log(p / 0.25);
        }
    CHECK(std::abs(e.social_gain - w) < 1e-10);

    // Utilities by hand from the solved potentials.
    const SurplusMatrix s = surplus_matrix(model, m);
    const Matrix U = equilibrium_utilities(e, s);
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            CHECK(std::abs(U(i, j) - 0.5 * (phi[i][j] + e.potential_a(i) - e.potential_a(j))) < 1e-14);
    // Symmetric types have equal potentials, so U = Phi / 2.
    CHECK(std::abs(e.potential_a(0) - e.potential_a(1)) < 1e-10);
    CHECK(std::abs(U(0, 1) - 0.5 * phi[0][1]) < 1e-10);
}

TEST_CASE("objective matches a projected-gradient oracle") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const DiscreteMarket m = random_market(MarketKind::unipartite, 5, 2, 1, 40 + seed);
        const AffinityModel model = random_model(2, 1, true, 40 + seed);
        const EquilibriumMatching e = solve(model, m);
        const SurplusMatrix s = surplus_matrix(model, m);
        const Matrix ref = oracle::projected_gradient_coupling(s.values, m.f, m.g, 1.0);
        const double ref_value = oracle::entropic_objective(ref, s.values, m.f, m.g, 1.0);
        CHECK(std::abs(e.social_gain - ref_value) < 1e-6);
        // Variational optimality against the oracle's feasible coupling.
        CHECK(e.social_gain >= ref_value - 1e-8);
        CHECK((e.weights - ref).cwiseAbs().maxCoeff() < 1e-5);
    }
}

TEST_CASE("feasibility, symmetry and Gibbs form") {
    for (MarketKind kind : {MarketKind::unipartite, MarketKind::bipartite}) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const DiscreteMarket m = random_market(kind, 30, 3, 1, 100 + seed);
            const AffinityModel model = random_model(3, 1, kind == MarketKind::unipartite, seed);
            const EquilibriumMatching e = solve(model, m);
            CHECK(e.converged);
            CHECK((e.weights.array() >= 0).all());
            CHECK((e.weights.rowwise().sum() - m.f).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK((e.weights.colwise().sum().transpose() - m.g).cwiseAbs().maxCoeff() <= 1e-10);
            CHECK(std::isfinite(e.social_gain));
            if (kind == MarketKind::unipartite) {
                CHECK((e.weights - e.weights.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
                CHECK(e.potential_a == e.potential_b);
            }
            const Matrix phi = surplus_matrix(model, m).values;
            Matrix gap = e.weights.array().log().matrix();
            for (Eigen::Index i = 0; i < phi.rows(); ++i)
                for (Eigen::Index j = 0; j < phi.cols(); ++j)
                    gap(i, j) -= (phi(i, j) - e.potential_a(i) - e.potential_b(j)) / model.sigma;
            CHECK(gap.maxCoeff() - gap.minCoeff() < 1e-8);
            const Matrix U = equilibrium_utilities(e, surplus_matrix(model, m));
            if (kind == MarketKind::unipartite)
                CHECK((U + U.transpose() - phi).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("scale invariance of the coupling and of W") {
    const DiscreteMarket m = random_market(MarketKind::unipartite, 25, 2, 1, 9);
    const AffinityModel model = random_model(2, 1, true, 9);
    const EquilibriumMatching base = solve(model, m);
    for (double k : {0.5, 2.0, 10.0}) {
        const EquilibriumMatching scaled = solve(model.scaled(k), m);
        CHECK((scaled.weights - base.weights).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(std::abs(scaled.social_gain - k * base.social_gain) <= 1e-8);
    }
}

TEST_CASE("marginal errors") {
    DiscreteMarket m = random_market(MarketKind::bipartite, 4, 1, 0, 3);
    m.f(0) = 0.0;
    CHECK_THROWS_AS(solve(AffinityModel::zero(1, 0), m), DataError);
}

TEST_CASE("non-convergence is reported") {
    const DiscreteMarket m = random_market(MarketKind::bipartite, 20, 2, 0, 4);
    AffinityModel model = random_model(2, 0, false, 4);
    model.A *= 5;
    SolveOptions opts;
    opts.max_iterations = 2;
    CHECK_THROWS_AS(solve(model, m, opts), ConvergenceError);
    opts.throw_on_failure = false;
    const EquilibriumMatching e = solve(model, m, opts);
    CHECK_FALSE(e.converged);
    CHECK(e.residual > 1e-10);
}

TEST_CASE("warm start reaches the same solution") {
    const DiscreteMarket m = random_market(MarketKind::unipartite, 40, 2, 1, 12);
    AffinityModel model = random_model(2, 1, true, 12);
    EquilibriumMatching warm;
    const EquilibriumMatching first = solve(model, m, {}, &warm);
    model.A(0, 0) += 0.01;
    const EquilibriumMatching cold = solve(model, m);
    const EquilibriumMatching hot = solve(model, m, {}, &warm);
    CHECK((cold.weights - hot.weights).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(first.converged);
}

TEST_CASE("small sigma stays finite") {
    const DiscreteMarket m = random_market(MarketKind::unipartite, 12, 2, 0, 13);
    const AffinityModel model = random_model(2, 0, true, 13);
    for (double sigma : {1e-2, 1e-3}) {
        AffinityModel s = model;
        s.sigma = sigma;
        const EquilibriumMatching e = solve(s, m);
        CHECK(e.weights.allFinite());
        CHECK(e.residual <= 1e-10);
    }
}

TEST_CASE("double and long double solvers agree") {
    const DiscreteMarket m = random_market(MarketKind::bipartite, 15, 2, 1, 14);
    const AffinityModel model = random_model(2, 1, false, 14);
    const EquilibriumMatching e = solve(model, m);
    using LD = long double;
    const kernels::MatrixX<LD> phi = surplus_matrix(model, m).values.cast<LD>();
    kernels::SinkhornState<LD> state;
    kernels::sinkhorn_sweeps<LD>(phi, m.f.cast<LD>(), m.g.cast<LD>(), 1.0L, false, 1e-15L, 100000, state);
    const kernels::MatrixX<LD> pi = kernels::gibbs(phi, state.a, state.b, 1.0L);
    CHECK((pi.cast<double>() - e.weights).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("social gain through the empirical coupling") {
    Matrix h(3, 1), p(3, 1);
    h << 1, 2, 3;
    p << 2, 3, 1;
    TraitSchema schema;
    schema.continuous = {"v"};
    const MarketSample s = make_sample(schema, MarketKind::unipartite, h, p, IndexMatrix(3, 0), IndexMatrix(3, 0));
    const EmpiricalCoupling c = symmetrize(s);
    CHECK(std::abs(social_gain(AffinityModel::zero(1, 0), c)) < 1e-14);
    const AffinityModel model{Matrix::Constant(1, 1, 0.7), Vector(0), 1.0};
    CHECK(social_gain(model, c) > 0);
    const SurplusMatrix full = surplus_matrix(model, c);
    CHECK(full.values.rows() == 6);
    CHECK(full.values == full.values.transpose());
}

}  // TEST_SUITE
