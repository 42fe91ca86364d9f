#pragma once

// Planted scenarios shared by the unit and acceptance tests.

#include "affinity/synthesis.hpp"

namespace fixtures {

using namespace affinity;

// K continuous standard-normal traits plus (optionally) a 3-label
// categorical with uniform probabilities.
inline ScenarioSpec planted(const Matrix& A, double lambda, Eigen::Index n_couples, std::uint64_t seed,
                            bool with_categorical = true, MarketKind kind = MarketKind::unipartite,
                            Eigen::Index n_support = 300) {
    ScenarioSpec spec;
    spec.name = "planted";
    spec.kind = kind;
    spec.n_support = n_support;
    spec.n_couples = n_couples;
    spec.seed = seed;
    const Eigen::Index K = A.rows();
    for (Eigen::Index k = 0; k < K; ++k) spec.traits.continuous.push_back("t" + std::to_string(k));
    spec.traits.mean = Vector::Zero(K);
    spec.traits.covariance = Matrix::Identity(K, K);
    Vector lam(0);
    if (with_categorical) {
        spec.traits.categorical.push_back({{"group", {"a", "b", "c"}}, {1.0 / 3, 1.0 / 3, 1.0 / 3}});
        lam = Vector::Constant(1, lambda);
    }
    spec.model = {A, lam, 1.0};
    return spec;
}

inline Matrix reference_A() {
    Matrix A(2, 2);
    A << 0.8, -0.1, -0.1, 0.3;
    return A;
}

}  // namespace fixtures
