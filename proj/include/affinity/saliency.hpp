#pragma once

#include "affinity/estimation.hpp"

#include <vector>

namespace affinity {

// Orthogonal sorting indices of the continuous affinity block.
//
// Symmetric case: A = U' diag(values) U, indices x~ = U x and y~ = U y.
// Bipartite case: A = U' diag(values) V (singular value decomposition),
// indices x~ = U x and y~ = V y; `right_loadings` holds V.
//
// Rows of the loading matrices are indices. Each row of U is signed so that
// its largest-magnitude entry is positive (first entry wins a tie).
struct SaliencyDecomposition {
    Matrix loadings;        // U, K x K
    Matrix right_loadings;  // V (equal to U in the symmetric case)
    Vector values;          // non-increasing
    Vector index_shares;    // values(p) * E_data[x~^p y~^p]
    Vector categorical_shares;  // lambda_c * Pr_data(same category c)
    bool bipartite = false;

    double total_share() const { return index_shares.sum() + categorical_shares.sum(); }
    // Index positions ordered by decreasing |share|, the report order.
    std::vector<Eigen::Index> report_order() const;
};

// Eigendecomposition of the normalized model's continuous block. Throws
// DataError if the block is not symmetric.
SaliencyDecomposition decompose(const NormalizedModel& model, const EmpiricalCoupling& coupling);
SaliencyDecomposition decompose(const AffinityModel& model, const EmpiricalCoupling& coupling);

// Singular value decomposition for an unconstrained (bipartite) fit.
SaliencyDecomposition decompose_bipartite(const FitResult& fit, const EmpiricalCoupling& coupling);
SaliencyDecomposition decompose_bipartite(const AffinityModel& model,
                                          const EmpiricalCoupling& coupling);

// U' diag(values) V.
Matrix reconstruct(const SaliencyDecomposition& decomposition);

}  // namespace affinity
