#include "affinity/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace affinity {

namespace {

// Flips row p of `u` (and of `v`, to keep the product unchanged) so the
// largest-magnitude entry of u's row is positive.
void fix_signs(Matrix& u, Matrix* v) {
    for (Eigen::Index p = 0; p < u.rows(); ++p) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index k = 0; k < u.cols(); ++k) {
            // Ties within 1e-12 go to the earliest coordinate.
            if (std::abs(u(p, k)) > best + 1e-12) {
                best = std::abs(u(p, k));
                arg = k;
            }
        }
        if (u(p, arg) < 0) {
            u.row(p) *= -1.0;
            if (v) v->row(p) *= -1.0;
        }
    }
}

void fill_shares(SaliencyDecomposition& d, const AffinityModel& model,
                 const EmpiricalCoupling& coupling) {
    const Matrix index_moments = d.loadings * coupling.cross_moments * d.right_loadings.transpose();
    d.index_shares = d.values.cwiseProduct(index_moments.diagonal());
    d.categorical_shares = model.lambda.cwiseProduct(coupling.same_category_freq);
}

}  // namespace

std::vector<Eigen::Index> SaliencyDecomposition::report_order() const {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(index_shares(a)) > std::abs(index_shares(b));
    });
    return order;
}

SaliencyDecomposition decompose(const AffinityModel& model, const EmpiricalCoupling& coupling) {
    const Matrix& A = model.A;
    if (A.rows() != coupling.cross_moments.rows())
        throw DimensionError("model and coupling trait counts differ");
    if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()))
        throw DataError("saliency decomposition needs a symmetric affinity block; use the SVD variant");
    const Matrix sym = 0.5 * (A + A.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
    if (solver.info() != Eigen::Success) throw Error("eigendecomposition failed");

    const Eigen::Index K = A.rows();
    SaliencyDecomposition d;
    d.values.resize(K);
    d.loadings.resize(K, K);
    // Eigen returns ascending eigenvalues with eigenvectors as columns.
    for (Eigen::Index p = 0; p < K; ++p) {
        d.values(p) = solver.eigenvalues()(K - 1 - p);
        d.loadings.row(p) = solver.eigenvectors().col(K - 1 - p).transpose();
    }
    fix_signs(d.loadings, nullptr);
    d.right_loadings = d.loadings;
    fill_shares(d, model, coupling);
    return d;
}

SaliencyDecomposition decompose(const NormalizedModel& model, const EmpiricalCoupling& coupling) {
    return decompose(model.model, coupling);
}

SaliencyDecomposition decompose_bipartite(const AffinityModel& model,
                                          const EmpiricalCoupling& coupling) {
    if (model.A.rows() != coupling.cross_moments.rows())
        throw DimensionError("model and coupling trait counts differ");
    Eigen::JacobiSVD<Matrix> svd(model.A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    SaliencyDecomposition d;
    d.bipartite = true;
    d.values = svd.singularValues();
    // A = P S Q'  =>  U = P', V = Q'.
    d.loadings = svd.matrixU().transpose();
    d.right_loadings = svd.matrixV().transpose();
    fix_signs(d.loadings, &d.right_loadings);
    fill_shares(d, model, coupling);
    return d;
}

SaliencyDecomposition decompose_bipartite(const FitResult& fit, const EmpiricalCoupling& coupling) {
    return decompose_bipartite(fit.model, coupling);
}

Matrix reconstruct(const SaliencyDecomposition& d) {
    return d.loadings.transpose() * d.values.asDiagonal() * d.right_loadings;
}

}  // namespace affinity
