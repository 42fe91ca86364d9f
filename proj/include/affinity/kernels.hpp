#pragma once

// Scalar-generic numerical kernels for the entropic matching problem.
// Everything here works on plain Eigen dense types so it can be instantiated
// for double (the library default) or long double (used by tests as an
// extended-precision reference).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace affinity::kernels {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// log sum_j exp(m(i, j)) for every row i.
template <typename Derived>
VectorX<typename Derived::Scalar> row_log_sum_exp(const Eigen::MatrixBase<Derived>& m) {
    using Scalar = typename Derived::Scalar;
    const VectorX<Scalar> top = m.rowwise().maxCoeff();
    VectorX<Scalar> sums = (m.colwise() - top).array().exp().rowwise().sum().matrix();
    return top.array() + sums.array().log();
}

// log sum_i exp(m(i, j)) for every column j.
template <typename Derived>
VectorX<typename Derived::Scalar> col_log_sum_exp(const Eigen::MatrixBase<Derived>& m) {
    using Scalar = typename Derived::Scalar;
    const VectorX<Scalar> top = m.colwise().maxCoeff().transpose();
    VectorX<Scalar> sums =
        (m.rowwise() - top.transpose()).array().exp().colwise().sum().transpose().matrix();
    return top.array() + sums.array().log();
}

// Gibbs coupling exp((phi_ij - a_i - b_j) / sigma). The potentials are summed
// before subtraction so that a symmetric phi with a == b gives a bitwise
// symmetric result.
template <typename DerivedM, typename DerivedA, typename DerivedB>
MatrixX<typename DerivedM::Scalar> gibbs(const Eigen::MatrixBase<DerivedM>& phi,
                                         const Eigen::MatrixBase<DerivedA>& a,
                                         const Eigen::MatrixBase<DerivedB>& b,
                                         typename DerivedM::Scalar sigma) {
    using Scalar = typename DerivedM::Scalar;
    MatrixX<Scalar> out(phi.rows(), phi.cols());
    for (Eigen::Index j = 0; j < phi.cols(); ++j)
        for (Eigen::Index i = 0; i < phi.rows(); ++i)
            out(i, j) = std::exp((phi(i, j) - (a(i) + b(j))) / sigma);
    return out;
}

// Sum pi_ij log(pi_ij / (f_i g_j)), with 0 log 0 = 0.
template <typename DerivedP, typename DerivedF, typename DerivedG>
typename DerivedP::Scalar mutual_information(const Eigen::MatrixBase<DerivedP>& pi,
                                             const Eigen::MatrixBase<DerivedF>& f,
                                             const Eigen::MatrixBase<DerivedG>& g) {
    using Scalar = typename DerivedP::Scalar;
    Scalar total = 0;
    for (Eigen::Index j = 0; j < pi.cols(); ++j)
        for (Eigen::Index i = 0; i < pi.rows(); ++i) {
            const Scalar p = pi(i, j);
            if (p > 0) total += p * std::log(p / (f(i) * g(j)));
        }
    return total;
}

// Largest absolute row/column-sum deviation from the target marginals.
template <typename DerivedP, typename DerivedF, typename DerivedG>
typename DerivedP::Scalar marginal_residual(const Eigen::MatrixBase<DerivedP>& pi,
                                            const Eigen::MatrixBase<DerivedF>& f,
                                            const Eigen::MatrixBase<DerivedG>& g) {
    const auto rows = (pi.rowwise().sum() - f).cwiseAbs().maxCoeff();
    const auto cols = (pi.colwise().sum().transpose() - g).cwiseAbs().maxCoeff();
    return std::max(rows, cols);
}

template <typename Scalar>
struct SinkhornState {
    VectorX<Scalar> a;  // row potential, units of surplus
    VectorX<Scalar> b;  // column potential
    int iterations = 0;
    Scalar residual = std::numeric_limits<Scalar>::infinity();
    bool converged = false;
};

// Damped Newton on the convex dual
//   F(a, b) = <f, a> + <g, b> + sigma * sum_ij exp((phi_ij - a_i - b_j) / sigma),
// whose gradient is the marginal gap. Symmetric mode keeps a == b. Returns
// false if a step could not make progress (the caller falls back to
// Sinkhorn sweeps). Dense linear algebra, so only for modest supports.
template <typename Scalar>
bool newton_dual(const MatrixX<Scalar>& phi, const VectorX<Scalar>& f, const VectorX<Scalar>& g,
                 Scalar sigma, bool symmetric, Scalar tolerance, int max_steps,
                 SinkhornState<Scalar>& state) {
    const Eigen::Index n = phi.rows(), m = phi.cols();
    const auto dual = [&](const VectorX<Scalar>& a, const VectorX<Scalar>& b, MatrixX<Scalar>& pi) {
        pi = gibbs(phi, a, b, sigma);
        return f.dot(a) + g.dot(b) + sigma * pi.sum();
    };
    MatrixX<Scalar> pi;
    Scalar value = dual(state.a, state.b, pi);
    for (int step = 0; step < max_steps; ++step) {
        const VectorX<Scalar> r = pi.rowwise().sum();
        const VectorX<Scalar> c = pi.colwise().sum().transpose();
        state.residual = std::max((r - f).cwiseAbs().maxCoeff(), (c - g).cwiseAbs().maxCoeff());
        if (!std::isfinite(state.residual)) return false;
        if (state.residual < tolerance) {
            state.converged = true;
            return true;
        }
        ++state.iterations;
        VectorX<Scalar> da, db;
        Scalar slope;
        if (symmetric) {
            MatrixX<Scalar> h = pi;
            h.diagonal() += r;
            da = sigma * h.ldlt().solve(r - f);
            db = da;
            slope = Scalar(-2) * (r - f).dot(da);
        } else {
            MatrixX<Scalar> h(n + m, n + m);
            h.topLeftCorner(n, n) = r.asDiagonal();
            h.topRightCorner(n, m) = pi;
            h.bottomLeftCorner(m, n) = pi.transpose();
            h.bottomRightCorner(m, m) = c.asDiagonal();
            // (1, -1) spans the kernel; the right-hand side is orthogonal to it.
            h.diagonal().array() += Scalar(1e-13) * r.maxCoeff();
            VectorX<Scalar> rhs(n + m);
            rhs << r - f, c - g;
            const VectorX<Scalar> d = sigma * h.ldlt().solve(rhs);
            da = d.head(n);
            db = d.tail(m);
            slope = -rhs.dot(d);
        }
        if (!da.allFinite() || !db.allFinite()) return false;
        Scalar t = 1;
        bool accepted = false;
        MatrixX<Scalar> trial_pi;
        for (int ls = 0; ls < 40; ++ls, t /= 2) {
            const VectorX<Scalar> a = state.a + t * da;
            const VectorX<Scalar> b = symmetric ? a : VectorX<Scalar>(state.b + t * db);
            const Scalar trial = dual(a, b, trial_pi);
            if (!std::isfinite(trial)) continue;
            const Scalar trial_residual =
                std::max((trial_pi.rowwise().sum() - f).cwiseAbs().maxCoeff(),
                         (trial_pi.colwise().sum().transpose() - g).cwiseAbs().maxCoeff());
            if (trial <= value + Scalar(1e-4) * t * slope || trial_residual < Scalar(0.5) * state.residual) {
                state.a = a;
                state.b = b;
                value = trial;
                pi.swap(trial_pi);
                accepted = true;
                break;
            }
        }
        if (!accepted) return false;
    }
    return false;
}

// Entropic matching on a discrete support: finds potentials (a, b) such that
// pi = exp((phi - a - b) / sigma) has row sums f and column sums g.
//
// Iterates in the scaling domain with periodic absorption of the scalings
// into the log potentials, and falls back to pure log-domain sweeps if the
// kernel under- or overflows. With `symmetric` set, phi must be symmetric and
// f == g; the single potential is updated by geometric averaging so a == b
// throughout. `state` is used as a warm start when its sizes match.
template <typename Scalar>
void sinkhorn_sweeps(const MatrixX<Scalar>& phi, const VectorX<Scalar>& f, const VectorX<Scalar>& g,
              Scalar sigma, bool symmetric, Scalar tolerance, int max_iterations,
              SinkhornState<Scalar>& state) {
    const Eigen::Index n = phi.rows(), m = phi.cols();
    if (state.a.size() != n) state.a = VectorX<Scalar>::Zero(n);
    if (state.b.size() != m) state.b = VectorX<Scalar>::Zero(m);
    if (symmetric) state.b = state.a;
    const VectorX<Scalar> log_f = f.array().log();
    const VectorX<Scalar> log_g = g.array().log();
    const Scalar absorb_limit = Scalar(30);

    state.iterations = 0;
    state.converged = false;
    bool log_domain = false;

    while (state.iterations < max_iterations && !state.converged) {
        if (!log_domain) {
            MatrixX<Scalar> kernel = gibbs(phi, state.a, state.b, sigma);
            VectorX<Scalar> alpha = VectorX<Scalar>::Ones(n);
            VectorX<Scalar> beta = VectorX<Scalar>::Ones(m);
            bool absorb = false;
            while (state.iterations < max_iterations) {
                ++state.iterations;
                if (symmetric) {
                    const VectorX<Scalar> k_alpha = kernel * alpha;
                    const VectorX<Scalar> row_sums = alpha.cwiseProduct(k_alpha);
                    state.residual = (row_sums - f).cwiseAbs().maxCoeff();
                    if (!std::isfinite(state.residual) || (k_alpha.array() <= 0).any()) {
                        log_domain = true;
                        break;
                    }
                    if (state.residual < tolerance) {
                        state.converged = true;
                        break;
                    }
                    alpha = (alpha.array() * f.array() / k_alpha.array()).sqrt();
                    beta = alpha;
                } else {
                    const VectorX<Scalar> k_beta = kernel * beta;
                    if ((k_beta.array() <= 0).any()) {
                        log_domain = true;
                        break;
                    }
                    alpha = f.array() / k_beta.array();
                    const VectorX<Scalar> kt_alpha = kernel.transpose() * alpha;
                    const VectorX<Scalar> col_sums = beta.cwiseProduct(kt_alpha);
                    state.residual = (col_sums - g).cwiseAbs().maxCoeff();
                    if (!std::isfinite(state.residual) || (kt_alpha.array() <= 0).any()) {
                        log_domain = true;
                        break;
                    }
                    if (state.residual < tolerance) {
                        state.converged = true;
                        break;
                    }
                    beta = g.array() / kt_alpha.array();
                }
                const Scalar spread = std::max(alpha.array().log().abs().maxCoeff(),
                                               beta.array().log().abs().maxCoeff());
                if (!(spread < absorb_limit)) {
                    absorb = true;
                    break;
                }
            }
            if (!log_domain || absorb) {
                state.a -= sigma * alpha.array().log().matrix();
                state.b -= sigma * beta.array().log().matrix();
                if (symmetric) state.b = state.a;
            }
            if (absorb || log_domain) continue;
        } else {
            ++state.iterations;
            if (symmetric) {
                const VectorX<Scalar> lse =
                    row_log_sum_exp((phi.rowwise() - state.a.transpose()) / sigma);
                state.residual =
                    ((lse - state.a / sigma).array().exp() - f.array()).abs().maxCoeff();
                if (state.residual < tolerance) {
                    state.converged = true;
                    break;
                }
                const VectorX<Scalar> updated = sigma * (lse - log_f);
                state.a = (state.a + updated) / Scalar(2);
                state.b = state.a;
            } else {
                state.a = sigma * (row_log_sum_exp((phi.rowwise() - state.b.transpose()) / sigma) -
                                   log_f);
                const VectorX<Scalar> lse =
                    col_log_sum_exp((phi.colwise() - state.a) / sigma);
                state.residual =
                    ((lse - state.b / sigma).array().exp() - g.array()).abs().maxCoeff();
                if (state.residual < tolerance) {
                    state.converged = true;
                    break;
                }
                state.b = sigma * (lse - log_g);
            }
        }
    }
}

// Sinkhorn sweeps, finished by damped Newton when the support is small
// enough for a dense dual Hessian and the sweeps are slow to converge.
template <typename Scalar>
void sinkhorn(const MatrixX<Scalar>& phi, const VectorX<Scalar>& f, const VectorX<Scalar>& g,
              Scalar sigma, bool symmetric, Scalar tolerance, int max_iterations,
              SinkhornState<Scalar>& state) {
    constexpr Eigen::Index kNewtonLimit = 1500;
    constexpr int kSweepBudget = 200;
    const Eigen::Index unknowns = symmetric ? phi.rows() : phi.rows() + phi.cols();
    if (unknowns > kNewtonLimit || max_iterations <= kSweepBudget) {
        sinkhorn_sweeps(phi, f, g, sigma, symmetric, tolerance, max_iterations, state);
        return;
    }
    sinkhorn_sweeps(phi, f, g, sigma, symmetric, tolerance, kSweepBudget, state);
    int used = state.iterations;
    if (state.converged) return;
    if (!newton_dual(phi, f, g, sigma, symmetric, tolerance, 60, state)) {
        used = state.iterations;
        sinkhorn_sweeps(phi, f, g, sigma, symmetric, tolerance, std::max(1, max_iterations - used), state);
        state.iterations += used;
        return;
    }
}

}  // namespace affinity::kernels
