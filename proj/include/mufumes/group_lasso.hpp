#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mufumes/errors.hpp"
#include "mufumes/model_core.hpp"

namespace mufumes::group_lasso {

/**
 * Weighted group lasso in its original form:
 *
 *     minimize  ||y - A beta||^2 + sum_g w_g ||beta_g||_2
 *
 * Note there is no 1/2 on the quadratic, so block g is zero exactly when
 * ||A_g^T r_g|| <= w_g / 2 with r_g the partial residual.
 */
struct Problem {
    MatrixXd design;
    VectorXd response;
    GroupPartition groups;
    VectorXd weights;
};

/// The same problem in cross-product form (G = A^T A, c = A^T y, yty = y^T y).
struct GramProblem {
    MatrixXd gram;
    VectorXd aty;
    double yty = 0.0;
    GroupPartition groups;
    VectorXd weights;
};

struct Solution {
    VectorXd coefficients;
    double objective = 0.0;
    int iterations = 0;
    double kkt_residual = 0.0;
    bool converged = false;
    std::vector<double> objective_trace;  // objective after each sweep
};

struct Options {
    double tol = 1e-10;
    int max_iter = 10000;
};

enum class BlockStatus { Active, Zero };

struct KktReport {
    double max_violation = 0.0;
    bool satisfied = true;  // max_violation <= tol
    std::vector<BlockStatus> status;
    std::vector<double> violation;
};

namespace detail {

inline void validate(const GroupPartition& groups, const VectorXd& weights, Index P) {
    if (groups.total() != P) throw InvalidDimension("groups do not partition the coefficient vector");
    if (weights.size() != groups.num_groups()) throw InvalidDimension("one weight per group required");
    for (Index g = 0; g < weights.size(); ++g) {
        if (!std::isfinite(weights(g)) || weights(g) < 0.0) throw NumericError("group weights must be finite and >= 0");
    }
}

/// Spectral data of one diagonal block, computed on first use.
struct BlockCache {
    enum class Kind { Unset, Scaled, Spectral } kind = Kind::Unset;
    double scale = 0.0;
    VectorXd eigenvalues;
    MatrixXd eigenvectors;
};

inline void prepare(BlockCache& cache, const Eigen::Ref<const MatrixXd>& H) {
    if (cache.kind != BlockCache::Kind::Unset) return;
    const Index n = H.rows();
    const double c = H.trace() / static_cast<double>(n);
    const double dev = (H - c * MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff();
    if (dev <= 1e-12 * std::max(std::abs(c), 1e-300)) {
        cache.kind = BlockCache::Kind::Scaled;
        cache.scale = c;
        return;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(H);
    if (es.info() != Eigen::Success) throw NumericError("eigendecomposition of a design block failed");
    cache.kind = BlockCache::Kind::Spectral;
    cache.eigenvalues = es.eigenvalues().cwiseMax(0.0);
    cache.eigenvectors = es.eigenvectors();
}

/**
 * argmin_beta  beta^T H beta - 2 z^T beta + w ||beta||  for a block with
 * ||z|| > w/2, w > 0. Stationarity gives beta_j = t c_j / (lambda_j t + w/2)
 * in the eigenbasis with t = ||beta||; t solves 1/sqrt(S(t)) = 1 where
 * S(t) = sum c_j^2 / (lambda_j t + w/2)^2, found by safeguarded Newton.
 */
inline VectorXd solve_block_spectral(const BlockCache& cache, const VectorXd& z, double w) {
    const VectorXd c = cache.eigenvectors.transpose() * z;
    const VectorXd& lam = cache.eigenvalues;
    const double h = 0.5 * w;
    const double cnorm = c.norm();
    const double lam_max = lam.maxCoeff();
    const double null_cut = 1e-13 * std::max(lam_max, 1e-300);

    double null_mass = 0.0;
    for (Index j = 0; j < lam.size(); ++j) {
        if (lam(j) <= null_cut) null_mass += c(j) * c(j);
    }
    if (null_mass >= h * h) throw NumericError("group lasso block is unbounded below (rank-deficient block)");

    auto g_and_slope = [&](double t) {
        double S = 0.0, dS = 0.0;
        for (Index j = 0; j < lam.size(); ++j) {
            const double den = lam(j) * t + h;
            const double cc = c(j) * c(j);
            S += cc / (den * den);
            dS -= 2.0 * cc * lam(j) / (den * den * den);
        }
        const double g = 1.0 / std::sqrt(S) - 1.0;
        const double dg = -0.5 * dS / (S * std::sqrt(S));
        return std::pair{g, dg};
    };

    double lo = (cnorm - h) / lam_max;
    const double lam_min = lam.minCoeff();
    double hi = lam_min > null_cut ? (cnorm - h) / lam_min : 2.0 * lo + 1.0;
    while (g_and_slope(hi).first < 0.0) {
        hi *= 2.0;
        if (!std::isfinite(hi)) throw NumericError("group lasso block root bracket diverged");
    }
    double t = lo;
    for (int it = 0; it < 200; ++it) {
        const auto [g, dg] = g_and_slope(t);
        if (g == 0.0) break;
        if (g < 0.0) lo = t; else hi = t;
        double next = dg > 0.0 ? t - g / dg : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - t) <= 1e-15 * std::max(t, 1e-300)) {
            t = next;
            break;
        }
        t = next;
    }
    VectorXd coef(c.size());
    for (Index j = 0; j < c.size(); ++j) coef(j) = t * c(j) / (lam(j) * t + h);
    return cache.eigenvectors * coef;
}

/// Minimum-norm least squares for an unpenalized block.
inline VectorXd solve_block_unpenalized(const BlockCache& cache, const VectorXd& z) {
    if (cache.kind == BlockCache::Kind::Scaled) {
        return cache.scale > 0.0 ? VectorXd(z / cache.scale) : VectorXd(VectorXd::Zero(z.size()));
    }
    const VectorXd c = cache.eigenvectors.transpose() * z;
    const double cut = 1e-13 * std::max(cache.eigenvalues.maxCoeff(), 1e-300);
    VectorXd coef(c.size());
    for (Index j = 0; j < c.size(); ++j) coef(j) = cache.eigenvalues(j) > cut ? c(j) / cache.eigenvalues(j) : 0.0;
    return cache.eigenvectors * coef;
}

inline double penalty(const VectorXd& beta, const GroupPartition& groups, const VectorXd& weights) {
    double pen = 0.0;
    for (Index g = 0; g < groups.num_groups(); ++g) {
        if (weights(g) > 0.0) pen += weights(g) * beta.segment(groups.offsets[g], groups.sizes[g]).norm();
    }
    return pen;
}

}  // namespace detail

[[nodiscard]] inline double objective(const GramProblem& prob, const VectorXd& beta) {
    return prob.yty - 2.0 * beta.dot(prob.aty) + beta.dot(prob.gram * beta) +
           detail::penalty(beta, prob.groups, prob.weights);
}

[[nodiscard]] inline double objective(const Problem& prob, const VectorXd& beta) {
    return (prob.response - prob.design * beta).squaredNorm() + detail::penalty(beta, prob.groups, prob.weights);
}

/**
 * KKT residual in cross-product form. Active blocks: ||2(G beta - c)_g + w_g beta_g/||beta_g|| ||;
 * zero blocks: excess of ||2(c - G beta)_g|| over w_g.
 */
[[nodiscard]] inline KktReport kkt_check(const GramProblem& prob, const VectorXd& beta, double tol = 0.0) {
    detail::validate(prob.groups, prob.weights, prob.gram.rows());
    if (beta.size() != prob.gram.rows()) throw InvalidDimension("solution length mismatch");
    const VectorXd grad = 2.0 * (prob.gram * beta - prob.aty);
    KktReport report;
    for (Index g = 0; g < prob.groups.num_groups(); ++g) {
        const auto off = prob.groups.offsets[g];
        const auto len = prob.groups.sizes[g];
        const VectorXd bg = beta.segment(off, len);
        const VectorXd gg = grad.segment(off, len);
        const double bn = bg.norm();
        double v;
        if (bn > 0.0) {
            v = (gg + prob.weights(g) * bg / bn).norm();
            report.status.push_back(BlockStatus::Active);
        } else {
            v = std::max(0.0, gg.norm() - prob.weights(g));
            report.status.push_back(BlockStatus::Zero);
        }
        report.violation.push_back(v);
        report.max_violation = std::max(report.max_violation, v);
    }
    report.satisfied = report.max_violation <= tol;
    return report;
}

[[nodiscard]] inline GramProblem to_gram(const Problem& prob) {
    if (prob.design.rows() != prob.response.size()) throw InvalidDimension("design rows must match response length");
    GramProblem g;
    g.gram = prob.design.transpose() * prob.design;
    g.aty = prob.design.transpose() * prob.response;
    g.yty = prob.response.squaredNorm();
    g.groups = prob.groups;
    g.weights = prob.weights;
    return g;
}

[[nodiscard]] inline KktReport kkt_check(const Problem& prob, const VectorXd& beta, double tol = 0.0) {
    return kkt_check(to_gram(prob), beta, tol);
}

/**
 * Block coordinate descent in ascending group order. Each block is minimized
 * exactly: closed-form soft thresholding when the block Gram matrix is a
 * multiple of the identity, a spectral secular-equation solve otherwise.
 * Sweeps stop when the largest coefficient change falls below
 * tol * max|beta|; hitting max_iter returns the last iterate with
 * converged = false.
 */
[[nodiscard]] inline Solution solve(const GramProblem& prob, const std::optional<VectorXd>& init = std::nullopt,
                                    const Options& opts = {}) {
    const Index P = prob.gram.rows();
    if (prob.gram.cols() != P || prob.aty.size() != P) throw InvalidDimension("gram/aty shape mismatch");
    detail::validate(prob.groups, prob.weights, P);
    if (!(opts.tol > 0.0)) throw ParameterError("solver tolerance must be positive");
    if (!prob.gram.allFinite() || !prob.aty.allFinite() || !std::isfinite(prob.yty)) {
        throw NumericError("non-finite group lasso input");
    }

    VectorXd beta = init ? *init : VectorXd::Zero(P);
    if (beta.size() != P) throw InvalidDimension("initial coefficient length mismatch");
    if (!beta.allFinite()) throw NumericError("non-finite initial coefficients");

    const Index G = prob.groups.num_groups();
    std::vector<detail::BlockCache> caches(static_cast<std::size_t>(G));
    VectorXd gb = prob.gram * beta;

    Solution sol;
    for (int sweep = 1; sweep <= opts.max_iter; ++sweep) {
        double max_change = 0.0;
        for (Index g = 0; g < G; ++g) {
            const Index off = prob.groups.offsets[g];
            const Index len = prob.groups.sizes[g];
            const auto H = prob.gram.block(off, off, len, len);
            const VectorXd old = beta.segment(off, len);
            const VectorXd z = prob.aty.segment(off, len) - gb.segment(off, len) + H * old;
            const double w = prob.weights(g);
            VectorXd next;
            auto& cache = caches[static_cast<std::size_t>(g)];
            if (w > 0.0 && z.norm() <= 0.5 * w) {
                next = VectorXd::Zero(len);
            } else {
                detail::prepare(cache, H);
                if (w == 0.0) {
                    next = detail::solve_block_unpenalized(cache, z);
                } else if (cache.kind == detail::BlockCache::Kind::Scaled) {
                    next = cache.scale > 0.0 ? VectorXd((1.0 - 0.5 * w / z.norm()) / cache.scale * z)
                                             : VectorXd(VectorXd::Zero(len));
                } else {
                    next = detail::solve_block_spectral(cache, z, w);
                }
            }
            const VectorXd delta = next - old;
            const double change = delta.cwiseAbs().maxCoeff();
            if (change > 0.0) {
                gb.noalias() += prob.gram.middleCols(off, len) * delta;
                beta.segment(off, len) = next;
            }
            max_change = std::max(max_change, change);
        }
        sol.iterations = sweep;
        sol.objective_trace.push_back(prob.yty - 2.0 * beta.dot(prob.aty) + beta.dot(gb) +
                                      detail::penalty(beta, prob.groups, prob.weights));
        const double scale = beta.size() > 0 ? beta.cwiseAbs().maxCoeff() : 0.0;
        if (max_change == 0.0 || max_change <= opts.tol * scale) {
            sol.converged = true;
            break;
        }
    }
    if (!beta.allFinite()) throw NumericError("group lasso produced non-finite coefficients");
    sol.coefficients = std::move(beta);
    sol.objective = sol.objective_trace.empty() ? objective(prob, sol.coefficients) : sol.objective_trace.back();
    sol.kkt_residual = kkt_check(prob, sol.coefficients).max_violation;
    return sol;
}

[[nodiscard]] inline Solution solve(const Problem& prob, const std::optional<VectorXd>& init = std::nullopt,
                                    const Options& opts = {}) {
    if (!prob.design.allFinite() || !prob.response.allFinite()) throw NumericError("non-finite group lasso input");
    Solution sol = solve(to_gram(prob), init, opts);
    sol.objective = objective(prob, sol.coefficients);
    return sol;
}

}  // namespace mufumes::group_lasso
