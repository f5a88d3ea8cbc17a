#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mufumes/errors.hpp"
#include "mufumes/group_lasso.hpp"
#include "mufumes/model_core.hpp"
#include "mufumes/parameter_state.hpp"
#include "mufumes/ssgl_prior.hpp"

namespace mufumes {

/// Moments: diagonal L0 from moment estimates of the random-coefficient variances.
/// Identity: L0 = 0.1 I, sigma^2 from the fixed-only ridge fit.
enum class InitStrategy { Moments, Identity };

struct EcmConfig {
    SsglConfig prior;
    InitStrategy init = InitStrategy::Moments;
    double eps1 = 1e-5;
    double eps2 = 1e-5;
    int max_iter = 500;
    double inner_tol = 1e-7;
    int inner_max_iter = 10000;
    double sigma2_floor = 1e-10;

    void validate() const {
        prior.validate();
        if (!(eps1 > 0.0) || !(eps2 > 0.0)) throw ParameterError("convergence tolerances must be positive");
        if (max_iter < 1) throw ParameterError("max_iter must be >= 1");
        if (!(inner_tol > 0.0) || inner_max_iter < 1) throw ParameterError("invalid inner solver settings");
        if (!(sigma2_floor > 0.0)) throw ParameterError("sigma2_floor must be positive");
    }
};

/// Conditional expectations of the slab indicators and the resulting adaptive rates.
struct EStepState {
    VectorXd p_fixed;
    VectorXd p_random;
    VectorXd lambda_star;
    VectorXd nu_star;
};

struct CmStep1Result {
    double theta = 0.5;
    double theta_star = 0.5;
    std::vector<VectorXd> b;
};

struct CmStep2Result {
    VectorXd gamma;
    VectorXd ltilde;
    double sigma2 = 1.0;
    bool inner_converged = true;
    int inner_iterations = 0;
};

struct FitResult {
    ParameterState phi;
    std::vector<Index> selected_fixed;   // 0-based covariate indices
    std::vector<Index> selected_random;  // 0-based covariate indices
    std::vector<double> log_posterior_trace;  // entry 0 is the initial state
    int iterations = 0;
    bool converged = false;
    int inner_nonconverged = 0;
    double diff1 = 0.0;
    double diff2 = 0.0;
    MatrixXd D_hat;
    SsglConfig prior;
    std::vector<BSplineBasis> fixed_bases;
    std::vector<BSplineBasis> random_bases;
    CholeskyLayout layout;
    GroupPartition fixed_groups;

    /// Column k holds beta_k evaluated on `grid`.
    [[nodiscard]] MatrixXd fixed_curves(std::span<const double> grid) const {
        MatrixXd out(static_cast<Index>(grid.size()), static_cast<Index>(fixed_bases.size()));
        for (std::size_t k = 0; k < fixed_bases.size(); ++k) {
            const auto K = static_cast<Index>(k);
            out.col(K) = fixed_bases[k].evaluate_matrix(grid) *
                         phi.gamma.segment(fixed_groups.offsets[K], fixed_groups.sizes[K]);
        }
        return out;
    }

    /// Column r holds u_ir evaluated on `grid` for cluster i, using eta_i = L b_i.
    [[nodiscard]] MatrixXd random_curves(Index cluster, std::span<const double> grid) const {
        const VectorXd eta = expand_L(phi.ltilde, layout) * phi.b.at(static_cast<std::size_t>(cluster));
        MatrixXd out(static_cast<Index>(grid.size()), static_cast<Index>(random_bases.size()));
        for (std::size_t r = 0; r < random_bases.size(); ++r) {
            const auto R = static_cast<Index>(r);
            out.col(R) = random_bases[r].evaluate_matrix(grid) * eta.segment(layout.row_offset(R), layout.block_rows(R));
        }
        return out;
    }
};

namespace detail {

inline double relative_change(const VectorXd& next, const VectorXd& prev) {
    const double num = (next - prev).squaredNorm();
    const double den = prev.squaredNorm();
    return den > 0.0 ? num / den : num;
}

/// Cross-product form of the Cholesky-entry regression for fixed b.
inline group_lasso::GramProblem ltilde_problem(const ModelData& data, const std::vector<VectorXd>& b,
                                               const VectorXd& gamma) {
    const CholeskyLayout& layout = data.layout;
    const Index K = layout.dim();
    const Index P = layout.packed_size();
    group_lasso::GramProblem prob;
    prob.gram = MatrixXd::Zero(P, P);
    prob.aty = VectorXd::Zero(P);
    prob.yty = 0.0;

    std::vector<MatrixXd> outer;
    outer.reserve(data.clusters.size());
    for (std::size_t i = 0; i < data.clusters.size(); ++i) {
        const auto& c = data.clusters[i];
        const VectorXd resid_proj = c.zty - c.ztx * gamma;
        for (Index a = 0; a < K; ++a) {
            prob.aty.segment(CholeskyLayout::packed_index(a, 0), a + 1) += resid_proj(a) * b[i].head(a + 1);
        }
        prob.yty += (c.y - c.x * gamma).squaredNorm();
        outer.push_back(b[i] * b[i].transpose());
    }
    for (Index a = 0; a < K; ++a) {
        const Index row0 = CholeskyLayout::packed_index(a, 0);
        for (Index a2 = 0; a2 <= a; ++a2) {
            const Index col0 = CholeskyLayout::packed_index(a2, 0);
            auto blk = prob.gram.block(row0, col0, a + 1, a2 + 1);
            for (std::size_t i = 0; i < data.clusters.size(); ++i) {
                const double w = data.clusters[i].ztz(a, a2);
                if (w != 0.0) blk.noalias() += w * outer[i].topLeftCorner(a + 1, a2 + 1);
            }
            if (a2 != a) prob.gram.block(col0, row0, a2 + 1, a + 1) = blk.transpose();
        }
    }
    prob.groups = layout.partition();
    return prob;
}

}  // namespace detail

/**
 * Starting state. gamma is the ridge fit of the fixed-only model (ridge
 * 1e-4 * tr(X^T X) / dim), theta = theta* = 0.5.
 *
 * Identity: L = 0.1 I, b = 0, sigma^2 = mean squared ridge residual.
 * Moments: eta_i from a per-cluster ridge regression of the ridge residuals
 * on Z_i; sigma^2 is the within-cluster residual variance; each variance of
 * the random coefficients is estimated by the mean of eta_ia^2 minus its
 * noise part, lowered by two standard errors and clipped at a tiny floor;
 * L is the diagonal of their square roots and b_i the conditional mode.
 * Starting L at the scale of the data matters because L = 0 (hence b = 0)
 * is a fixed point, and starting unsupported blocks near zero lets the spike
 * keep them there.
 */
[[nodiscard]] inline ParameterState initialize(const ModelData& data, const EcmConfig& cfg) {
    ParameterState phi;
    const Index P = data.fixed_dim();
    const Index K = data.random_dim();
    const double ridge = 1e-4 * data.xtx.trace() / static_cast<double>(P);
    MatrixXd A = data.xtx;
    A.diagonal().array() += ridge;
    phi.gamma = ridge > 0.0 ? VectorXd(A.ldlt().solve(data.xty)) : VectorXd(VectorXd::Zero(P));
    if (!phi.gamma.allFinite()) phi.gamma = VectorXd::Zero(P);
    phi.theta = 0.5;
    phi.theta_star = 0.5;
    phi.ltilde = VectorXd::Zero(data.layout.packed_size());
    phi.b.assign(data.clusters.size(), VectorXd::Zero(K));

    double rss = 0.0;
    for (const auto& c : data.clusters) rss += (c.y - c.x * phi.gamma).squaredNorm();

    if (cfg.init == InitStrategy::Identity) {
        phi.sigma2 = std::max(rss / static_cast<double>(data.num_obs), cfg.sigma2_floor);
        for (Index a = 0; a < K; ++a) phi.ltilde(CholeskyLayout::packed_index(a, a)) = 0.1;
        return phi;
    }

    // per-cluster ridge estimates eta_i and the diagonal of their noise covariance / sigma^2
    const auto n = static_cast<Index>(data.clusters.size());
    MatrixXd eta_sq(n, K), noise_diag(n, K);
    double within = 0.0;
    for (Index i = 0; i < n; ++i) {
        const auto& c = data.clusters[static_cast<std::size_t>(i)];
        const VectorXd r = c.y - c.x * phi.gamma;
        MatrixXd M = c.ztz;
        const double rho = std::max(1e-4 * M.trace() / static_cast<double>(K), 1e-12);
        M.diagonal().array() += rho;
        Eigen::LDLT<MatrixXd> ldlt(M);
        VectorXd e = ldlt.solve(c.z.transpose() * r);
        if (!e.allFinite()) e = VectorXd::Zero(K);
        within += (r - c.z * e).squaredNorm();
        eta_sq.row(i) = e.array().square().matrix().transpose();
        const MatrixXd Minv_ztz = ldlt.solve(c.ztz);
        noise_diag.row(i) = ldlt.solve(Minv_ztz.transpose()).diagonal().transpose();
    }
    const double dof = static_cast<double>(data.num_obs) - static_cast<double>(n * K);
    phi.sigma2 = std::max(within / std::max(dof, 1.0), cfg.sigma2_floor);

    // moment estimate of each variance, kept only where it clears twice its standard error
    const MatrixXd v = eta_sq - phi.sigma2 * noise_diag;
    const VectorXd mean = v.colwise().mean().transpose();
    VectorXd var0(K);
    for (Index a = 0; a < K; ++a) {
        const double se = n > 1 ? std::sqrt((v.col(a).array() - mean(a)).square().sum() /
                                            static_cast<double>((n - 1) * n))
                                : 0.0;
        var0(a) = std::max(mean(a) - 2.0 * se, 0.0);
    }
    const double floor = std::max(1e-8 * var0.maxCoeff(), 1e-12);
    const VectorXd sd = var0.cwiseMax(floor).cwiseSqrt();
    const MatrixXd L = sd.asDiagonal();
    for (Index a = 0; a < K; ++a) phi.ltilde(CholeskyLayout::packed_index(a, a)) = sd(a);
    for (std::size_t i = 0; i < data.clusters.size(); ++i) {
        const auto& c = data.clusters[i];
        MatrixXd A = L.transpose() * c.ztz * L;
        A.diagonal().array() += phi.sigma2;
        phi.b[i] = A.llt().solve(L.transpose() * (c.zty - c.ztx * phi.gamma));
    }
    return phi;
}

[[nodiscard]] inline EStepState e_step(const ParameterState& phi, const ModelData& data, const SsglConfig& cfg) {
    const Index p = data.p();
    const Index q = data.q();
    EStepState es;
    es.p_fixed.resize(p);
    es.p_random.resize(q);
    es.lambda_star.resize(p);
    es.nu_star.resize(q);
    for (Index k = 0; k < p; ++k) {
        es.p_fixed(k) = slab_prob_fixed(phi.gamma.segment(data.fixed_groups.offsets[k], data.fixed_groups.sizes[k]),
                                        phi.theta, cfg);
    }
    es.lambda_star = adaptive_weights(es.p_fixed, cfg.lambda0, cfg.lambda1);
    for (Index r = 0; r < q; ++r) {
        const double spike = cfg.random_spike(data.layout, r);
        const auto seg = phi.ltilde.segment(data.layout.block_offset(r), data.layout.block_size(r));
        es.p_random(r) = slab_probability(seg.norm(), seg.size(), phi.theta_star, cfg.nu1, spike);
        es.nu_star(r) = adaptive_weights(es.p_random.segment(r, 1), spike, cfg.nu1)(0);
    }
    return es;
}

/// Closed-form updates of theta, theta* and every b_i at the current (gamma, L, sigma^2).
[[nodiscard]] inline CmStep1Result cm_step1(const ParameterState& phi, const EStepState& es, const ModelData& data,
                                            const EcmConfig& cfg) {
    const auto p = static_cast<double>(data.p());
    const auto q = static_cast<double>(data.q());
    const SsglConfig& pr = cfg.prior;
    const double den_fixed = pr.a0 + pr.beta_b0(data.p()) + p - 2.0;
    const double den_random = pr.a1 + pr.beta_b1(data.q()) + q - 2.0;
    if (!(den_fixed > 0.0) || !(den_random > 0.0)) throw ParameterError("beta hyperparameters give no interior mode");

    CmStep1Result out;
    out.theta = clamp_probability((pr.a0 - 1.0 + es.p_fixed.sum()) / den_fixed);
    out.theta_star = clamp_probability((pr.a1 - 1.0 + es.p_random.sum()) / den_random);

    const MatrixXd L = expand_L(phi.ltilde, data.layout);
    const Index K = data.random_dim();
    const double s2 = std::max(phi.sigma2, cfg.sigma2_floor);
    out.b.reserve(data.clusters.size());
    for (const auto& c : data.clusters) {
        MatrixXd M = L.transpose() * c.ztz * L;
        M.diagonal().array() += s2;
        const VectorXd rhs = L.transpose() * (c.zty - c.ztx * phi.gamma);
        Eigen::LLT<MatrixXd> llt(M);
        if (llt.info() != Eigen::Success) throw NumericError("random coefficient system is not positive definite");
        VectorXd bi = llt.solve(rhs);
        if (bi.size() != K || !bi.allFinite()) throw NumericError("non-finite random coefficient update");
        out.b.push_back(std::move(bi));
    }
    return out;
}

/**
 * Group-lasso update of gamma (at the old L), then of the stacked L (at the
 * new gamma), then closed-form sigma^2. Penalty weights are 2 * rate * sigma^2
 * with sigma^2 from the previous iteration.
 */
[[nodiscard]] inline CmStep2Result cm_step2(const ParameterState& phi, const EStepState& es, const ModelData& data,
                                            const EcmConfig& cfg) {
    const group_lasso::Options opts{cfg.inner_tol, cfg.inner_max_iter};
    const double s2 = phi.sigma2;
    const MatrixXd L_old = expand_L(phi.ltilde, data.layout);

    group_lasso::GramProblem fixed;
    fixed.gram = data.xtx;
    fixed.aty = data.xty;
    fixed.yty = 0.0;
    for (std::size_t i = 0; i < data.clusters.size(); ++i) {
        const auto& c = data.clusters[i];
        const VectorXd eta = L_old * phi.b[i];
        fixed.aty.noalias() -= c.ztx.transpose() * eta;
        fixed.yty += (c.y - c.z * eta).squaredNorm();
    }
    fixed.groups = data.fixed_groups;
    fixed.weights = 2.0 * s2 * es.lambda_star;
    auto gamma_sol = group_lasso::solve(fixed, phi.gamma, opts);

    auto random = detail::ltilde_problem(data, phi.b, gamma_sol.coefficients);
    random.weights = 2.0 * s2 * es.nu_star;
    auto ltilde_sol = group_lasso::solve(random, phi.ltilde, opts);

    CmStep2Result out;
    out.gamma = std::move(gamma_sol.coefficients);
    out.ltilde = std::move(ltilde_sol.coefficients);
    out.inner_converged = gamma_sol.converged && ltilde_sol.converged;
    out.inner_iterations = gamma_sol.iterations + ltilde_sol.iterations;
    const double rss = residual_sum_of_squares(data, out.gamma, expand_L(out.ltilde, data.layout), phi.b);
    out.sigma2 = std::max((rss + cfg.prior.d0) / (static_cast<double>(data.num_obs) + cfg.prior.c0 + 2.0),
                          cfg.sigma2_floor);
    return out;
}

[[nodiscard]] inline std::vector<Index> nonzero_groups(const VectorXd& v, const std::vector<Index>& offsets,
                                                       const std::vector<Index>& sizes) {
    std::vector<Index> out;
    for (std::size_t g = 0; g < offsets.size(); ++g) {
        if ((v.segment(offsets[g], sizes[g]).array() != 0.0).any()) out.push_back(static_cast<Index>(g));
    }
    return out;
}

/// Selection sets, D = L L^T and basis metadata for a final state.
[[nodiscard]] inline FitResult make_fit_result(const ParameterState& phi, const ModelData& data, const SsglConfig& prior) {
    FitResult fit;
    fit.phi = phi;
    fit.prior = prior;
    fit.fixed_bases = data.fixed_bases;
    fit.random_bases = data.random_bases;
    fit.layout = data.layout;
    fit.fixed_groups = data.fixed_groups;
    fit.selected_fixed = nonzero_groups(phi.gamma, data.fixed_groups.offsets, data.fixed_groups.sizes);
    std::vector<Index> offs, sizes;
    for (Index r = 0; r < data.q(); ++r) {
        offs.push_back(data.layout.block_offset(r));
        sizes.push_back(data.layout.block_size(r));
    }
    fit.selected_random = nonzero_groups(phi.ltilde, offs, sizes);
    const MatrixXd L = expand_L(phi.ltilde, data.layout);
    fit.D_hat = L * L.transpose();
    return fit;
}

/**
 * Runs E-step, CM-step 1 and CM-step 2 until both relative squared changes
 * of gamma and the stacked L fall below their tolerances or max_iter is hit.
 */
[[nodiscard]] inline FitResult run_ecm(const ModelData& data, const EcmConfig& cfg,
                                       const std::optional<ParameterState>& init = std::nullopt) {
    cfg.validate();
    ParameterState phi = init ? *init : initialize(data, cfg);
    check_state_shape(phi, data);
    phi.theta = clamp_probability(phi.theta);
    phi.theta_star = clamp_probability(phi.theta_star);
    phi.sigma2 = std::max(phi.sigma2, cfg.sigma2_floor);

    std::vector<double> trace;
    trace.push_back(log_posterior(phi, data, cfg.prior));

    int iterations = 0;
    int inner_failures = 0;
    bool converged = false;
    double diff1 = 0.0, diff2 = 0.0;
    while (iterations < cfg.max_iter) {
        ++iterations;
        const EStepState es = e_step(phi, data, cfg.prior);
        CmStep1Result s1 = cm_step1(phi, es, data, cfg);
        ParameterState next = phi;
        next.theta = s1.theta;
        next.theta_star = s1.theta_star;
        next.b = std::move(s1.b);
        CmStep2Result s2 = cm_step2(next, es, data, cfg);
        if (!s2.inner_converged) ++inner_failures;
        diff1 = detail::relative_change(s2.gamma, phi.gamma);
        diff2 = detail::relative_change(s2.ltilde, phi.ltilde);
        next.gamma = std::move(s2.gamma);
        next.ltilde = std::move(s2.ltilde);
        next.sigma2 = s2.sigma2;
        const double lp = log_posterior(next, data, cfg.prior);
        if (!std::isfinite(lp)) {
            std::ostringstream msg;
            msg << "log posterior became non-finite at iteration " << iterations << " (sigma2=" << next.sigma2
                << ", theta=" << next.theta << ", theta*=" << next.theta_star << ")";
            throw NumericError(msg.str());
        }
        trace.push_back(lp);
        phi = std::move(next);
        if (diff1 <= cfg.eps1 && diff2 <= cfg.eps2) {
            converged = true;
            break;
        }
    }

    FitResult fit = make_fit_result(phi, data, cfg.prior);
    fit.log_posterior_trace = std::move(trace);
    fit.iterations = iterations;
    fit.converged = converged;
    fit.inner_nonconverged = inner_failures;
    fit.diff1 = diff1;
    fit.diff2 = diff2;
    return fit;
}

}  // namespace mufumes
