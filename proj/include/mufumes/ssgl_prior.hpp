#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mufumes/errors.hpp"
#include "mufumes/model_core.hpp"
#include "mufumes/parameter_state.hpp"

namespace mufumes {

/**
 * Spike-and-slab group-lasso hyperparameters.
 *
 * lambda0/lambda1 are the spike/slab rates of the fixed-effect groups,
 * nu0/nu1 those of the Cholesky row blocks. When scale_random_spike is set,
 * the random-effect spike of block r becomes nu0 * sqrt(N_r); the same
 * effective spike feeds the E-step, the penalty weights and the log posterior.
 */
struct SsglConfig {
    double lambda0 = 20.0;
    double lambda1 = 1.0;
    double nu0 = 20.0;
    double nu1 = 1.0;
    double a0 = 1.0;
    std::optional<double> b0;  // unset means p
    double a1 = 1.0;
    std::optional<double> b1;  // unset means q
    double c0 = 1.0;
    double d0 = 1.0;
    bool scale_random_spike = true;

    /// Multiplicity-adjusting defaults a0 = 1, b0 = p, a1 = 1, b1 = q.
    static SsglConfig defaults(Index p, Index q, double lambda0 = 20.0, double nu0 = 20.0) {
        SsglConfig cfg;
        cfg.lambda0 = lambda0;
        cfg.nu0 = nu0;
        cfg.b0 = static_cast<double>(p);
        cfg.b1 = static_cast<double>(q);
        return cfg;
    }

    [[nodiscard]] double beta_b0(Index p) const { return b0.value_or(static_cast<double>(p)); }
    [[nodiscard]] double beta_b1(Index q) const { return b1.value_or(static_cast<double>(q)); }

    void validate() const {
        auto positive = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw ParameterError(std::string(name) + " must be positive");
        };
        positive(lambda0, "lambda0");
        positive(lambda1, "lambda1");
        positive(nu0, "nu0");
        positive(nu1, "nu1");
        positive(a0, "a0");
        if (b0) positive(*b0, "b0");
        positive(a1, "a1");
        if (b1) positive(*b1, "b1");
        positive(c0, "c0");
        positive(d0, "d0");
        if (lambda0 < lambda1) throw ParameterError("lambda0 must not be below lambda1");
        if (nu0 < nu1) throw ParameterError("nu0 must not be below nu1");
    }

    /// Spike rate actually used for Cholesky block r.
    [[nodiscard]] double random_spike(const CholeskyLayout& layout, Index r) const {
        return scale_random_spike ? nu0 * std::sqrt(static_cast<double>(layout.block_size(r))) : nu0;
    }
};

inline constexpr double kThetaFloor = 1e-12;

[[nodiscard]] inline double clamp_probability(double theta) {
    return std::clamp(theta, kThetaFloor, 1.0 - kThetaFloor);
}

/// log of the g-variate Laplace density with rate lambda at a vector of Euclidean norm `norm`.
[[nodiscard]] inline double log_psi_norm(double norm, Index g, double lambda) {
    if (!(lambda > 0.0)) throw ParameterError("Laplace rate must be positive");
    if (g < 1) throw InvalidDimension("Laplace dimension must be >= 1");
    const auto gd = static_cast<double>(g);
    return gd * std::log(lambda) - lambda * norm - gd * std::numbers::ln2 -
           0.5 * (gd - 1.0) * std::log(std::numbers::pi) - std::lgamma(0.5 * (gd + 1.0));
}

[[nodiscard]] inline double log_psi(const Eigen::Ref<const VectorXd>& v, double lambda) {
    return log_psi_norm(v.norm(), v.size(), lambda);
}

/**
 * Posterior probability that a group of dimension g with norm `norm` was drawn
 * from the slab. Evaluated as a logistic of the log-density gap so it stays
 * finite when the spike density underflows.
 */
[[nodiscard]] inline double slab_probability(double norm, Index g, double theta, double slab, double spike) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ParameterError("mixing weight outside [0, 1]");
    if (theta == 0.0) return 0.0;
    if (theta == 1.0) return 1.0;
    if (spike == slab) return theta;
    const double log_slab = std::log(theta) + log_psi_norm(norm, g, slab);
    const double log_spike = std::log1p(-theta) + log_psi_norm(norm, g, spike);
    const double gap = log_spike - log_slab;
    if (gap > 0.0) {
        const double e = std::exp(-gap);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(gap));
}

[[nodiscard]] inline double slab_prob_fixed(const Eigen::Ref<const VectorXd>& gamma_k, double theta,
                                            const SsglConfig& cfg) {
    return slab_probability(gamma_k.norm(), gamma_k.size(), theta, cfg.lambda1, cfg.lambda0);
}

/// Uses cfg.nu0 as given; callers apply any group-size scaling beforehand.
[[nodiscard]] inline double slab_prob_random(const Eigen::Ref<const VectorXd>& ltilde_r, double theta_star,
                                             const SsglConfig& cfg) {
    return slab_probability(ltilde_r.norm(), ltilde_r.size(), theta_star, cfg.nu1, cfg.nu0);
}

/// spike * (1 - p) + slab * p, elementwise.
[[nodiscard]] inline VectorXd adaptive_weights(const Eigen::Ref<const VectorXd>& p_vec, double spike, double slab) {
    VectorXd w(p_vec.size());
    for (Index k = 0; k < p_vec.size(); ++k) {
        const double p = std::clamp(p_vec(k), 0.0, 1.0);
        w(k) = std::clamp(spike * (1.0 - p) + slab * p, std::min(slab, spike), std::max(slab, spike));
    }
    return w;
}

/// log((1 - theta) Psi(v | spike) + theta Psi(v | slab)) by log-sum-exp.
[[nodiscard]] inline double log_mixture(double norm, Index g, double theta, double slab, double spike) {
    const double a = std::log1p(-theta) + log_psi_norm(norm, g, spike);
    const double b = std::log(theta) + log_psi_norm(norm, g, slab);
    const double hi = std::max(a, b);
    return hi + std::log(std::exp(a - hi) + std::exp(b - hi));
}

/// Sum of squared residuals ||Y_i - X_i gamma - Z_i L b_i||^2 over clusters.
[[nodiscard]] inline double residual_sum_of_squares(const ModelData& data, const VectorXd& gamma,
                                                    const MatrixXd& L, const std::vector<VectorXd>& b) {
    double rss = 0.0;
    for (std::size_t i = 0; i < data.clusters.size(); ++i) {
        const auto& c = data.clusters[i];
        VectorXd r = c.y - c.x * gamma;
        r.noalias() -= c.z * (L * b[i]);
        rss += r.squaredNorm();
    }
    return rss;
}

inline void check_state_shape(const ParameterState& phi, const ModelData& data) {
    if (phi.gamma.size() != data.fixed_dim() || phi.ltilde.size() != data.layout.packed_size() ||
        static_cast<Index>(phi.b.size()) != data.n()) {
        throw InvalidDimension("parameter state does not match model dimensions");
    }
    for (const auto& bi : phi.b) {
        if (bi.size() != data.random_dim()) throw InvalidDimension("random coefficient length mismatch");
    }
}

/**
 * Log posterior of the full parameter state up to a fixed additive constant:
 * Gaussian data term, standard-normal b_i, SSGL mixture per group, beta
 * kernels for theta and theta*, inverse-gamma kernel for sigma^2.
 */
[[nodiscard]] inline double log_posterior(const ParameterState& phi, const ModelData& data, const SsglConfig& cfg) {
    check_state_shape(phi, data);
    if (!(phi.sigma2 > 0.0)) throw DomainError("sigma^2 must be positive");
    if (!(phi.theta > 0.0 && phi.theta < 1.0)) throw DomainError("theta must lie in (0, 1)");
    if (!(phi.theta_star > 0.0 && phi.theta_star < 1.0)) throw DomainError("theta* must lie in (0, 1)");

    const MatrixXd L = expand_L(phi.ltilde, data.layout);
    const double rss = residual_sum_of_squares(data, phi.gamma, L, phi.b);
    const auto N = static_cast<double>(data.num_obs);
    const double log_s2 = std::log(phi.sigma2);

    double value = -0.5 * N * log_s2 - rss / (2.0 * phi.sigma2);
    for (const auto& bi : phi.b) value -= 0.5 * bi.squaredNorm();

    for (Index k = 0; k < data.p(); ++k) {
        const auto seg = phi.gamma.segment(data.fixed_groups.offsets[k], data.fixed_groups.sizes[k]);
        value += log_mixture(seg.norm(), seg.size(), phi.theta, cfg.lambda1, cfg.lambda0);
    }
    for (Index r = 0; r < data.q(); ++r) {
        const auto seg = phi.ltilde.segment(data.layout.block_offset(r), data.layout.block_size(r));
        value += log_mixture(seg.norm(), seg.size(), phi.theta_star, cfg.nu1, cfg.random_spike(data.layout, r));
    }
    value += (cfg.a0 - 1.0) * std::log(phi.theta) + (cfg.beta_b0(data.p()) - 1.0) * std::log1p(-phi.theta);
    value += (cfg.a1 - 1.0) * std::log(phi.theta_star) + (cfg.beta_b1(data.q()) - 1.0) * std::log1p(-phi.theta_star);
    value -= 0.5 * (cfg.c0 + 2.0) * log_s2 + cfg.d0 / (2.0 * phi.sigma2);
    return value;
}

}  // namespace mufumes
