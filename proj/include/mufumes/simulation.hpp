#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "mufumes/errors.hpp"
#include "mufumes/model_core.hpp"
#include "mufumes/rng.hpp"
#include "mufumes/spline_basis.hpp"

namespace mufumes {

/// A: p = q = 8 with Z = X. B: p = 11, q = 8 with independent Z.
enum class Scenario { A, B };

[[nodiscard]] inline std::string to_string(Scenario s) { return s == Scenario::A ? "A" : "B"; }

[[nodiscard]] inline Scenario parse_scenario(const std::string& s) {
    if (s == "A" || s == "a") return Scenario::A;
    if (s == "B" || s == "b") return Scenario::B;
    throw ParameterError("unknown scenario '" + s + "'");
}

struct ScenarioSpec {
    Scenario scenario = Scenario::A;
    int n = 25;
    int J = 10;
    int m = 10;
    double snr_b = 0.5;
    double snr_eps = 4.0;  // +inf gives noiseless responses
    std::uint64_t seed = 1;

    void validate() const {
        if (n < 2) throw ParameterError("scenario needs n >= 2 clusters");
        if (J < 1) throw ParameterError("scenario needs J >= 1");
        if (m < 2) throw ParameterError("scenario needs m >= 2");
        if (!(snr_b > 0.0) || !(snr_eps > 0.0)) throw ParameterError("SNR values must be positive");
    }
};

[[nodiscard]] inline Index scenario_p(Scenario s) { return s == Scenario::A ? 8 : 11; }
[[nodiscard]] inline Index scenario_q(Scenario) { return 8; }

/// Normal density with mean mu and standard deviation sd.
[[nodiscard]] inline double normal_pdf(double s, double mu, double sd) {
    const double z = (s - mu) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

/// True coefficient function; k is 0-based (k = 0 is the intercept).
[[nodiscard]] inline double true_beta(Scenario scenario, Index k, double s) {
    if (k < 0 || k >= scenario_p(scenario)) throw InvalidDimension("coefficient index out of range");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    switch (k) {
        case 0: return 8.0 * std::sin(two_pi * s);
        case 1: return 2.0 * normal_pdf(s, 0.6, 0.15);
        case 2: return 2.5 * normal_pdf(s, 0.6, 0.15);
        case 3: return 3.0 * std::cos(two_pi * s);
        case 4: return 5.0 * std::sin(two_pi * s) + 5.0 * std::cos(two_pi * s);
        default: return 0.0;
    }
}

/// Per-cluster random-effect coefficients, already multiplied by sigma_B.
struct ClusterEffects {
    std::array<double, 2> intercept{};  // sin(2 pi s), cos(2 pi s)
    std::array<double, 4> slope4{};     // sin(2 pi s), cos(2 pi s), sin(pi s), cos(pi s)
};

struct GroundTruth {
    Scenario scenario = Scenario::A;
    Index p = 0;
    Index q = 0;
    std::vector<Index> true_fixed_support;   // 0-based
    std::vector<Index> true_random_support;  // 0-based
    double sigma_b = 0.0;
    double sigma_eps = 0.0;
    double realized_snr_b = 0.0;
    double realized_snr_eps = 0.0;
    std::vector<ClusterEffects> effects;

    [[nodiscard]] double beta(Index k, double s) const { return true_beta(scenario, k, s); }

    /// u_ir(s) for cluster i and 0-based random covariate r.
    [[nodiscard]] double random_effect(Index i, Index r, double s) const {
        const auto& e = effects.at(static_cast<std::size_t>(i));
        constexpr double pi = std::numbers::pi;
        if (r == 0) return e.intercept[0] * std::sin(2 * pi * s) + e.intercept[1] * std::cos(2 * pi * s);
        if (r == 3) {
            return e.slope4[0] * std::sin(2 * pi * s) + e.slope4[1] * std::cos(2 * pi * s) +
                   e.slope4[2] * std::sin(pi * s) + e.slope4[3] * std::cos(pi * s);
        }
        return 0.0;
    }
};

namespace detail {

enum StreamRole : std::uint64_t { kFixedCovariates = 1, kRandomCovariates = 2, kRandomEffects = 3, kNoise = 4 };

inline double population_sd(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace detail

/**
 * Draws one dataset. sigma_B is solved so that sd(fixed part) / sd(random
 * part) equals snr_b exactly on the realized draws, and sigma_eps so that
 * sd(linear predictor) / sigma_eps equals snr_eps.
 */
[[nodiscard]] inline std::pair<RawDataset, GroundTruth> generate(const ScenarioSpec& spec) {
    spec.validate();
    const Index p = scenario_p(spec.scenario);
    const Index q = scenario_q(spec.scenario);
    const std::vector<double> grid = equispaced_grid(spec.m);
    const auto m = static_cast<Index>(grid.size());

    RawDataset raw;
    raw.grid = grid;
    raw.p = p;
    raw.q = q;
    GroundTruth truth;
    truth.scenario = spec.scenario;
    truth.p = p;
    truth.q = q;
    truth.true_fixed_support = {0, 1, 2, 3, 4};
    truth.true_random_support = {0, 3};

    std::vector<double> fixed_part, random_unit;
    const std::size_t total = static_cast<std::size_t>(spec.n) * spec.J * spec.m;
    fixed_part.reserve(total);
    random_unit.reserve(total);

    for (int i = 0; i < spec.n; ++i) {
        RawCluster cluster;
        cluster.id = i + 1;
        CounterRng eff_rng(spec.seed, {detail::kRandomEffects, static_cast<std::uint64_t>(i), 0});
        ClusterEffects unit;
        unit.intercept = {eff_rng.normal(0.0, 3.0), eff_rng.normal(0.0, 1.5)};
        unit.slope4 = {eff_rng.normal(0.0, 1.5), eff_rng.normal(0.0, 0.75), eff_rng.normal(0.0, 0.5),
                       eff_rng.normal(0.0, 0.25)};
        truth.effects.push_back(unit);

        for (int j = 0; j < spec.J; ++j) {
            Replicate rep;
            rep.x.resize(p);
            CounterRng x_rng(spec.seed, {detail::kFixedCovariates, static_cast<std::uint64_t>(i),
                                         static_cast<std::uint64_t>(j)});
            rep.x(0) = 1.0;
            for (Index k = 1; k < p; ++k) rep.x(k) = x_rng.normal(0.0, 2.0);
            if (spec.scenario == Scenario::A) {
                rep.z = rep.x;
            } else {
                CounterRng z_rng(spec.seed, {detail::kRandomCovariates, static_cast<std::uint64_t>(i),
                                             static_cast<std::uint64_t>(j)});
                rep.z.resize(q);
                rep.z(0) = 1.0;
                for (Index r = 1; r < q; ++r) rep.z(r) = z_rng.normal(0.0, 2.0);
            }
            rep.y = VectorXd::Zero(m);
            for (Index t = 0; t < m; ++t) {
                const double s = grid[static_cast<std::size_t>(t)];
                double f = 0.0;
                for (Index k = 0; k < p; ++k) f += rep.x(k) * true_beta(spec.scenario, k, s);
                double u = 0.0;
                for (Index r : truth.true_random_support) u += rep.z(r) * truth.random_effect(i, r, s);
                fixed_part.push_back(f);
                random_unit.push_back(u);
            }
            cluster.replicates.push_back(std::move(rep));
        }
        raw.clusters.push_back(std::move(cluster));
    }

    const double sd_fixed = detail::population_sd(fixed_part);
    const double sd_random = detail::population_sd(random_unit);
    if (!(sd_fixed > 0.0) || !(sd_random > 0.0)) throw GenerationError("degenerate fixed or random contribution");
    truth.sigma_b = sd_fixed / (spec.snr_b * sd_random);

    std::vector<double> predictor(total);
    for (std::size_t t = 0; t < total; ++t) predictor[t] = fixed_part[t] + truth.sigma_b * random_unit[t];
    const double sd_pred = detail::population_sd(predictor);
    if (!(sd_pred > 0.0)) throw GenerationError("degenerate linear predictor");
    truth.sigma_eps = std::isinf(spec.snr_eps) ? 0.0 : sd_pred / spec.snr_eps;

    std::vector<double> scaled_random(total);
    for (std::size_t t = 0; t < total; ++t) scaled_random[t] = truth.sigma_b * random_unit[t];
    truth.realized_snr_b = sd_fixed / detail::population_sd(scaled_random);
    truth.realized_snr_eps =
        truth.sigma_eps > 0.0 ? sd_pred / truth.sigma_eps : std::numeric_limits<double>::infinity();

    for (auto& e : truth.effects) {
        for (double& v : e.intercept) v *= truth.sigma_b;
        for (double& v : e.slope4) v *= truth.sigma_b;
    }

    std::size_t pos = 0;
    for (int i = 0; i < spec.n; ++i) {
        auto& cluster = raw.clusters[static_cast<std::size_t>(i)];
        for (int j = 0; j < spec.J; ++j) {
            CounterRng noise_rng(spec.seed, {detail::kNoise, static_cast<std::uint64_t>(i),
                                             static_cast<std::uint64_t>(j)});
            auto& rep = cluster.replicates[static_cast<std::size_t>(j)];
            for (Index t = 0; t < m; ++t, ++pos) {
                rep.y(t) = predictor[pos] + (truth.sigma_eps > 0.0 ? truth.sigma_eps * noise_rng.normal() : 0.0);
            }
        }
    }
    return {std::move(raw), std::move(truth)};
}

}  // namespace mufumes
