#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mufumes/ecm.hpp"
#include "mufumes/errors.hpp"
#include "mufumes/parallel.hpp"
#include "mufumes/rng.hpp"
#include "mufumes/simulation.hpp"
#include "mufumes/tuning.hpp"

namespace mufumes {

/// Selection rates averaged over replications; a rate is absent when its truth set is empty.
struct SelectionRates {
    std::optional<double> tpf;
    std::optional<double> fpf;
    std::optional<double> tpr;
    std::optional<double> fpr;
    std::size_t replications = 0;
};

struct MiseReport {
    std::vector<Index> coefficients;  // 0-based
    std::vector<double> mise;
    std::size_t grid_size = 0;
    std::size_t replications = 0;
    std::vector<std::string> warnings;
};

namespace detail {

inline std::optional<double> hit_fraction(const std::vector<Index>& selected, const std::vector<Index>& pool) {
    if (pool.empty()) return std::nullopt;
    std::size_t hits = 0;
    for (Index k : pool) hits += std::find(selected.begin(), selected.end(), k) != selected.end() ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pool.size());
}

inline std::vector<Index> complement(const std::vector<Index>& support, Index total) {
    std::vector<Index> out;
    for (Index k = 0; k < total; ++k) {
        if (std::find(support.begin(), support.end(), k) == support.end()) out.push_back(k);
    }
    return out;
}

inline void accumulate(std::optional<double>& sum, const std::optional<double>& v) {
    if (!v) return;
    sum = sum.value_or(0.0) + *v;
}

}  // namespace detail

/// Rates of a single replication from its selected sets (0-based covariate indices).
[[nodiscard]] inline SelectionRates selection_rates(const std::vector<Index>& selected_fixed,
                                                    const std::vector<Index>& selected_random,
                                                    const GroundTruth& truth) {
    SelectionRates out;
    out.tpf = detail::hit_fraction(selected_fixed, truth.true_fixed_support);
    out.fpf = detail::hit_fraction(selected_fixed, detail::complement(truth.true_fixed_support, truth.p));
    out.tpr = detail::hit_fraction(selected_random, truth.true_random_support);
    out.fpr = detail::hit_fraction(selected_random, detail::complement(truth.true_random_support, truth.q));
    out.replications = 1;
    return out;
}

/// Mean of per-replication rates.
[[nodiscard]] inline SelectionRates average_rates(const std::vector<SelectionRates>& reps) {
    if (reps.empty()) throw ParameterError("no replications to average");
    SelectionRates out;
    for (const auto& r : reps) {
        detail::accumulate(out.tpf, r.tpf);
        detail::accumulate(out.fpf, r.fpf);
        detail::accumulate(out.tpr, r.tpr);
        detail::accumulate(out.fpr, r.fpr);
    }
    const auto n = static_cast<double>(reps.size());
    for (auto* v : {&out.tpf, &out.fpf, &out.tpr, &out.fpr}) {
        if (*v) **v /= n;
    }
    out.replications = reps.size();
    return out;
}

[[nodiscard]] inline SelectionRates selection_rates(const std::vector<FitResult>& fits, const GroundTruth& truth) {
    if (fits.empty()) throw ParameterError("selection_rates needs at least one fit");
    std::vector<SelectionRates> reps;
    reps.reserve(fits.size());
    for (const auto& f : fits) reps.push_back(selection_rates(f.selected_fixed, f.selected_random, truth));
    return average_rates(reps);
}

/// Trapezoid-rule integral of (estimate - truth)^2 over a sorted grid.
[[nodiscard]] inline double integrated_squared_error(std::span<const double> estimate, std::span<const double> truth,
                                                     std::span<const double> grid) {
    if (estimate.size() != grid.size() || truth.size() != grid.size()) {
        throw InvalidDimension("curve and grid lengths differ");
    }
    double total = 0.0;
    for (std::size_t t = 1; t < grid.size(); ++t) {
        const double e0 = estimate[t - 1] - truth[t - 1];
        const double e1 = estimate[t] - truth[t];
        total += 0.5 * (grid[t] - grid[t - 1]) * (e0 * e0 + e1 * e1);
    }
    return total;
}

/// 0-based indices of the nonzero slopes beta_2..beta_5.
[[nodiscard]] inline std::vector<Index> default_mise_coefficients() { return {1, 2, 3, 4}; }

/**
 * MISE over replications. curves[b] holds the estimated functions of
 * replication b on `grid`, one column per coefficient (m x p).
 */
[[nodiscard]] inline MiseReport mise(const std::vector<MatrixXd>& curves, const GroundTruth& truth,
                                     std::span<const double> grid,
                                     const std::vector<Index>& coefficients = default_mise_coefficients()) {
    if (curves.empty()) throw ParameterError("mise needs at least one replication");
    MiseReport out;
    out.coefficients = coefficients;
    out.grid_size = grid.size();
    out.replications = curves.size();
    if (grid.size() < 10) out.warnings.push_back("quadrature grid has fewer than 10 points");
    out.mise.assign(coefficients.size(), 0.0);
    for (std::size_t c = 0; c < coefficients.size(); ++c) {
        const Index k = coefficients[c];
        std::vector<double> true_curve(grid.size());
        for (std::size_t t = 0; t < grid.size(); ++t) true_curve[t] = truth.beta(k, grid[t]);
        for (const auto& m : curves) {
            if (m.rows() != static_cast<Index>(grid.size()) || k >= m.cols()) {
                throw InvalidDimension("curve matrix does not match the grid or coefficient index");
            }
            std::vector<double> est(m.col(k).data(), m.col(k).data() + m.rows());
            out.mise[c] += integrated_squared_error(est, true_curve, grid);
        }
        out.mise[c] /= static_cast<double>(curves.size());
    }
    return out;
}

struct StudyConfig {
    ScenarioSpec scenario;
    int replications = 20;
    TuningGrid grid;
    EcmConfig ecm;
    int d = 6;
    int d_prime = 4;
    int quadrature_points = 201;
    int workers = 1;

    void validate() const {
        scenario.validate();
        if (replications < 1) throw ParameterError("replications must be >= 1");
        if (d < 4 || d_prime < 4) throw ParameterError("basis dimensions must be >= 4");
        if (quadrature_points < 2) throw ParameterError("quadrature grid needs at least 2 points");
        grid.validate();
        ecm.validate();
    }
};

struct ReplicationRecord {
    int replicate = 0;  // 1-based
    std::uint64_t seed = 0;
    bool failed = false;
    std::string error;
    double sigma_b = 0.0;
    double sigma_eps = 0.0;
    double lambda0 = 0.0;
    double nu0 = 0.0;
    int d = 0;
    int d_prime = 0;
    double bic = 0.0;
    bool converged = false;
    int iterations = 0;
    std::vector<Index> selected_fixed;   // 0-based
    std::vector<Index> selected_random;  // 0-based
    SelectionRates rates;
    std::vector<double> ise;  // per MISE coefficient
};

struct StudyResult {
    SelectionRates rates;
    MiseReport mise;
    std::vector<ReplicationRecord> records;
    std::size_t failures = 0;
};

inline constexpr std::uint64_t kStudyStream = 5;

/// Seed of replication b (1-based) derived from the study seed.
[[nodiscard]] inline std::uint64_t replication_seed(std::uint64_t study_seed, int b) {
    return derive_key(study_seed, {kStudyStream, static_cast<std::uint64_t>(b)});
}

/**
 * For b = 1..B: simulate with the replication seed, tune by BIC, record the
 * selection and the integrated squared errors. Replications run in parallel;
 * failed replications are recorded and left out of the averages.
 */
[[nodiscard]] inline StudyResult monte_carlo_study(const StudyConfig& cfg) {
    cfg.validate();
    const std::vector<double> quad = equispaced_grid(cfg.quadrature_points);
    const std::vector<Index> coefs = default_mise_coefficients();
    std::vector<ReplicationRecord> records(static_cast<std::size_t>(cfg.replications));
    std::vector<std::optional<MatrixXd>> curves(records.size());
    std::vector<GroundTruth> truths(records.size());

    parallel_for(records.size(), cfg.workers, [&](std::size_t idx) {
        ReplicationRecord& rec = records[idx];
        rec.replicate = static_cast<int>(idx) + 1;
        rec.seed = replication_seed(cfg.scenario.seed, rec.replicate);
        try {
            ScenarioSpec spec = cfg.scenario;
            spec.seed = rec.seed;
            auto [raw, truth] = generate(spec);
            rec.sigma_b = truth.sigma_b;
            rec.sigma_eps = truth.sigma_eps;
            std::optional<ModelData> data;
            if (cfg.grid.basis_dims.empty()) data = assemble_design(raw, cfg.d, cfg.d_prime);
            TuningResult tuned = grid_search(raw, data, cfg.grid, cfg.ecm, 1);
            const BicRow& row = tuned.table[tuned.best_index];
            rec.lambda0 = row.lambda0;
            rec.nu0 = row.nu0;
            rec.d = row.d;
            rec.d_prime = row.d_prime;
            rec.bic = row.bic;
            rec.converged = tuned.best.converged;
            rec.iterations = tuned.best.iterations;
            rec.selected_fixed = tuned.best.selected_fixed;
            rec.selected_random = tuned.best.selected_random;
            rec.rates = selection_rates(rec.selected_fixed, rec.selected_random, truth);
            MatrixXd m = tuned.best.fixed_curves(quad);
            for (Index k : coefs) {
                std::vector<double> est(m.col(k).data(), m.col(k).data() + m.rows());
                std::vector<double> tr(quad.size());
                for (std::size_t t = 0; t < quad.size(); ++t) tr[t] = truth.beta(k, quad[t]);
                rec.ise.push_back(integrated_squared_error(est, tr, quad));
            }
            curves[idx] = std::move(m);
            truths[idx] = std::move(truth);
        } catch (const Error& e) {
            rec.failed = true;
            rec.error = e.what();
        }
    });

    StudyResult out;
    std::vector<SelectionRates> reps;
    std::vector<MatrixXd> ok_curves;
    const GroundTruth* any_truth = nullptr;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].failed) {
            ++out.failures;
            continue;
        }
        reps.push_back(records[i].rates);
        ok_curves.push_back(std::move(*curves[i]));
        any_truth = &truths[i];
    }
    if (reps.empty()) throw TuningError("every replication of the study failed");
    out.rates = average_rates(reps);
    out.mise = mise(ok_curves, *any_truth, quad, coefs);
    out.records = std::move(records);
    return out;
}

}  // namespace mufumes
