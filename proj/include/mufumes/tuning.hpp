#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mufumes/ecm.hpp"
#include "mufumes/errors.hpp"
#include "mufumes/model_core.hpp"
#include "mufumes/parallel.hpp"

namespace mufumes {

/// Spike grids (each non-increasing) and optional basis dimensions to search.
struct TuningGrid {
    std::vector<double> lambda0_grid{200, 170, 140, 110, 80, 50, 20, 10, 5};
    std::vector<double> nu0_grid{50, 20, 10, 5, 2};
    std::vector<std::pair<int, int>> basis_dims;  // (d, d'); empty means use the data as assembled
    double lambda1 = 1.0;
    double nu1 = 1.0;

    void validate() const {
        if (lambda0_grid.empty() || nu0_grid.empty()) throw ParameterError("tuning grid must not be empty");
        auto check = [](const std::vector<double>& g, double slab, const char* name) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!(g[i] > slab)) throw ParameterError(std::string(name) + " grid values must exceed the slab value");
                if (i > 0 && g[i] > g[i - 1]) throw ParameterError(std::string(name) + " grid must be non-increasing");
            }
        };
        check(lambda0_grid, lambda1, "lambda0");
        check(nu0_grid, nu1, "nu0");
        for (const auto& [d, dp] : basis_dims) {
            if (d < 4 || dp < 4) throw ParameterError("basis dimensions must be >= 4");
        }
    }

    [[nodiscard]] std::size_t size() const {
        return lambda0_grid.size() * nu0_grid.size() * std::max<std::size_t>(1, basis_dims.size());
    }
};

struct BicRow {
    double lambda0 = 0.0;
    double nu0 = 0.0;
    int d = 0;
    int d_prime = 0;
    double bic = std::numeric_limits<double>::infinity();
    Index df = 0;
    Index selected_fixed_count = 0;
    Index selected_random_count = 0;
    double log_posterior = 0.0;
    std::vector<Index> selected_fixed;   // 0-based
    std::vector<Index> selected_random;  // 0-based
    int iterations = 0;
    bool converged = false;
    bool failed = false;
    std::string error;
};

struct TuningResult {
    FitResult best;
    std::vector<BicRow> table;
    std::size_t best_index = 0;
};

/**
 * Sum over clusters of log N(Y_i; X_i gamma, Z_i L L^T Z_i^T + sigma^2 I).
 * Uses the d'q-dimensional capacitance matrix C = I + L^T Z^T Z L / sigma^2:
 * log|Sigma| = n_i log sigma^2 + log|C| and
 * r^T Sigma^{-1} r = (r^T r - u^T C^{-1} u / sigma^2) / sigma^2 with u = L^T Z^T r.
 */
[[nodiscard]] inline double marginal_log_likelihood(const ModelData& data, const ParameterState& phi) {
    if (!(phi.sigma2 > 0.0)) throw DomainError("sigma^2 must be positive");
    if (phi.gamma.size() != data.fixed_dim() || phi.ltilde.size() != data.layout.packed_size()) {
        throw InvalidDimension("parameter state does not match model dimensions");
    }
    const MatrixXd L = expand_L(phi.ltilde, data.layout);
    const double s2 = phi.sigma2;
    const double log2pi = std::log(2.0 * std::numbers::pi);
    double total = 0.0;
    for (std::size_t i = 0; i < data.clusters.size(); ++i) {
        const auto& c = data.clusters[i];
        const auto ni = static_cast<double>(c.y.size());
        const VectorXd r = c.y - c.x * phi.gamma;
        const VectorXd u = L.transpose() * (c.zty - c.ztx * phi.gamma);
        MatrixXd C = L.transpose() * c.ztz * L / s2;
        C.diagonal().array() += 1.0;
        Eigen::LLT<MatrixXd> llt(C);
        if (llt.info() != Eigen::Success) {
            std::ostringstream msg;
            msg << "capacitance matrix of cluster " << i << " is not positive definite (sigma2=" << s2
                << ", max|L|=" << L.cwiseAbs().maxCoeff() << ")";
            throw NumericError(msg.str());
        }
        const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
        const double quad = (r.squaredNorm() - u.dot(llt.solve(u)) / s2) / s2;
        total += -0.5 * (ni * log2pi + ni * std::log(s2) + logdet + quad);
    }
    return total;
}

/// Nonzero entries of gamma plus nonzero entries of the stacked L.
[[nodiscard]] inline Index degrees_of_freedom(const ParameterState& phi) {
    return static_cast<Index>((phi.gamma.array() != 0.0).count() + (phi.ltilde.array() != 0.0).count());
}

/// -2 * marginal log-likelihood + log(N) * df.
[[nodiscard]] inline double bic(const ModelData& data, const FitResult& fit) {
    return -2.0 * marginal_log_likelihood(data, fit.phi) +
           std::log(static_cast<double>(data.num_obs)) * static_cast<double>(degrees_of_freedom(fit.phi));
}

namespace detail {

/// Smaller BIC wins; converged beats non-converged; then larger lambda0, then larger nu0.
inline bool better_row(const BicRow& a, const BicRow& b) {
    if (a.failed != b.failed) return !a.failed;
    if (a.bic != b.bic) return a.bic < b.bic;
    if (a.converged != b.converged) return a.converged;
    if (a.lambda0 != b.lambda0) return a.lambda0 > b.lambda0;
    return a.nu0 > b.nu0;
}

}  // namespace detail

/**
 * BIC grid search. Each (basis dims, nu0) pair is one warm-start chain over
 * the lambda0 grid (largest spike first); chains run on `workers` threads and
 * the table keeps grid order: dims outermost, then nu0, then lambda0.
 */
[[nodiscard]] inline TuningResult grid_search(const RawDataset& raw, const std::optional<ModelData>& prebuilt,
                                              const TuningGrid& grid, const EcmConfig& base, int workers = 1) {
    grid.validate();
    std::vector<std::pair<int, int>> dims = grid.basis_dims;
    if (dims.empty()) {
        if (!prebuilt) throw TuningError("no basis dimensions given and no assembled model");
        dims.emplace_back(prebuilt->fixed_bases.front().num_basis(), prebuilt->random_bases.front().num_basis());
    }
    std::vector<ModelData> models;
    if (grid.basis_dims.empty()) {
        models.push_back(*prebuilt);
    } else {
        for (const auto& [d, dp] : dims) models.push_back(assemble_design(raw, d, dp));
    }

    const std::size_t n_lambda = grid.lambda0_grid.size();
    const std::size_t n_nu = grid.nu0_grid.size();
    const std::size_t n_chains = dims.size() * n_nu;
    std::vector<BicRow> table(n_chains * n_lambda);
    std::vector<std::optional<FitResult>> fits(table.size());

    parallel_for(n_chains, workers, [&](std::size_t chain) {
        const std::size_t dim_idx = chain / n_nu;
        const std::size_t nu_idx = chain % n_nu;
        const ModelData& data = models[dim_idx];
        std::optional<ParameterState> warm;
        for (std::size_t li = 0; li < n_lambda; ++li) {
            const std::size_t row_idx = chain * n_lambda + li;
            BicRow& row = table[row_idx];
            row.lambda0 = grid.lambda0_grid[li];
            row.nu0 = grid.nu0_grid[nu_idx];
            row.d = dims[dim_idx].first;
            row.d_prime = dims[dim_idx].second;
            if (li > 0 && grid.lambda0_grid[li] == grid.lambda0_grid[li - 1]) {
                row = table[row_idx - 1];
                fits[row_idx] = fits[row_idx - 1];
                continue;
            }
            EcmConfig cfg = base;
            cfg.prior.lambda0 = row.lambda0;
            cfg.prior.nu0 = row.nu0;
            cfg.prior.lambda1 = grid.lambda1;
            cfg.prior.nu1 = grid.nu1;
            try {
                FitResult fit = run_ecm(data, cfg, warm);
                row.bic = bic(data, fit);
                if (!std::isfinite(row.bic)) throw NumericError("non-finite BIC");
                row.df = degrees_of_freedom(fit.phi);
                row.selected_fixed_count = static_cast<Index>(fit.selected_fixed.size());
                row.selected_random_count = static_cast<Index>(fit.selected_random.size());
                row.converged = fit.converged;
                row.iterations = fit.iterations;
                row.log_posterior = fit.log_posterior_trace.back();
                row.selected_fixed = fit.selected_fixed;
                row.selected_random = fit.selected_random;
                warm = fit.phi;
                fits[row_idx] = std::move(fit);
            } catch (const Error& e) {
                row.failed = true;
                row.bic = std::numeric_limits<double>::infinity();
                row.error = e.what();
            }
        }
    });

    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < table.size(); ++i) {
        if (table[i].failed) continue;
        if (!best || detail::better_row(table[i], table[*best])) best = i;
    }
    if (!best) {
        std::ostringstream msg;
        msg << "all " << table.size() << " tuning fits failed:";
        for (const auto& row : table) msg << "\n  lambda0=" << row.lambda0 << " nu0=" << row.nu0 << ": " << row.error;
        throw TuningError(msg.str());
    }
    TuningResult out;
    out.best = std::move(*fits[*best]);
    out.table = std::move(table);
    out.best_index = *best;
    return out;
}

[[nodiscard]] inline TuningResult grid_search(const ModelData& data, const TuningGrid& grid, const EcmConfig& base,
                                              int workers = 1) {
    if (!grid.basis_dims.empty()) throw TuningError("basis dimension search needs the raw dataset");
    return grid_search(RawDataset{}, data, grid, base, workers);
}

}  // namespace mufumes
