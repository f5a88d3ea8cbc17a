#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mufumes/ecm.hpp"
#include "mufumes/errors.hpp"
#include "mufumes/metrics.hpp"
#include "mufumes/model_core.hpp"
#include "mufumes/simulation.hpp"
#include "mufumes/tuning.hpp"

namespace mufumes {

using nlohmann::json;

/// 17 significant digits, enough for a bitwise round trip of any double.
[[nodiscard]] inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                field += '"';
                ++i;
            } else if (ch == '"') {
                quoted = false;
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(field));
            field.clear();
        } else {
            field += ch;
        }
    }
    out.push_back(std::move(field));
    return out;
}

inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + '"';
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

inline std::string join_one_based(const std::vector<Index>& idx) {
    std::string out;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (i > 0) out += ';';
        out += std::to_string(idx[i] + 1);
    }
    return out;
}

inline std::vector<Index> to_one_based(const std::vector<Index>& idx) {
    std::vector<Index> out;
    for (Index k : idx) out.push_back(k + 1);
    return out;
}

inline std::vector<Index> from_one_based(const json& arr) {
    std::vector<Index> out;
    for (const auto& v : arr) out.push_back(v.get<Index>() - 1);
    return out;
}

inline json vector_json(const Eigen::Ref<const VectorXd>& v) {
    json out = json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

inline VectorXd vector_from_json(const json& arr) {
    VectorXd v(static_cast<Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Index>(i)) = arr[i].get<double>();
    return v;
}

inline json matrix_json(const MatrixXd& m) {
    json out = json::array();
    for (Index r = 0; r < m.rows(); ++r) out.push_back(vector_json(m.row(r).transpose()));
    return out;
}

inline MatrixXd matrix_from_json(const json& rows) {
    if (rows.empty()) return {};
    MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != static_cast<std::size_t>(m.cols())) throw DatasetError("ragged matrix in JSON");
        m.row(static_cast<Index>(r)) = vector_from_json(rows[r]).transpose();
    }
    return m;
}

}  // namespace detail

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot open " + path + " for writing");
    out << content;
    if (!out) throw DatasetError("failed writing " + path);
}

[[nodiscard]] inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---- dataset CSV ----

/// Long format: cluster,replicate,s,y,x1..xp,z1..zq; replicates numbered from 1.
inline void write_dataset_csv(std::ostream& out, const RawDataset& raw) {
    out << "cluster,replicate,s,y";
    for (Index k = 0; k < raw.p; ++k) out << ",x" << k + 1;
    for (Index r = 0; r < raw.q; ++r) out << ",z" << r + 1;
    out << '\n';
    for (const auto& c : raw.clusters) {
        for (std::size_t j = 0; j < c.replicates.size(); ++j) {
            const auto& rep = c.replicates[j];
            for (std::size_t t = 0; t < raw.grid.size(); ++t) {
                out << c.id << ',' << j + 1 << ',' << format_double(raw.grid[t]) << ','
                    << format_double(rep.y(static_cast<Index>(t)));
                for (Index k = 0; k < raw.p; ++k) out << ',' << format_double(rep.x(k));
                for (Index r = 0; r < raw.q; ++r) out << ',' << format_double(rep.z(r));
                out << '\n';
            }
        }
    }
}

/**
 * Reads the long-format CSV. Rows may come in any order; clusters and
 * replicates are sorted by their ids, the grid is the sorted set of distinct
 * s values, and every (cluster, replicate) must cover that grid exactly once
 * with constant covariates.
 */
[[nodiscard]] inline RawDataset read_dataset_csv(std::istream& in, const std::string& source = "<dataset>") {
    std::string line;
    if (!std::getline(in, line)) throw DatasetError(source + ": empty file");
    const auto header = detail::split_csv_line(line);
    auto fail = [&](long long lineno, const std::string& msg) -> DatasetError {
        return DatasetError(source + ":" + std::to_string(lineno) + ": " + msg);
    };
    if (header.size() < 6 || detail::trim(header[0]) != "cluster" || detail::trim(header[1]) != "replicate" ||
        detail::trim(header[2]) != "s" || detail::trim(header[3]) != "y") {
        throw fail(1, "header must start with cluster,replicate,s,y");
    }
    Index p = 0, q = 0;
    for (std::size_t c = 4; c < header.size(); ++c) {
        const std::string name(detail::trim(header[c]));
        if (q == 0 && name == "x" + std::to_string(p + 1)) {
            ++p;
        } else if (name == "z" + std::to_string(q + 1)) {
            ++q;
        } else {
            throw fail(1, "unexpected column '" + name + "' (expected x1..xp then z1..zq)");
        }
    }
    if (p < 1 || q < 1) throw fail(1, "need at least one x column and one z column");

    struct Row {
        double s;
        double y;
        long long line;
    };
    struct Rep {
        std::vector<Row> rows;
        VectorXd x, z;
    };
    std::map<long long, std::map<long long, Rep>> groups;
    std::set<double> grid_values;
    long long lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != header.size()) {
            throw fail(lineno, "expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
        }
        const auto cl = detail::parse_integer(f[0]);
        const auto rp = detail::parse_integer(f[1]);
        if (!cl || !rp) throw fail(lineno, "cluster and replicate must be integers");
        std::vector<double> vals(f.size() - 2);
        for (std::size_t c = 2; c < f.size(); ++c) {
            const auto v = detail::parse_double(f[c]);
            if (!v || !std::isfinite(*v)) throw fail(lineno, "non-numeric or non-finite value in column " + header[c]);
            vals[c - 2] = *v;
        }
        Rep& rep = groups[*cl][*rp];
        VectorXd x(p), z(q);
        for (Index k = 0; k < p; ++k) x(k) = vals[static_cast<std::size_t>(2 + k)];
        for (Index r = 0; r < q; ++r) z(r) = vals[static_cast<std::size_t>(2 + p + r)];
        if (rep.rows.empty()) {
            rep.x = x;
            rep.z = z;
        } else if (rep.x != x || rep.z != z) {
            throw fail(lineno, "covariates vary within cluster " + std::to_string(*cl) + " replicate " +
                                   std::to_string(*rp));
        }
        rep.rows.push_back({vals[0], vals[1], lineno});
        grid_values.insert(vals[0]);
    }
    if (groups.empty()) throw DatasetError(source + ": no data rows");

    RawDataset raw;
    raw.p = p;
    raw.q = q;
    raw.grid.assign(grid_values.begin(), grid_values.end());
    const auto m = static_cast<Index>(raw.grid.size());
    for (auto& [cid, reps] : groups) {
        RawCluster cluster;
        cluster.id = cid;
        for (auto& [rid, rep] : reps) {
            std::sort(rep.rows.begin(), rep.rows.end(), [](const Row& a, const Row& b) { return a.s < b.s; });
            const std::string where = "cluster " + std::to_string(cid) + " replicate " + std::to_string(rid);
            if (static_cast<Index>(rep.rows.size()) != m) {
                throw DatasetError(source + ": " + where + " has " + std::to_string(rep.rows.size()) +
                                   " grid points, expected " + std::to_string(m));
            }
            Replicate out;
            out.y.resize(m);
            for (Index t = 0; t < m; ++t) {
                const Row& row = rep.rows[static_cast<std::size_t>(t)];
                if (row.s != raw.grid[static_cast<std::size_t>(t)]) {
                    throw fail(row.line, where + " does not match the common grid");
                }
                out.y(t) = row.y;
            }
            out.x = rep.x;
            out.z = rep.z;
            cluster.replicates.push_back(std::move(out));
        }
        raw.clusters.push_back(std::move(cluster));
    }
    raw.validate();
    return raw;
}

[[nodiscard]] inline RawDataset read_dataset_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset " + path);
    return read_dataset_csv(in, path);
}

// ---- ground truth ----

[[nodiscard]] inline json ground_truth_json(const GroundTruth& truth, const ScenarioSpec& spec) {
    json effects = json::array();
    for (const auto& e : truth.effects) {
        effects.push_back({{"intercept", e.intercept}, {"slope4", e.slope4}});
    }
    return {{"scenario", to_string(truth.scenario)},
            {"spec",
             {{"n", spec.n},
              {"J", spec.J},
              {"m", spec.m},
              {"snr_b", spec.snr_b},
              {"snr_eps", std::isfinite(spec.snr_eps) ? json(spec.snr_eps) : json("inf")},
              {"seed", spec.seed}}},
            {"p", truth.p},
            {"q", truth.q},
            {"true_fixed_support", detail::to_one_based(truth.true_fixed_support)},
            {"true_random_support", detail::to_one_based(truth.true_random_support)},
            {"sigma_b", truth.sigma_b},
            {"sigma_eps", truth.sigma_eps},
            {"realized_snr_b", truth.realized_snr_b},
            {"realized_snr_eps", std::isfinite(truth.realized_snr_eps) ? json(truth.realized_snr_eps) : json("inf")},
            {"random_effects", effects}};
}

// ---- FitResult JSON ----

namespace detail {

inline json basis_json(const BSplineBasis& b) {
    return {{"degree", b.degree()}, {"knots", b.knots()}, {"domain", {b.domain().lo, b.domain().hi}}};
}

inline BSplineBasis basis_from_json(const json& j) {
    const auto dom = j.at("domain");
    return BSplineBasis(j.at("degree").get<int>(), j.at("knots").get<std::vector<double>>(),
                        Interval{dom.at(0).get<double>(), dom.at(1).get<double>()});
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> optional_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

}  // namespace detail

[[nodiscard]] inline json prior_json(const SsglConfig& c) {
    return {{"lambda0", c.lambda0}, {"lambda1", c.lambda1}, {"nu0", c.nu0},
            {"nu1", c.nu1},         {"a0", c.a0},           {"b0", detail::optional_json(c.b0)},
            {"a1", c.a1},           {"b1", detail::optional_json(c.b1)},
            {"c0", c.c0},           {"d0", c.d0},           {"scale_random_spike", c.scale_random_spike}};
}

[[nodiscard]] inline SsglConfig prior_from_json(const json& j) {
    SsglConfig c;
    c.lambda0 = j.at("lambda0").get<double>();
    c.lambda1 = j.at("lambda1").get<double>();
    c.nu0 = j.at("nu0").get<double>();
    c.nu1 = j.at("nu1").get<double>();
    c.a0 = j.at("a0").get<double>();
    c.b0 = detail::optional_from_json(j.at("b0"));
    c.a1 = j.at("a1").get<double>();
    c.b1 = detail::optional_from_json(j.at("b1"));
    c.c0 = j.at("c0").get<double>();
    c.d0 = j.at("d0").get<double>();
    c.scale_random_spike = j.at("scale_random_spike").get<bool>();
    return c;
}

/// Serializes a fit; `curve_grid` is where the beta_k curves are tabulated.
[[nodiscard]] inline json fit_to_json(const FitResult& fit, std::span<const double> curve_grid) {
    json gamma_blocks = json::array();
    for (Index k = 0; k < fit.fixed_groups.num_groups(); ++k) {
        gamma_blocks.push_back(detail::vector_json(fit.phi.gamma.segment(fit.fixed_groups.offsets[k],
                                                                         fit.fixed_groups.sizes[k])));
    }
    json b = json::array();
    for (const auto& bi : fit.phi.b) b.push_back(detail::vector_json(bi));
    json fixed_bases = json::array(), random_bases = json::array();
    for (const auto& fb : fit.fixed_bases) fixed_bases.push_back(detail::basis_json(fb));
    for (const auto& rb : fit.random_bases) random_bases.push_back(detail::basis_json(rb));
    const MatrixXd curves = fit.fixed_curves(curve_grid);
    json beta = json::array();
    for (Index k = 0; k < curves.cols(); ++k) beta.push_back(detail::vector_json(curves.col(k)));
    return {{"format", "mufumes-fit"},
            {"version", 1},
            {"selected_fixed", detail::to_one_based(fit.selected_fixed)},
            {"selected_random", detail::to_one_based(fit.selected_random)},
            {"gamma_blocks", gamma_blocks},
            {"ltilde", detail::vector_json(fit.phi.ltilde)},
            {"D_hat", detail::matrix_json(fit.D_hat)},
            {"sigma2", fit.phi.sigma2},
            {"theta", fit.phi.theta},
            {"theta_star", fit.phi.theta_star},
            {"b", b},
            {"log_posterior_trace", fit.log_posterior_trace},
            {"iterations", fit.iterations},
            {"converged", fit.converged},
            {"inner_nonconverged", fit.inner_nonconverged},
            {"diff1", fit.diff1},
            {"diff2", fit.diff2},
            {"prior", prior_json(fit.prior)},
            {"fixed_bases", fixed_bases},
            {"random_bases", random_bases},
            {"curves", {{"grid", std::vector<double>(curve_grid.begin(), curve_grid.end())}, {"beta", beta}}}};
}

/// Inverse of fit_to_json; returns the fit and the stored curve grid.
[[nodiscard]] inline std::pair<FitResult, std::vector<double>> fit_from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != "mufumes-fit") throw DatasetError("not a fit file");
        FitResult fit;
        std::vector<Index> fixed_sizes, random_sizes;
        for (const auto& fb : j.at("fixed_bases")) {
            fit.fixed_bases.push_back(detail::basis_from_json(fb));
            fixed_sizes.push_back(fit.fixed_bases.back().num_basis());
        }
        for (const auto& rb : j.at("random_bases")) {
            fit.random_bases.push_back(detail::basis_from_json(rb));
            random_sizes.push_back(fit.random_bases.back().num_basis());
        }
        fit.fixed_groups = GroupPartition(fixed_sizes);
        fit.layout = CholeskyLayout(random_sizes);
        fit.phi.gamma = VectorXd::Zero(fit.fixed_groups.total());
        const auto& blocks = j.at("gamma_blocks");
        if (blocks.size() != fixed_sizes.size()) throw DatasetError("gamma block count does not match the bases");
        for (std::size_t k = 0; k < blocks.size(); ++k) {
            const VectorXd blk = detail::vector_from_json(blocks[k]);
            const auto K = static_cast<Index>(k);
            if (blk.size() != fit.fixed_groups.sizes[k]) throw DatasetError("gamma block size mismatch");
            fit.phi.gamma.segment(fit.fixed_groups.offsets[K], blk.size()) = blk;
        }
        fit.phi.ltilde = detail::vector_from_json(j.at("ltilde"));
        if (fit.phi.ltilde.size() != fit.layout.packed_size()) throw DatasetError("ltilde length mismatch");
        for (const auto& bi : j.at("b")) {
            fit.phi.b.push_back(detail::vector_from_json(bi));
            if (fit.phi.b.back().size() != fit.layout.dim()) throw DatasetError("b_i length mismatch");
        }
        fit.D_hat = detail::matrix_from_json(j.at("D_hat"));
        fit.phi.sigma2 = j.at("sigma2").get<double>();
        fit.phi.theta = j.at("theta").get<double>();
        fit.phi.theta_star = j.at("theta_star").get<double>();
        fit.selected_fixed = detail::from_one_based(j.at("selected_fixed"));
        fit.selected_random = detail::from_one_based(j.at("selected_random"));
        fit.log_posterior_trace = j.at("log_posterior_trace").get<std::vector<double>>();
        fit.iterations = j.at("iterations").get<int>();
        fit.converged = j.at("converged").get<bool>();
        fit.inner_nonconverged = j.at("inner_nonconverged").get<int>();
        fit.diff1 = j.at("diff1").get<double>();
        fit.diff2 = j.at("diff2").get<double>();
        fit.prior = prior_from_json(j.at("prior"));
        auto grid = j.at("curves").at("grid").get<std::vector<double>>();
        return {std::move(fit), std::move(grid)};
    } catch (const json::exception& e) {
        throw DatasetError(std::string("malformed fit JSON: ") + e.what());
    }
}

[[nodiscard]] inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// ---- curve and basis tables ----

/// s,beta1..betap
[[nodiscard]] inline std::string curves_csv(const FitResult& fit, std::span<const double> grid) {
    const MatrixXd c = fit.fixed_curves(grid);
    std::ostringstream out;
    out << 's';
    for (Index k = 0; k < c.cols(); ++k) out << ",beta" << k + 1;
    out << '\n';
    for (Index t = 0; t < c.rows(); ++t) {
        out << format_double(grid[static_cast<std::size_t>(t)]);
        for (Index k = 0; k < c.cols(); ++k) out << ',' << format_double(c(t, k));
        out << '\n';
    }
    return out.str();
}

/// cluster,s,u1..uq with clusters numbered from 1 in fit order.
[[nodiscard]] inline std::string random_curves_csv(const FitResult& fit, std::span<const double> grid) {
    std::ostringstream out;
    out << "cluster,s";
    for (std::size_t r = 0; r < fit.random_bases.size(); ++r) out << ",u" << r + 1;
    out << '\n';
    for (std::size_t i = 0; i < fit.phi.b.size(); ++i) {
        const MatrixXd u = fit.random_curves(static_cast<Index>(i), grid);
        for (Index t = 0; t < u.rows(); ++t) {
            out << i + 1 << ',' << format_double(grid[static_cast<std::size_t>(t)]);
            for (Index r = 0; r < u.cols(); ++r) out << ',' << format_double(u(t, r));
            out << '\n';
        }
    }
    return out.str();
}

/// s,B1..Bd
[[nodiscard]] inline std::string basis_csv(const BSplineBasis& basis, std::span<const double> grid) {
    const MatrixXd b = basis.evaluate_matrix(grid);
    std::ostringstream out;
    out << 's';
    for (Index j = 0; j < b.cols(); ++j) out << ",B" << j + 1;
    out << '\n';
    for (Index t = 0; t < b.rows(); ++t) {
        out << format_double(grid[static_cast<std::size_t>(t)]);
        for (Index j = 0; j < b.cols(); ++j) out << ',' << format_double(b(t, j));
        out << '\n';
    }
    return out.str();
}

// ---- tuning table ----

[[nodiscard]] inline std::string bic_table_csv(const std::vector<BicRow>& table) {
    std::ostringstream out;
    out << "lambda0,nu0,d,d_prime,bic,df,selected_fixed_count,selected_random_count,converged,iterations,"
           "log_posterior,selected_fixed,selected_random,failed,error\n";
    for (const auto& r : table) {
        out << format_double(r.lambda0) << ',' << format_double(r.nu0) << ',' << r.d << ',' << r.d_prime << ','
            << (r.failed ? std::string("NA") : format_double(r.bic)) << ',' << r.df << ',' << r.selected_fixed_count
            << ',' << r.selected_random_count << ',' << (r.converged ? 1 : 0) << ',' << r.iterations << ','
            << (r.failed ? std::string("NA") : format_double(r.log_posterior)) << ','
            << detail::join_one_based(r.selected_fixed) << ',' << detail::join_one_based(r.selected_random) << ','
            << (r.failed ? 1 : 0) << ',' << detail::csv_quote(r.error) << '\n';
    }
    return out.str();
}

// ---- study tables ----

namespace detail {

inline std::string rate_cell(const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); }

}  // namespace detail

/// One row per study, columns as in the published selection tables.
[[nodiscard]] inline std::string selection_table_csv(const StudyResult& res, int n) {
    std::ostringstream out;
    out << "Sample Size,Method,TPF,FPF,TPR,FPR\n";
    out << "n=" << n << ",MuFuMES," << detail::rate_cell(res.rates.tpf) << ',' << detail::rate_cell(res.rates.fpf)
        << ',' << detail::rate_cell(res.rates.tpr) << ',' << detail::rate_cell(res.rates.fpr) << '\n';
    return out.str();
}

[[nodiscard]] inline std::string mise_table_csv(const StudyResult& res, int n) {
    std::ostringstream out;
    out << "Sample Size";
    for (Index k : res.mise.coefficients) out << ",MISE beta" << k + 1;
    out << "\nn=" << n;
    for (double v : res.mise.mise) out << ',' << format_double(v);
    out << '\n';
    return out.str();
}

[[nodiscard]] inline std::string replications_csv(const StudyResult& res) {
    std::ostringstream out;
    out << "replicate,seed,failed,sigma_b,sigma_eps,lambda0,nu0,d,d_prime,bic,converged,iterations,"
           "selected_fixed,selected_random,TPF,FPF,TPR,FPR";
    for (Index k : res.mise.coefficients) out << ",ISE beta" << k + 1;
    out << ",error\n";
    for (const auto& r : res.records) {
        out << r.replicate << ',' << r.seed << ',' << (r.failed ? 1 : 0) << ',' << format_double(r.sigma_b) << ','
            << format_double(r.sigma_eps) << ',' << format_double(r.lambda0) << ',' << format_double(r.nu0) << ','
            << r.d << ',' << r.d_prime << ',' << format_double(r.bic) << ',' << (r.converged ? 1 : 0) << ','
            << r.iterations << ',' << detail::join_one_based(r.selected_fixed) << ','
            << detail::join_one_based(r.selected_random) << ',' << detail::rate_cell(r.rates.tpf) << ','
            << detail::rate_cell(r.rates.fpf) << ',' << detail::rate_cell(r.rates.tpr) << ','
            << detail::rate_cell(r.rates.fpr);
        for (std::size_t c = 0; c < res.mise.coefficients.size(); ++c) {
            out << ',' << (c < r.ise.size() ? format_double(r.ise[c]) : std::string("NA"));
        }
        out << ',' << detail::csv_quote(r.error) << '\n';
    }
    return out.str();
}

}  // namespace mufumes
