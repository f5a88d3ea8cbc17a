#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mufumes/ecm.hpp"
#include "mufumes/errors.hpp"
#include "mufumes/io.hpp"
#include "mufumes/simulation.hpp"
#include "mufumes/tuning.hpp"

namespace mufumes {

/**
 * Settings for every CLI command, read from a sectioned key = value file:
 *
 *   [section]
 *   key = value   # comment
 *
 * Every key is checked when it is read; errors name the file and line.
 * Overrides given on the command line go through the same checks.
 */
struct RunConfig {
    std::string data_input;
    std::string output_dir = ".";
    std::string fit_input;

    int d = 6;
    int d_prime = 4;
    std::vector<int> fixed_dims;   // per coefficient; empty means d everywhere
    std::vector<int> random_dims;  // per coefficient; empty means d' everywhere
    std::vector<Index> standardize_fixed;   // 0-based
    std::vector<Index> standardize_random;  // 0-based

    EcmConfig ecm;
    TuningGrid grid;
    ScenarioSpec scenario;
    int replications = 20;
    int quadrature_points = 201;
    std::optional<int> workers;

    int curve_points = 101;
    bool include_random = false;
    int basis_points = 101;
    int basis_size = 6;

    /// Where each key was last set ("file:line" or "command line").
    std::map<std::string, std::string> origins;

    [[nodiscard]] bool has(const std::string& key) const { return origins.count(key) > 0; }

    /// Sets `section.key` from text, checking its own constraints.
    void set(const std::string& key, const std::string& value, const std::string& origin);

    /// Applies "section.key=value".
    void apply_override(const std::string& assignment, const std::string& origin = "command line") {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ": expected section.key=value, got '" + assignment + "'");
        set(std::string(detail::trim(assignment.substr(0, eq))), std::string(detail::trim(assignment.substr(eq + 1))),
            origin);
    }

    void parse(std::istream& in, const std::string& source);

    void parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path);
        parse(in, path);
    }

    /// Cross-key checks that cannot be made one key at a time.
    void validate() const {
        auto where = [&](const std::string& key) {
            auto it = origins.find(key);
            return it == origins.end() ? std::string("config") : it->second;
        };
        try {
            ecm.validate();
        } catch (const ParameterError& e) {
            throw ConfigError(where("prior.lambda0") + ": " + e.what());
        }
        try {
            grid.validate();
        } catch (const ParameterError& e) {
            throw ConfigError(where("tuning.lambda0_grid") + ": " + e.what());
        }
    }

    [[nodiscard]] static std::vector<std::string> known_keys();
};

namespace detail {

struct ConfigValue {
    const std::string& text;
    const std::string& origin;
    const std::string& key;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError(origin + ": " + key + ": " + msg + " (got '" + text + "')");
    }

    [[nodiscard]] double real() const {
        const auto v = parse_double(text);
        if (!v || std::isnan(*v)) fail("expected a number");
        return *v;
    }
    [[nodiscard]] double positive() const {
        const double v = real();
        if (!(v > 0.0) || !std::isfinite(v)) fail("must be a positive finite number");
        return v;
    }
    [[nodiscard]] long long integer(long long lo, long long hi = std::numeric_limits<int>::max()) const {
        const auto v = parse_integer(text);
        if (!v) fail("expected an integer");
        if (*v < lo || *v > hi) fail("must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        return *v;
    }
    [[nodiscard]] bool boolean() const {
        if (text == "true" || text == "yes" || text == "1" || text == "on") return true;
        if (text == "false" || text == "no" || text == "0" || text == "off") return false;
        fail("expected true or false");
    }
    [[nodiscard]] std::vector<std::string> items() const {
        std::vector<std::string> out;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto t = trim(item);
            if (t.empty()) fail("empty list item");
            out.emplace_back(t);
        }
        if (out.empty()) fail("list must not be empty");
        return out;
    }
    [[nodiscard]] std::vector<double> decreasing_grid() const {
        std::vector<double> out;
        for (const auto& item : items()) {
            const auto v = parse_double(item);
            if (!v || !(*v > 0.0) || !std::isfinite(*v)) fail("grid values must be positive numbers");
            if (!out.empty() && *v > out.back()) fail("grid must be non-increasing");
            out.push_back(*v);
        }
        return out;
    }
    /// 1-based column numbers in, 0-based indices out.
    [[nodiscard]] std::vector<Index> columns() const {
        std::vector<Index> out;
        for (const auto& item : items()) {
            const auto v = parse_integer(item);
            if (!v || *v < 1) fail("column numbers must be integers >= 1");
            out.push_back(static_cast<Index>(*v - 1));
        }
        return out;
    }
    [[nodiscard]] std::vector<int> basis_sizes() const {
        std::vector<int> out;
        for (const auto& item : items()) {
            const auto v = parse_integer(item);
            if (!v || *v < 4 || *v > 1000) fail("basis sizes must be integers in [4, 1000]");
            out.push_back(static_cast<int>(*v));
        }
        return out;
    }
};

using ConfigSetter = std::function<void(RunConfig&, const ConfigValue&)>;

inline const std::map<std::string, ConfigSetter>& config_schema() {
    static const std::map<std::string, ConfigSetter> schema = [] {
        std::map<std::string, ConfigSetter> s;
        s["data.input"] = [](RunConfig& c, const ConfigValue& v) { c.data_input = v.text; };
        s["data.standardize_fixed"] = [](RunConfig& c, const ConfigValue& v) { c.standardize_fixed = v.columns(); };
        s["data.standardize_random"] = [](RunConfig& c, const ConfigValue& v) { c.standardize_random = v.columns(); };
        s["output.dir"] = [](RunConfig& c, const ConfigValue& v) {
            if (v.text.empty()) v.fail("must not be empty");
            c.output_dir = v.text;
        };
        s["curves.fit"] = [](RunConfig& c, const ConfigValue& v) { c.fit_input = v.text; };
        s["curves.points"] = [](RunConfig& c, const ConfigValue& v) {
            c.curve_points = static_cast<int>(v.integer(2, 1000000));
        };
        s["curves.include_random"] = [](RunConfig& c, const ConfigValue& v) { c.include_random = v.boolean(); };

        s["basis.d"] = [](RunConfig& c, const ConfigValue& v) { c.d = static_cast<int>(v.integer(4, 1000)); };
        s["basis.d_prime"] = [](RunConfig& c, const ConfigValue& v) {
            c.d_prime = static_cast<int>(v.integer(4, 1000));
        };
        s["basis.fixed_dims"] = [](RunConfig& c, const ConfigValue& v) { c.fixed_dims = v.basis_sizes(); };
        s["basis.random_dims"] = [](RunConfig& c, const ConfigValue& v) { c.random_dims = v.basis_sizes(); };
        s["basis.size"] = [](RunConfig& c, const ConfigValue& v) {
            c.basis_size = static_cast<int>(v.integer(4, 1000));
        };
        s["basis.points"] = [](RunConfig& c, const ConfigValue& v) {
            c.basis_points = static_cast<int>(v.integer(2, 1000000));
        };

        s["prior.lambda0"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.prior.lambda0 = v.positive(); };
        s["prior.lambda1"] = [](RunConfig& c, const ConfigValue& v) {
            c.ecm.prior.lambda1 = v.positive();
            c.grid.lambda1 = c.ecm.prior.lambda1;
        };
        s["prior.nu0"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.prior.nu0 = v.positive(); };
        s["prior.nu1"] = [](RunConfig& c, const ConfigValue& v) {
            c.ecm.prior.nu1 = v.positive();
            c.grid.nu1 = c.ecm.prior.nu1;
        };
        s["prior.a0"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.prior.a0 = v.positive(); };
        s["prior.b0"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.prior.b0 = v.positive(); };
        s["prior.a1"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.prior.a1 = v.positive(); };
        s["prior.b1"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.prior.b1 = v.positive(); };
        s["prior.c0"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.prior.c0 = v.positive(); };
        s["prior.d0"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.prior.d0 = v.positive(); };
        s["prior.scale_random_spike"] = [](RunConfig& c, const ConfigValue& v) {
            c.ecm.prior.scale_random_spike = v.boolean();
        };

        s["ecm.eps1"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.eps1 = v.positive(); };
        s["ecm.eps2"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.eps2 = v.positive(); };
        s["ecm.max_iter"] = [](RunConfig& c, const ConfigValue& v) {
            c.ecm.max_iter = static_cast<int>(v.integer(1));
        };
        s["ecm.inner_tol"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.inner_tol = v.positive(); };
        s["ecm.inner_max_iter"] = [](RunConfig& c, const ConfigValue& v) {
            c.ecm.inner_max_iter = static_cast<int>(v.integer(1));
        };
        s["ecm.sigma2_floor"] = [](RunConfig& c, const ConfigValue& v) { c.ecm.sigma2_floor = v.positive(); };
        s["ecm.init"] = [](RunConfig& c, const ConfigValue& v) {
            if (v.text == "moments") {
                c.ecm.init = InitStrategy::Moments;
            } else if (v.text == "identity") {
                c.ecm.init = InitStrategy::Identity;
            } else {
                v.fail("expected moments or identity");
            }
        };

        s["tuning.lambda0_grid"] = [](RunConfig& c, const ConfigValue& v) { c.grid.lambda0_grid = v.decreasing_grid(); };
        s["tuning.nu0_grid"] = [](RunConfig& c, const ConfigValue& v) { c.grid.nu0_grid = v.decreasing_grid(); };
        s["tuning.basis_dims"] = [](RunConfig& c, const ConfigValue& v) {
            std::vector<std::pair<int, int>> dims;
            for (const auto& item : v.items()) {
                const auto x = item.find('x');
                const auto a = x == std::string::npos ? std::nullopt : parse_integer(item.substr(0, x));
                const auto b = x == std::string::npos ? std::nullopt : parse_integer(item.substr(x + 1));
                if (!a || !b || *a < 4 || *b < 4 || *a > 1000 || *b > 1000) {
                    v.fail("expected a list like 6x4,8x5 with sizes in [4, 1000]");
                }
                dims.emplace_back(static_cast<int>(*a), static_cast<int>(*b));
            }
            c.grid.basis_dims = std::move(dims);
        };

        s["scenario.scenario"] = [](RunConfig& c, const ConfigValue& v) {
            if (v.text != "A" && v.text != "B") v.fail("expected A or B");
            c.scenario.scenario = parse_scenario(v.text);
        };
        s["scenario.n"] = [](RunConfig& c, const ConfigValue& v) { c.scenario.n = static_cast<int>(v.integer(2)); };
        s["scenario.J"] = [](RunConfig& c, const ConfigValue& v) { c.scenario.J = static_cast<int>(v.integer(1)); };
        s["scenario.m"] = [](RunConfig& c, const ConfigValue& v) { c.scenario.m = static_cast<int>(v.integer(2)); };
        s["scenario.snr_b"] = [](RunConfig& c, const ConfigValue& v) { c.scenario.snr_b = v.positive(); };
        s["scenario.snr_eps"] = [](RunConfig& c, const ConfigValue& v) {
            if (v.text == "inf") {
                c.scenario.snr_eps = std::numeric_limits<double>::infinity();
                return;
            }
            c.scenario.snr_eps = v.positive();
        };
        s["scenario.seed"] = [](RunConfig& c, const ConfigValue& v) {
            const auto u = parse_integer(v.text);
            if (!u || *u < 0) v.fail("expected a non-negative integer");
            c.scenario.seed = static_cast<std::uint64_t>(*u);
        };

        s["study.replications"] = [](RunConfig& c, const ConfigValue& v) {
            c.replications = static_cast<int>(v.integer(1));
        };
        s["study.quadrature_points"] = [](RunConfig& c, const ConfigValue& v) {
            c.quadrature_points = static_cast<int>(v.integer(2, 1000000));
        };

        s["run.workers"] = [](RunConfig& c, const ConfigValue& v) { c.workers = static_cast<int>(v.integer(1, 4096)); };
        return s;
    }();
    return schema;
}

}  // namespace detail

inline std::vector<std::string> RunConfig::known_keys() {
    std::vector<std::string> out;
    for (const auto& [k, _] : detail::config_schema()) out.push_back(k);
    return out;
}

inline void RunConfig::set(const std::string& key, const std::string& value, const std::string& origin) {
    const auto& schema = detail::config_schema();
    const auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError(origin + ": unknown key '" + key + "'");
    it->second(*this, detail::ConfigValue{value, origin, key});
    origins[key] = origin;
}

inline void RunConfig::parse(std::istream& in, const std::string& source) {
    std::string line;
    std::string section;
    std::map<std::string, int> seen;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = source + ":" + std::to_string(lineno);
        const auto hash = line.find('#');
        const std::string_view body = detail::trim(std::string_view(line).substr(0, hash));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') throw ConfigError(where + ": malformed section header");
            section = std::string(detail::trim(body.substr(1, body.size() - 2)));
            if (section.empty()) throw ConfigError(where + ": empty section name");
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
        const std::string name(detail::trim(body.substr(0, eq)));
        if (name.empty()) throw ConfigError(where + ": missing key name");
        if (section.empty()) throw ConfigError(where + ": key '" + name + "' appears before any [section]");
        const std::string key = section + "." + name;
        if (auto prev = seen.find(key); prev != seen.end()) {
            throw ConfigError(where + ": duplicate key '" + key + "' (first set on line " +
                              std::to_string(prev->second) + ")");
        }
        seen[key] = lineno;
        set(key, std::string(detail::trim(body.substr(eq + 1))), where);
    }
}

}  // namespace mufumes
