#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "mufumes/simulation.hpp"

using namespace mufumes;

namespace {

double sd(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

bool same_dataset(const RawDataset& a, const RawDataset& b) {
    if (a.grid != b.grid || a.p != b.p || a.q != b.q || a.clusters.size() != b.clusters.size()) return false;
    for (std::size_t i = 0; i < a.clusters.size(); ++i) {
        const auto& ca = a.clusters[i];
        const auto& cb = b.clusters[i];
        if (ca.id != cb.id || ca.replicates.size() != cb.replicates.size()) return false;
        for (std::size_t j = 0; j < ca.replicates.size(); ++j) {
            const auto& ra = ca.replicates[j];
            const auto& rb = cb.replicates[j];
            if (ra.y != rb.y || ra.x != rb.x || ra.z != rb.z) return false;
        }
    }
    return true;
}

}  // namespace

TEST(TrueBeta, Examples) {
    EXPECT_NEAR(true_beta(Scenario::A, 0, 0.25), 8.0, 1e-14);
    EXPECT_DOUBLE_EQ(true_beta(Scenario::A, 3, 0.0), 3.0);
    EXPECT_NEAR(true_beta(Scenario::A, 1, 0.6), 2.0 / (0.15 * std::sqrt(2 * std::numbers::pi)), 1e-13);
    EXPECT_NEAR(true_beta(Scenario::A, 1, 0.6), 5.3192, 1e-4);
    EXPECT_NEAR(true_beta(Scenario::A, 2, 0.6), 1.25 * true_beta(Scenario::A, 1, 0.6), 1e-13);
    EXPECT_NEAR(true_beta(Scenario::B, 4, 0.125), 5.0 * std::sqrt(2.0), 1e-13);
    for (Index k = 5; k < 11; ++k) EXPECT_EQ(true_beta(Scenario::B, k, 0.3), 0.0);
    EXPECT_THROW((void)true_beta(Scenario::A, 8, 0.5), InvalidDimension);
    EXPECT_NO_THROW((void)true_beta(Scenario::B, 10, 0.5));
    EXPECT_THROW((void)true_beta(Scenario::B, 11, 0.5), InvalidDimension);
}

TEST(Generate, ShapesPerScenario) {
    ScenarioSpec spec;
    spec.n = 4;
    spec.J = 3;
    spec.m = 7;
    const auto [a, ta] = generate(spec);
    EXPECT_EQ(a.p, 8);
    EXPECT_EQ(a.q, 8);
    EXPECT_EQ(a.clusters.size(), 4u);
    EXPECT_EQ(a.grid, equispaced_grid(7));
    EXPECT_EQ(a.num_observations(), 4 * 3 * 7);
    for (const auto& c : a.clusters) {
        for (const auto& r : c.replicates) {
            EXPECT_EQ(r.x, r.z);
            EXPECT_EQ(r.x(0), 1.0);
        }
    }
    spec.scenario = Scenario::B;
    const auto [b, tb] = generate(spec);
    EXPECT_EQ(b.p, 11);
    EXPECT_EQ(b.q, 8);
    EXPECT_EQ(tb.true_fixed_support, (std::vector<Index>{0, 1, 2, 3, 4}));
    EXPECT_EQ(tb.true_random_support, (std::vector<Index>{0, 3}));
    const auto& r = b.clusters[0].replicates[0];
    EXPECT_EQ(r.z(0), 1.0);
    EXPECT_NE(r.x.tail(7), r.z.tail(7));
    EXPECT_NO_THROW(b.validate());
}

TEST(Generate, DeterministicPerSeed) {
    ScenarioSpec spec;
    spec.n = 6;
    spec.seed = 99;
    const auto a = generate(spec);
    const auto b = generate(spec);
    EXPECT_TRUE(same_dataset(a.first, b.first));
    EXPECT_EQ(a.second.sigma_b, b.second.sigma_b);
    EXPECT_EQ(a.second.sigma_eps, b.second.sigma_eps);
    spec.seed = 100;
    EXPECT_FALSE(same_dataset(a.first, generate(spec).first));
}

TEST(Generate, SignalToNoiseRecomputedIndependently) {
    for (auto scenario : {Scenario::A, Scenario::B}) {
        ScenarioSpec spec;
        spec.scenario = scenario;
        spec.seed = 5;
        const auto [raw, truth] = generate(spec);
        std::vector<double> fixed, random, predictor, noise;
        for (std::size_t i = 0; i < raw.clusters.size(); ++i) {
            for (const auto& rep : raw.clusters[i].replicates) {
                for (std::size_t t = 0; t < raw.grid.size(); ++t) {
                    const double s = raw.grid[t];
                    double f = 0.0, u = 0.0;
                    for (Index k = 0; k < raw.p; ++k) f += rep.x(k) * truth.beta(k, s);
                    for (Index r = 0; r < raw.q; ++r) u += rep.z(r) * truth.random_effect(static_cast<Index>(i), r, s);
                    fixed.push_back(f);
                    random.push_back(u);
                    predictor.push_back(f + u);
                    noise.push_back(rep.y(static_cast<Index>(t)) - f - u);
                }
            }
        }
        EXPECT_NEAR(sd(fixed) / sd(random), 0.5, 0.005);
        EXPECT_NEAR(sd(predictor) / truth.sigma_eps, 4.0, 0.04);
        EXPECT_NEAR(truth.realized_snr_b, 0.5, 1e-12);
        EXPECT_NEAR(truth.realized_snr_eps, 4.0, 1e-12);
        // The realized noise has the calibrated scale up to sampling error.
        EXPECT_NEAR(sd(noise) / truth.sigma_eps, 1.0, 0.05);
    }
}

TEST(Generate, NoiselessLimitIsExactPredictor) {
    ScenarioSpec spec;
    spec.n = 5;
    spec.snr_eps = std::numeric_limits<double>::infinity();
    const auto [raw, truth] = generate(spec);
    EXPECT_EQ(truth.sigma_eps, 0.0);
    for (std::size_t i = 0; i < raw.clusters.size(); ++i) {
        for (const auto& rep : raw.clusters[i].replicates) {
            for (std::size_t t = 0; t < raw.grid.size(); ++t) {
                const double s = raw.grid[t];
                double f = 0.0;
                for (Index k = 0; k < raw.p; ++k) f += rep.x(k) * truth.beta(k, s);
                for (Index r = 0; r < raw.q; ++r) f += rep.z(r) * truth.random_effect(static_cast<Index>(i), r, s);
                EXPECT_NEAR(rep.y(static_cast<Index>(t)), f, 1e-12 * std::max(1.0, std::abs(f)));
            }
        }
    }
}

TEST(Generate, RandomEffectsOnlyOnSupport) {
    ScenarioSpec spec;
    spec.n = 5;
    const auto [raw, truth] = generate(spec);
    for (Index i = 0; i < 5; ++i) {
        for (Index r = 0; r < 8; ++r) {
            for (double s : raw.grid) {
                const double u = truth.random_effect(i, r, s);
                if (r != 0 && r != 3) {
                    EXPECT_EQ(u, 0.0);
                }
            }
        }
        EXPECT_NE(truth.random_effect(i, 0, 0.3), 0.0);
        EXPECT_NE(truth.random_effect(i, 3, 0.3), 0.0);
    }
}

TEST(Generate, RandomEffectScalesFollowSigmaB) {
    ScenarioSpec spec;
    spec.n = 4000;
    spec.J = 1;
    spec.m = 2;
    const auto [raw, truth] = generate(spec);
    std::vector<double> c1, d1, f4;
    for (const auto& e : truth.effects) {
        c1.push_back(e.intercept[0]);
        d1.push_back(e.intercept[1]);
        f4.push_back(e.slope4[3]);
    }
    EXPECT_NEAR(sd(c1) / truth.sigma_b, 3.0, 0.15);
    EXPECT_NEAR(sd(d1) / truth.sigma_b, 1.5, 0.075);
    EXPECT_NEAR(sd(f4) / truth.sigma_b, 0.25, 0.0125);
}

TEST(Generate, MoreClustersExtendCovariates) {
    ScenarioSpec small;
    small.n = 5;
    ScenarioSpec large = small;
    large.n = 9;
    const auto a = generate(small).first;
    const auto b = generate(large).first;
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < a.clusters[i].replicates.size(); ++j) {
            EXPECT_EQ(a.clusters[i].replicates[j].x, b.clusters[i].replicates[j].x);
            EXPECT_EQ(a.clusters[i].replicates[j].z, b.clusters[i].replicates[j].z);
        }
    }
}

TEST(Generate, InvalidSpecs) {
    ScenarioSpec spec;
    spec.n = 1;
    EXPECT_THROW((void)generate(spec), ParameterError);
    spec = ScenarioSpec{};
    spec.m = 1;
    EXPECT_THROW((void)generate(spec), ParameterError);
    spec = ScenarioSpec{};
    spec.snr_b = 0.0;
    EXPECT_THROW((void)generate(spec), ParameterError);
    EXPECT_THROW((void)parse_scenario("C"), ParameterError);
    EXPECT_EQ(parse_scenario("b"), Scenario::B);
    EXPECT_EQ(to_string(Scenario::A), "A");
}
