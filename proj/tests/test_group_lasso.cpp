#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mufumes/group_lasso.hpp"
#include "test_util.hpp"

using namespace mufumes;
using namespace mufumes::group_lasso;
using mufumes::testing::fista_group_lasso;
using mufumes::testing::random_matrix;
using mufumes::testing::random_vector;

namespace {

Problem random_problem(std::mt19937_64& gen, Index rows, std::vector<Index> sizes, double weight_scale) {
    Problem prob;
    prob.groups = GroupPartition(sizes);
    const Index P = prob.groups.total();
    prob.design = random_matrix(gen, rows, P);
    // Correlated columns within each block exercise the non-orthogonal block update.
    for (Index g = 0; g < prob.groups.num_groups(); ++g) {
        for (Index k = 1; k < prob.groups.sizes[g]; ++k) {
            const Index c = prob.groups.offsets[g] + k;
            prob.design.col(c) += 0.5 * prob.design.col(c - 1);
        }
    }
    VectorXd truth = VectorXd::Zero(P);
    for (Index g = 0; g < prob.groups.num_groups(); g += 2) {
        truth.segment(prob.groups.offsets[g], prob.groups.sizes[g]) = random_vector(gen, prob.groups.sizes[g]);
    }
    prob.response = prob.design * truth + random_vector(gen, rows, 0.5);
    std::uniform_real_distribution<double> u(0.2, 1.0);
    prob.weights = VectorXd::NullaryExpr(prob.groups.num_groups(), [&] { return weight_scale * u(gen); });
    return prob;
}

}  // namespace

TEST(GroupLasso, ZeroWeightsGiveLeastSquares) {
    std::mt19937_64 gen(1);
    auto prob = random_problem(gen, 40, {3, 2, 4}, 1.0);
    prob.weights.setZero();
    const auto sol = solve(prob);
    const VectorXd ls = prob.design.colPivHouseholderQr().solve(prob.response);
    EXPECT_TRUE(sol.converged);
    EXPECT_LT((sol.coefficients - ls).cwiseAbs().maxCoeff(), 1e-6 * ls.cwiseAbs().maxCoeff());
}

TEST(GroupLasso, LargeWeightsShrinkEverything) {
    std::mt19937_64 gen(2);
    auto prob = random_problem(gen, 30, {2, 3, 1}, 1.0);
    for (Index g = 0; g < 3; ++g) {
        const auto seg = prob.groups.offsets[g];
        prob.weights(g) = 2.0 * (prob.design.middleCols(seg, prob.groups.sizes[g]).transpose() * prob.response).norm();
    }
    const auto sol = solve(prob);
    EXPECT_TRUE(sol.converged);
    EXPECT_EQ(sol.iterations, 1);
    for (Index k = 0; k < sol.coefficients.size(); ++k) EXPECT_EQ(sol.coefficients(k), 0.0);
    EXPECT_DOUBLE_EQ(sol.objective, prob.response.squaredNorm());
}

TEST(GroupLasso, OrthonormalDesignClosedForm) {
    std::mt19937_64 gen(3);
    const MatrixXd Q = random_matrix(gen, 25, 7).householderQr().householderQ() * MatrixXd::Identity(25, 7);
    Problem prob{Q, random_vector(gen, 25, 2.0), GroupPartition({3, 1, 3}), Eigen::Vector3d(1.0, 0.5, 30.0)};
    const auto sol = solve(prob);
    for (Index g = 0; g < 3; ++g) {
        const auto off = prob.groups.offsets[g];
        const auto len = prob.groups.sizes[g];
        const VectorXd z = Q.middleCols(off, len).transpose() * prob.response;
        const double shrink = std::max(0.0, 1.0 - 0.5 * prob.weights(g) / z.norm());
        const VectorXd expected = shrink * z;
        EXPECT_LT((sol.coefficients.segment(off, len) - expected).cwiseAbs().maxCoeff(), 1e-10) << g;
    }
    EXPECT_EQ(sol.coefficients.tail(3), VectorXd::Zero(3));
}

TEST(GroupLasso, MatchesProximalGradientOracle) {
    std::mt19937_64 gen(4);
    for (int rep = 0; rep < 30; ++rep) {
        const auto prob = random_problem(gen, 60, {4, 4, 3, 1, 5, 2}, 5.0 + 10.0 * rep);
        const auto sol = solve(prob);
        const VectorXd ref = fista_group_lasso(prob.design, prob.response, prob.groups, prob.weights);
        const double f_ref = objective(prob, ref);
        EXPECT_TRUE(sol.converged);
        EXPECT_LE(std::abs(sol.objective - f_ref), 1e-6 * std::abs(f_ref)) << rep;
        // Strictly convex problem: minimizers coincide.
        EXPECT_LT((sol.coefficients - ref).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, ref.cwiseAbs().maxCoeff()))
            << rep;
        EXPECT_LE(sol.kkt_residual, 1e-6);
    }
}

TEST(GroupLasso, ObjectiveAgreesBetweenForms) {
    std::mt19937_64 gen(5);
    const auto prob = random_problem(gen, 20, {2, 2}, 3.0);
    const auto gram = to_gram(prob);
    const VectorXd beta = random_vector(gen, 4);
    EXPECT_NEAR(objective(prob, beta), objective(gram, beta), 1e-10 * objective(prob, beta));
    const auto a = solve(prob);
    const auto b = solve(gram);
    EXPECT_EQ(a.coefficients, b.coefficients);
}

TEST(GroupLasso, KktExamples) {
    // One scalar group: ||y - b||^2 + w|b| with y = 3, w = 2 has minimizer b = 2.
    Problem prob{MatrixXd::Identity(1, 1), VectorXd::Constant(1, 3.0), GroupPartition({1}), VectorXd::Constant(1, 2.0)};
    EXPECT_NEAR(kkt_check(prob, VectorXd::Constant(1, 2.0)).max_violation, 0.0, 1e-15);
    const auto at_zero = kkt_check(prob, VectorXd::Zero(1));
    EXPECT_EQ(at_zero.status[0], BlockStatus::Zero);
    EXPECT_NEAR(at_zero.max_violation, 4.0, 1e-15);
    prob.weights(0) = 6.0;
    EXPECT_TRUE(kkt_check(prob, VectorXd::Zero(1), 1e-12).satisfied);
    EXPECT_NEAR(solve(prob).coefficients(0), 0.0, 0.0);
    prob.weights(0) = 2.0;
    EXPECT_NEAR(solve(prob).coefficients(0), 2.0, 1e-14);
}

TEST(GroupLasso, KktViolationGrowsWithPerturbation) {
    std::mt19937_64 gen(6);
    const auto prob = random_problem(gen, 50, {3, 3, 3}, 20.0);
    const auto sol = solve(prob);
    EXPECT_LE(sol.kkt_residual, 1e-7);
    const VectorXd dir = random_vector(gen, 9);
    double prev = sol.kkt_residual;
    for (double eps : {1e-4, 1e-3, 1e-2, 1e-1}) {
        const double v = kkt_check(prob, VectorXd(sol.coefficients + eps * dir)).max_violation;
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(GroupLasso, InactiveBlocksAreExactZeros) {
    std::mt19937_64 gen(7);
    for (int rep = 0; rep < 20; ++rep) {
        const auto prob = random_problem(gen, 40, {2, 3, 2, 3}, 40.0);
        const auto sol = solve(prob);
        const auto report = kkt_check(prob, sol.coefficients);
        for (Index g = 0; g < 4; ++g) {
            const auto seg = sol.coefficients.segment(prob.groups.offsets[g], prob.groups.sizes[g]);
            if (report.status[static_cast<std::size_t>(g)] == BlockStatus::Zero) {
                for (Index k = 0; k < seg.size(); ++k) EXPECT_EQ(std::signbit(seg(k)) ? -seg(k) : seg(k), 0.0);
            } else {
                EXPECT_GT(seg.norm(), 1e-8);
            }
        }
    }
}

TEST(GroupLasso, PenaltyNonIncreasingInWeightScale) {
    std::mt19937_64 gen(8);
    const auto base = random_problem(gen, 50, {3, 2, 4, 1}, 1.0);
    double prev_pen = std::numeric_limits<double>::infinity();
    double prev_fit = -1.0;
    for (double scale : {1.0, 5.0, 20.0, 60.0, 150.0, 400.0}) {
        auto prob = base;
        prob.weights *= scale;
        const auto sol = solve(prob, std::nullopt, Options{1e-12, 100000});
        double pen = 0.0;
        for (Index g = 0; g < 4; ++g) {
            pen += base.weights(g) * sol.coefficients.segment(prob.groups.offsets[g], prob.groups.sizes[g]).norm();
        }
        const double fit = (prob.response - prob.design * sol.coefficients).squaredNorm();
        EXPECT_LE(pen, prev_pen * (1 + 1e-9) + 1e-12);
        EXPECT_GE(fit, prev_fit * (1 - 1e-9));
        prev_pen = pen;
        prev_fit = fit;
    }
}

TEST(GroupLasso, ObjectiveNonIncreasingPerSweep) {
    std::mt19937_64 gen(9);
    for (int rep = 0; rep < 10; ++rep) {
        const auto prob = random_problem(gen, 30, {4, 2, 3, 3}, 8.0);
        const auto sol = solve(prob);
        const double f0 = objective(prob, VectorXd::Zero(12));
        ASSERT_FALSE(sol.objective_trace.empty());
        EXPECT_LE(sol.objective_trace.front(), f0 * (1 + 1e-12));
        for (std::size_t k = 1; k < sol.objective_trace.size(); ++k) {
            EXPECT_LE(sol.objective_trace[k], sol.objective_trace[k - 1] + 1e-10 * std::abs(f0));
        }
        // Truncated runs reproduce the prefix of the full run.
        double prev = f0;
        for (int cap : {1, 2, 3}) {
            const auto part = solve(prob, std::nullopt, Options{1e-7, cap});
            EXPECT_LE(part.objective, prev + 1e-10 * std::abs(f0));
            if (static_cast<std::size_t>(cap) <= sol.objective_trace.size()) {
                EXPECT_NEAR(part.objective, sol.objective_trace[static_cast<std::size_t>(cap - 1)], 1e-9 * std::abs(f0));
            }
            prev = part.objective;
        }
    }
}

TEST(GroupLasso, MaxIterReturnsUnconvergedIterate) {
    std::mt19937_64 gen(10);
    const auto prob = random_problem(gen, 30, {4, 4}, 1.0);
    const auto sol = solve(prob, std::nullopt, Options{1e-15, 1});
    EXPECT_EQ(sol.iterations, 1);
    EXPECT_FALSE(sol.converged);
    EXPECT_TRUE(sol.coefficients.allFinite());
}

TEST(GroupLasso, WarmStartAtSolutionStopsImmediately) {
    std::mt19937_64 gen(11);
    const auto prob = random_problem(gen, 40, {2, 2, 2}, 10.0);
    const auto cold = solve(prob);
    const auto warm = solve(prob, cold.coefficients);
    EXPECT_LE(warm.iterations, 2);
    EXPECT_LT((warm.coefficients - cold.coefficients).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(GroupLasso, MixedSizesWithUnpenalizedGroup) {
    std::mt19937_64 gen(12);
    auto prob = random_problem(gen, 80, {1, 6, 2, 1, 4}, 30.0);
    prob.weights(1) = 0.0;
    const auto sol = solve(prob);
    const VectorXd ref = fista_group_lasso(prob.design, prob.response, prob.groups, prob.weights, 40000);
    EXPECT_LE(std::abs(sol.objective - objective(prob, ref)), 1e-6 * objective(prob, ref));
    EXPECT_GT(sol.coefficients.segment(1, 6).norm(), 0.0);
    EXPECT_LE(sol.kkt_residual, 1e-6);
}

TEST(GroupLasso, InputErrors) {
    std::mt19937_64 gen(13);
    auto prob = random_problem(gen, 10, {2, 2}, 1.0);
    auto bad = prob;
    bad.design(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW((void)solve(bad), NumericError);
    bad = prob;
    bad.response(3) = std::numeric_limits<double>::infinity();
    EXPECT_THROW((void)solve(bad), NumericError);
    bad = prob;
    bad.weights(1) = -1.0;
    EXPECT_THROW((void)solve(bad), NumericError);
    bad = prob;
    bad.weights.resize(3);
    EXPECT_THROW((void)solve(bad), InvalidDimension);
    bad = prob;
    bad.groups = GroupPartition({2, 3});
    EXPECT_THROW((void)solve(bad), InvalidDimension);
    EXPECT_THROW((void)solve(prob, VectorXd(VectorXd::Zero(3))), InvalidDimension);
    EXPECT_THROW((void)solve(prob, std::nullopt, Options{0.0, 10}), ParameterError);
}
