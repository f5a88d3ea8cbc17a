#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <unsupported/Eigen/KroneckerProduct>

#include "mufumes/model_core.hpp"
#include "test_util.hpp"

using namespace mufumes;
using mufumes::testing::random_dataset;
using mufumes::testing::random_matrix;
using mufumes::testing::random_vector;

namespace {

RawDataset single_replicate(const std::vector<double>& grid, const VectorXd& x, const VectorXd& z) {
    RawDataset raw;
    raw.grid = grid;
    raw.p = x.size();
    raw.q = z.size();
    RawCluster c;
    c.id = 1;
    c.replicates.push_back({VectorXd::Zero(static_cast<Index>(grid.size())), x, z});
    raw.clusters.push_back(c);
    return raw;
}

/// Column-major vec.
VectorXd vec(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

}  // namespace

TEST(Assembly, InterceptTimesClampedBasis) {
    const auto raw = single_replicate({0.0, 1.0}, VectorXd::Ones(1), VectorXd::Ones(1));
    const auto data = assemble_design(raw, 4, 4);
    const auto& X = data.clusters[0].x;
    ASSERT_EQ(X.rows(), 2);
    ASSERT_EQ(X.cols(), 4);
    EXPECT_EQ(VectorXd(X.row(0).transpose()), Eigen::Vector4d(1, 0, 0, 0));
    EXPECT_EQ(VectorXd(X.row(1).transpose()), Eigen::Vector4d(0, 0, 0, 1));
}

TEST(Assembly, CovariateMajorOrdering) {
    const auto raw = single_replicate({0.0, 1.0}, Eigen::Vector2d(1, 2), VectorXd::Ones(1));
    const auto data = assemble_design(raw, 4, 4);
    VectorXd expected(8);
    expected << 1, 0, 0, 0, 2, 0, 0, 0;
    EXPECT_EQ(VectorXd(data.clusters[0].x.row(0).transpose()), expected);
}

TEST(Assembly, MatchesDirectDoubleLoop) {
    std::mt19937_64 gen(17);
    const auto raw = random_dataset(gen, 2, 2, 3, 2, 2);
    const auto data = assemble_design(raw, 4, 4);
    const VectorXd gamma = random_vector(gen, 8);
    const auto basis = make_cubic_basis(4);
    for (std::size_t i = 0; i < raw.clusters.size(); ++i) {
        const VectorXd fitted = data.clusters[i].x * gamma;
        for (int j = 0; j < 2; ++j) {
            const auto& rep = raw.clusters[i].replicates[static_cast<std::size_t>(j)];
            for (int t = 0; t < 3; ++t) {
                double direct = 0.0;
                const VectorXd B = basis.evaluate(raw.grid[static_cast<std::size_t>(t)]);
                for (int k = 0; k < 2; ++k) {
                    for (int u = 0; u < 4; ++u) direct += rep.x(k) * gamma(k * 4 + u) * B(u);
                }
                EXPECT_NEAR(fitted(j * 3 + t), direct, 1e-12);
            }
        }
    }
}

TEST(Assembly, CachedCrossProductsAndCounts) {
    std::mt19937_64 gen(2);
    const auto raw = random_dataset(gen, 3, 2, 5, 3, 2);
    const auto data = assemble_design(raw, 5, 4);
    EXPECT_EQ(data.num_obs, 3 * 2 * 5);
    EXPECT_EQ(data.fixed_dim(), 15);
    EXPECT_EQ(data.random_dim(), 8);
    MatrixXd xtx = MatrixXd::Zero(15, 15);
    for (const auto& c : data.clusters) {
        EXPECT_LT((c.ztz - c.z.transpose() * c.z).norm(), 1e-12);
        EXPECT_LT((c.ztx - c.z.transpose() * c.x).norm(), 1e-12);
        EXPECT_LT((c.zty - c.z.transpose() * c.y).norm(), 1e-12);
        EXPECT_LT((c.xty - c.x.transpose() * c.y).norm(), 1e-12);
        xtx += c.x.transpose() * c.x;
    }
    EXPECT_LT((data.xtx - xtx).norm(), 1e-10);
}

TEST(Assembly, ResponsesDoNotChangeDesigns) {
    std::mt19937_64 gen(8);
    const auto a = random_dataset(gen, 2, 2, 4, 2, 2);
    auto b = a;
    for (auto& c : b.clusters) {
        for (auto& r : c.replicates) r.y = random_vector(gen, 4);
    }
    auto sum = a;
    for (std::size_t i = 0; i < sum.clusters.size(); ++i) {
        for (std::size_t j = 0; j < sum.clusters[i].replicates.size(); ++j) {
            sum.clusters[i].replicates[j].y += b.clusters[i].replicates[j].y;
        }
    }
    const auto da = assemble_design(a, 4, 4);
    const auto ds = assemble_design(sum, 4, 4);
    for (std::size_t i = 0; i < da.clusters.size(); ++i) {
        EXPECT_EQ(da.clusters[i].x, ds.clusters[i].x);
        EXPECT_EQ(da.clusters[i].z, ds.clusters[i].z);
    }
}

TEST(Assembly, HeterogeneousBasisSizes) {
    std::mt19937_64 gen(4);
    const auto raw = random_dataset(gen, 2, 1, 6, 2, 2);
    const auto data = assemble_design(raw, {make_cubic_basis(7), make_cubic_basis(5)},
                                      {make_cubic_basis(4), make_cubic_basis(5)});
    EXPECT_EQ(data.fixed_groups.sizes, (std::vector<Index>{7, 5}));
    EXPECT_EQ(data.fixed_groups.offsets, (std::vector<Index>{0, 7}));
    EXPECT_EQ(data.layout.dim(), 9);
    EXPECT_EQ(data.layout.block_size(0), 10);
    EXPECT_EQ(data.layout.block_size(1), 4 * 5 + 15);
}

TEST(Assembly, MismatchedBasesRejected) {
    std::mt19937_64 gen(4);
    const auto raw = random_dataset(gen, 2, 1, 6, 2, 2);
    EXPECT_THROW((void)assemble_design(raw, {make_cubic_basis(4)}, {make_cubic_basis(4), make_cubic_basis(4)}),
                 AssemblyError);
    EXPECT_THROW((void)assemble_design(raw, {make_cubic_basis(4), make_cubic_basis(4)}, {make_cubic_basis(4)}),
                 AssemblyError);
}

TEST(RawDatasetValidation, RejectsMalformedData) {
    std::mt19937_64 gen(1);
    auto raw = random_dataset(gen, 2, 1, 4, 2, 2);
    EXPECT_NO_THROW(raw.validate());
    auto bad = raw;
    bad.clusters[0].replicates[0].y.resize(3);
    EXPECT_THROW(bad.validate(), DatasetError);
    bad = raw;
    bad.clusters[1].replicates[0].x(1) = std::nan("");
    EXPECT_THROW(bad.validate(), DatasetError);
    bad = raw;
    bad.clusters.clear();
    EXPECT_THROW(bad.validate(), DatasetError);
    bad = raw;
    bad.clusters[0].replicates.clear();
    EXPECT_THROW(bad.validate(), DatasetError);
}

TEST(Duplication, TwoByTwoExample) {
    const auto J = duplication_matrix(2);
    const VectorXd lt = Eigen::Vector3d(1.5, -2.0, 3.0);
    EXPECT_EQ(VectorXd(J * lt), Eigen::Vector4d(1.5, -2.0, 0.0, 3.0));
}

TEST(Duplication, OneByOneIsIdentity) {
    const MatrixXd J = MatrixXd(duplication_matrix(1));
    EXPECT_EQ(J, MatrixXd::Identity(1, 1));
}

TEST(Duplication, RoundTripAgainstExpandL) {
    std::mt19937_64 gen(21);
    for (auto [dp, q] : {std::pair{2, 2}, std::pair{1, 3}, std::pair{3, 2}, std::pair{4, 3}}) {
        const auto layout = CholeskyLayout::uniform(dp, q);
        const auto J = duplication_matrix(dp, q);
        ASSERT_EQ(J.rows(), dp * q * dp * q);
        ASSERT_EQ(J.cols(), layout.packed_size());
        for (int rep = 0; rep < 5; ++rep) {
            const VectorXd lt = random_vector(gen, layout.packed_size());
            const MatrixXd L = expand_L(lt, layout);
            EXPECT_EQ(VectorXd(J * lt), vec(L));
        }
        const MatrixXd Jd = MatrixXd(J);
        EXPECT_EQ(MatrixXd(Jd.transpose() * Jd), MatrixXd::Identity(J.cols(), J.cols()));
        for (Index c = 0; c < Jd.cols(); ++c) EXPECT_EQ(Jd.col(c).sum(), 1.0);
    }
}

TEST(ExpandL, Examples) {
    const auto layout = CholeskyLayout::uniform(2, 2);
    const MatrixXd zero = expand_L(VectorXd::Zero(10), layout);
    EXPECT_EQ(zero, MatrixXd::Zero(4, 4));
    VectorXd eye = VectorXd::Zero(10);
    for (Index a = 0; a < 4; ++a) eye(CholeskyLayout::packed_index(a, a)) = 1.0;
    const MatrixXd L = expand_L(eye, layout);
    EXPECT_EQ(L, MatrixXd::Identity(4, 4));
    EXPECT_EQ(MatrixXd(L * L.transpose()), MatrixXd::Identity(4, 4));
    EXPECT_THROW((void)expand_L(VectorXd::Zero(9), layout), InvalidDimension);
}

TEST(ExpandL, LowerTriangularAndPsd) {
    std::mt19937_64 gen(9);
    const auto layout = CholeskyLayout::uniform(3, 2);
    const VectorXd lt = random_vector(gen, layout.packed_size());
    const MatrixXd L = expand_L(lt, layout);
    EXPECT_EQ(MatrixXd(L.triangularView<Eigen::StrictlyUpper>()), MatrixXd::Zero(6, 6));
    const MatrixXd D = L * L.transpose();
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(D).eigenvalues().minCoeff(), -1e-10);
}

TEST(Layout, BlockSizesMatchBruteForce) {
    for (Index dp = 1; dp <= 3; ++dp) {
        for (Index q = 1; q <= 5; ++q) {
            const auto layout = CholeskyLayout::uniform(dp, q);
            EXPECT_EQ(layout.packed_size(), dp * q * (dp * q + 1) / 2);
            Index offset = 0;
            for (Index r = 0; r < q; ++r) {
                Index count = 0;
                for (Index a = r * dp; a < (r + 1) * dp; ++a) {
                    for (Index c = 0; c <= a; ++c) ++count;
                }
                EXPECT_EQ(layout.block_size(r), count);
                EXPECT_EQ(layout.block_size(r), dp * dp * r + dp * (dp + 1) / 2);
                EXPECT_EQ(layout.block_offset(r), offset);
                offset += count;
            }
        }
    }
}

TEST(Layout, ZeroBlockZeroesItsRows) {
    std::mt19937_64 gen(3);
    const auto layout = CholeskyLayout::uniform(2, 3);
    VectorXd lt = random_vector(gen, layout.packed_size());
    lt.segment(layout.block_offset(1), layout.block_size(1)).setZero();
    const MatrixXd L = expand_L(lt, layout);
    EXPECT_EQ(MatrixXd(L.middleRows(2, 2)), MatrixXd::Zero(2, 6));
    EXPECT_NE(L.row(0).norm(), 0.0);
    EXPECT_NE(L.row(4).norm(), 0.0);
    for (Index k = 0; k < layout.packed_size(); ++k) {
        EXPECT_EQ(CholeskyLayout::packed_index(layout.entry_row(k), layout.entry_col(k)), k);
    }
}

TEST(Kronecker, UnitVectorPicksFirstColumn) {
    const auto J = duplication_matrix(2);
    const MatrixXd Z = MatrixXd::Identity(2, 2);
    const MatrixXd A = random_effect_design(Z, Eigen::Vector2d(1, 0), J);
    const VectorXd lt = Eigen::Vector3d(0.3, -0.7, 1.1);
    EXPECT_EQ(VectorXd(A * lt), Eigen::Vector2d(0.3, -0.7));
    EXPECT_EQ(random_effect_design(Z, Eigen::Vector2d::Zero(), J), MatrixXd::Zero(2, 3));
}

TEST(Kronecker, IdentityOnRandomInstances) {
    std::mt19937_64 gen(31);
    for (auto [dp, q] : {std::pair{2, 2}, std::pair{3, 2}, std::pair{2, 4}, std::pair{4, 3}}) {
        const Index K = dp * q;
        const auto layout = CholeskyLayout::uniform(dp, q);
        const auto J = duplication_matrix(dp, q);
        for (int rep = 0; rep < 10; ++rep) {
            const MatrixXd Z = random_matrix(gen, 7, K);
            const VectorXd b = random_vector(gen, K);
            const VectorXd lt = random_vector(gen, layout.packed_size());
            const MatrixXd L = expand_L(lt, layout);
            const VectorXd direct = Z * L * b;
            const MatrixXd kron = Eigen::kroneckerProduct(MatrixXd(b.transpose()), Z);
            EXPECT_LT((kron * vec(L) - direct).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((kron * (J * lt) - direct).cwiseAbs().maxCoeff(), 1e-12);
            EXPECT_LT((random_effect_design(Z, b, J) * lt - direct).cwiseAbs().maxCoeff(), 1e-12);
        }
    }
}

TEST(Standardize, CentersAndScalesListedColumns) {
    std::mt19937_64 gen(6);
    auto raw = random_dataset(gen, 4, 3, 3, 3, 2);
    const auto before = raw;
    const auto [fs, rs] = standardize_covariates(raw, {1, 2}, {1});
    ASSERT_EQ(fs.mean.size(), 2u);
    for (Index col : {1, 2}) {
        double sum = 0, sq = 0;
        int n = 0;
        for (const auto& c : raw.clusters) {
            for (const auto& r : c.replicates) {
                sum += r.x(col);
                sq += r.x(col) * r.x(col);
                ++n;
            }
        }
        EXPECT_NEAR(sum / n, 0.0, 1e-12);
        EXPECT_NEAR(sq / n, 1.0, 1e-12);
    }
    EXPECT_EQ(raw.clusters[0].replicates[0].x(0), before.clusters[0].replicates[0].x(0));
    EXPECT_EQ(raw.clusters[0].replicates[0].z(0), before.clusters[0].replicates[0].z(0));
    EXPECT_THROW((void)standardize_covariates(raw, {5}, {}), AssemblyError);
}
