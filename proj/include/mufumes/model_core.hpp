#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "mufumes/errors.hpp"
#include "mufumes/spline_basis.hpp"

namespace mufumes {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One functional observation: responses on the shared grid plus its scalar covariates.
struct Replicate {
    VectorXd y;  // length m
    VectorXd x;  // fixed-effect covariates, length p
    VectorXd z;  // random-effect covariates, length q
};

struct RawCluster {
    long long id = 0;
    std::vector<Replicate> replicates;
};

/// Multilevel functional data on a dense common grid.
struct RawDataset {
    std::vector<double> grid;
    std::vector<RawCluster> clusters;
    Index p = 0;
    Index q = 0;

    [[nodiscard]] Index num_observations() const {
        Index n = 0;
        for (const auto& c : clusters) n += static_cast<Index>(c.replicates.size());
        return n * static_cast<Index>(grid.size());
    }

    void validate() const {
        if (clusters.empty()) throw DatasetError("dataset has no clusters");
        if (grid.size() < 2) throw DatasetError("grid needs at least two points");
        if (p < 1 || q < 1) throw DatasetError("need p >= 1 and q >= 1");
        const auto m = static_cast<Index>(grid.size());
        for (const auto& c : clusters) {
            if (c.replicates.empty()) throw DatasetError("cluster " + std::to_string(c.id) + " has no replicates");
            for (const auto& r : c.replicates) {
                if (r.y.size() != m || r.x.size() != p || r.z.size() != q) {
                    throw DatasetError("replicate shape mismatch in cluster " + std::to_string(c.id));
                }
                if (!r.y.allFinite() || !r.x.allFinite() || !r.z.allFinite()) {
                    throw DatasetError("non-finite value in cluster " + std::to_string(c.id));
                }
            }
        }
    }
};

/// Contiguous partition of a coefficient vector into groups.
struct GroupPartition {
    std::vector<Index> offsets;
    std::vector<Index> sizes;

    GroupPartition() = default;
    explicit GroupPartition(const std::vector<Index>& group_sizes) : sizes(group_sizes) {
        offsets.reserve(sizes.size());
        Index off = 0;
        for (Index s : sizes) {
            if (s < 1) throw InvalidDimension("empty group in partition");
            offsets.push_back(off);
            off += s;
        }
    }

    [[nodiscard]] Index num_groups() const noexcept { return static_cast<Index>(sizes.size()); }
    [[nodiscard]] Index total() const noexcept {
        return sizes.empty() ? 0 : offsets.back() + sizes.back();
    }
};

/**
 * Bookkeeping for the lower-triangular factor L of the random-effect covariance.
 *
 * L is K x K with K the total random basis dimension; row block r spans the
 * rows of random covariate r. The free entries are stacked row by row
 * (row a contributes columns 0..a), so block r occupies a contiguous slice of
 * the stacked vector and zeroing that slice zeroes every row of block r.
 */
class CholeskyLayout {
public:
    CholeskyLayout() = default;
    explicit CholeskyLayout(const std::vector<Index>& row_dims) : row_dims_(row_dims) {
        Index row = 0;
        for (Index d : row_dims_) {
            if (d < 1) throw InvalidDimension("random-effect block needs at least one row");
            row_offsets_.push_back(row);
            const Index begin = packed_index(row, 0);
            row += d;
            const Index end = packed_index(row, 0);
            block_offsets_.push_back(begin);
            block_sizes_.push_back(end - begin);
        }
        dim_ = row;
        rows_.reserve(static_cast<std::size_t>(packed_size()));
        cols_.reserve(static_cast<std::size_t>(packed_size()));
        for (Index a = 0; a < dim_; ++a) {
            for (Index c = 0; c <= a; ++c) {
                rows_.push_back(a);
                cols_.push_back(c);
            }
        }
    }

    static CholeskyLayout uniform(Index d_prime, Index q) {
        return CholeskyLayout(std::vector<Index>(static_cast<std::size_t>(q), d_prime));
    }

    /// Position of L(a, c), c <= a, in the stacked vector.
    static constexpr Index packed_index(Index a, Index c) noexcept { return a * (a + 1) / 2 + c; }

    [[nodiscard]] Index dim() const noexcept { return dim_; }
    [[nodiscard]] Index packed_size() const noexcept { return dim_ * (dim_ + 1) / 2; }
    [[nodiscard]] Index num_blocks() const noexcept { return static_cast<Index>(row_dims_.size()); }
    [[nodiscard]] Index block_rows(Index r) const { return row_dims_.at(r); }
    [[nodiscard]] Index row_offset(Index r) const { return row_offsets_.at(r); }
    [[nodiscard]] Index block_offset(Index r) const { return block_offsets_.at(r); }
    /// N_r: number of free entries in row block r.
    [[nodiscard]] Index block_size(Index r) const { return block_sizes_.at(r); }
    [[nodiscard]] Index entry_row(Index k) const { return rows_.at(k); }
    [[nodiscard]] Index entry_col(Index k) const { return cols_.at(k); }
    [[nodiscard]] GroupPartition partition() const { return GroupPartition(block_sizes_); }
    [[nodiscard]] const std::vector<Index>& row_dims() const noexcept { return row_dims_; }

private:
    std::vector<Index> row_dims_;
    std::vector<Index> row_offsets_;
    std::vector<Index> block_offsets_;
    std::vector<Index> block_sizes_;
    std::vector<Index> rows_;
    std::vector<Index> cols_;
    Index dim_ = 0;
};

/// Lower-triangular L from its row-stacked free entries.
[[nodiscard]] inline MatrixXd expand_L(const Eigen::Ref<const VectorXd>& ltilde, const CholeskyLayout& layout) {
    if (ltilde.size() != layout.packed_size()) {
        throw InvalidDimension("stacked Cholesky vector has length " + std::to_string(ltilde.size()) +
                               ", expected " + std::to_string(layout.packed_size()));
    }
    MatrixXd L = MatrixXd::Zero(layout.dim(), layout.dim());
    for (Index k = 0; k < ltilde.size(); ++k) L(layout.entry_row(k), layout.entry_col(k)) = ltilde(k);
    return L;
}

/// Binary map J with vec(L) = J * ltilde, vec taken column-major.
[[nodiscard]] inline Eigen::SparseMatrix<double> duplication_matrix(Index dim) {
    if (dim < 1) throw InvalidDimension("duplication matrix needs dim >= 1");
    const Index cols = dim * (dim + 1) / 2;
    Eigen::SparseMatrix<double> J(dim * dim, cols);
    J.reserve(Eigen::VectorXi::Constant(cols, 1));
    for (Index a = 0; a < dim; ++a) {
        for (Index c = 0; c <= a; ++c) J.insert(c * dim + a, CholeskyLayout::packed_index(a, c)) = 1.0;
    }
    J.makeCompressed();
    return J;
}

[[nodiscard]] inline Eigen::SparseMatrix<double> duplication_matrix(Index d_prime, Index q) {
    if (d_prime < 1 || q < 1) throw InvalidDimension("duplication matrix needs d' >= 1 and q >= 1");
    return duplication_matrix(d_prime * q);
}

/**
 * (b^T kron Z) * J, the design of the stacked Cholesky entries for one cluster.
 *
 * Column (a, c) of the result is b(c) * Z.col(a); J itself is only used for a
 * shape check since each of its columns selects a single entry of vec(L).
 */
[[nodiscard]] inline MatrixXd random_effect_design(const Eigen::Ref<const MatrixXd>& Z,
                                                   const Eigen::Ref<const VectorXd>& b,
                                                   const Eigen::SparseMatrix<double>& J) {
    const Index K = Z.cols();
    if (b.size() != K) throw AssemblyError("random coefficient length does not match Z columns");
    if (J.rows() != K * K || J.cols() != K * (K + 1) / 2) {
        throw AssemblyError("duplication matrix shape does not match Z columns");
    }
    MatrixXd out(Z.rows(), K * (K + 1) / 2);
    for (Index a = 0; a < K; ++a) {
        for (Index c = 0; c <= a; ++c) out.col(CholeskyLayout::packed_index(a, c)) = b(c) * Z.col(a);
    }
    return out;
}

/// Stacked per-cluster regression blocks plus cached cross products.
struct ClusterDesign {
    VectorXd y;   // m*J_i, grid-major within replicate
    MatrixXd x;   // m*J_i x total fixed dim
    MatrixXd z;   // m*J_i x K
    MatrixXd ztz;
    MatrixXd ztx;
    VectorXd zty;
    VectorXd xty;
};

struct ModelData {
    std::vector<ClusterDesign> clusters;
    GroupPartition fixed_groups;
    CholeskyLayout layout;
    Eigen::SparseMatrix<double> duplication;
    std::vector<BSplineBasis> fixed_bases;
    std::vector<BSplineBasis> random_bases;
    std::vector<double> grid;
    MatrixXd xtx;  // sum over clusters
    VectorXd xty;
    Index num_obs = 0;

    [[nodiscard]] Index p() const noexcept { return fixed_groups.num_groups(); }
    [[nodiscard]] Index q() const noexcept { return layout.num_blocks(); }
    [[nodiscard]] Index n() const noexcept { return static_cast<Index>(clusters.size()); }
    [[nodiscard]] Index fixed_dim() const noexcept { return fixed_groups.total(); }
    [[nodiscard]] Index random_dim() const noexcept { return layout.dim(); }
};

/// Builds X_i and Z_i with covariate-major, basis-minor columns.
[[nodiscard]] inline ModelData assemble_design(const RawDataset& raw, const std::vector<BSplineBasis>& fixed_bases,
                                               const std::vector<BSplineBasis>& random_bases) {
    raw.validate();
    if (static_cast<Index>(fixed_bases.size()) != raw.p) {
        throw AssemblyError("expected " + std::to_string(raw.p) + " fixed bases, got " +
                            std::to_string(fixed_bases.size()));
    }
    if (static_cast<Index>(random_bases.size()) != raw.q) {
        throw AssemblyError("expected " + std::to_string(raw.q) + " random bases, got " +
                            std::to_string(random_bases.size()));
    }

    ModelData data;
    data.grid = raw.grid;
    data.fixed_bases = fixed_bases;
    data.random_bases = random_bases;

    std::vector<Index> fixed_sizes, random_sizes;
    std::vector<MatrixXd> fixed_eval, random_eval;
    for (const auto& b : fixed_bases) {
        fixed_sizes.push_back(b.num_basis());
        fixed_eval.push_back(b.evaluate_matrix(raw.grid));
    }
    for (const auto& b : random_bases) {
        random_sizes.push_back(b.num_basis());
        random_eval.push_back(b.evaluate_matrix(raw.grid));
    }
    data.fixed_groups = GroupPartition(fixed_sizes);
    data.layout = CholeskyLayout(random_sizes);
    data.duplication = duplication_matrix(data.layout.dim());

    const auto m = static_cast<Index>(raw.grid.size());
    const Index P = data.fixed_groups.total();
    const Index K = data.layout.dim();
    data.xtx = MatrixXd::Zero(P, P);
    data.xty = VectorXd::Zero(P);

    for (const auto& cluster : raw.clusters) {
        const auto J = static_cast<Index>(cluster.replicates.size());
        ClusterDesign cd;
        cd.y.resize(m * J);
        cd.x = MatrixXd::Zero(m * J, P);
        cd.z = MatrixXd::Zero(m * J, K);
        for (Index j = 0; j < J; ++j) {
            const auto& rep = cluster.replicates[static_cast<std::size_t>(j)];
            cd.y.segment(j * m, m) = rep.y;
            for (Index k = 0; k < raw.p; ++k) {
                cd.x.block(j * m, data.fixed_groups.offsets[k], m, fixed_sizes[k]) = rep.x(k) * fixed_eval[k];
            }
            Index off = 0;
            for (Index r = 0; r < raw.q; ++r) {
                cd.z.block(j * m, off, m, random_sizes[r]) = rep.z(r) * random_eval[r];
                off += random_sizes[r];
            }
        }
        cd.ztz = cd.z.transpose() * cd.z;
        cd.ztx = cd.z.transpose() * cd.x;
        cd.zty = cd.z.transpose() * cd.y;
        cd.xty = cd.x.transpose() * cd.y;
        data.xtx.noalias() += cd.x.transpose() * cd.x;
        data.xty += cd.xty;
        data.num_obs += m * J;
        data.clusters.push_back(std::move(cd));
    }
    return data;
}

/// Same cubic basis dimension for every coefficient of a side.
[[nodiscard]] inline ModelData assemble_design(const RawDataset& raw, int d, int d_prime) {
    std::vector<BSplineBasis> fb(static_cast<std::size_t>(raw.p), make_cubic_basis(d));
    std::vector<BSplineBasis> rb(static_cast<std::size_t>(raw.q), make_cubic_basis(d_prime));
    return assemble_design(raw, fb, rb);
}

/// Column summary returned by standardize_covariates so the transform can be reported.
struct ColumnScaling {
    std::vector<double> mean;
    std::vector<double> sd;
};

/**
 * Centers and scales the listed covariate columns (0-based) over all replicates.
 * Never applied implicitly by assembly.
 */
inline std::pair<ColumnScaling, ColumnScaling> standardize_covariates(RawDataset& raw,
                                                                      const std::vector<Index>& fixed_cols,
                                                                      const std::vector<Index>& random_cols) {
    auto scale = [&raw](const std::vector<Index>& cols, bool fixed) {
        ColumnScaling out;
        for (Index col : cols) {
            double sum = 0.0, sq = 0.0;
            long long count = 0;
            for (const auto& c : raw.clusters) {
                for (const auto& r : c.replicates) {
                    const double v = fixed ? r.x(col) : r.z(col);
                    sum += v;
                    sq += v * v;
                    ++count;
                }
            }
            const double mean = sum / static_cast<double>(count);
            const double var = sq / static_cast<double>(count) - mean * mean;
            const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
            for (auto& c : raw.clusters) {
                for (auto& r : c.replicates) {
                    double& v = fixed ? r.x(col) : r.z(col);
                    v = (v - mean) / sd;
                }
            }
            out.mean.push_back(mean);
            out.sd.push_back(sd);
        }
        return out;
    };
    for (Index c : fixed_cols) {
        if (c < 0 || c >= raw.p) throw AssemblyError("fixed covariate column out of range");
    }
    for (Index c : random_cols) {
        if (c < 0 || c >= raw.q) throw AssemblyError("random covariate column out of range");
    }
    auto f = scale(fixed_cols, true);
    auto r = scale(random_cols, false);
    return {std::move(f), std::move(r)};
}

}  // namespace mufumes
