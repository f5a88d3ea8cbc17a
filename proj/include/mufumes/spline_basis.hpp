#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mufumes/errors.hpp"

namespace mufumes {

/// Closed interval used as the functional domain.
struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/**
 * Clamped B-spline basis on a closed interval.
 *
 * The knot vector repeats each boundary knot degree+1 times, so the basis is
 * a partition of unity on the whole interval including both endpoints and the
 * first (last) function equals one at the left (right) endpoint.
 * Immutable after construction.
 */
class BSplineBasis {
public:
    BSplineBasis(int degree, std::vector<double> knots, Interval domain)
        : degree_(degree), knots_(std::move(knots)), domain_(domain) {
        if (degree_ < 0) throw InvalidDimension("spline degree must be non-negative");
        const auto n_knots = static_cast<int>(knots_.size());
        if (n_knots < 2 * (degree_ + 1)) {
            throw InvalidDimension("knot vector too short for degree " + std::to_string(degree_));
        }
        if (!std::is_sorted(knots_.begin(), knots_.end())) {
            throw InvalidDimension("knot vector must be non-decreasing");
        }
        num_basis_ = n_knots - degree_ - 1;
    }

    [[nodiscard]] int degree() const noexcept { return degree_; }
    [[nodiscard]] int num_basis() const noexcept { return num_basis_; }
    [[nodiscard]] const std::vector<double>& knots() const noexcept { return knots_; }
    [[nodiscard]] Interval domain() const noexcept { return domain_; }

    /// Interior knots (boundary multiplicities stripped).
    [[nodiscard]] std::vector<double> interior_knots() const {
        return {knots_.begin() + degree_ + 1, knots_.end() - degree_ - 1};
    }

    /// Values of all basis functions at `s` (Cox-de Boor triangle).
    [[nodiscard]] Eigen::VectorXd evaluate(double s) const {
        Eigen::VectorXd out = Eigen::VectorXd::Zero(num_basis_);
        evaluate_into(s, out);
        return out;
    }

    /// Row t of the result is evaluate(grid[t]).
    [[nodiscard]] Eigen::MatrixXd evaluate_matrix(std::span<const double> grid) const {
        Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(grid.size()), num_basis_);
        Eigen::VectorXd row(num_basis_);
        for (std::size_t t = 0; t < grid.size(); ++t) {
            row.setZero();
            evaluate_into(grid[t], row);
            out.row(static_cast<Eigen::Index>(t)) = row.transpose();
        }
        return out;
    }

    friend bool operator==(const BSplineBasis& a, const BSplineBasis& b) {
        return a.degree_ == b.degree_ && a.knots_ == b.knots_ && a.domain_.lo == b.domain_.lo &&
               a.domain_.hi == b.domain_.hi;
    }

private:
    // Index mu with knots[mu] <= s < knots[mu+1]; the right endpoint maps to the last non-empty span.
    [[nodiscard]] int find_span(double s) const {
        const int last = num_basis_ - 1;
        if (s >= knots_[last + 1]) return last;
        const auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + last + 1, s);
        return static_cast<int>(it - knots_.begin()) - 1;
    }

    void evaluate_into(double s, Eigen::VectorXd& out) const {
        if (!std::isfinite(s) || s < domain_.lo || s > domain_.hi) {
            throw DomainError("evaluation point " + std::to_string(s) + " outside spline domain");
        }
        const int span = find_span(s);
        std::vector<double> values(degree_ + 1, 0.0), left(degree_ + 1), right(degree_ + 1);
        values[0] = 1.0;
        for (int j = 1; j <= degree_; ++j) {
            left[j] = s - knots_[span + 1 - j];
            right[j] = knots_[span + j] - s;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double denom = right[r + 1] + left[j - r];
                const double tmp = denom > 0.0 ? values[r] / denom : 0.0;
                values[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            values[j] = saved;
        }
        for (int r = 0; r <= degree_; ++r) out(span - degree_ + r) = values[r];
    }

    int degree_;
    std::vector<double> knots_;
    Interval domain_;
    int num_basis_ = 0;
};

/// Cubic basis with `num_basis` functions and equally spaced interior knots.
[[nodiscard]] inline BSplineBasis make_cubic_basis(int num_basis, Interval domain = {}) {
    constexpr int degree = 3;
    if (num_basis < degree + 1) {
        throw InvalidDimension("cubic basis needs at least 4 functions, got " + std::to_string(num_basis));
    }
    if (!(domain.hi > domain.lo)) throw InvalidDimension("empty spline domain");
    const int interior = num_basis - degree - 1;
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(num_basis + degree + 1));
    knots.insert(knots.end(), degree + 1, domain.lo);
    const double width = domain.hi - domain.lo;
    for (int i = 1; i <= interior; ++i) {
        knots.push_back(domain.lo + width * static_cast<double>(i) / static_cast<double>(interior + 1));
    }
    knots.insert(knots.end(), degree + 1, domain.hi);
    return BSplineBasis(degree, std::move(knots), domain);
}

/// m equispaced points including both endpoints.
[[nodiscard]] inline std::vector<double> equispaced_grid(int m, Interval domain = {}) {
    if (m < 2) throw InvalidDimension("grid needs at least two points");
    std::vector<double> grid(static_cast<std::size_t>(m));
    for (int t = 0; t < m; ++t) {
        grid[t] = domain.lo + (domain.hi - domain.lo) * static_cast<double>(t) / static_cast<double>(m - 1);
    }
    grid.back() = domain.hi;
    return grid;
}

}  // namespace mufumes
