#ifndef CARMA_OPERATORS_HPP
#define CARMA_OPERATORS_HPP

// Bounded linear operators on grid densities and the companion block
// structure built from them. Every operator is materialized as a dense
// n x n matrix acting on density values.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "carma/core.hpp"

namespace carma {

enum class LinOpKind { scaled_identity, dense, convolution, zero };

inline const char* to_string(LinOpKind k) {
    switch (k) {
        case LinOpKind::scaled_identity: return "scaled_identity";
        case LinOpKind::dense: return "dense";
        case LinOpKind::convolution: return "convolution";
        case LinOpKind::zero: return "zero";
    }
    return "?";
}

class LinOp {
public:
    LinOp() = default;

    static LinOp identity(GridPtr grid, double c = 1.0) {
        auto n = static_cast<Eigen::Index>(grid->size());
        LinOp op(LinOpKind::scaled_identity, grid, c * Mat::Identity(n, n));
        op.scale_ = c;
        return op;
    }

    static LinOp zero(GridPtr grid) {
        auto n = static_cast<Eigen::Index>(grid->size());
        LinOp op(LinOpKind::zero, grid, Mat::Zero(n, n));
        op.scale_ = 0.0;
        return op;
    }

    static LinOp dense(GridPtr grid, Mat m) {
        auto n = static_cast<Eigen::Index>(grid->size());
        require(m.rows() == n && m.cols() == n, "dense operator must be n x n");
        require(m.allFinite(), "dense operator entries must be finite");
        return LinOp(LinOpKind::dense, std::move(grid), std::move(m));
    }

    /// (T a)_i = sum_j w_j f_{i-j} a_j. Non-periodic grids need `truncate`,
    /// which keeps only non-negative index differences.
    static LinOp convolution(const Density& kernel, bool truncate = false) {
        const auto& grid = kernel.grid();
        require(grid->periodic() || truncate,
                "convolution on a non-periodic grid requires truncation mode");
        auto n = static_cast<Eigen::Index>(grid->size());
        Mat m = Mat::Zero(n, n);
        for (std::size_t i = 0; i < grid->size(); ++i) {
            for (std::size_t j = 0; j < grid->size(); ++j) {
                if (auto d = grid->difference(i, j)) {
                    m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                        grid->weight(j) * kernel[*d];
                }
            }
        }
        LinOp op(LinOpKind::convolution, grid, std::move(m));
        op.kernel_ = kernel;
        return op;
    }

    LinOpKind kind() const { return kind_; }
    const GridPtr& grid() const { return grid_; }
    const Mat& matrix() const { return matrix_; }
    double scale() const { return scale_; }
    const Density& kernel() const { return kernel_; }

    /// Entrywise non-negative matrix, i.e. maps the cone into itself.
    bool is_positive() const { return matrix_.size() == 0 || matrix_.minCoeff() >= 0.0; }

private:
    LinOp(LinOpKind kind, GridPtr grid, Mat m)
        : kind_(kind), grid_(std::move(grid)), matrix_(std::move(m)) {}

    LinOpKind kind_ = LinOpKind::zero;
    GridPtr grid_;
    Mat matrix_;
    double scale_ = 0.0;
    Density kernel_;
};

inline Density apply(const LinOp& op, const Density& a) {
    require_same_grid(op.grid(), a.grid());
    return Density(a.grid(), op.matrix() * a.values());
}

/// Companion block operator: identities on the super-diagonal and
/// (A_p, ..., A_1) along the bottom row. Blocks are stored as A_1..A_p.
class CompanionOp {
public:
    CompanionOp() = default;

    CompanionOp(GridPtr grid, std::vector<LinOp> a_blocks)
        : grid_(std::move(grid)), blocks_(std::move(a_blocks)) {
        require(!blocks_.empty(), "companion operator needs p >= 1 blocks");
        for (const auto& b : blocks_) require_same_grid(grid_, b.grid());
        const auto n = static_cast<Eigen::Index>(grid_->size());
        const auto p = static_cast<Eigen::Index>(blocks_.size());
        matrix_ = Mat::Zero(p * n, p * n);
        for (Eigen::Index i = 0; i + 1 < p; ++i) {
            matrix_.block(i * n, (i + 1) * n, n, n).setIdentity();
        }
        // bottom row: column block j (0-based) holds A_{p-j}
        for (Eigen::Index j = 0; j < p; ++j) {
            matrix_.block((p - 1) * n, j * n, n, n) =
                blocks_[static_cast<std::size_t>(p - 1 - j)].matrix();
        }
    }

    std::size_t p() const { return blocks_.size(); }
    const GridPtr& grid() const { return grid_; }
    /// A_k for k = 1..p.
    const LinOp& a(std::size_t k) const {
        require(k >= 1 && k <= blocks_.size(), "companion block index out of range");
        return blocks_[k - 1];
    }
    const std::vector<LinOp>& blocks() const { return blocks_; }
    const Mat& matrix() const { return matrix_; }

private:
    GridPtr grid_;
    std::vector<LinOp> blocks_;
    Mat matrix_;
};

inline StateVec companion_apply(const CompanionOp& op, const StateVec& s) {
    require(s.p() == op.p(), "companion_apply: block count mismatch");
    require_same_grid(op.grid(), s.grid());
    const auto n = static_cast<Eigen::Index>(s.grid()->size());
    const auto p = static_cast<Eigen::Index>(s.p());
    Vec out = Vec::Zero(p * n);
    for (Eigen::Index i = 0; i + 1 < p; ++i) {
        out.segment(i * n, n) = s.values().segment((i + 1) * n, n);
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        out.segment((p - 1) * n, n) +=
            op.a(static_cast<std::size_t>(p - j)).matrix() * s.values().segment(j * n, n);
    }
    return StateVec(s.grid(), s.p(), std::move(out));
}

/// (0, ..., 0, E a).
inline StateVec input_inject(const LinOp& e, const Density& a, std::size_t p) {
    require(p >= 1, "input_inject: p must be >= 1");
    auto s = StateVec::zeros(a.grid(), p);
    const auto n = static_cast<Eigen::Index>(a.size());
    s.values().segment(static_cast<Eigen::Index>(p - 1) * n, n) = apply(e, a).values();
    return s;
}

/// sum_{i=0}^{q} C_i x^{i+1}.
inline Density output(const std::vector<LinOp>& c, const StateVec& s) {
    require(!c.empty() && c.size() <= s.p(), "output: need 1 <= q+1 <= p output blocks");
    const auto n = static_cast<Eigen::Index>(s.grid()->size());
    Vec y = Vec::Zero(n);
    for (std::size_t i = 0; i < c.size(); ++i) {
        require_same_grid(c[i].grid(), s.grid());
        y += c[i].matrix() * s.values().segment(static_cast<Eigen::Index>(i) * n, n);
    }
    return Density(s.grid(), std::move(y));
}

}  // namespace carma

#endif
