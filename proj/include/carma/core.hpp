#ifndef CARMA_CORE_HPP
#define CARMA_CORE_HPP

// Spatial discretization and the cone elements that live on it.
//
// A Grid carries cell locations and positive quadrature weights; every
// integral against the reference measure becomes a weighted dot product.
// Densities hold values per unit weight, so the total mass of a Density
// is sum_i w_i * a_i.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "carma/error.hpp"

namespace carma {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using cplx = std::complex<double>;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

/// One axis of a rectilinear grid: `cells` equal cells spanning [lo, hi).
struct Axis {
    double lo = 0.0;
    double hi = 1.0;
    std::size_t cells = 1;

    double width() const { return (hi - lo) / static_cast<double>(cells); }
};

class Grid;
using GridPtr = std::shared_ptr<const Grid>;

class Grid {
public:
    /// Tensor grid of cell midpoints; weights are cell volumes.
    static GridPtr rectilinear(std::vector<Axis> axes, bool periodic) {
        require(!axes.empty(), "grid needs at least one axis");
        auto g = std::shared_ptr<Grid>(new Grid());
        g->dim_ = axes.size();
        g->periodic_ = periodic;
        std::size_t n = 1;
        for (const auto& ax : axes) {
            require(ax.cells >= 1, "grid axis needs at least one cell");
            require(std::isfinite(ax.lo) && std::isfinite(ax.hi) && ax.hi > ax.lo,
                    "grid axis bounds must be finite with hi > lo");
            g->shape_.push_back(ax.cells);
            g->lo_.push_back(ax.lo);
            g->hi_.push_back(ax.hi);
            n *= ax.cells;
        }
        g->axes_ = std::move(axes);
        g->coords_.resize(n * g->dim_);
        g->weights_.resize(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < n; ++i) {
            auto multi = g->unravel(i);
            double w = 1.0;
            for (std::size_t k = 0; k < g->dim_; ++k) {
                const auto& ax = g->axes_[k];
                g->coords_[i * g->dim_ + k] =
                    ax.lo + (static_cast<double>(multi[k]) + 0.5) * ax.width();
                w *= ax.width();
            }
            g->weights_[static_cast<Eigen::Index>(i)] = w;
        }
        return g;
    }

    /// Explicit point list, treated as a one-dimensional index sequence for
    /// shifts and convolutions. The hull is the bounding box of the points.
    static GridPtr from_points(std::vector<std::vector<double>> points,
                               std::vector<double> weights, bool periodic) {
        require(!points.empty(), "grid needs at least one point");
        require(points.size() == weights.size(), "grid points/weights length mismatch");
        auto g = std::shared_ptr<Grid>(new Grid());
        g->dim_ = points.front().size();
        require(g->dim_ >= 1, "grid points need at least one coordinate");
        g->periodic_ = periodic;
        g->shape_ = {points.size()};
        g->lo_.assign(g->dim_, std::numeric_limits<double>::infinity());
        g->hi_.assign(g->dim_, -std::numeric_limits<double>::infinity());
        g->weights_.resize(static_cast<Eigen::Index>(points.size()));
        for (std::size_t i = 0; i < points.size(); ++i) {
            require(points[i].size() == g->dim_, "grid points must share one dimension");
            require(weights[i] > 0.0 && std::isfinite(weights[i]),
                    "grid weights must be positive and finite");
            g->weights_[static_cast<Eigen::Index>(i)] = weights[i];
            for (std::size_t k = 0; k < g->dim_; ++k) {
                double x = points[i][k];
                require(std::isfinite(x), "grid point coordinates must be finite");
                g->coords_.push_back(x);
                g->lo_[k] = std::min(g->lo_[k], x);
                g->hi_[k] = std::max(g->hi_[k], x);
            }
        }
        return g;
    }

    std::size_t size() const { return static_cast<std::size_t>(weights_.size()); }
    std::size_t dim() const { return dim_; }
    bool periodic() const { return periodic_; }
    bool is_rectilinear() const { return !axes_.empty(); }
    const std::vector<Axis>& axes() const { return axes_; }
    const std::vector<std::size_t>& shape() const { return shape_; }
    const Vec& weights() const { return weights_; }
    double weight(std::size_t i) const { return weights_[static_cast<Eigen::Index>(i)]; }

    std::span<const double> point(std::size_t i) const {
        return {coords_.data() + i * dim_, dim_};
    }

    std::vector<std::size_t> unravel(std::size_t flat) const {
        std::vector<std::size_t> multi(shape_.size());
        for (std::size_t k = shape_.size(); k-- > 0;) {
            multi[k] = flat % shape_[k];
            flat /= shape_[k];
        }
        return multi;
    }

    std::size_t ravel(const std::vector<std::size_t>& multi) const {
        std::size_t flat = 0;
        for (std::size_t k = 0; k < shape_.size(); ++k) flat = flat * shape_[k] + multi[k];
        return flat;
    }

    /// Flat index of the per-axis difference i - j. Periodic grids wrap;
    /// otherwise a negative component has no cell and yields nullopt.
    std::optional<std::size_t> difference(std::size_t i, std::size_t j) const {
        auto mi = unravel(i);
        auto mj = unravel(j);
        std::vector<std::size_t> out(shape_.size());
        for (std::size_t k = 0; k < shape_.size(); ++k) {
            if (mi[k] >= mj[k]) {
                out[k] = mi[k] - mj[k];
            } else if (periodic_) {
                out[k] = mi[k] + shape_[k] - mj[k];
            } else {
                return std::nullopt;
            }
        }
        return ravel(out);
    }

    /// Whether x lies in the closed hull of the domain.
    bool contains(std::span<const double> x) const {
        if (x.size() != dim_) return false;
        for (std::size_t k = 0; k < dim_; ++k) {
            if (!(x[k] >= lo_[k] && x[k] <= hi_[k])) return false;
        }
        return true;
    }

    /// Nearest cell to x; ties go to the lower index. Periodic rectilinear
    /// grids wrap x into the domain first.
    std::size_t nearest_cell(std::span<const double> x) const {
        require(x.size() == dim_, "location dimension does not match grid");
        if (is_rectilinear()) {
            std::vector<std::size_t> multi(dim_);
            for (std::size_t k = 0; k < dim_; ++k) {
                const auto& ax = axes_[k];
                double xk = x[k];
                if (periodic_) {
                    double len = ax.hi - ax.lo;
                    xk = ax.lo + std::fmod(std::fmod(xk - ax.lo, len) + len, len);
                } else if (!(xk >= ax.lo && xk <= ax.hi)) {
                    model_error("atom outside the grid hull");
                }
                double u = (xk - ax.lo) / ax.width() - 0.5;
                auto cell = static_cast<long long>(std::ceil(u - 0.5));
                auto n = static_cast<long long>(ax.cells);
                if (periodic_) {
                    cell = ((cell % n) + n) % n;
                } else {
                    cell = std::clamp(cell, 0LL, n - 1);
                }
                multi[k] = static_cast<std::size_t>(cell);
            }
            return ravel(multi);
        }
        if (!periodic_ && !contains(x)) model_error("atom outside the grid hull");
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < size(); ++i) {
            double d = 0.0;
            auto p = point(i);
            for (std::size_t k = 0; k < dim_; ++k) d += (p[k] - x[k]) * (p[k] - x[k]);
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        return best;
    }

    /// Fraction of cell i lying inside the box [lo, hi] (per axis). Grids
    /// without cell geometry use point membership.
    double overlap_fraction(std::size_t i, const std::vector<std::pair<double, double>>& box) const {
        require(box.size() == dim_, "box dimension does not match grid");
        if (!is_rectilinear()) {
            auto p = point(i);
            for (std::size_t k = 0; k < dim_; ++k) {
                if (!(p[k] >= box[k].first && p[k] <= box[k].second)) return 0.0;
            }
            return 1.0;
        }
        auto multi = unravel(i);
        double frac = 1.0;
        for (std::size_t k = 0; k < dim_; ++k) {
            const auto& ax = axes_[k];
            double a = ax.lo + static_cast<double>(multi[k]) * ax.width();
            double b = a + ax.width();
            double len = std::min(b, box[k].second) - std::max(a, box[k].first);
            if (len <= 0.0) return 0.0;
            frac *= len / ax.width();
        }
        return frac;
    }

    const std::vector<double>& hull_lo() const { return lo_; }
    const std::vector<double>& hull_hi() const { return hi_; }

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.dim_ == b.dim_ && a.periodic_ == b.periodic_ && a.shape_ == b.shape_ &&
               a.coords_ == b.coords_ && a.weights_ == b.weights_;
    }

private:
    Grid() = default;

    std::size_t dim_ = 1;
    bool periodic_ = false;
    std::vector<Axis> axes_;
    std::vector<std::size_t> shape_;
    std::vector<double> coords_;
    std::vector<double> lo_, hi_;
    Vec weights_;
};

inline bool same_grid(const GridPtr& a, const GridPtr& b) {
    return a == b || (a && b && *a == *b);
}

inline void require_same_grid(const GridPtr& a, const GridPtr& b) {
    require(same_grid(a, b), "grid mismatch");
}

struct DensityTag {};
struct TestFunctionTag {};

/// Real values indexed by grid cells. Tagged so densities (primal) and test
/// functions (dual) cannot be mixed up.
template <class Tag>
class GridFunction {
public:
    GridFunction() = default;

    GridFunction(GridPtr grid, Vec values) : grid_(std::move(grid)), values_(std::move(values)) {
        require(grid_ != nullptr, "grid function without grid");
        require(static_cast<std::size_t>(values_.size()) == grid_->size(),
                "values length does not match grid size");
        require(values_.allFinite(), "grid function values must be finite");
    }

    static GridFunction zeros(GridPtr grid) {
        auto n = static_cast<Eigen::Index>(grid->size());
        return GridFunction(std::move(grid), Vec::Zero(n));
    }

    static GridFunction constant(GridPtr grid, double c) {
        auto n = static_cast<Eigen::Index>(grid->size());
        return GridFunction(std::move(grid), Vec::Constant(n, c));
    }

    static GridFunction from_callable(GridPtr grid,
                                      const std::function<double(std::span<const double>)>& f) {
        Vec v(static_cast<Eigen::Index>(grid->size()));
        for (std::size_t i = 0; i < grid->size(); ++i) v[static_cast<Eigen::Index>(i)] = f(grid->point(i));
        return GridFunction(std::move(grid), std::move(v));
    }

    const GridPtr& grid() const { return grid_; }
    const Vec& values() const { return values_; }
    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
    double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

    bool is_positive() const { return values_.size() == 0 || values_.minCoeff() >= 0.0; }

    GridFunction& operator+=(const GridFunction& o) {
        require_same_grid(grid_, o.grid_);
        values_ += o.values_;
        return *this;
    }
    friend GridFunction operator+(GridFunction a, const GridFunction& b) { return a += b; }
    friend GridFunction operator-(GridFunction a, const GridFunction& b) {
        require_same_grid(a.grid_, b.grid_);
        a.values_ -= b.values_;
        return a;
    }
    friend GridFunction operator*(double c, GridFunction a) {
        a.values_ *= c;
        return a;
    }

private:
    GridPtr grid_;
    Vec values_;
};

using Density = GridFunction<DensityTag>;
using TestFunction = GridFunction<TestFunctionTag>;

struct Atom {
    std::vector<double> location;
    double mass = 0.0;
};

/// Finite non-negative combination of Dirac masses.
class AtomicMeasure {
public:
    AtomicMeasure() = default;
    explicit AtomicMeasure(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
        for (const auto& a : atoms_) {
            require(a.mass >= 0.0 && std::isfinite(a.mass), "atom masses must be non-negative");
        }
    }

    const std::vector<Atom>& atoms() const { return atoms_; }

    double total_mass() const {
        double s = 0.0;
        for (const auto& a : atoms_) s += a.mass;
        return s;
    }

private:
    std::vector<Atom> atoms_;
};

/// p stacked densities over one grid, stored contiguously (block-major).
class StateVec {
public:
    StateVec() = default;

    StateVec(GridPtr grid, std::size_t p, Vec values)
        : grid_(std::move(grid)), p_(p), values_(std::move(values)) {
        require(grid_ != nullptr, "state without grid");
        require(p_ >= 1, "state needs at least one block");
        require(static_cast<std::size_t>(values_.size()) == p_ * grid_->size(),
                "state length does not match p * grid size");
    }

    explicit StateVec(const std::vector<Density>& blocks) {
        require(!blocks.empty(), "state needs at least one block");
        grid_ = blocks.front().grid();
        p_ = blocks.size();
        auto n = static_cast<Eigen::Index>(grid_->size());
        values_.resize(n * static_cast<Eigen::Index>(p_));
        for (std::size_t i = 0; i < p_; ++i) {
            require_same_grid(grid_, blocks[i].grid());
            values_.segment(static_cast<Eigen::Index>(i) * n, n) = blocks[i].values();
        }
    }

    static StateVec zeros(GridPtr grid, std::size_t p) {
        auto len = static_cast<Eigen::Index>(p * grid->size());
        return StateVec(std::move(grid), p, Vec::Zero(len));
    }

    const GridPtr& grid() const { return grid_; }
    std::size_t p() const { return p_; }
    const Vec& values() const { return values_; }
    Vec& values() { return values_; }

    Density block(std::size_t i) const {
        require(i < p_, "block index out of range");
        auto n = static_cast<Eigen::Index>(grid_->size());
        return Density(grid_, values_.segment(static_cast<Eigen::Index>(i) * n, n));
    }

    bool is_positive() const { return values_.minCoeff() >= 0.0; }

private:
    GridPtr grid_;
    std::size_t p_ = 0;
    Vec values_;
};

/// Total variation norm: sum_i w_i |a_i|.
inline double l1_norm(const Density& a) {
    return a.grid()->weights().dot(a.values().cwiseAbs());
}

/// Dual pairing <g, a> = sum_i w_i g_i a_i.
inline double pair(const TestFunction& g, const Density& a) {
    require_same_grid(g.grid(), a.grid());
    return (a.grid()->weights().array() * g.values().array() * a.values().array()).sum();
}

inline double pair_atomic(const std::function<double(std::span<const double>)>& g,
                          const AtomicMeasure& m) {
    double s = 0.0;
    for (const auto& a : m.atoms()) s += a.mass * g(a.location);
    return s;
}

/// Product pairing: sum of block pairings.
inline double pair_p(const std::vector<TestFunction>& gs, const StateVec& s) {
    require(gs.size() == s.p(), "pair_p: number of test functions does not match p");
    double total = 0.0;
    for (std::size_t i = 0; i < gs.size(); ++i) total += pair(gs[i], s.block(i));
    return total;
}

/// Stacks test functions into one pn-vector matching StateVec layout.
inline Vec stack(const std::vector<TestFunction>& gs) {
    require(!gs.empty(), "stack: empty test-function list");
    auto n = static_cast<Eigen::Index>(gs.front().size());
    Vec out(n * static_cast<Eigen::Index>(gs.size()));
    for (std::size_t i = 0; i < gs.size(); ++i) {
        require_same_grid(gs.front().grid(), gs[i].grid());
        out.segment(static_cast<Eigen::Index>(i) * n, n) = gs[i].values();
    }
    return out;
}

/// Nearest-cell deposition: each atom's mass lands in one cell as mass / w.
inline Density deposit(const AtomicMeasure& m, const GridPtr& grid) {
    Vec v = Vec::Zero(static_cast<Eigen::Index>(grid->size()));
    for (const auto& a : m.atoms()) {
        auto cell = grid->nearest_cell(a.location);
        v[static_cast<Eigen::Index>(cell)] += a.mass / grid->weight(cell);
    }
    return Density(grid, std::move(v));
}

/// Index shift moving cell 0 of the profile onto `cell`: out_i = a_{i - cell}.
/// Non-periodic grids drop whatever moves past the boundary.
inline Density shift(const Density& a, std::size_t cell) {
    const auto& grid = *a.grid();
    Vec v = Vec::Zero(a.values().size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (auto src = grid.difference(i, cell)) {
            v[static_cast<Eigen::Index>(i)] = a[*src];
        }
    }
    return Density(a.grid(), std::move(v));
}

}  // namespace carma

#endif
