#ifndef CARMA_MODEL_HPP
#define CARMA_MODEL_HPP

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "carma/core.hpp"
#include "carma/levy.hpp"
#include "carma/operators.hpp"

namespace carma {

/// Sign conditions that make the process cone-valued.
struct PositivityReport {
    bool quasi_monotone = false;  // Metzler: off-diagonal entries of the pn x pn matrix >= 0
    bool output_positive = false; // every C_j entrywise >= 0
    bool input_positive = false;  // E entrywise >= 0
    double worst_off_diagonal = 0.0;

    bool ok() const { return quasi_monotone && output_positive && input_positive; }
};

inline PositivityReport validate_positivity(const CompanionOp& a, const LinOp& e, const std::vector<LinOp>& c) {
    PositivityReport r;
    const Mat& m = a.matrix();
    double worst = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if (i != j) worst = std::min(worst, m(i, j));
        }
    }
    r.worst_off_diagonal = std::isfinite(worst) ? worst : 0.0;
    r.quasi_monotone = r.worst_off_diagonal >= 0.0;
    r.output_positive = true;
    for (const auto& cj : c) r.output_positive = r.output_positive && cj.is_positive();
    r.input_positive = e.is_positive();
    return r;
}

/// Validated CARMA(p, q) system: companion operator, input E, outputs
/// C_0..C_q, driver and initial state. In cone mode the positivity report
/// must pass and the initial state must lie in the cone.
class CarmaModel {
public:
    CarmaModel(CompanionOp companion, LinOp input, std::vector<LinOp> outputs, LevyDriver driver,
               StateVec initial, bool cone_mode)
        : companion_(std::move(companion)),
          input_(std::move(input)),
          outputs_(std::move(outputs)),
          driver_(std::move(driver)),
          initial_(std::move(initial)),
          cone_mode_(cone_mode) {
        const auto& grid = companion_.grid();
        require(!outputs_.empty(), "model needs at least C_0");
        require(outputs_.size() <= companion_.p(), "model requires q < p");
        require_same_grid(grid, input_.grid());
        for (const auto& c : outputs_) require_same_grid(grid, c.grid());
        require_same_grid(grid, driver_.grid());
        require_same_grid(grid, initial_.grid());
        require(initial_.p() == companion_.p(), "initial state must have p blocks");

        const auto n = static_cast<Eigen::Index>(grid->size());
        const auto p = static_cast<Eigen::Index>(companion_.p());
        injection_ = Mat::Zero(p * n, n);
        injection_.block((p - 1) * n, 0, n, n) = input_.matrix();
        output_matrix_ = Mat::Zero(n, p * n);
        for (std::size_t j = 0; j < outputs_.size(); ++j) {
            output_matrix_.block(0, static_cast<Eigen::Index>(j) * n, n, n) = outputs_[j].matrix();
        }
        state_weights_ = grid->weights().replicate(p, 1);

        if (cone_mode_) {
            auto report = positivity();
            require(report.quasi_monotone, "cone mode: companion matrix is not quasi-monotone (Metzler)");
            require(report.output_positive, "cone mode: an output operator C_j is not positive");
            require(report.input_positive, "cone mode: input operator E is not positive");
            require(initial_.is_positive(), "cone mode: initial state is not in the cone");
        }
    }

    std::size_t p() const { return companion_.p(); }
    std::size_t q() const { return outputs_.size() - 1; }
    std::size_t n() const { return companion_.grid()->size(); }
    const GridPtr& grid() const { return companion_.grid(); }
    const CompanionOp& companion() const { return companion_; }
    const LinOp& input() const { return input_; }
    const std::vector<LinOp>& outputs() const { return outputs_; }
    const LevyDriver& driver() const { return driver_; }
    const StateVec& initial() const { return initial_; }
    bool cone_mode() const { return cone_mode_; }

    /// Full pn x pn companion matrix.
    const Mat& state_matrix() const { return companion_.matrix(); }
    /// pn x n matrix of E_p (E in the last block row).
    const Mat& injection_matrix() const { return injection_; }
    /// n x pn matrix of C_q.
    const Mat& output_matrix() const { return output_matrix_; }
    /// Quadrature weights replicated over the p blocks.
    const Vec& state_weights() const { return state_weights_; }

    PositivityReport positivity() const { return validate_positivity(companion_, input_, outputs_); }

    CarmaModel with_driver(LevyDriver d) const {
        return CarmaModel(companion_, input_, outputs_, std::move(d), initial_, cone_mode_);
    }
    CarmaModel with_initial(StateVec x0) const {
        return CarmaModel(companion_, input_, outputs_, driver_, std::move(x0), cone_mode_);
    }

private:
    CompanionOp companion_;
    LinOp input_;
    std::vector<LinOp> outputs_;
    LevyDriver driver_;
    StateVec initial_;
    bool cone_mode_ = false;
    Mat injection_;
    Mat output_matrix_;
    Vec state_weights_;
};

inline PositivityReport validate_positivity(const CarmaModel& model) { return model.positivity(); }

/// P(lambda) = lambda^p I - sum_k lambda^{p-k} A_k.
inline CMat poly_P(const CarmaModel& model, cplx lambda) {
    const auto n = static_cast<Eigen::Index>(model.n());
    const std::size_t p = model.p();
    CMat out = std::pow(lambda, static_cast<int>(p)) * CMat::Identity(n, n);
    for (std::size_t k = 1; k <= p; ++k) {
        out -= std::pow(lambda, static_cast<int>(p - k)) * model.companion().a(k).matrix().cast<cplx>();
    }
    return out;
}

/// Q(lambda) = C_0 + C_1 lambda + ... + C_q lambda^q.
inline CMat poly_Q(const CarmaModel& model, cplx lambda) {
    const auto n = static_cast<Eigen::Index>(model.n());
    CMat out = CMat::Zero(n, n);
    cplx power = 1.0;
    for (const auto& c : model.outputs()) {
        out += power * c.matrix().cast<cplx>();
        power *= lambda;
    }
    return out;
}

/// Adjoint of a matrix B under the weighted pairings: for B mapping a space
/// with weights `w_from` into one with weights `w_to`,
/// B* g = diag(w_from)^{-1} B^T diag(w_to) g.
inline Vec adjoint_apply(const Mat& b, const Vec& w_from, const Vec& w_to, const Vec& g) {
    return (b.transpose() * w_to.cwiseProduct(g)).cwiseQuotient(w_from);
}

/// C_q* g as a pn-vector.
inline Vec output_adjoint(const CarmaModel& model, const Vec& g) {
    return adjoint_apply(model.output_matrix(), model.state_weights(), model.grid()->weights(), g);
}

/// E_p* g as an n-vector.
inline Vec injection_adjoint(const CarmaModel& model, const Vec& g) {
    return adjoint_apply(model.injection_matrix(), model.grid()->weights(), model.state_weights(), g);
}

inline LevyDriver esscher_tilt(const LevyDriver& driver, const std::vector<TestFunction>& theta,
                               const CarmaModel& model) {
    require(theta.size() == model.p(), "esscher: theta needs p test functions");
    return esscher_tilt(driver, theta.back(), model.input());
}

inline double esscher_density(const LevyDriver& driver, const std::vector<TestFunction>& theta,
                              const CarmaModel& model, const std::vector<JumpEvent>& jumps, double t) {
    require(theta.size() == model.p(), "esscher: theta needs p test functions");
    return esscher_density(driver, theta.back(), model.input(), jumps, t);
}

}  // namespace carma

#endif
