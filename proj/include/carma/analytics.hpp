#ifndef CARMA_ANALYTICS_HPP
#define CARMA_ANALYTICS_HPP

// Closed-form functionals of the state and output processes.
//
// Everything is expressed through the transported functional
// phi(u) = E_p* S_u* G for a dual vector G on the state space: the Laplace
// functional, the mean and the variance of <G, X_t> are time integrals of
// the driver's Laplace exponent / jump moments evaluated at phi(u).
// Adjoints are exact duals of the discretized operators under the
// weighted pairing (see adjoint_apply).

#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "carma/core.hpp"
#include "carma/dynamics.hpp"
#include "carma/levy.hpp"
#include "carma/model.hpp"
#include "carma/quadrature.hpp"

namespace carma {

/// S_t* G for a pn-vector G.
inline Vec semigroup_adjoint(const CarmaModel& model, double t, const Vec& g) {
    const Vec& w = model.state_weights();
    if (t == 0.0) return g;
    return adjoint_apply(expm(t * model.state_matrix()), w, w, g);
}

/// Law of <G, X_t> given X_0 = x0, reduced to per-node jump projections.
class TransportedFunctional {
public:
    TransportedFunctional(const CarmaModel& model, const Vec& g, double t, const StateVec& x0,
                          const TimeQuadrature& quad) {
        require(t >= 0.0, "horizon must be >= 0");
        require(static_cast<std::size_t>(g.size()) == model.p() * model.n(), "functional must have p*n entries");
        require(x0.p() == model.p(), "start state must have p blocks");
        const Vec& w = model.state_weights();
        initial_ = w.dot(semigroup_adjoint(model, t, g).cwiseProduct(x0.values()));
        for (auto [u, wt] : quad.nodes(0.0, t)) {
            Vec phi = injection_adjoint(model, semigroup_adjoint(model, u, g));
            weights_.push_back(wt);
            projections_.emplace_back(model.driver(), phi);
        }
    }

    /// <S_t* G, x0>_p.
    double initial() const { return initial_; }

    /// log E[exp(-c <G, X_t>)]; nullopt when an exponential moment is missing.
    std::optional<cplx> log_laplace(cplx c) const {
        cplx acc = -c * initial_;
        for (std::size_t k = 0; k < projections_.size(); ++k) {
            auto psi = projections_[k].exponent(c);
            if (!psi) return std::nullopt;
            acc -= weights_[k] * *psi;
        }
        return acc;
    }

    double mean() const {
        double acc = initial_;
        for (std::size_t k = 0; k < projections_.size(); ++k) {
            acc += weights_[k] * (projections_[k].drift() + projections_[k].moment(1));
        }
        return acc;
    }

    double variance() const {
        double acc = 0.0;
        for (std::size_t k = 0; k < projections_.size(); ++k) acc += weights_[k] * projections_[k].moment(2);
        return acc;
    }

private:
    double initial_ = 0.0;
    std::vector<double> weights_;
    std::vector<JumpProjection> projections_;
};

/// E[exp(-<g, X_t>) | X_0 = x0] for g in the dual cone.
inline double laplace_state(const CarmaModel& model, double t, const std::vector<TestFunction>& gs,
                            const StateVec& x0, const TimeQuadrature& quad = {}) {
    require(gs.size() == model.p(), "laplace_state: need p test functions");
    TransportedFunctional tf(model, stack(gs), t, x0, quad);
    auto v = tf.log_laplace(1.0);
    if (!v) throw Error(ErrorCode::model, "laplace_state: exponential moment does not exist");
    return std::exp(v->real());
}

/// Complex mode: E[exp(-c <g, X_t>)].
inline cplx laplace_state(const CarmaModel& model, double t, cplx c, const Vec& g, const StateVec& x0,
                          const TimeQuadrature& quad = {}) {
    TransportedFunctional tf(model, g, t, x0, quad);
    auto v = tf.log_laplace(c);
    if (!v) throw Error(ErrorCode::model, "laplace_state: exponential moment does not exist");
    return std::exp(*v);
}

/// E[<g, Y_t>] from X_0 = x0.
inline double mean_output(const CarmaModel& model, double t, const TestFunction& g, const StateVec& x0,
                          const TimeQuadrature& quad = {}) {
    require_same_grid(model.grid(), g.grid());
    return TransportedFunctional(model, output_adjoint(model, g.values()), t, x0, quad).mean();
}

/// Var[<g, Y_t>] (independent of the start state).
inline double var_output(const CarmaModel& model, double t, const TestFunction& g, const TimeQuadrature& quad = {}) {
    require_same_grid(model.grid(), g.grid());
    return TransportedFunctional(model, output_adjoint(model, g.values()), t, model.initial(), quad).variance();
}

/// int_0^horizon exp(uM) E_p S E_p^T exp(uM^T) du with S = rho E[J J^T]:
/// the covariance matrix (density coordinates) accumulated over `horizon`.
inline Mat state_covariance(const CarmaModel& model, double horizon, const TimeQuadrature& quad = {}) {
    require(horizon >= 0.0, "state_covariance: horizon must be >= 0");
    const Mat src = model.injection_matrix() * jump_second_moment(model.driver()) *
                    model.injection_matrix().transpose();
    const auto d = model.state_matrix().rows();
    Mat acc = Mat::Zero(d, d);
    for (auto [u, w] : quad.nodes(0.0, horizon)) {
        Mat e = expm(u * model.state_matrix());
        acc += w * (e * src * e.transpose());
    }
    return acc;
}

/// Truncation horizon for the stationary integrals: exp(tau T) = eps.
inline double stationary_horizon(const CarmaModel& model, double eps = 1e-12) {
    auto spec = spectral_check(model);
    if (!spec.stationary) model_error("stationary quantity requested for a non-stationary model");
    return std::log(1.0 / eps) / std::abs(spec.spectral_bound);
}

inline Mat stationary_state_covariance(const CarmaModel& model, const TimeQuadrature& quad = {}) {
    return state_covariance(model, stationary_horizon(model), quad);
}

/// g1^T W C exp(hM) Sigma C^T W g2.
inline double output_covariance(const CarmaModel& model, const Mat& sigma, double h, const TestFunction& g1,
                                const TestFunction& g2) {
    require(h >= 0.0, "autocov: lag must be >= 0");
    const Vec& w = model.grid()->weights();
    const Vec left = model.output_matrix().transpose() * w.cwiseProduct(g1.values());
    const Vec right = model.output_matrix().transpose() * w.cwiseProduct(g2.values());
    const Mat e = h == 0.0 ? Mat::Identity(sigma.rows(), sigma.cols()) : expm(h * model.state_matrix());
    return left.dot(e * sigma * right);
}

/// Cov[<g1, Y_{t+h}>, <g2, Y_t> | F_s].
inline double autocov(const CarmaModel& model, double t, double h, double s, const TestFunction& g1,
                      const TestFunction& g2, const TimeQuadrature& quad = {}) {
    require(s <= t, "autocov: need s <= t");
    return output_covariance(model, state_covariance(model, t - s, quad), h, g1, g2);
}

inline double autocov_stationary(const CarmaModel& model, double h, const TestFunction& g1, const TestFunction& g2,
                                 const TimeQuadrature& quad = {}) {
    return output_covariance(model, stationary_state_covariance(model, quad), h, g1, g2);
}

/// lim E[<g, Y_t>] = <g, C (-M)^{-1} E_p (gamma_0 + rho E[J])>.
inline double mean_stationary(const CarmaModel& model, const TestFunction& g) {
    auto spec = spectral_check(model);
    if (!spec.stationary) model_error("mean_stationary: model is not stationary");
    const Vec src = model.injection_matrix() *
                    (drift_density(model.driver()).values() + jump_mean_density(model.driver()).values());
    const Vec x = model.state_matrix().partialPivLu().solve(-src);
    return g.grid()->weights().dot(g.values().cwiseProduct(model.output_matrix() * x));
}

/// Payoff Upsilon(x) = int exp((a + iy) x) F(y) dy.
struct Payoff {
    enum class Kind { exp_affine, damped_call, tabulated };

    Kind kind = Kind::exp_affine;
    double damping = 0.0;  // a
    double strike = 0.0;
    std::vector<double> y;     // tabulated grid, ascending
    std::vector<cplx> transform;

    static Payoff exp_affine(double a) { return {Kind::exp_affine, a, 0.0, {}, {}}; }

    static Payoff damped_call(double strike, double a) {
        require(a != 0.0, "damped call needs a non-zero damping");
        return {Kind::damped_call, a, strike, {}, {}};
    }

    static Payoff tabulated(double a, std::vector<double> y, std::vector<cplx> transform) {
        require(y.size() >= 2 && y.size() == transform.size(), "tabulated payoff needs matching y/transform grids");
        for (std::size_t k = 1; k < y.size(); ++k) require(y[k] > y[k - 1], "tabulated y-grid must ascend");
        return {Kind::tabulated, a, 0.0, std::move(y), std::move(transform)};
    }

    /// exp(-(a+iy)K) / (2 pi (a+iy)^2): for a > 0 the call (x-K)^+, for
    /// a < 0 the put (K-x)^+.
    static cplx hockey_stick_transform(double a, double y, double strike) {
        const cplx z(a, y);
        return std::exp(-z * strike) / (2.0 * M_PI * z * z);
    }
};

struct PricingOptions {
    double y_max = 200.0;
    std::size_t nodes = 8192;
    double tail_tolerance = 1e-6;
    TimeQuadrature quad{};
};

struct PriceResult {
    double value = 0.0;
    double imag_residue = 0.0;
    double tail_estimate = 0.0;  // outer-decile contribution relative to |value|
};

/// E[Upsilon(<h, Y_tau>) | X_t = xt] by Fourier inversion over the y-grid.
inline PriceResult price_expectation(const CarmaModel& model, double tau, double t, const StateVec& xt,
                                     const TestFunction& h, const Payoff& payoff, const PricingOptions& opt = {}) {
    require(tau >= t, "price_expectation: need valuation time <= horizon");
    require_same_grid(model.grid(), h.grid());
    const TransportedFunctional tf(model, output_adjoint(model, h.values()), tau - t, xt, opt.quad);

    // E[exp((a + iy) <h, Y>)] = E[exp(-c <C* h, X>)] with c = -(a + iy)
    auto char_fn = [&](double a, double y) {
        auto v = tf.log_laplace(-cplx(a, y));
        if (!v) {
            throw Error(ErrorCode::model, "price_expectation: exponential moment E[exp(a <h, Y>)] does not exist");
        }
        return std::exp(*v);
    };

    PriceResult r;
    if (payoff.kind == Payoff::Kind::exp_affine) {
        cplx v = char_fn(payoff.damping, 0.0);
        r.value = v.real();
        r.imag_residue = std::abs(v.imag());
        return r;
    }

    std::vector<double> ys;
    std::vector<cplx> fhat;
    if (payoff.kind == Payoff::Kind::damped_call) {
        require(opt.nodes >= 2 && opt.y_max > 0.0, "pricing grid needs >= 2 nodes and y_max > 0");
        ys.resize(opt.nodes);
        fhat.resize(opt.nodes);
        for (std::size_t k = 0; k < opt.nodes; ++k) {
            ys[k] = -opt.y_max + 2.0 * opt.y_max * static_cast<double>(k) / static_cast<double>(opt.nodes - 1);
            fhat[k] = Payoff::hockey_stick_transform(payoff.damping, ys[k], payoff.strike);
        }
    } else {
        ys = payoff.y;
        fhat = payoff.transform;
    }

    const double y_extent = std::max(std::abs(ys.front()), std::abs(ys.back()));
    cplx total = 0.0, outer = 0.0;
    for (std::size_t k = 0; k < ys.size(); ++k) {
        double left = k > 0 ? ys[k] - ys[k - 1] : 0.0;
        double right = k + 1 < ys.size() ? ys[k + 1] - ys[k] : 0.0;
        cplx term = 0.5 * (left + right) * char_fn(payoff.damping, ys[k]) * fhat[k];
        total += term;
        if (std::abs(ys[k]) >= 0.9 * y_extent) outer += term;
    }

    double value = total.real();
    if (payoff.kind == Payoff::Kind::damped_call && payoff.damping < 0.0) {
        value += tf.mean() - payoff.strike;  // put-call parity
    }
    r.value = value;
    r.imag_residue = std::abs(total.imag());
    r.tail_estimate = std::abs(outer.real()) / std::max(std::abs(value), 1e-300);
    if (r.tail_estimate > opt.tail_tolerance) {
        throw Error(ErrorCode::convergence, "price_expectation: y-grid too short, outer-decile contribution " +
                                                std::to_string(r.tail_estimate) + " of the value");
    }
    return r;
}

using ForwardWeight = std::function<double(double u, double tau1, double tau2)>;

inline double arithmetic_average_weight(double, double tau1, double tau2) { return 1.0 / (tau2 - tau1); }

/// int_{tau1}^{tau2} w(u) f(du), the spatial axis 0 read as delivery time.
inline double flow_forward(const Density& f, double tau1, double tau2,
                           const ForwardWeight& weight = arithmetic_average_weight) {
    require(tau2 > tau1, "flow_forward: delivery interval is empty");
    const auto& grid = *f.grid();
    Box box(grid.dim());
    box[0] = {tau1, tau2};
    for (std::size_t k = 1; k < grid.dim(); ++k) box[k] = {grid.hull_lo()[k], grid.hull_hi()[k]};
    double acc = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        double frac = grid.overlap_fraction(i, box);
        if (frac == 0.0) continue;
        acc += grid.weight(i) * frac * weight(grid.point(i)[0], tau1, tau2) * f[i];
    }
    return acc;
}

using ProductionWeight = std::function<TestFunction(double t)>;

/// int_{t_a}^{t_b} <eta_t, Y_t> dt, trapezoid on the path times with linear
/// interpolation at the interval ends.
inline double production_integral(const Path& path, const ProductionWeight& eta, double t_a, double t_b) {
    require(!path.times.empty(), "production_integral: empty path");
    require(t_a <= t_b, "production_integral: empty time range");
    require(t_a >= path.times.front() && t_b <= path.times.back(), "production_integral: range outside the path");
    if (t_a == t_b) return 0.0;
    auto value_at = [&](std::size_t k) { return pair(eta(path.times[k]), path.outputs[k]); };
    auto interp = [&](double t) {
        auto it = std::lower_bound(path.times.begin(), path.times.end(), t);
        auto k = static_cast<std::size_t>(std::distance(path.times.begin(), it));
        if (path.times[k] == t) return value_at(k);
        double t0 = path.times[k - 1], t1 = path.times[k];
        double v0 = pair(eta(t), path.outputs[k - 1]), v1 = pair(eta(t), path.outputs[k]);
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
    };
    std::vector<std::pair<double, double>> pts{{t_a, interp(t_a)}};
    for (std::size_t k = 0; k < path.times.size(); ++k) {
        if (path.times[k] > t_a && path.times[k] < t_b) pts.emplace_back(path.times[k], value_at(k));
    }
    pts.emplace_back(t_b, interp(t_b));
    double acc = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k) {
        acc += 0.5 * (pts[k].second + pts[k - 1].second) * (pts[k].first - pts[k - 1].first);
    }
    return acc;
}

}  // namespace carma

#endif
