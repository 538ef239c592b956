#ifndef CARMA_DYNAMICS_HPP
#define CARMA_DYNAMICS_HPP

// Deterministic flow exp(tM) of the companion matrix, spectral and
// stationarity diagnostics, the moving-average kernel (direct and by
// Fourier inversion) and exact path simulation.
//
// Simulation is exact in distribution: between events the state moves by
// the flow plus the integrated drift, both read off one exponential of the
// augmented matrix [[M, E_p gamma], [0, 0]]; at a jump the mark is injected
// into the last block.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "carma/core.hpp"
#include "carma/levy.hpp"
#include "carma/model.hpp"
#include "carma/rng.hpp"

namespace carma {

/// exp(t M) by scaling and squaring with a degree-13 Pade approximant.
inline Mat expm(const Mat& m) {
    Mat out = m.exp();
    if (!out.allFinite()) throw Error(ErrorCode::convergence, "matrix exponential overflowed");
    return out;
}

class Flow {
public:
    struct Step {
        Mat transition;  // exp(dt M)
        Vec drift;       // int_0^dt exp(s M) E_p gamma ds
    };

    explicit Flow(const CarmaModel& model)
        : model_(&model),
          generator_(model.state_matrix()),
          drift_input_(model.injection_matrix() * drift_density(model.driver()).values()) {}

    const CarmaModel& model() const { return *model_; }
    const Mat& generator() const { return generator_; }
    const Vec& drift_input() const { return drift_input_; }
    Eigen::Index dim() const { return generator_.rows(); }

    Mat exp(double t) const {
        require(t >= 0.0, "flow: time must be >= 0");
        if (t == 0.0) return Mat::Identity(dim(), dim());
        return expm(t * generator_);
    }

    Step compute_step(double dt) const {
        require(dt >= 0.0, "flow: step must be >= 0");
        const auto d = dim();
        if (dt == 0.0) return {Mat::Identity(d, d), Vec::Zero(d)};
        Mat aug = Mat::Zero(d + 1, d + 1);
        aug.topLeftCorner(d, d) = generator_;
        aug.topRightCorner(d, 1) = drift_input_;
        Mat e = expm(dt * aug);
        return {e.topLeftCorner(d, d), e.topRightCorner(d, 1)};
    }

    /// Cached step for repeated output-grid spacings. Keys match within
    /// 1e-13 relative so linspace round-off does not defeat the cache.
    const Step& step(double dt) const {
        std::lock_guard<std::mutex> lock(cache_mutex_);
        for (auto& [key, value] : cache_) {
            if (std::abs(key - dt) <= 1e-13 * std::max(1.0, dt)) return value;
        }
        if (cache_.size() >= kCacheLimit) cache_.erase(cache_.begin());
        cache_.emplace_back(dt, compute_step(dt));
        return cache_.back().second;
    }

private:
    static constexpr std::size_t kCacheLimit = 64;

    const CarmaModel* model_;
    Mat generator_;
    Vec drift_input_;
    mutable std::mutex cache_mutex_;
    mutable std::vector<std::pair<double, Step>> cache_;
};

inline StateVec semigroup_apply(const Flow& flow, double t, const StateVec& s) {
    require(t >= 0.0, "semigroup_apply: t must be >= 0");
    if (t == 0.0) return s;
    return StateVec(s.grid(), s.p(), flow.exp(t) * s.values());
}

/// v(dt) = int_0^dt exp(sM) E_p gamma ds.
inline StateVec drift_convolution(const Flow& flow, double dt) {
    require(dt > 0.0, "drift_convolution: step must be > 0");
    const auto& m = flow.model();
    return StateVec(m.grid(), m.p(), flow.compute_step(dt).drift);
}

struct Path {
    std::vector<double> times;
    std::vector<StateVec> states;
    std::vector<Density> outputs;
    std::vector<JumpEvent> jumps;
    std::uint64_t seed = 0;
    std::uint64_t index = 0;
    std::size_t clipped = 0;  // entries in [floor, 0) set to zero
};

inline void check_time_grid(const std::vector<double>& t_grid) {
    require(!t_grid.empty(), "time grid is empty");
    for (double t : t_grid) require(std::isfinite(t), "time grid entries must be finite");
    for (std::size_t k = 1; k < t_grid.size(); ++k) {
        require(t_grid[k] > t_grid[k - 1], "time grid must be strictly increasing");
    }
}

/// Runs the variation-of-constants recursion along a fixed jump record.
/// Jumps at time <= t_grid[0] are applied before the first record.
inline Path propagate(const Flow& flow, const std::vector<double>& t_grid, StateVec x,
                      std::vector<JumpEvent> jumps, double clip_floor = -1e-12) {
    check_time_grid(t_grid);
    const auto& model = flow.model();
    const Mat& inject = model.injection_matrix();
    Path path;
    path.times = t_grid;
    path.states.reserve(t_grid.size());
    path.outputs.reserve(t_grid.size());

    auto enforce_cone = [&](double t) {
        if (!model.cone_mode()) return;
        Vec& v = x.values();
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            if (v[i] >= 0.0) continue;
            if (v[i] < clip_floor) {
                throw Error(ErrorCode::cone_violation,
                            "cone violation at time " + std::to_string(t) + ": entry " + std::to_string(i) +
                                " = " + std::to_string(v[i]));
            }
            v[i] = 0.0;
            ++path.clipped;
        }
    };
    auto advance = [&](double dt, bool cached) {
        if (dt <= 0.0) return;
        if (cached) {
            const auto& st = flow.step(dt);
            x.values() = st.transition * x.values() + st.drift;
        } else {
            auto st = flow.compute_step(dt);
            x.values() = st.transition * x.values() + st.drift;
        }
    };
    auto record = [&](double t) {
        enforce_cone(t);
        path.states.push_back(x);
        path.outputs.push_back(output(model.outputs(), x));
    };

    std::size_t j = 0;
    double now = t_grid.front();
    while (j < jumps.size() && jumps[j].time <= now) {
        x.values() += inject * jumps[j].mark.values();
        ++j;
    }
    record(now);
    for (std::size_t k = 1; k < t_grid.size(); ++k) {
        const double target = t_grid[k];
        bool jumped = false;
        while (j < jumps.size() && jumps[j].time <= target) {
            advance(jumps[j].time - now, false);
            now = jumps[j].time;
            x.values() += inject * jumps[j].mark.values();
            enforce_cone(now);
            jumped = true;
            ++j;
        }
        advance(target - now, !jumped);
        now = target;
        record(now);
    }
    path.jumps = std::move(jumps);
    return path;
}

/// Exact simulation from the model's initial state on t_grid (t_grid[0] = 0).
inline Path simulate_path(const Flow& flow, const std::vector<double>& t_grid, Rng& rng) {
    check_time_grid(t_grid);
    require(t_grid.front() == 0.0, "simulate_path: time grid must start at 0");
    const auto& model = flow.model();
    std::vector<JumpEvent> jumps;
    if (t_grid.back() > 0.0) jumps = sample_jumps(model.driver(), 0.0, t_grid.back(), rng);
    return propagate(flow, t_grid, model.initial(), std::move(jumps));
}

inline Path simulate_path(const CarmaModel& model, const std::vector<double>& t_grid, std::uint64_t seed,
                          std::uint64_t index = 0) {
    Flow flow(model);
    Rng rng = make_stream(seed, index);
    Path p = simulate_path(flow, t_grid, rng);
    p.seed = seed;
    p.index = index;
    return p;
}

struct SpectralReport {
    std::vector<cplx> eigenvalues;  // sorted by decreasing real part
    double spectral_bound = 0.0;
    bool stationary = false;
};

inline SpectralReport spectral_check(const CarmaModel& model) {
    const Mat& m = model.state_matrix();
    require(m.rows() <= 4096, "spectral_check: p*n must be <= 4096");
    Eigen::EigenSolver<Mat> solver(m, false);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::convergence, "eigenvalue solver did not converge");
    }
    SpectralReport r;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) r.eigenvalues.push_back(solver.eigenvalues()[i]);
    std::sort(r.eigenvalues.begin(), r.eigenvalues.end(), [](cplx a, cplx b) {
        return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
    });
    r.spectral_bound = r.eigenvalues.front().real();
    r.stationary = r.spectral_bound < 0.0;
    return r;
}

/// G(t) = C_q exp(tM) E_p as an n x n matrix.
inline Mat kernel_direct(const CarmaModel& model, double t) {
    require(t >= 0.0, "kernel_direct: t must be >= 0");
    Mat s = t == 0.0 ? Mat::Identity(model.state_matrix().rows(), model.state_matrix().cols())
                     : expm(t * model.state_matrix());
    return model.output_matrix() * s * model.injection_matrix();
}

struct KernelInversion {
    Mat value;
    double imag_residue = 0.0;
};

/// Coefficients D_r of z^r, z = 1/lambda, in the expansion of
/// Q(lambda) P(lambda)^{-1} E at infinity, for r = 1..count. Pure
/// polynomial algebra: P^{-1} = z^p sum_k B_k z^k with B_0 = I and
/// B_k = sum_{j=1}^{min(k,p)} A_j B_{k-j}.
inline std::vector<Mat> transfer_laurent(const CarmaModel& model, std::size_t count) {
    const auto n = static_cast<Eigen::Index>(model.n());
    const std::size_t p = model.p();
    const std::size_t q = model.q();
    const std::size_t lead = p - q;  // first non-zero power of z
    std::vector<Mat> b{Mat::Identity(n, n)};
    std::vector<Mat> out(count + 1, Mat::Zero(n, n));
    for (std::size_t r = lead; r <= count; ++r) {
        const std::size_t m = r - lead;
        while (b.size() <= m) {
            const std::size_t k = b.size();
            Mat bk = Mat::Zero(n, n);
            for (std::size_t j = 1; j <= std::min(k, p); ++j) bk += model.companion().a(j).matrix() * b[k - j];
            b.push_back(std::move(bk));
        }
        Mat h = Mat::Zero(n, n);
        for (std::size_t l = 0; l <= std::min(m, q); ++l) h += model.outputs()[q - l].matrix() * b[m - l];
        out[r] = h * model.input().matrix();
    }
    out.erase(out.begin());
    return out;
}

inline double default_omega_max(const SpectralReport& r) {
    double scale = 0.0;
    for (auto e : r.eigenvalues) scale = std::max(scale, std::abs(e));
    return 100.0 * std::max(scale, 1.0);
}

/// K(t) = (1/2pi) int exp(i w t) Q(iw) P(iw)^{-1} E dw by the trapezoid rule
/// on [-w_max, w_max] with n_omega intervals, for several t at once.
///
/// The transfer function decays like 1/w, so its leading Laurent terms are
/// first subtracted as sum_m R_m (lambda + c)^{-m}, whose inverse transform
/// R_m t^{m-1} e^{-ct} / (m-1)! is added back in closed form. The
/// quadrature only sees the O(w^-5) remainder.
inline std::vector<KernelInversion> kernel_fourier(const CarmaModel& model, const std::vector<double>& ts,
                                                   double omega_max, std::size_t n_omega) {
    require(omega_max > 0.0 && n_omega > 0, "kernel_fourier: omega_max and n_omega must be > 0");
    const auto spec = spectral_check(model);
    if (!spec.stationary) model_error("kernel_fourier: model is not stationary (spectral bound >= 0)");
    const auto n = static_cast<Eigen::Index>(model.n());

    constexpr std::size_t kTerms = 4;
    const double c = std::max(1.0, -spec.spectral_bound);
    const auto d = transfer_laurent(model, kTerms);
    std::vector<Mat> r(kTerms, Mat::Zero(n, n));
    for (std::size_t ri = 1; ri <= kTerms; ++ri) {
        Mat acc = d[ri - 1];
        for (std::size_t m = 1; m < ri; ++m) {
            double binom = std::tgamma(static_cast<double>(ri)) /
                           (std::tgamma(static_cast<double>(m)) * std::tgamma(static_cast<double>(ri - m + 1)));
            acc -= r[m - 1] * binom * std::pow(-c, static_cast<double>(ri - m));
        }
        r[ri - 1] = acc;
    }

    const CMat e = model.input().matrix().cast<cplx>();
    const double h = 2.0 * omega_max / static_cast<double>(n_omega);
    std::vector<CMat> sums(ts.size(), CMat::Zero(n, n));
    for (std::size_t k = 0; k <= n_omega; ++k) {
        const double w = -omega_max + static_cast<double>(k) * h;
        const double weight = (k == 0 || k == n_omega) ? 0.5 * h : h;
        const cplx lambda(0.0, w);
        CMat f = poly_Q(model, lambda) * poly_P(model, lambda).partialPivLu().solve(e);
        cplx denom = lambda + c;
        cplx power = 1.0;
        for (std::size_t m = 1; m <= kTerms; ++m) {
            power /= denom;
            f -= power * r[m - 1].cast<cplx>();
        }
        for (std::size_t i = 0; i < ts.size(); ++i) {
            sums[i] += (weight * std::exp(cplx(0.0, w * ts[i]))) * f;
        }
    }

    std::vector<KernelInversion> out;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const double t = ts[i];
        CMat val = sums[i] / (2.0 * M_PI);
        Mat tail = Mat::Zero(n, n);
        if (t > 0.0) {
            double fact = 1.0;
            for (std::size_t m = 1; m <= kTerms; ++m) {
                if (m > 1) fact *= static_cast<double>(m - 1);
                tail += r[m - 1] * (std::pow(t, static_cast<double>(m - 1)) * std::exp(-c * t) / fact);
            }
        } else if (t == 0.0) {
            tail = 0.5 * r[0];  // inversion converges to the midpoint of the jump
        }
        out.push_back({val.real() + tail, val.imag().cwiseAbs().maxCoeff()});
    }
    return out;
}

inline KernelInversion kernel_fourier(const CarmaModel& model, double t, double omega_max, std::size_t n_omega) {
    return kernel_fourier(model, std::vector<double>{t}, omega_max, n_omega).front();
}

struct KernelPositivity {
    bool positive = false;
    double min_entry = 0.0;
    double worst_t = 0.0;
};

/// Sampled stand-in for complete monotonicity: kernel_direct entrywise
/// >= -tol on a log-spaced grid of `count` times in [t_min, t_max].
inline KernelPositivity kernel_positivity(const CarmaModel& model, double t_min = 1e-3, double t_max = 50.0,
                                          std::size_t count = 64, double tol = 1e-10) {
    require(t_min > 0.0 && t_max > t_min && count >= 2, "kernel_positivity: bad time range");
    KernelPositivity r;
    r.min_entry = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < count; ++k) {
        double t = t_min * std::pow(t_max / t_min, static_cast<double>(k) / static_cast<double>(count - 1));
        double m = kernel_direct(model, t).minCoeff();
        if (m < r.min_entry) {
            r.min_entry = m;
            r.worst_t = t;
        }
    }
    r.positive = r.min_entry >= -tol;
    return r;
}

/// Burn-in long enough for exp(tau T) to fall below eps.
inline double auto_burn_in(const SpectralReport& spec, double eps = 1e-10) {
    return std::log(1.0 / eps) / std::abs(spec.spectral_bound);
}

/// Approximately stationary path: start at zero at time -T, run to the end
/// of t_grid, and keep only t_grid. Jump times in the result are relative to
/// the returned time axis (negative during burn-in).
inline Path simulate_stationary(const Flow& flow, const std::vector<double>& t_grid, Rng& rng,
                                std::optional<double> burn_in = std::nullopt) {
    check_time_grid(t_grid);
    const auto& model = flow.model();
    const auto spec = spectral_check(model);
    if (!spec.stationary) model_error("simulate_stationary: model is not stationary (spectral bound >= 0)");
    const double burn = burn_in.value_or(auto_burn_in(spec));
    require(burn >= 0.0, "simulate_stationary: burn-in must be >= 0");

    const double start = t_grid.front() - burn;
    std::vector<double> shifted;
    shifted.reserve(t_grid.size() + 1);
    if (burn > 0.0) shifted.push_back(0.0);
    for (double t : t_grid) shifted.push_back(t - start);
    std::vector<JumpEvent> jumps;
    if (shifted.back() > 0.0) jumps = sample_jumps(model.driver(), 0.0, shifted.back(), rng);

    Path path = propagate(flow, shifted, StateVec::zeros(model.grid(), model.p()), std::move(jumps));
    if (burn > 0.0) {
        path.times.erase(path.times.begin());
        path.states.erase(path.states.begin());
        path.outputs.erase(path.outputs.begin());
    }
    for (auto& t : path.times) t += start;
    for (auto& j : path.jumps) j.time += start;
    return path;
}

inline Path simulate_stationary(const CarmaModel& model, const std::vector<double>& t_grid, std::uint64_t seed,
                                std::optional<double> burn_in = std::nullopt, std::uint64_t index = 0) {
    Flow flow(model);
    Rng rng = make_stream(seed, index);
    Path p = simulate_stationary(flow, t_grid, rng, burn_in);
    p.seed = seed;
    p.index = index;
    return p;
}

using Box = std::vector<std::pair<double, double>>;

/// Per-block mass inside the box at record t_index.
inline std::vector<double> random_field_eval(const Path& path, std::size_t t_index, const Box& box) {
    require(t_index < path.states.size(), "random_field_eval: time index out of range");
    const auto& s = path.states[t_index];
    const auto& grid = *s.grid();
    Vec frac(static_cast<Eigen::Index>(grid.size()));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        frac[static_cast<Eigen::Index>(i)] = grid.weight(i) * grid.overlap_fraction(i, box);
    }
    const auto n = static_cast<Eigen::Index>(grid.size());
    std::vector<double> out(s.p());
    for (std::size_t b = 0; b < s.p(); ++b) {
        out[b] = frac.dot(s.values().segment(static_cast<Eigen::Index>(b) * n, n));
    }
    return out;
}

/// sum_j c_j X_j(box), the scalar CARMA random field.
inline double carma_field(const Path& path, std::size_t t_index, const Box& box, const std::vector<double>& c) {
    auto x = random_field_eval(path, t_index, box);
    require(c.size() <= x.size(), "carma_field: more weights than blocks");
    double y = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) y += c[j] * x[j];
    return y;
}

}  // namespace carma

#endif
