#ifndef CARMA_LEVY_HPP
#define CARMA_LEVY_HPP

// Finite-activity subordinators: a positive drift plus compound-Poisson
// jumps whose marks are positive densities. Four mark constructions are
// supported:
//
//   FiniteBasis       J = sum_i z_i b_i, independent amplitudes z_i
//   ShiftedProfile    J = u * shift(phi, y), y drawn over grid cells
//   DiracAtoms        J = u * delta_y deposited on the grid
//   FixedJumpPoisson  J = z0 * mu
//
// Everything the closed-form layer needs (Laplace exponent, jump moments,
// exponential moments) is computed through JumpProjection, the law of the
// scalar <f, J> for a fixed test function f.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "carma/core.hpp"
#include "carma/operators.hpp"
#include "carma/rng.hpp"

namespace carma {

/// Law of a non-negative scalar jump amplitude.
class AmplitudeLaw {
public:
    enum class Kind { deterministic, discrete, exponential };

    AmplitudeLaw() = default;

    static AmplitudeLaw deterministic(double value) {
        require(value >= 0.0 && std::isfinite(value), "deterministic amplitude must be >= 0");
        AmplitudeLaw law;
        law.kind_ = Kind::deterministic;
        law.values_ = {value};
        law.probs_ = {1.0};
        law.cdf_ = {1.0};
        return law;
    }

    static AmplitudeLaw discrete(std::vector<double> values, std::vector<double> probs) {
        require(!values.empty() && values.size() == probs.size(),
                "discrete amplitude needs matching non-empty values/probs");
        double total = 0.0;
        for (std::size_t k = 0; k < values.size(); ++k) {
            require(values[k] >= 0.0 && std::isfinite(values[k]), "discrete amplitude values must be >= 0");
            require(probs[k] >= 0.0, "discrete amplitude probabilities must be >= 0");
            total += probs[k];
        }
        require(std::abs(total - 1.0) <= 1e-12, "discrete amplitude probabilities must sum to 1");
        AmplitudeLaw law;
        law.kind_ = Kind::discrete;
        law.values_ = std::move(values);
        law.probs_ = std::move(probs);
        law.build_cdf();
        return law;
    }

    static AmplitudeLaw exponential(double rate) {
        require(rate > 0.0 && std::isfinite(rate), "exponential amplitude rate must be > 0");
        AmplitudeLaw law;
        law.kind_ = Kind::exponential;
        law.rate_ = rate;
        return law;
    }

    Kind kind() const { return kind_; }
    double rate() const { return rate_; }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& probs() const { return probs_; }

    double mean() const {
        if (kind_ == Kind::exponential) return 1.0 / rate_;
        double m = 0.0;
        for (std::size_t k = 0; k < values_.size(); ++k) m += probs_[k] * values_[k];
        return m;
    }

    double second_moment() const {
        if (kind_ == Kind::exponential) return 2.0 / (rate_ * rate_);
        double m = 0.0;
        for (std::size_t k = 0; k < values_.size(); ++k) m += probs_[k] * values_[k] * values_[k];
        return m;
    }

    double variance() const {
        double m = mean();
        return std::max(0.0, second_moment() - m * m);
    }

    /// E[exp(-c u)]; nullopt when the transform diverges.
    std::optional<cplx> laplace(cplx c) const {
        if (kind_ == Kind::exponential) {
            if (c.real() <= -rate_) return std::nullopt;
            return rate_ / (rate_ + c);
        }
        cplx s = 0.0;
        for (std::size_t k = 0; k < values_.size(); ++k) s += probs_[k] * std::exp(-c * values_[k]);
        return s;
    }

    /// E[exp(s u)] for real s.
    std::optional<double> mgf(double s) const {
        auto v = laplace(cplx(-s, 0.0));
        if (!v) return std::nullopt;
        return v->real();
    }

    /// Law with density proportional to exp(s u) relative to this one.
    AmplitudeLaw tilt(double s) const {
        auto m = mgf(s);
        require(m.has_value(), "esscher tilt: amplitude exponential moment is infinite");
        switch (kind_) {
            case Kind::deterministic: return *this;
            case Kind::exponential: return exponential(rate_ - s);
            case Kind::discrete: {
                std::vector<double> p(values_.size());
                double total = 0.0;
                for (std::size_t k = 0; k < values_.size(); ++k) {
                    p[k] = probs_[k] * std::exp(s * values_[k]);
                    total += p[k];
                }
                for (auto& pk : p) pk /= total;
                AmplitudeLaw law;
                law.kind_ = Kind::discrete;
                law.values_ = values_;
                law.probs_ = std::move(p);
                law.build_cdf();
                return law;
            }
        }
        return *this;
    }

    double sample(Rng& rng) const {
        switch (kind_) {
            case Kind::deterministic: return values_.front();
            case Kind::exponential: return std::exponential_distribution<double>(rate_)(rng);
            case Kind::discrete: {
                double u = uniform01(rng);
                auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
                auto k = static_cast<std::size_t>(std::distance(cdf_.begin(), it));
                return values_[std::min(k, values_.size() - 1)];
            }
        }
        return 0.0;
    }

    std::string describe() const {
        switch (kind_) {
            case Kind::deterministic: return "deterministic(" + std::to_string(values_.front()) + ")";
            case Kind::exponential: return "exponential(rate=" + std::to_string(rate_) + ")";
            case Kind::discrete: return "discrete(" + std::to_string(values_.size()) + " points)";
        }
        return "?";
    }

    friend bool operator==(const AmplitudeLaw&, const AmplitudeLaw&) = default;

private:
    void build_cdf() {
        cdf_.resize(probs_.size());
        double c = 0.0;
        for (std::size_t k = 0; k < probs_.size(); ++k) {
            c += probs_[k];
            cdf_[k] = c;
        }
    }

    Kind kind_ = Kind::deterministic;
    std::vector<double> values_{0.0};
    std::vector<double> probs_{1.0};
    std::vector<double> cdf_{1.0};
    double rate_ = 1.0;
};

/// Discrete law over grid cells.
class LocationLaw {
public:
    LocationLaw() = default;

    explicit LocationLaw(Vec probs) : probs_(std::move(probs)) {
        require(probs_.size() > 0, "location law needs at least one cell");
        require(probs_.minCoeff() >= 0.0, "location probabilities must be >= 0");
        require(std::abs(probs_.sum() - 1.0) <= 1e-12, "location probabilities must sum to 1");
        cdf_.resize(static_cast<std::size_t>(probs_.size()));
        double c = 0.0;
        for (Eigen::Index i = 0; i < probs_.size(); ++i) {
            c += probs_[i];
            cdf_[static_cast<std::size_t>(i)] = c;
        }
    }

    /// Normalized cell weights (the reference measure restricted to the grid).
    static LocationLaw from_weights(const Grid& grid) {
        return LocationLaw(grid.weights() / grid.weights().sum());
    }

    static LocationLaw single(std::size_t cells, std::size_t cell) {
        Vec p = Vec::Zero(static_cast<Eigen::Index>(cells));
        p[static_cast<Eigen::Index>(cell)] = 1.0;
        return LocationLaw(std::move(p));
    }

    const Vec& probs() const { return probs_; }
    std::size_t size() const { return static_cast<std::size_t>(probs_.size()); }

    std::size_t sample(Rng& rng) const {
        double u = uniform01(rng);
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        auto k = static_cast<std::size_t>(std::distance(cdf_.begin(), it));
        // skip trailing zero-probability cells that a rounding overshoot could land on
        k = std::min(k, cdf_.size() - 1);
        while (k > 0 && probs_[static_cast<Eigen::Index>(k)] == 0.0) --k;
        return k;
    }

private:
    Vec probs_;
    std::vector<double> cdf_;
};

struct FiniteBasis {
    std::vector<Density> basis;             // b^1..b^d, positive
    Density drift;                          // gamma, positive
    double intensity = 0.0;                 // jumps per unit time
    std::vector<AmplitudeLaw> amplitudes;   // one per basis element
};

struct ShiftedProfile {
    Density profile;                        // phi, positive
    double drift_scale = 0.0;               // drift = drift_scale * phi
    double intensity = 0.0;
    LocationLaw locations;
    std::vector<AmplitudeLaw> amplitudes;   // one shared law, or one per cell
};

struct DiracAtoms {
    double intensity = 0.0;
    LocationLaw locations;
    std::vector<AmplitudeLaw> amplitudes;   // one shared law, or one per cell
};

struct FixedJumpPoisson {
    Density mu;                             // positive
    double z0 = 0.0;
    double intensity = 0.0;
};

struct JumpEvent {
    double time = 0.0;
    Density mark;
};

class LevyDriver {
public:
    using Spec = std::variant<FiniteBasis, ShiftedProfile, DiracAtoms, FixedJumpPoisson>;

    LevyDriver() = default;

    LevyDriver(GridPtr grid, Spec spec) : grid_(std::move(grid)), spec_(std::move(spec)) {
        require(grid_ != nullptr, "driver without grid");
        std::visit([this](const auto& s) { validate(s); }, spec_);
    }

    /// Pure drift, no jumps.
    static LevyDriver drift_only(const Density& gamma) {
        return LevyDriver(gamma.grid(), FiniteBasis{{}, gamma, 0.0, {}});
    }

    const GridPtr& grid() const { return grid_; }
    const Spec& spec() const { return spec_; }

    double intensity() const {
        return std::visit([](const auto& s) { return s.intensity; }, spec_);
    }

    std::string kind_name() const {
        switch (spec_.index()) {
            case 0: return "finite_basis";
            case 1: return "shifted_profile";
            case 2: return "dirac_atoms";
            default: return "fixed_jump_poisson";
        }
    }

    /// Amplitude law at location cell y (location-based kinds).
    template <class S>
    static const AmplitudeLaw& amplitude_at(const S& s, std::size_t y) {
        return s.amplitudes.size() == 1 ? s.amplitudes.front() : s.amplitudes[y];
    }

private:
    void check_intensity(double rate, bool allow_zero = false) const {
        require(std::isfinite(rate) && (rate > 0.0 || (allow_zero && rate == 0.0)),
                "driver intensity must be > 0");
    }
    void check_density(const Density& d, const char* what) const {
        require_same_grid(grid_, d.grid());
        require(d.is_positive(), std::string(what) + " must be a positive density");
    }
    void check_location_amplitudes(const std::vector<AmplitudeLaw>& amps,
                                   const LocationLaw& loc) const {
        require(loc.size() == grid_->size(), "location law must cover every grid cell");
        require(amps.size() == 1 || amps.size() == grid_->size(),
                "location amplitudes: give one shared law or one per cell");
    }

    void validate(const FiniteBasis& s) const {
        check_density(s.drift, "drift");
        check_intensity(s.intensity, s.basis.empty());
        require(s.basis.size() == s.amplitudes.size(), "finite basis: one amplitude law per basis element");
        for (const auto& b : s.basis) check_density(b, "basis element");
    }
    void validate(const ShiftedProfile& s) const {
        check_density(s.profile, "profile");
        require(s.drift_scale >= 0.0, "profile drift scale must be >= 0");
        check_intensity(s.intensity);
        check_location_amplitudes(s.amplitudes, s.locations);
    }
    void validate(const DiracAtoms& s) const {
        check_intensity(s.intensity);
        check_location_amplitudes(s.amplitudes, s.locations);
    }
    void validate(const FixedJumpPoisson& s) const {
        check_density(s.mu, "mu");
        require(s.z0 > 0.0 && std::isfinite(s.z0), "fixed jump size z0 must be > 0");
        check_intensity(s.intensity);
    }

    GridPtr grid_;
    Spec spec_;
};

/// gamma_0: the drift of the driver (finite activity needs no compensation).
inline Density drift_density(const LevyDriver& driver) {
    const auto& grid = driver.grid();
    if (auto s = std::get_if<FiniteBasis>(&driver.spec())) return s->drift;
    if (auto s = std::get_if<ShiftedProfile>(&driver.spec())) return s->drift_scale * s->profile;
    return Density::zeros(grid);
}

/// Law of <f, J> for a fixed real test-function vector f: a mixture over
/// components (locations), each a linear combination of independent
/// amplitudes.
class JumpProjection {
public:
    struct Term {
        double coef;
        std::size_t law;
    };

    JumpProjection(const LevyDriver& driver, const Vec& f) {
        const auto& grid = *driver.grid();
        const Vec& w = grid.weights();
        auto dot = [&](const Density& d) { return (w.array() * f.array() * d.values().array()).sum(); };
        drift_ = dot(drift_density(driver));
        intensity_ = driver.intensity();
        std::visit(
            [&](const auto& s) {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, FiniteBasis>) {
                    laws_ = s.amplitudes;
                    std::vector<Term> terms;
                    for (std::size_t i = 0; i < s.basis.size(); ++i) terms.push_back({dot(s.basis[i]), i});
                    weights_ = {1.0};
                    components_ = {std::move(terms)};
                } else if constexpr (std::is_same_v<S, FixedJumpPoisson>) {
                    laws_ = {AmplitudeLaw::deterministic(1.0)};
                    weights_ = {1.0};
                    components_ = {{Term{s.z0 * dot(s.mu), 0}}};
                } else {
                    laws_ = s.amplitudes;
                    const bool shared = s.amplitudes.size() == 1;
                    for (std::size_t y = 0; y < grid.size(); ++y) {
                        double py = s.locations.probs()[static_cast<Eigen::Index>(y)];
                        if (py == 0.0) continue;
                        double coef;
                        if constexpr (std::is_same_v<S, ShiftedProfile>) {
                            coef = dot(shift(s.profile, y));
                        } else {
                            coef = f[static_cast<Eigen::Index>(y)];  // w_y f_y u / w_y
                        }
                        weights_.push_back(py);
                        locations_.push_back(y);
                        components_.push_back({Term{coef, shared ? 0 : y}});
                    }
                }
            },
            driver.spec());
    }

    double drift() const { return drift_; }
    double intensity() const { return intensity_; }
    const std::vector<double>& weights() const { return weights_; }
    const std::vector<std::vector<Term>>& components() const { return components_; }
    const std::vector<AmplitudeLaw>& laws() const { return laws_; }
    /// Grid cell of each component (location-based kinds only).
    const std::vector<std::size_t>& locations() const { return locations_; }

    /// E[exp(-c <f, J>)].
    std::optional<cplx> mark_laplace(cplx c) const {
        cplx total = 0.0;
        for (std::size_t k = 0; k < components_.size(); ++k) {
            cplx prod = 1.0;
            for (const auto& t : components_[k]) {
                auto v = laws_[t.law].laplace(c * t.coef);
                if (!v) return std::nullopt;
                prod *= *v;
            }
            total += weights_[k] * prod;
        }
        return total;
    }

    /// psi(c f) = c <f, gamma_0> + rho * E[1 - exp(-c <f, J>)].
    std::optional<cplx> exponent(cplx c) const {
        cplx jump = 0.0;
        if (intensity_ > 0.0) {
            auto m = mark_laplace(c);
            if (!m) return std::nullopt;
            jump = intensity_ * (1.0 - *m);
        }
        return c * drift_ + jump;
    }

    /// rho * E[<f, J>^order], order 1 or 2.
    double moment(int order) const {
        require(order == 1 || order == 2, "jump moment order must be 1 or 2");
        double total = 0.0;
        for (std::size_t k = 0; k < components_.size(); ++k) {
            double mean = 0.0, var = 0.0;
            for (const auto& t : components_[k]) {
                mean += t.coef * laws_[t.law].mean();
                var += t.coef * t.coef * laws_[t.law].variance();
            }
            total += weights_[k] * (order == 1 ? mean : var + mean * mean);
        }
        return intensity_ * total;
    }

    /// E[exp(s <f, J>)] (no intensity factor).
    std::optional<double> mark_mgf(double s) const {
        auto v = mark_laplace(cplx(-s, 0.0));
        if (!v) return std::nullopt;
        return v->real();
    }

private:
    double drift_ = 0.0;
    double intensity_ = 0.0;
    std::vector<AmplitudeLaw> laws_;
    std::vector<double> weights_;
    std::vector<std::vector<Term>> components_;
    std::vector<std::size_t> locations_;
};

/// psi(f) = <f, gamma_0> + rho * E[1 - exp(-<f, J>)].
inline double laplace_exponent(const LevyDriver& driver, const TestFunction& f) {
    require_same_grid(driver.grid(), f.grid());
    auto v = JumpProjection(driver, f.values()).exponent(1.0);
    if (!v) throw Error(ErrorCode::model, "laplace exponent diverges: exponential moment does not exist");
    return v->real();
}

/// Complex mode psi(c f); nullopt flags a missing exponential moment.
inline std::optional<cplx> laplace_exponent(const LevyDriver& driver, cplx c, const TestFunction& f) {
    require_same_grid(driver.grid(), f.grid());
    return JumpProjection(driver, f.values()).exponent(c);
}

inline double jump_moment(const LevyDriver& driver, const TestFunction& f, int order) {
    require_same_grid(driver.grid(), f.grid());
    return JumpProjection(driver, f.values()).moment(order);
}

/// rho * E[J] as a density.
inline Density jump_mean_density(const LevyDriver& driver) {
    const auto& grid = driver.grid();
    const auto n = static_cast<Eigen::Index>(grid->size());
    Vec m = Vec::Zero(n);
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, FiniteBasis>) {
                for (std::size_t i = 0; i < s.basis.size(); ++i) m += s.amplitudes[i].mean() * s.basis[i].values();
            } else if constexpr (std::is_same_v<S, FixedJumpPoisson>) {
                m = s.z0 * s.mu.values();
            } else {
                for (std::size_t y = 0; y < grid->size(); ++y) {
                    double py = s.locations.probs()[static_cast<Eigen::Index>(y)];
                    if (py == 0.0) continue;
                    double u = LevyDriver::amplitude_at(s, y).mean();
                    if constexpr (std::is_same_v<S, ShiftedProfile>) {
                        m += py * u * shift(s.profile, y).values();
                    } else {
                        m[static_cast<Eigen::Index>(y)] += py * u / grid->weight(y);
                    }
                }
            }
        },
        driver.spec());
    return Density(grid, driver.intensity() * m);
}

/// rho * E[J J^T] in density coordinates (n x n). This is the covariance
/// form of the driver: Q f = rho E[J <f, J>] = S W f.
inline Mat jump_second_moment(const LevyDriver& driver) {
    const auto& grid = driver.grid();
    const auto n = static_cast<Eigen::Index>(grid->size());
    Mat s2 = Mat::Zero(n, n);
    std::visit(
        [&](const auto& s) {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, FiniteBasis>) {
                Vec mean = Vec::Zero(n);
                for (std::size_t i = 0; i < s.basis.size(); ++i) {
                    const Vec& b = s.basis[i].values();
                    s2 += s.amplitudes[i].variance() * b * b.transpose();
                    mean += s.amplitudes[i].mean() * b;
                }
                s2 += mean * mean.transpose();
            } else if constexpr (std::is_same_v<S, FixedJumpPoisson>) {
                s2 = s.z0 * s.z0 * s.mu.values() * s.mu.values().transpose();
            } else {
                for (std::size_t y = 0; y < grid->size(); ++y) {
                    double py = s.locations.probs()[static_cast<Eigen::Index>(y)];
                    if (py == 0.0) continue;
                    double u2 = LevyDriver::amplitude_at(s, y).second_moment();
                    if constexpr (std::is_same_v<S, ShiftedProfile>) {
                        Vec phi = shift(s.profile, y).values();
                        s2 += py * u2 * phi * phi.transpose();
                    } else {
                        auto iy = static_cast<Eigen::Index>(y);
                        s2(iy, iy) += py * u2 / (grid->weight(y) * grid->weight(y));
                    }
                }
            }
        },
        driver.spec());
    return driver.intensity() * s2;
}

/// One jump mark.
inline Density sample_mark(const LevyDriver& driver, Rng& rng) {
    const auto& grid = driver.grid();
    return std::visit(
        [&](const auto& s) -> Density {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, FiniteBasis>) {
                Vec v = Vec::Zero(static_cast<Eigen::Index>(grid->size()));
                for (std::size_t i = 0; i < s.basis.size(); ++i) v += s.amplitudes[i].sample(rng) * s.basis[i].values();
                return Density(grid, std::move(v));
            } else if constexpr (std::is_same_v<S, FixedJumpPoisson>) {
                return s.z0 * s.mu;
            } else if constexpr (std::is_same_v<S, ShiftedProfile>) {
                auto y = s.locations.sample(rng);
                double u = LevyDriver::amplitude_at(s, y).sample(rng);
                return u * shift(s.profile, y);
            } else {
                auto y = s.locations.sample(rng);
                double u = LevyDriver::amplitude_at(s, y).sample(rng);
                Vec v = Vec::Zero(static_cast<Eigen::Index>(grid->size()));
                v[static_cast<Eigen::Index>(y)] = u / grid->weight(y);
                return Density(grid, std::move(v));
            }
        },
        driver.spec());
}

/// Jumps on (t0, t1]: Poisson count, uniform times, sorted ascending.
inline std::vector<JumpEvent> sample_jumps(const LevyDriver& driver, double t0, double t1, Rng& rng) {
    require(t1 > t0, "sample_jumps: need t0 < t1");
    std::vector<JumpEvent> out;
    const double rate = driver.intensity() * (t1 - t0);
    if (rate <= 0.0) return out;
    const auto count = std::poisson_distribution<long long>(rate)(rng);
    std::vector<double> times(static_cast<std::size_t>(count));
    for (auto& t : times) t = t1 - (t1 - t0) * uniform01(rng);
    std::sort(times.begin(), times.end());
    out.reserve(times.size());
    for (double t : times) out.push_back({t, sample_mark(driver, rng)});
    return out;
}

/// L_{t1} - L_{t0} = (t1 - t0) gamma_0 + sum of marks.
inline Density sample_increment(const LevyDriver& driver, double t0, double t1, Rng& rng) {
    Density inc = (t1 - t0) * drift_density(driver);
    for (const auto& j : sample_jumps(driver, t0, t1, rng)) inc += j.mark;
    return inc;
}

/// E* theta: the test function whose pairing with a driver jump J equals
/// <theta, E J>. Under the discrete pairing the adjoint is W^{-1} E^T W.
inline Vec esscher_slope(const TestFunction& theta_last, const LinOp& input) {
    require_same_grid(theta_last.grid(), input.grid());
    const Vec& w = theta_last.grid()->weights();
    return (input.matrix().transpose() * (w.array() * theta_last.values().array()).matrix()).cwiseQuotient(w);
}

/// M(theta) = E[exp(<theta, E J>)].
inline double esscher_mgf(const LevyDriver& driver, const TestFunction& theta_last, const LinOp& input) {
    if (driver.intensity() == 0.0) return 1.0;
    auto m = JumpProjection(driver, esscher_slope(theta_last, input)).mark_mgf(1.0);
    if (!m) throw Error(ErrorCode::model, "esscher: exponential moment of the jump law is infinite");
    return *m;
}

/// Driver whose jump measure is exp(<theta, E nu>) times the original one.
/// Intensity becomes rho M(theta); amplitude (and location) laws are
/// reweighted. The drift is untouched.
inline LevyDriver esscher_tilt(const LevyDriver& driver, const TestFunction& theta_last, const LinOp& input) {
    const Vec slope = esscher_slope(theta_last, input);
    const double mgf = esscher_mgf(driver, theta_last, input);
    const auto& grid = *driver.grid();
    const Vec& w = grid.weights();
    auto dot = [&](const Density& d) { return (w.array() * slope.array() * d.values().array()).sum(); };

    auto spec = std::visit(
        [&](const auto& s) -> LevyDriver::Spec {
            using S = std::decay_t<decltype(s)>;
            S t = s;
            t.intensity = s.intensity * mgf;
            if constexpr (std::is_same_v<S, FiniteBasis>) {
                for (std::size_t i = 0; i < s.basis.size(); ++i) t.amplitudes[i] = s.amplitudes[i].tilt(dot(s.basis[i]));
            } else if constexpr (std::is_same_v<S, FixedJumpPoisson>) {
                // deterministic mark: only the rate changes
            } else {
                const std::size_t n = grid.size();
                Vec probs = Vec::Zero(static_cast<Eigen::Index>(n));
                std::vector<AmplitudeLaw> amps(n);
                for (std::size_t y = 0; y < n; ++y) {
                    double coef;
                    if constexpr (std::is_same_v<S, ShiftedProfile>) {
                        coef = dot(shift(s.profile, y));
                    } else {
                        coef = slope[static_cast<Eigen::Index>(y)];
                    }
                    const auto& law = LevyDriver::amplitude_at(s, y);
                    double py = s.locations.probs()[static_cast<Eigen::Index>(y)];
                    if (py == 0.0) {
                        amps[y] = law;
                        continue;
                    }
                    auto my = law.mgf(coef);
                    require(my.has_value(), "esscher: exponential moment of the jump law is infinite");
                    probs[static_cast<Eigen::Index>(y)] = py * *my / mgf;
                    amps[y] = law.tilt(coef);
                }
                probs /= probs.sum();
                t.locations = LocationLaw(std::move(probs));
                bool all_same = std::all_of(amps.begin(), amps.end(),
                                            [&](const AmplitudeLaw& a) { return a == amps.front(); });
                if (all_same) {
                    t.amplitudes = {amps.front()};
                } else {
                    t.amplitudes = std::move(amps);
                }
            }
            return t;
        },
        driver.spec());
    return LevyDriver(driver.grid(), std::move(spec));
}

/// Z_t = exp(sum_{t_k <= t} <theta, E J_k> - t rho (M(theta) - 1)).
inline double esscher_density(const LevyDriver& driver, const TestFunction& theta_last, const LinOp& input,
                              const std::vector<JumpEvent>& jumps, double t) {
    const Vec slope = esscher_slope(theta_last, input);
    const Vec& w = driver.grid()->weights();
    const double mgf = esscher_mgf(driver, theta_last, input);
    double log_z = -t * driver.intensity() * (mgf - 1.0);
    for (const auto& j : jumps) {
        if (j.time > t) break;
        log_z += (w.array() * slope.array() * j.mark.values().array()).sum();
    }
    return std::exp(log_z);
}

}  // namespace carma

#endif
