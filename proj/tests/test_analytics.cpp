#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "models.hpp"

using namespace carma;
using namespace testmodels;

namespace {

TestFunction one(const GridPtr& g) { return TestFunction::constant(g, 1.0); }

TestFunction wave(const GridPtr& g) {
    return TestFunction::from_callable(g, [](std::span<const double> x) { return 1.0 + 0.5 * std::cos(2 * M_PI * x[0]); });
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

// Tabulated transform of x -> (x - K)^+ (a > 0) on a uniform y-grid.
Payoff tabulated_hockey(double a, double strike, double y_max, std::size_t nodes) {
    std::vector<double> y(nodes);
    std::vector<cplx> f(nodes);
    for (std::size_t k = 0; k < nodes; ++k) {
        y[k] = -y_max + 2 * y_max * static_cast<double>(k) / static_cast<double>(nodes - 1);
        cplx z(a, y[k]);
        f[k] = std::exp(-z * strike) / (2 * M_PI * z * z);
    }
    return Payoff::tabulated(a, y, f);
}

}  // namespace

TEST(TimeQuadrature, NodesAndWeights) {
    TimeQuadrature q{6, 5};
    auto nodes = q.nodes(0.0, 2.5);
    ASSERT_EQ(nodes.size(), 30u);
    double total = 0.0;
    for (auto [x, w] : nodes) {
        EXPECT_GT(x, 0.0);
        EXPECT_LT(x, 2.5);
        EXPECT_GT(w, 0.0);
        total += w;
    }
    EXPECT_NEAR(total, 2.5, 1e-14);
    EXPECT_TRUE(q.nodes(1.0, 1.0).empty());
    EXPECT_THROW((TimeQuadrature{6, 0}.nodes(0.0, 1.0)), Error);
}

TEST(TimeQuadrature, GaussLegendreExactForPolynomials) {
    for (std::size_t order : {1u, 2u, 5u, 10u, 20u}) {
        auto [x, w] = gauss_legendre(order);
        for (std::size_t deg = 0; deg < 2 * order; ++deg) {
            double acc = 0.0;
            for (std::size_t i = 0; i < order; ++i) acc += w[i] * std::pow(x[i], static_cast<double>(deg));
            double exact = deg % 2 ? 0.0 : 2.0 / static_cast<double>(deg + 1);
            EXPECT_NEAR(acc, exact, 1e-13) << order << " " << deg;
        }
    }
}

TEST(LaplaceState, Examples) {
    auto m = car1(1.0, 0.0, 1.0, 1.0);
    auto g = m.grid();
    StateVec x0({scalar(g, 0.7)});
    EXPECT_DOUBLE_EQ(laplace_state(m, 1.0, {TestFunction::zeros(g)}, x0), 1.0);
    EXPECT_NEAR(laplace_state(m, 0.0, {TestFunction::constant(g, 2.0)}, x0), std::exp(-1.4), 1e-15);
    EXPECT_THROW(laplace_state(m, 1.0, {one(g), one(g)}, x0), Error);
}

TEST(LaplaceState, CarOneAgainstRiemannAndMonteCarlo) {
    auto m = car1(1.0, 0.0, 1.0, 1.0);
    auto g = m.grid();
    const std::size_t n = 1000000;
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double s = (static_cast<double>(k) + 0.5) / static_cast<double>(n);
        acc += 1.0 - std::exp(-std::exp(-s));
    }
    double oracle = std::exp(-acc / static_cast<double>(n));
    double value = laplace_state(m, 1.0, {one(g)}, StateVec::zeros(g, 1));
    EXPECT_NEAR(value, oracle, 1e-10);

    Flow f(m);
    std::vector<double> z(10000);
    for (std::size_t k = 0; k < z.size(); ++k) {
        Rng rng = make_stream(8, k);
        z[k] = std::exp(-simulate_path(f, {0.0, 1.0}, rng).states.back().values()[0]);
    }
    auto st = summarize(z);
    EXPECT_TRUE(st.within(value)) << st.mean << " vs " << value;
}

TEST(MeanOutput, Examples) {
    auto g = scalar_grid();
    auto decay = CarmaModel(CompanionOp(g, {LinOp::identity(g, -1.3)}), LinOp::identity(g), {LinOp::identity(g)},
                            LevyDriver::drift_only(Density::zeros(g)), StateVec({scalar(g, 2.0)}), true);
    EXPECT_NEAR(mean_output(decay, 0.8, one(g), decay.initial()), 2.0 * std::exp(-1.3 * 0.8), 1e-14);

    auto m = car1();
    double v = mean_output(m, 1.0, one(g), m.initial());
    EXPECT_NEAR(v, 1.0 * (1 - std::exp(-1.0)), 1e-13);
    EXPECT_NEAR(v, 0.632121, 5e-7);
    EXPECT_DOUBLE_EQ(mean_output(m, 1.0, TestFunction::zeros(g), m.initial()), 0.0);
}

TEST(VarOutput, Examples) {
    auto g = scalar_grid();
    auto drift = CarmaModel(CompanionOp(g, {LinOp::identity(g, -1.0)}), LinOp::identity(g), {LinOp::identity(g)},
                            LevyDriver::drift_only(scalar(g, 0.5)), StateVec::zeros(g, 1), true);
    EXPECT_DOUBLE_EQ(var_output(drift, 2.0, one(g)), 0.0);

    auto m = car1();
    EXPECT_NEAR(var_output(m, 40.0, one(g)), 2 * 0.25 * 0.25 / 2.0, 1e-12);
    EXPECT_NEAR(var_output(m, 40.0, one(g)), 0.0625, 1e-12);
    // finite t: rho z^2 (1 - e^{-2at}) / (2a)
    EXPECT_NEAR(var_output(m, 0.7, one(g)), 0.0625 * (1 - std::exp(-1.4)), 1e-13);
    auto doubled = car1(1.0, 0.5, 2.0, 0.5);
    EXPECT_NEAR(var_output(doubled, 1.3, one(g)), 4.0 * var_output(m, 1.3, one(g)), 1e-13);
}

TEST(Autocov, Examples) {
    auto m = car1();
    auto g = m.grid();
    EXPECT_NEAR(autocov_stationary(m, 0.0, one(g), one(g)), 0.0625, 1e-10);
    double c0 = autocov_stationary(m, 0.0, one(g), one(g));
    for (double h : {0.3, 1.0, 2.5}) {
        EXPECT_NEAR(autocov_stationary(m, h, one(g), one(g)) / c0, std::exp(-h), 1e-12);
    }
    EXPECT_DOUBLE_EQ(autocov_stationary(m, 0.5, TestFunction::zeros(g), one(g)), 0.0);
    EXPECT_DOUBLE_EQ(autocov(m, 1.0, 0.5, 0.2, one(g), TestFunction::zeros(g)), 0.0);
    // conditional: e^{-ah} rho z^2 (1 - e^{-2a(t-s)}) / (2a)
    EXPECT_NEAR(autocov(m, 1.0, 0.5, 0.2, one(g), one(g)), std::exp(-0.5) * 0.0625 * (1 - std::exp(-1.6)), 1e-13);
    EXPECT_THROW(autocov(m, 1.0, 0.5, 1.5, one(g), one(g)), Error);
    EXPECT_THROW(autocov_stationary(car1(0.0), 0.0, one(g), one(g)), Error);
}

TEST(Autocov, StationaryCovarianceSolvesLyapunov) {
    for (const auto& m : {carma21(), ring_model(8, false)}) {
        Mat sigma = stationary_state_covariance(m);
        const Mat& M = m.state_matrix();
        Mat src = m.injection_matrix() * jump_second_moment(m.driver()) * m.injection_matrix().transpose();
        Mat resid = M * sigma + sigma * M.transpose() + src;
        EXPECT_LE(resid.cwiseAbs().maxCoeff(), 1e-9 * src.cwiseAbs().maxCoeff());
    }
}

TEST(MeanStationary, MatchesLongHorizonMean) {
    auto m = ring_model(8, false);
    auto g = wave(m.grid());
    EXPECT_LE(rel(mean_output(m, 60.0, g, StateVec::zeros(m.grid(), 2), {10, 256}), mean_stationary(m, g)), 1e-9);
}

// Pricing.

TEST(Payoff, HockeyStickTransformMatchesNumericalFourier) {
    // (1/2pi) int e^{-(a+iy)x} Upsilon(x) dx on a wide window, composite Gauss-Legendre
    for (auto [a, strike] : {std::pair{1.5, 0.5}, std::pair{-2.0, 0.5}, std::pair{0.7, -1.0}}) {
        for (double y : {0.0, 0.8, -3.0, 12.0}) {
            TimeQuadrature q{20, 400};
            cplx z(a, y);
            cplx acc = 0.0;
            if (a > 0) {
                for (auto [x, w] : q.nodes(strike, strike + 50.0 / a)) acc += w * std::exp(-z * x) * (x - strike);
            } else {
                for (auto [x, w] : q.nodes(strike + 50.0 / a, strike)) acc += w * std::exp(-z * x) * (strike - x);
            }
            acc /= 2 * M_PI;
            EXPECT_LE(std::abs(acc - Payoff::hockey_stick_transform(a, y, strike)), 1e-10) << a << " " << y;
        }
    }
}

TEST(Price, ExpAffineEqualsComplexLaplace) {
    auto m = car1();
    auto g = m.grid();
    StateVec x(g, 1, Vec::Constant(1, 0.3));
    for (double a : {-2.0, -0.5, 0.7}) {
        auto p = price_expectation(m, 1.0, 0.2, x, one(g), Payoff::exp_affine(a));
        cplx l = laplace_state(m, 0.8, cplx(-a, 0.0), output_adjoint(m, one(g).values()), x);
        EXPECT_NEAR(p.value, l.real(), 1e-10);
        EXPECT_LE(p.imag_residue, 1e-12);
    }
    auto r = ring_model(8);
    auto h = wave(r.grid());
    auto p = price_expectation(r, 0.6, 0.0, r.initial(), h, Payoff::exp_affine(-0.4));
    cplx l = laplace_state(r, 0.6, cplx(0.4, 0.0), output_adjoint(r, h.values()), r.initial());
    EXPECT_NEAR(p.value, l.real(), 1e-10);
}

TEST(Price, IdentityPayoffMatchesMean) {
    auto m = car1();
    auto g = m.grid();
    double mean = mean_output(m, 1.0, one(g), m.initial());
    PricingOptions opt;
    auto p = price_expectation(m, 1.0, 0.0, m.initial(), one(g), tabulated_hockey(1.0, 0.0, 2000.0, 40001), opt);
    EXPECT_LE(rel(p.value, mean), 1e-6) << p.value << " vs " << mean;
}

TEST(Price, DampedCallParityAtZeroStrike) {
    auto m = car1();
    auto g = m.grid();
    double mean = mean_output(m, 1.0, one(g), m.initial());
    PricingOptions opt;
    opt.y_max = 2000.0;
    opt.nodes = 20001;
    auto p = price_expectation(m, 1.0, 0.0, m.initial(), one(g), Payoff::damped_call(0.0, -1.0), opt);
    EXPECT_LE(rel(p.value, mean), 1e-6) << p.value << " vs " << mean;
}

TEST(Price, DampedCallAgreesWithMonteCarlo) {
    auto m = car1();
    auto g = m.grid();
    PricingOptions opt;
    opt.y_max = 2000.0;
    opt.nodes = 20001;
    const double strike = 0.5;
    auto p = price_expectation(m, 1.0, 0.0, m.initial(), one(g), Payoff::damped_call(strike, -2.0), opt);
    auto c = price_expectation(m, 1.0, 0.0, m.initial(), one(g), Payoff::damped_call(strike, 1.0), opt);
    EXPECT_LE(std::abs(p.value - c.value), 1e-6);

    Flow f(m);
    std::vector<double> payoff(20000);
    for (std::size_t k = 0; k < payoff.size(); ++k) {
        Rng rng = make_stream(13, k);
        payoff[k] = std::max(simulate_path(f, {0.0, 1.0}, rng).states.back().values()[0] - strike, 0.0);
    }
    auto st = summarize(payoff);
    EXPECT_TRUE(st.within(p.value)) << st.mean << " vs " << p.value << " se " << st.se;
}

TEST(Price, ShortGridFlagsConvergence) {
    auto m = car1();
    auto g = m.grid();
    try {
        price_expectation(m, 1.0, 0.0, m.initial(), one(g), Payoff::damped_call(0.5, -2.0));
        FAIL() << "expected a convergence error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::convergence);
    }
}

TEST(Price, MissingExponentialMomentIsAnError) {
    auto g = scalar_grid();
    LevyDriver d(g, FiniteBasis{{scalar(g, 1.0)}, Density::zeros(g), 1.0, {AmplitudeLaw::exponential(2.0)}});
    auto m = car1().with_driver(d);
    EXPECT_THROW(price_expectation(m, 1.0, 0.0, m.initial(), one(g), Payoff::exp_affine(3.0)), Error);
    EXPECT_NO_THROW(price_expectation(m, 1.0, 0.0, m.initial(), one(g), Payoff::exp_affine(1.0)));
}

TEST(Price, EsscherTiltedMeanMatchesReweighting) {
    auto m = ring_model(8);
    auto g = wave(m.grid());
    std::vector<TestFunction> theta{TestFunction::zeros(m.grid()), 0.6 * wave(m.grid())};
    auto tilted = m.with_driver(esscher_tilt(m.driver(), theta, m));
    double q_mean = mean_output(tilted, 1.0, g, m.initial());
    double q_price = price_expectation(tilted, 1.0, 0.0, m.initial(), g, Payoff::exp_affine(-0.5)).value;
    Flow f(m);
    std::vector<double> ys(10000), es(10000);
    for (std::size_t k = 0; k < ys.size(); ++k) {
        Rng rng = make_stream(17, k);
        auto p = simulate_path(f, {0.0, 1.0}, rng);
        double z = esscher_density(m.driver(), theta, m, p.jumps, 1.0);
        double y = pair(g, p.outputs.back());
        ys[k] = y * z;
        es[k] = std::exp(-0.5 * y) * z;
    }
    auto st = summarize(ys);
    EXPECT_TRUE(st.within(q_mean)) << st.mean << " vs " << q_mean << " se " << st.se;
    auto se = summarize(es);
    EXPECT_TRUE(se.within(q_price)) << se.mean << " vs " << q_price << " se " << se.se;
}

// Market helpers.

TEST(FlowForward, Examples) {
    auto g = Grid::rectilinear({{0.0, 2.0, 8}}, false);
    auto c = Density::constant(g, 1.7);
    EXPECT_NEAR(flow_forward(c, 0.5, 1.5), 1.7, 1e-14);
    EXPECT_NEAR(flow_forward(c, 0.3, 1.1), 1.7, 1e-14);  // partial cells
    auto unit = [](double, double, double) { return 1.0; };
    auto f = Density::from_callable(g, [](std::span<const double> x) { return x[0] * x[0]; });
    EXPECT_NEAR(flow_forward(f, 0.0, 2.0, unit), l1_norm(f), 1e-14);
    EXPECT_THROW(flow_forward(c, 1.0, 1.0), Error);
}

TEST(ProductionIntegral, Examples) {
    auto g = Grid::rectilinear({{0.0, 1.0, 4}}, false);
    Path path;
    path.times = {0.0, 0.5, 1.0, 2.0};
    for (std::size_t k = 0; k < 4; ++k) {
        path.outputs.push_back(Density::constant(g, 3.0));
        path.states.push_back(StateVec({Density::constant(g, 3.0)}));
    }
    auto zero = [&](double) { return TestFunction::zeros(g); };
    auto unit = [&](double) { return TestFunction::constant(g, 1.0); };
    EXPECT_DOUBLE_EQ(production_integral(path, zero, 0.0, 2.0), 0.0);
    EXPECT_NEAR(production_integral(path, unit, 0.25, 1.75), 1.5 * 3.0, 1e-14);
    EXPECT_DOUBLE_EQ(production_integral(path, unit, 0.7, 0.7), 0.0);
    EXPECT_THROW(production_integral(path, unit, 1.0, 0.5), Error);
    EXPECT_THROW(production_integral(path, unit, 0.0, 3.0), Error);
}

// Properties.

TEST(AnalyticsProperties, MonteCarloAgreementForEveryDriverKind) {
    auto base = ring_model(8);
    const auto& grid = base.grid();
    auto g = wave(grid);
    std::vector<TestFunction> gs{0.5 * g, 0.3 * g};
    const double t = 1.0, h = 0.5;
    for (const auto& d : driver_kinds(grid)) {
        auto m = base.with_driver(d);
        Flow f(m);
        const std::size_t n = 20000;
        std::vector<double> y_t(n), y_th(n), lap(n);
        for (std::size_t k = 0; k < n; ++k) {
            Rng rng = make_stream(23, k);
            auto p = simulate_path(f, {0.0, t, t + h}, rng);
            y_t[k] = pair(g, p.outputs[1]);
            y_th[k] = pair(g, p.outputs[2]);
            lap[k] = std::exp(-pair_p(gs, p.states[1]));
        }
        auto mean = summarize(y_t);
        double mean_a = mean_output(m, t, g, m.initial());
        EXPECT_TRUE(mean.within(mean_a)) << d.kind_name() << " mean " << mean.mean << " vs " << mean_a;
        auto var = variance_stats(y_t);
        double var_a = var_output(m, t, g);
        EXPECT_TRUE(var.within(var_a)) << d.kind_name() << " var " << var.variance << " vs " << var_a;
        auto lp = summarize(lap);
        double lap_a = laplace_state(m, t, gs, m.initial());
        EXPECT_TRUE(lp.within(lap_a)) << d.kind_name() << " laplace " << lp.mean << " vs " << lap_a;
        auto cov = covariance_stats(y_th, y_t);
        double cov_a = autocov(m, t, h, 0.0, g, g);
        EXPECT_TRUE(cov.within(cov_a)) << d.kind_name() << " autocov " << cov.mean << " vs " << cov_a << " se " << cov.se;
    }
}

TEST(AnalyticsProperties, LaplaceMonotoneInDualConeOrder) {
    auto m = ring_model(8);
    const auto& grid = m.grid();
    std::mt19937_64 gen(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Vec a(8), b(8), bump(8);
        for (int i = 0; i < 8; ++i) {
            a[i] = u(gen);
            b[i] = u(gen);
            bump[i] = 0.5 * u(gen);
        }
        std::vector<TestFunction> lo{TestFunction(grid, a), TestFunction(grid, b)};
        std::vector<TestFunction> hi{TestFunction(grid, a + bump), TestFunction(grid, b)};
        EXPECT_GE(laplace_state(m, 0.8, lo, m.initial()), laplace_state(m, 0.8, hi, m.initial()));
        EXPECT_LE(laplace_state(m, 0.8, lo, m.initial()), 1.0);
    }
}

TEST(AnalyticsProperties, AdjointDuality) {
    auto m = ring_model(8);
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Vec& w = m.state_weights();
    Flow f(m);
    for (int trial = 0; trial < 20; ++trial) {
        Vec g(16), x(16);
        for (int i = 0; i < 16; ++i) {
            g[i] = u(gen);
            x[i] = u(gen);
        }
        double t = 1.5 * (u(gen) + 1.0);
        double lhs = w.dot(semigroup_adjoint(m, t, g).cwiseProduct(x));
        double rhs = w.dot(g.cwiseProduct(semigroup_apply(f, t, StateVec(m.grid(), 2, x)).values()));
        EXPECT_LE(std::abs(lhs - rhs), 1e-8 * std::max(1.0, std::abs(rhs)));
    }
}

TEST(AnalyticsProperties, QuadratureDoublingIsStable) {
    auto m = ring_model(8);
    auto g = wave(m.grid());
    TimeQuadrature q;
    std::vector<TestFunction> gs{0.5 * g, 0.3 * g};
    EXPECT_LE(rel(mean_output(m, 2.0, g, m.initial(), q), mean_output(m, 2.0, g, m.initial(), q.doubled())), 1e-8);
    EXPECT_LE(rel(var_output(m, 2.0, g, q), var_output(m, 2.0, g, q.doubled())), 1e-8);
    EXPECT_LE(rel(laplace_state(m, 2.0, gs, m.initial(), q), laplace_state(m, 2.0, gs, m.initial(), q.doubled())),
              1e-8);
    EXPECT_LE(rel(autocov(m, 2.0, 0.5, 0.0, g, g, q), autocov(m, 2.0, 0.5, 0.0, g, g, q.doubled())), 1e-8);
}
