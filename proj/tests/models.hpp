#ifndef CARMA_TESTS_MODELS_HPP
#define CARMA_TESTS_MODELS_HPP

// Small reference models shared by the test binaries.

#include <cmath>

#include "carma/carma.hpp"

namespace testmodels {

using namespace carma;

inline GridPtr scalar_grid() { return Grid::from_points({{0.0}}, {1.0}, false); }

inline Density scalar(const GridPtr& g, double v) { return Density::constant(g, v); }

inline Density gaussian(const GridPtr& g, double center, double width, double mass) {
    auto d = Density::from_callable(g, [&](std::span<const double> x) {
        double dx = x[0] - center;
        dx -= std::round(dx);
        return std::exp(-0.5 * dx * dx / (width * width));
    });
    return (mass / l1_norm(d)) * d;
}

/// dX = -a X dt + dL, L = gamma t + compound Poisson(rho, deterministic z).
inline CarmaModel car1(double a = 1.0, double gamma = 0.5, double rho = 2.0, double z = 0.25, double x0 = 0.0) {
    auto g = scalar_grid();
    LevyDriver d(g, FiniteBasis{{scalar(g, 1.0)}, scalar(g, gamma), rho, {AmplitudeLaw::deterministic(z)}});
    return CarmaModel(CompanionOp(g, {LinOp::identity(g, -a)}), LinOp::identity(g), {LinOp::identity(g)}, d,
                      StateVec({scalar(g, x0)}), true);
}

/// Scalar CARMA(p,q) with A_k = -a_k, C_j = c_j and the given driver.
inline CarmaModel classical(const std::vector<double>& a, const std::vector<double>& c, const LevyDriver& d) {
    auto g = d.grid();
    std::vector<LinOp> as, cs;
    for (double x : a) as.push_back(LinOp::identity(g, -x));
    for (double x : c) cs.push_back(LinOp::identity(g, x));
    return CarmaModel(CompanionOp(g, as), LinOp::identity(g), cs, d, StateVec::zeros(g, a.size()), false);
}

/// CARMA(2,1) with a1=3, a2=2, c0=c1=1 driven by unit jumps of size z0.
inline CarmaModel carma21(double rho = 1.0, double z0 = 0.5) {
    auto g = scalar_grid();
    return classical({3.0, 2.0}, {1.0, 1.0}, LevyDriver(g, FixedJumpPoisson{scalar(g, 1.0), z0, rho}));
}

inline LinOp sum(const LinOp& a, const LinOp& b) { return LinOp::dense(a.grid(), a.matrix() + b.matrix()); }

/// CARMA(2,1) on a periodic ring of n cells. The cone-mode variant has
/// A_2 >= 0 and so cannot be stationary; the other one is stationary.
inline CarmaModel ring_model(std::size_t n = 16, bool cone = true) {
    auto g = Grid::rectilinear({{0.0, 1.0, n}}, true);
    auto k1 = LinOp::convolution(gaussian(g, 0.0, 0.05, 0.5));
    auto k2 = LinOp::convolution(gaussian(g, 0.0, 0.08, 0.1));
    CompanionOp comp(g, {sum(LinOp::identity(g, -2.0), k1), cone ? k2 : sum(LinOp::identity(g, -1.0), k2)});
    std::vector<LinOp> outs{LinOp::convolution(gaussian(g, 0.0, 0.1, 1.0)), LinOp::identity(g, 0.5)};
    LevyDriver d(g, ShiftedProfile{gaussian(g, 0.0, 0.04, 1.0), 0.2, 3.0, LocationLaw::from_weights(*g),
                                   {AmplitudeLaw::exponential(2.0)}});
    StateVec x0({Density::constant(g, 0.1), Density::zeros(g)});
    return CarmaModel(comp, LinOp::identity(g), outs, d, x0, cone);
}

/// One driver of each kind on g (a 1-d grid on [0, 1)).
inline std::vector<LevyDriver> driver_kinds(const GridPtr& g) {
    const auto n = static_cast<Eigen::Index>(g->size());
    std::vector<LevyDriver> out;
    out.emplace_back(g, FiniteBasis{{gaussian(g, 0.2, 0.1, 1.0), gaussian(g, 0.7, 0.15, 0.5)},
                                    0.3 * Density::constant(g, 1.0),
                                    2.0,
                                    {AmplitudeLaw::exponential(3.0), AmplitudeLaw::discrete({0.5, 1.0}, {0.5, 0.5})}});
    out.emplace_back(g, ShiftedProfile{gaussian(g, 0.0, 0.08, 1.0), 0.5, 1.5, LocationLaw::from_weights(*g),
                                       {AmplitudeLaw::exponential(2.0)}});
    Vec probs = Vec::Constant(n, 0.5 / static_cast<double>(n - 1));
    probs[0] = 0.5;
    out.emplace_back(g, DiracAtoms{2.5, LocationLaw(probs), {AmplitudeLaw::discrete({0.2, 0.6}, {0.25, 0.75})}});
    out.emplace_back(g, FixedJumpPoisson{gaussian(g, 0.5, 0.1, 1.0), 0.4, 1.2});
    return out;
}

inline std::vector<double> linspace(double a, double b, std::size_t steps) {
    std::vector<double> t(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) t[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(steps);
    return t;
}

}  // namespace testmodels

#endif
