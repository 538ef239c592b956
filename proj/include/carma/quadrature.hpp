#ifndef CARMA_QUADRATURE_HPP
#define CARMA_QUADRATURE_HPP

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "carma/error.hpp"

namespace carma {

/// Gauss-Legendre nodes and weights on [-1, 1] (Newton on P_n).
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(std::size_t order) {
    require(order >= 1, "gauss_legendre: order must be >= 1");
    std::vector<double> x(order), w(order);
    const auto n = static_cast<double>(order);
    for (std::size_t i = 0; i < (order + 1) / 2; ++i) {
        double z = std::cos(M_PI * (static_cast<double>(i) + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = 0.0;
            for (std::size_t k = 1; k <= order; ++k) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * static_cast<double>(k) - 1.0) * z * p1 - (static_cast<double>(k) - 1.0) * p2) /
                     static_cast<double>(k);
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        // recompute the derivative at the converged root
        double p0 = 1.0, p1 = 0.0;
        for (std::size_t k = 1; k <= order; ++k) {
            double p2 = p1;
            p1 = p0;
            p0 = ((2.0 * static_cast<double>(k) - 1.0) * z * p1 - (static_cast<double>(k) - 1.0) * p2) /
                 static_cast<double>(k);
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        x[i] = -z;
        x[order - 1 - i] = z;
        w[i] = w[order - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

/// Composite Gauss-Legendre rule for the ds integrals.
struct TimeQuadrature {
    std::size_t order = 10;
    std::size_t panels = 64;

    TimeQuadrature doubled() const { return {order, panels * 2}; }

    /// (node, weight) pairs on [a, b]; empty when a == b.
    std::vector<std::pair<double, double>> nodes(double a, double b) const {
        require(panels >= 1, "quadrature panel count must be >= 1");
        require(b >= a, "quadrature interval must satisfy a <= b");
        std::vector<std::pair<double, double>> out;
        if (b == a) return out;
        auto [x, w] = gauss_legendre(order);
        const double h = (b - a) / static_cast<double>(panels);
        out.reserve(panels * order);
        for (std::size_t k = 0; k < panels; ++k) {
            const double mid = a + (static_cast<double>(k) + 0.5) * h;
            for (std::size_t j = 0; j < order; ++j) out.emplace_back(mid + 0.5 * h * x[j], 0.5 * h * w[j]);
        }
        return out;
    }
};

}  // namespace carma

#endif
