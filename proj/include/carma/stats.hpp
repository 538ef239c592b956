#ifndef CARMA_STATS_HPP
#define CARMA_STATS_HPP

// Monte Carlo summaries. Reductions are compensated and run in index order,
// so results do not depend on how paths were scheduled.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "carma/error.hpp"
#include "carma/rng.hpp"

namespace carma {

class KahanSum {
public:
    void add(double x) {
        double y = x - comp_;
        double t = sum_ + y;
        comp_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

struct SampleStats {
    std::size_t count = 0;
    double mean = 0.0;
    double variance = 0.0;  // unbiased
    double se = 0.0;        // standard error of the mean

    /// |mean - target| within k standard errors.
    bool within(double target, double k = 3.0) const { return std::abs(mean - target) <= k * se; }
};

inline SampleStats summarize(std::span<const double> xs) {
    require(xs.size() >= 2, "summarize: need at least two samples");
    KahanSum s;
    for (double x : xs) s.add(x);
    SampleStats r;
    r.count = xs.size();
    r.mean = s.value() / static_cast<double>(xs.size());
    KahanSum ss;
    for (double x : xs) ss.add((x - r.mean) * (x - r.mean));
    r.variance = ss.value() / static_cast<double>(xs.size() - 1);
    r.se = std::sqrt(r.variance / static_cast<double>(xs.size()));
    return r;
}

/// Sample variance with the delta-method standard error
/// sqrt((m4 - s^4) / N).
struct VarianceStats {
    double variance = 0.0;
    double se = 0.0;

    bool within(double target, double k = 3.0) const { return std::abs(variance - target) <= k * se; }
};

inline VarianceStats variance_stats(std::span<const double> xs) {
    auto base = summarize(xs);
    KahanSum m4;
    for (double x : xs) {
        double d = x - base.mean;
        m4.add(d * d * d * d);
    }
    const auto n = static_cast<double>(xs.size());
    double fourth = m4.value() / n;
    return {base.variance, std::sqrt(std::max(0.0, fourth - base.variance * base.variance) / n)};
}

/// Sample covariance of paired draws with its standard error (the SE of the
/// mean of centered products).
inline SampleStats covariance_stats(std::span<const double> xs, std::span<const double> ys) {
    require(xs.size() == ys.size(), "covariance_stats: length mismatch");
    auto mx = summarize(xs).mean;
    auto my = summarize(ys).mean;
    std::vector<double> prod(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) prod[k] = (xs[k] - mx) * (ys[k] - my);
    auto r = summarize(prod);
    r.mean *= static_cast<double>(xs.size()) / static_cast<double>(xs.size() - 1);
    return r;
}

/// Lag-`lag` autocovariance of one series with a moving-block bootstrap
/// standard error.
inline SampleStats autocov_bootstrap(std::span<const double> xs, std::size_t lag, std::size_t block,
                                     std::size_t resamples, Rng& rng) {
    require(xs.size() > lag + block, "autocov_bootstrap: series too short");
    KahanSum s;
    for (double x : xs) s.add(x);
    const double mean = s.value() / static_cast<double>(xs.size());
    const std::size_t m = xs.size() - lag;
    std::vector<double> prod(m);
    for (std::size_t k = 0; k < m; ++k) prod[k] = (xs[k + lag] - mean) * (xs[k] - mean);
    KahanSum ps;
    for (double v : prod) ps.add(v);

    SampleStats r;
    r.count = m;
    r.mean = ps.value() / static_cast<double>(m);

    // block sums for O(1) block means
    std::vector<double> prefix(m + 1, 0.0);
    for (std::size_t k = 0; k < m; ++k) prefix[k + 1] = prefix[k] + prod[k];
    const std::size_t nblocks = m / block;
    const std::size_t starts = m - block + 1;
    std::vector<double> boot(resamples);
    for (auto& b : boot) {
        KahanSum acc;
        for (std::size_t j = 0; j < nblocks; ++j) {
            auto st = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(starts));
            st = std::min(st, starts - 1);
            acc.add(prefix[st + block] - prefix[st]);
        }
        b = acc.value() / static_cast<double>(nblocks * block);
    }
    auto bs = summarize(boot);
    r.variance = bs.variance;
    r.se = std::sqrt(bs.variance);
    return r;
}

}  // namespace carma

#endif
