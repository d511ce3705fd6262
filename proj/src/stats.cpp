#include "nssm/stats.hpp"

#include "nssm/errors.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace nssm::stats {

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must lie in [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    return quantile_sorted(values, q);
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double mean(std::span<const double> values) {
    if (values.empty()) throw InvalidArgument("mean of an empty sample");
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double logsumexp(std::span<const double> x) {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : x) mx = std::max(mx, v);
    if (!std::isfinite(mx)) return mx;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - mx);
    return mx + std::log(acc);
}

double poisson_logpmf(double y, double lambda) {
    if (y < 0.0 || y != std::floor(y)) return -std::numeric_limits<double>::infinity();
    if (lambda <= 0.0) return y == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return y * std::log(lambda) - lambda - std::lgamma(y + 1.0);
}

double poisson_cdf(double y, double lambda) {
    if (y < 0.0) return 0.0;
    if (lambda <= 0.0) return 1.0;
    return boost::math::gamma_q(std::floor(y) + 1.0, lambda);
}

double normal_cdf(double z) { return boost::math::cdf(boost::math::normal(), z); }

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

double trimmed_mean(std::vector<double> values, double trim) {
    if (values.empty()) throw InvalidArgument("trimmed mean of an empty sample");
    if (!(trim >= 0.0 && trim < 0.5)) throw InvalidArgument("trim fraction must lie in [0, 0.5)");
    std::sort(values.begin(), values.end());
    const auto cut = static_cast<std::size_t>(std::floor(trim * static_cast<double>(values.size())));
    return mean(std::span<const double>(values).subspan(cut, values.size() - 2 * cut));
}

}  // namespace nssm::stats
