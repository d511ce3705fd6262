#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace nssm::stats {

/// Sample quantile by linear interpolation between order statistics
/// (Hyndman-Fan type 7). `sorted` must be ascending and nonempty.
[[nodiscard]] double quantile_sorted(std::span<const double> sorted, double q);
/// Type-7 quantile of an unsorted sample.
[[nodiscard]] double quantile(std::vector<double> values, double q);
[[nodiscard]] double median(std::vector<double> values);
[[nodiscard]] double mean(std::span<const double> values);

/// log sum_i exp(x_i); -inf for an empty or all -inf input.
[[nodiscard]] double logsumexp(std::span<const double> x);

/// log P(Y = y) for Y ~ Poisson(lambda); lambda = 0 gives 0 or -inf.
[[nodiscard]] double poisson_logpmf(double y, double lambda);
/// P(Y <= y) for Y ~ Poisson(lambda); 0 for y < 0.
[[nodiscard]] double poisson_cdf(double y, double lambda);

[[nodiscard]] double normal_cdf(double z);
[[nodiscard]] double normal_quantile(double p);

/// Mean of the values left after dropping floor(trim * n) from each end.
[[nodiscard]] double trimmed_mean(std::vector<double> values, double trim);

}  // namespace nssm::stats
