#pragma once

// Uniformly weighted empirical measures on R^d and the Wasserstein-2
// quantities built on them.

#include <cstddef>
#include <span>
#include <vector>

#include "mvnsdde/errors.hpp"

namespace mvnsdde {

/// Xi points in R^d with implicit weight 1/Xi each.
///
/// Points are stored flat, point-major. The mean is computed once at
/// construction; the object is immutable afterwards and safe to share
/// between threads.
class EmpiricalMeasure {
 public:
  /// `points.size()` must be a positive multiple of `dim`.
  EmpiricalMeasure(std::vector<double> points, std::size_t dim);

  /// Convenience for small literal measures, one inner vector per point.
  static EmpiricalMeasure from_points(const std::vector<std::vector<double>>& points);

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return points_.size() / dim_; }

  std::span<const double> point(std::size_t i) const;
  std::span<const double> data() const noexcept { return points_; }
  std::span<const double> mean() const noexcept { return mean_; }

 private:
  std::vector<double> points_;
  std::vector<double> mean_;
  std::size_t dim_;
};

/// Largest size accepted by `w2_assignment`.
inline constexpr std::size_t kAssignmentCap = 512;

/// ((1/Xi) sum_j |x_j|^q)^(1/q). Throws std::domain_error for q < 1.
double moment_wq(const EmpiricalMeasure& mu, double q);

/// Exact W2 between two equal-size 1-D empirical measures via order statistics.
double w2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

/// Exact W2 between two equal-size empirical measures in any dimension,
/// solved as a minimum-cost bipartite assignment on squared distances.
/// Throws CapacityError when the size exceeds `cap`.
double w2_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                     std::size_t cap = kAssignmentCap);

/// W2^2 between a 1-D empirical measure and N(0,1).
///
/// Each order statistic x_(i) is matched to the quantile cell
/// [(i-1)/Xi, i/Xi]; the cell integral is evaluated with 32-point
/// Gauss-Legendre after the substitution u = Phi(z). Quantile levels are
/// clipped to [1e-12, 1 - 1e-12].
double w2sq_to_standard_normal_1d(const EmpiricalMeasure& mu);

/// Minimum-cost perfect assignment on a dense n x n cost matrix (row-major).
/// Returns, for each row, the column assigned to it.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

namespace normal {

double pdf(double z);
double cdf(double z);
/// Inverse of `cdf` on (0, 1).
double quantile(double u);

}  // namespace normal

}  // namespace mvnsdde
