#include "mvnsdde/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/erf.hpp>

namespace mvnsdde {

EmpiricalMeasure::EmpiricalMeasure(std::vector<double> points, std::size_t dim)
    : points_(std::move(points)), mean_(dim, 0.0), dim_(dim) {
  if (dim_ == 0 || points_.empty() || points_.size() % dim_ != 0) {
    throw ShapeError("empirical measure needs a positive number of points of dimension " +
                     std::to_string(dim_));
  }
  const std::size_t n = size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dim_; ++k) mean_[k] += points_[i * dim_ + k];
  }
  for (auto& m : mean_) m /= static_cast<double>(n);
}

EmpiricalMeasure EmpiricalMeasure::from_points(const std::vector<std::vector<double>>& points) {
  if (points.empty()) throw ShapeError("empirical measure needs at least one point");
  const std::size_t dim = points.front().size();
  std::vector<double> flat;
  flat.reserve(points.size() * dim);
  for (const auto& p : points) {
    if (p.size() != dim) throw ShapeError("points of an empirical measure must share a dimension");
    flat.insert(flat.end(), p.begin(), p.end());
  }
  return EmpiricalMeasure(std::move(flat), dim);
}

std::span<const double> EmpiricalMeasure::point(std::size_t i) const {
  if (i >= size()) throw std::out_of_range("point index out of range");
  return std::span<const double>(points_).subspan(i * dim_, dim_);
}

namespace {

double squared_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

double squared_distance(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = x[k] - y[k];
    s += diff * diff;
  }
  return s;
}

void require_same_shape(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != nu.dim()) throw ShapeError("measures live in different dimensions");
  if (mu.size() != nu.size()) throw ShapeError("measures have different numbers of points");
}

// Sorted copy; ties keep their original order.
std::vector<double> sorted_1d(const EmpiricalMeasure& mu) {
  std::vector<double> xs(mu.data().begin(), mu.data().end());
  std::stable_sort(xs.begin(), xs.end());
  return xs;
}

}  // namespace

double moment_wq(const EmpiricalMeasure& mu, double q) {
  if (!(q >= 1.0)) throw std::domain_error("moment order q must be >= 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    acc += std::pow(std::sqrt(squared_norm(mu.point(i))), q);
  }
  return std::pow(acc / static_cast<double>(mu.size()), 1.0 / q);
}

double w2_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  if (mu.dim() != 1 || nu.dim() != 1) throw ShapeError("w2_1d needs one-dimensional measures");
  require_same_shape(mu, nu);
  const auto xs = sorted_1d(mu);
  const auto ys = sorted_1d(nu);
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double diff = xs[i] - ys[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(xs.size()));
}

// Shortest augmenting path with dual potentials (Kuhn-Munkres, O(n^3)).
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw ShapeError("assignment cost matrix must be n x n");
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based internally; index 0 is the virtual source column.
  std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0), min_slack(n + 1);
  std::vector<std::size_t> col_match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (std::size_t row = 1; row <= n; ++row) {
    col_match[0] = row;
    std::size_t col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t r = col_match[col0];
      double delta = inf;
      std::size_t next_col = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double slack = cost[(r - 1) * n + (c - 1)] - row_pot[r] - col_pot[c];
        if (slack < min_slack[c]) {
          min_slack[c] = slack;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          next_col = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          row_pot[col_match[c]] += delta;
          col_pot[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = next_col;
    } while (col_match[col0] != 0);
    do {
      const std::size_t prev = way[col0];
      col_match[col0] = col_match[prev];
      col0 = prev;
    } while (col0 != 0);
  }

  std::vector<std::size_t> assignment(n);
  for (std::size_t c = 1; c <= n; ++c) assignment[col_match[c] - 1] = c - 1;
  return assignment;
}

double w2_assignment(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu, std::size_t cap) {
  require_same_shape(mu, nu);
  const std::size_t n = mu.size();
  if (n > cap) {
    throw CapacityError("w2_assignment supports at most " + std::to_string(cap) +
                        " points; got " + std::to_string(n));
  }
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = squared_distance(mu.point(i), nu.point(j));
  }
  const auto assignment = solve_assignment(cost, n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += cost[i * n + assignment[i]];
  return std::sqrt(acc / static_cast<double>(n));
}

double w2sq_to_standard_normal_1d(const EmpiricalMeasure& mu) {
  if (mu.dim() != 1) throw ShapeError("w2sq_to_standard_normal_1d needs a one-dimensional measure");
  constexpr double clip = 1e-12;
  using Rule = boost::math::quadrature::gauss<double, 32>;

  const auto xs = sorted_1d(mu);
  const double n = static_cast<double>(xs.size());
  double total = 0.0;
  double z_lo = normal::quantile(clip);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double u_hi = std::clamp(static_cast<double>(i + 1) / n, clip, 1.0 - clip);
    const double z_hi = normal::quantile(u_hi);
    const double x = xs[i];
    // du = phi(z) dz
    total += Rule::integrate([x](double z) { return (x - z) * (x - z) * normal::pdf(z); }, z_lo, z_hi);
    z_lo = z_hi;
  }
  return total;
}

namespace normal {

double pdf(double z) {
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

double cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw std::domain_error("normal quantile needs u in (0, 1)");
  return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * u);
}

}  // namespace normal

}  // namespace mvnsdde
