#pragma once

// Coefficients of a McKean-Vlasov neutral stochastic delay equation
//
//   d[S(t) - D(S(t - tau))] = b(S(t), S(t - tau), L(S(t))) dt
//                           + sigma(S(t), S(t - tau), L(S(t))) dB(t),
//   S(t) = xi(t) on [-tau, 0],
//
// together with the step-size bookkeeping of the tamed scheme.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvnsdde/measure.hpp"

namespace mvnsdde {

using NeutralFn = std::function<void(std::span<const double> y, std::span<double> out)>;
using DriftFn = std::function<void(std::span<const double> x, std::span<const double> y,
                                   const EmpiricalMeasure& mu, std::span<double> out)>;
/// Writes a d x m matrix, row-major.
using DiffusionFn = std::function<void(std::span<const double> x, std::span<const double> y,
                                       const EmpiricalMeasure& mu, std::span<double> out)>;
using SegmentFn = std::function<void(double t, std::span<double> out)>;

/// Callbacks must be pure: they are evaluated concurrently with a shared measure.
struct ModelSpec {
  std::string name;
  std::size_t state_dim = 1;
  std::size_t bm_dim = 1;
  NeutralFn neutral;
  DriftFn drift;
  DiffusionFn diffusion;
  SegmentFn initial_segment;
  /// Contraction constant of the neutral map, required in (0, 1).
  double lambda = 0.0;
  /// Polynomial growth exponent of the drift.
  double c = 0.0;
  /// K_0 ... K_4; documentation only.
  std::array<std::optional<double>, 5> growth_constants{};
};

struct SchemeParams {
  double delta = 0.0;
  double tau = 0.0;
  double alpha = 0.5;
  std::size_t particles = 1;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  bool taming_enabled = true;
  double moment_order_p = 12.0;

  /// tau / delta rounded to the nearest integer.
  std::int64_t delay_steps() const;
  /// horizon / delta rounded to the nearest integer.
  std::int64_t horizon_steps() const;
};

/// Accepts ratios within a few ulps of an integer.
bool is_integer_ratio(double numerator, double denominator);

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
  std::string summary() const;
};

/// Structural checks on the model and grid. With `error_exponent_q`, also
/// requires q <= p / (2 (c + 1)).
ValidationReport validate(const ModelSpec& model, const SchemeParams& params,
                          std::optional<double> error_exponent_q = std::nullopt);

/// Largest observed excess of |D(y1) - D(y2)| - lambda |y1 - y2| over random
/// pairs with entries in [-radius, radius]. Non-positive means the probe passed.
double probe_neutral_contraction(const ModelSpec& model, double radius, std::size_t pairs,
                                 std::uint64_t seed);

/// Scalar example: d(S(t) + beta S(t - tau)) =
///   (S - S^3 + beta S(t - tau) - beta^3 S(t - tau)^3 + E[S(t)]) dt
///   + (S + beta S(t - tau)) dB, with xi(t) = t.
ModelSpec example51(double beta = 0.5);

/// example51 without the mean-field term and with constant initial data x0.
ModelSpec cubic_no_mf(double x0, double beta = 0.5);

/// dX = (a X + b_bar E[X]) dt + sigma0 dB, X(t) = x0 on [-tau, 0].
ModelSpec linear_meanfield(double a_coef, double b_coef, double sigma0, double x0);

/// x0 * exp((a + b_bar) t), the mean of linear_meanfield.
double linear_meanfield_mean(double a_coef, double b_coef, double x0, double t);

struct ModelParameters {
  double beta = 0.5;
  double a_coef = -1.0;
  double b_coef = 0.5;
  double sigma0 = 0.2;
  double x0 = 1.0;
};

/// Built-in model by name: example51, linear_meanfield, cubic_no_mf.
ModelSpec make_model(const std::string& name, const ModelParameters& parameters);

const std::vector<std::string>& builtin_model_names();

}  // namespace mvnsdde
