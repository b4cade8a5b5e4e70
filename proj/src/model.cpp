#include "mvnsdde/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mvnsdde/errors.hpp"

namespace mvnsdde {

bool is_integer_ratio(double numerator, double denominator) {
  const double ratio = numerator / denominator;
  const double nearest = std::round(ratio);
  return nearest >= 1.0 && std::abs(ratio - nearest) <= 1e-9 * nearest;
}

std::int64_t SchemeParams::delay_steps() const {
  return static_cast<std::int64_t>(std::llround(tau / delta));
}

std::int64_t SchemeParams::horizon_steps() const {
  return static_cast<std::int64_t>(std::llround(horizon / delta));
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) os << "; ";
    os << violations[i];
  }
  return os.str();
}

ValidationReport validate(const ModelSpec& model, const SchemeParams& params,
                          std::optional<double> error_exponent_q) {
  ValidationReport report;
  auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

  if (!model.neutral || !model.drift || !model.diffusion || !model.initial_segment) {
    fail("model is missing a coefficient callback");
    return report;
  }
  if (model.state_dim == 0 || model.bm_dim == 0) fail("state and Brownian dimensions must be >= 1");
  if (!(model.lambda > 0.0 && model.lambda < 1.0)) fail("neutral contraction lambda must lie in (0, 1)");
  if (!(model.c >= 0.0)) fail("growth exponent c must be >= 0");

  std::vector<double> zero(model.state_dim, 0.0), image(model.state_dim);
  model.neutral(zero, image);
  if (std::any_of(image.begin(), image.end(), [](double v) { return v != 0.0; })) {
    fail("neutral map must satisfy D(0) = 0");
  }

  if (!(params.delta > 0.0)) {
    fail("delta must be positive");
    return report;
  }
  if (!(params.tau > 0.0)) {
    fail("tau must be positive");
  } else {
    if (!(params.delta < std::min(1.0, params.tau))) fail("delta must lie in (0, min(1, tau))");
    if (!is_integer_ratio(params.tau, params.delta)) fail("tau / delta must be an integer");
  }
  if (!(params.alpha > 0.0 && params.alpha <= 0.5)) fail("alpha must lie in (0, 1/2]");
  if (params.particles < 1) fail("particle count must be >= 1");
  if (!(params.horizon > 0.0)) {
    fail("horizon T must be positive");
  } else if (!is_integer_ratio(params.horizon, params.delta)) {
    fail("T / delta must be an integer");
  }
  if (error_exponent_q) {
    const double q = *error_exponent_q;
    const double q_max = params.moment_order_p / (2.0 * (model.c + 1.0));
    if (!(q >= 2.0 && q <= q_max)) {
      std::ostringstream os;
      os << "error exponent q = " << q << " outside [2, p/(2(c+1))] = [2, " << q_max << "]";
      fail(os.str());
    }
  }
  return report;
}

double probe_neutral_contraction(const ModelSpec& model, double radius, std::size_t pairs,
                                 std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-radius, radius);
  const std::size_t d = model.state_dim;
  std::vector<double> y1(d), y2(d), d1(d), d2(d);
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pairs; ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      y1[k] = coord(rng);
      y2[k] = coord(rng);
    }
    model.neutral(y1, d1);
    model.neutral(y2, d2);
    double image = 0.0, source = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      image += (d1[k] - d2[k]) * (d1[k] - d2[k]);
      source += (y1[k] - y2[k]) * (y1[k] - y2[k]);
    }
    worst = std::max(worst, std::sqrt(image) - model.lambda * std::sqrt(source));
  }
  return worst;
}

namespace {

ModelSpec scalar_neutral_cubic(std::string name, double beta, bool mean_field) {
  ModelSpec m;
  m.name = std::move(name);
  m.state_dim = 1;
  m.bm_dim = 1;
  m.neutral = [beta](std::span<const double> y, std::span<double> out) { out[0] = -beta * y[0]; };
  const double beta3 = beta * beta * beta;
  m.drift = [beta, beta3, mean_field](std::span<const double> x, std::span<const double> y,
                                      const EmpiricalMeasure& mu, std::span<double> out) {
    const double s = x[0];
    const double r = y[0];
    double v = s - s * s * s + beta * r - beta3 * r * r * r;
    if (mean_field) v += mu.mean()[0];
    out[0] = v;
  };
  m.diffusion = [beta](std::span<const double> x, std::span<const double> y,
                       const EmpiricalMeasure&, std::span<double> out) { out[0] = x[0] + beta * y[0]; };
  m.lambda = beta;
  m.c = 2.0;
  return m;
}

}  // namespace

ModelSpec example51(double beta) {
  ModelSpec m = scalar_neutral_cubic("example51", beta, true);
  m.initial_segment = [](double t, std::span<double> out) { out[0] = t; };
  return m;
}

ModelSpec cubic_no_mf(double x0, double beta) {
  ModelSpec m = scalar_neutral_cubic("cubic_no_mf", beta, false);
  m.initial_segment = [x0](double, std::span<double> out) { out[0] = x0; };
  return m;
}

ModelSpec linear_meanfield(double a_coef, double b_coef, double sigma0, double x0) {
  ModelSpec m;
  m.name = "linear_meanfield";
  m.state_dim = 1;
  m.bm_dim = 1;
  m.neutral = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  m.drift = [a_coef, b_coef](std::span<const double> x, std::span<const double>,
                             const EmpiricalMeasure& mu, std::span<double> out) {
    out[0] = a_coef * x[0] + b_coef * mu.mean()[0];
  };
  m.diffusion = [sigma0](std::span<const double>, std::span<const double>, const EmpiricalMeasure&,
                         std::span<double> out) { out[0] = sigma0; };
  m.initial_segment = [x0](double, std::span<double> out) { out[0] = x0; };
  // D = 0 contracts with any constant; lambda only has to lie in (0, 1).
  m.lambda = 0.5;
  m.c = 0.0;
  return m;
}

double linear_meanfield_mean(double a_coef, double b_coef, double x0, double t) {
  return x0 * std::exp((a_coef + b_coef) * t);
}

const std::vector<std::string>& builtin_model_names() {
  static const std::vector<std::string> names = {"example51", "linear_meanfield", "cubic_no_mf"};
  return names;
}

ModelSpec make_model(const std::string& name, const ModelParameters& p) {
  if (name == "example51") return example51(p.beta);
  if (name == "linear_meanfield") return linear_meanfield(p.a_coef, p.b_coef, p.sigma0, p.x0);
  if (name == "cubic_no_mf") return cubic_no_mf(p.x0, p.beta);
  throw ConfigError("unknown model '" + name + "' (expected example51, linear_meanfield or cubic_no_mf)");
}

}  // namespace mvnsdde
