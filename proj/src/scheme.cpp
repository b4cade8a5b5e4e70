#include "mvnsdde/scheme.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "mvnsdde/errors.hpp"
#include "mvnsdde/format.hpp"

namespace mvnsdde {

double taming_scale(double delta, double alpha) { return std::pow(delta, alpha); }

void tame_drift_in_place(std::span<double> b, double scale) {
  double norm;
  if (b.size() == 1) {
    norm = std::abs(b[0]);
  } else {
    double sq = 0.0;
    for (double v : b) sq += v * v;
    norm = std::sqrt(sq);
  }
  const double denom = 1.0 + scale * norm;
  for (auto& v : b) v /= denom;
}

std::vector<double> tame_drift(std::span<const double> b, double delta, double alpha) {
  std::vector<double> out(b.begin(), b.end());
  tame_drift_in_place(out, taming_scale(delta, alpha));
  return out;
}

// ---------------------------------------------------------------------------
// ParticleGrid

ParticleGrid::ParticleGrid(SchemeParams params, std::string model_name, std::size_t dim,
                           GridStorage storage)
    : params_(params),
      model_name_(std::move(model_name)),
      dim_(dim),
      storage_(storage),
      delay_(params.delay_steps()),
      horizon_steps_(params.horizon_steps()),
      latest_(-params.delay_steps() - 1),
      diverged_at_(params.particles) {
  if (storage_ == GridStorage::full) {
    states_.reserve(static_cast<std::size_t>(horizon_steps_ + delay_ + 1) * params_.particles * dim_);
  }
}

double ParticleGrid::time(std::int64_t n) const {
  return n == -delay_ ? -params_.tau : static_cast<double>(n) * params_.delta;
}

bool ParticleGrid::has_row(std::int64_t n) const noexcept {
  if (storage_ == GridStorage::terminal) return n == latest_ && latest_ >= -delay_;
  return n >= -delay_ && n <= latest_;
}

std::span<const double> ParticleGrid::row(std::int64_t n) const {
  if (!has_row(n)) throw std::out_of_range("grid row " + std::to_string(n) + " is not stored");
  const std::size_t width = params_.particles * dim_;
  const std::size_t offset = storage_ == GridStorage::full ? static_cast<std::size_t>(n + delay_) * width : 0;
  return std::span<const double>(states_).subspan(offset, width);
}

std::span<const double> ParticleGrid::state(std::size_t particle, std::int64_t n) const {
  if (particle >= particles()) throw std::out_of_range("particle index out of range");
  return row(n).subspan(particle * dim_, dim_);
}

std::size_t ParticleGrid::diverged_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(diverged_at_.begin(), diverged_at_.end(), [](const auto& s) { return s.has_value(); }));
}

void ParticleGrid::append_row(std::span<const double> row) {
  if (row.size() != params_.particles * dim_) throw ShapeError("grid row has the wrong width");
  if (latest_ >= horizon_steps_) throw std::logic_error("grid is already complete");
  if (storage_ == GridStorage::full) {
    states_.insert(states_.end(), row.begin(), row.end());
  } else {
    states_.assign(row.begin(), row.end());
  }
  ++latest_;
}

void ParticleGrid::mark_diverged(std::size_t particle, std::int64_t step) {
  if (!diverged_at_.at(particle)) diverged_at_[particle] = step;
}

// ---------------------------------------------------------------------------
// DelayBuffer

DelayBuffer::DelayBuffer(std::size_t particles, std::size_t dim, std::int64_t delay_steps)
    : particles_(particles),
      dim_(dim),
      delay_(delay_steps),
      first_(-delay_steps),
      newest_(-delay_steps - 1),
      ring_(static_cast<std::size_t>(delay_steps + 1) * particles * dim) {
  if (delay_steps < 1) throw GridError("delay must span at least one step");
}

void DelayBuffer::push(std::span<const double> row) {
  const std::size_t width = particles_ * dim_;
  if (row.size() != width) throw ShapeError("delay buffer row has the wrong width");
  ++newest_;
  const auto slot = static_cast<std::size_t>((newest_ - first_) % (delay_ + 1));
  std::copy(row.begin(), row.end(), ring_.begin() + static_cast<std::ptrdiff_t>(slot * width));
}

std::span<const double> DelayBuffer::row(std::int64_t n) const {
  if (!holds(n)) {
    throw std::logic_error("delay buffer does not hold row " + std::to_string(n) + " (newest " +
                           std::to_string(newest_) + ")");
  }
  const std::size_t width = particles_ * dim_;
  const auto slot = static_cast<std::size_t>((n - first_) % (delay_ + 1));
  return std::span<const double>(ring_).subspan(slot * width, width);
}

std::span<const double> DelayBuffer::state(std::size_t particle, std::int64_t n) const {
  return row(n).subspan(particle * dim_, dim_);
}

DelayBuffer::DelayedState DelayBuffer::delayed_state(std::size_t particle, std::int64_t n) const {
  return {state(particle, n), state(particle, n - delay_)};
}

// ---------------------------------------------------------------------------
// Stepping

std::optional<std::size_t> em_step(const ModelSpec& model, const SchemeParams& params,
                                   const DelayBuffer& history, const EmpiricalMeasure& mu,
                                   std::span<const double> increments, std::span<double> next,
                                   const StepOptions& options) {
  const std::size_t xi = history.particles();
  const std::size_t d = model.state_dim;
  const std::size_t m = model.bm_dim;
  if (history.dim() != d || next.size() != xi * d || increments.size() != xi * m) {
    throw ShapeError("em_step buffers do not match the model dimensions");
  }
  const std::int64_t n = history.newest();
  const std::int64_t n0 = history.delay();
  const double delta = params.delta;
  const bool tamed = params.taming_enabled;
  const double scale = taming_scale(params.delta, params.alpha);
  const bool reverse = options.order == ParticleOrder::reverse;
  const auto count = static_cast<std::int64_t>(xi);
  std::size_t first_bad = xi;

#pragma omp parallel num_threads(options.workers) if (options.workers > 1)
  {
    std::vector<double> neutral_ahead(d), neutral_lag(d), drift(d), diffusion(d * m);
    std::size_t local_bad = xi;

#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < count; ++i) {
      const auto a = static_cast<std::size_t>(reverse ? count - 1 - i : i);
      const auto [current, lagged] = history.delayed_state(a, n);
      model.neutral(history.state(a, n + 1 - n0), neutral_ahead);
      model.neutral(lagged, neutral_lag);
      model.drift(current, lagged, mu, drift);
      if (tamed) tame_drift_in_place(drift, scale);
      model.diffusion(current, lagged, mu, diffusion);
      const auto dB = increments.subspan(a * m, m);
      auto out = next.subspan(a * d, d);
      bool finite = true;
      for (std::size_t k = 0; k < d; ++k) {
        double inner = current[k] - neutral_lag[k];
        inner += drift[k] * delta;
        for (std::size_t j = 0; j < m; ++j) inner += diffusion[k * m + j] * dB[j];
        out[k] = neutral_ahead[k] + inner;
        finite = finite && std::isfinite(out[k]);
      }
      if (!finite) local_bad = std::min(local_bad, a);
    }

#pragma omp critical(mvnsdde_em_step_bad)
    first_bad = std::min(first_bad, local_bad);
  }

  if (first_bad < xi) return first_bad;
  return std::nullopt;
}

OverflowError::OverflowError(std::size_t particle, std::int64_t step, ParticleGrid partial)
    : std::runtime_error("non-finite state for particle " + std::to_string(particle) + " at step " +
                         std::to_string(step)),
      particle_(particle),
      step_(step),
      partial_(std::move(partial)) {}

ParticleGrid simulate(const ModelSpec& model, const SchemeParams& params, const BrownianGrid& noise,
                      const SimulationOptions& options) {
  const auto report = validate(model, params);
  if (!report.ok()) throw ValidationError(report.summary());

  const std::size_t xi = params.particles;
  const std::size_t d = model.state_dim;
  const std::size_t m = model.bm_dim;
  const std::int64_t n0 = params.delay_steps();
  const std::int64_t steps = params.horizon_steps();
  if (noise.particles() != xi || noise.bm_dim() != m ||
      noise.steps() != static_cast<std::size_t>(steps) ||
      std::abs(noise.delta() - params.delta) > 1e-12 * params.delta) {
    throw ShapeError("Brownian grid does not match the particle count, dimension or step size");
  }

  ParticleGrid grid(params, model.name, d, options.storage);
  DelayBuffer history(xi, d, n0);
  std::vector<double> row(xi * d);

  auto publish = [&](std::int64_t n, std::span<const double> values) {
    history.push(values);
    grid.append_row(values);
    if (options.observer) options.observer(n, values);
  };

  for (std::int64_t n = -n0; n <= 0; ++n) {
    const double t = grid.time(n);
    for (std::size_t a = 0; a < xi; ++a) {
      model.initial_segment(t, std::span<double>(row).subspan(a * d, d));
    }
    publish(n, row);
  }

  std::vector<double> increments(xi * m);
  std::vector<double> next(xi * d);
  const StepOptions step_options{options.workers, options.order};
  const auto count = static_cast<std::int64_t>(xi);

  for (std::int64_t n = 0; n < steps; ++n) {
    const auto current = history.row(n);
    const EmpiricalMeasure mu(std::vector<double>(current.begin(), current.end()), d);

#pragma omp parallel for schedule(static) num_threads(options.workers) if (options.workers > 1)
    for (std::int64_t a = 0; a < count; ++a) {
      const auto p = static_cast<std::size_t>(a);
      noise.fill(p, static_cast<std::size_t>(n), std::span<double>(increments).subspan(p * m, m));
    }

    const auto bad = em_step(model, params, history, mu, increments, next, step_options);

    if (options.overflow == OverflowPolicy::abort) {
      if (bad) throw OverflowError(*bad, n + 1, std::move(grid));
    } else {
      for (std::size_t a = 0; a < xi; ++a) {
        auto state = std::span<double>(next).subspan(a * d, d);
        double sq = 0.0;
        for (double v : state) sq += v * v;
        const bool escaped = !std::isfinite(sq) || std::sqrt(sq) > options.divergence_threshold;
        if (escaped) grid.mark_diverged(a, n + 1);
        if (grid.divergence_steps()[a]) {
          const auto frozen = current.subspan(a * d, d);
          std::copy(frozen.begin(), frozen.end(), state.begin());
        }
      }
    }
    publish(n + 1, next);
  }
  return grid;
}

EmpiricalMeasure measure_from_column(const ParticleGrid& grid, std::int64_t n) {
  const auto values = grid.row(n);
  return EmpiricalMeasure(std::vector<double>(values.begin(), values.end()), grid.dim());
}

void write_grid_csv(const ParticleGrid& grid, std::ostream& out) {
  out << "t,particle";
  for (std::size_t k = 0; k < grid.dim(); ++k) out << ",comp" << k;
  out << '\n';
  for (std::int64_t n = grid.first_index(); n <= grid.latest_index(); ++n) {
    if (!grid.has_row(n)) continue;
    const std::string t = format_real(grid.time(n));
    for (std::size_t a = 0; a < grid.particles(); ++a) {
      out << t << ',' << a;
      for (double v : grid.state(a, n)) out << ',' << format_real(v);
      out << '\n';
    }
  }
}

}  // namespace mvnsdde
