#pragma once

// Tamed Euler-Maruyama scheme for the interacting particle system
//
//   U_{n+1} - D(U_{n+1-n0}) = U_n - D(U_{n-n0})
//       + b_delta(U_n, U_{n-n0}, L_n) delta + sigma(U_n, U_{n-n0}, L_n) dB_n,
//
// where L_n is the empirical measure of all particles at step n and
// b_delta = b / (1 + delta^alpha |b|). Since n+1-n0 <= n, the neutral
// term on the left only reads already-computed rows, so every step is explicit.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvnsdde/measure.hpp"
#include "mvnsdde/model.hpp"
#include "mvnsdde/noise.hpp"

namespace mvnsdde {

/// delta^alpha, the scale in the taming denominator.
double taming_scale(double delta, double alpha);

/// b / (1 + scale |b|) with the Euclidean norm of the whole vector.
void tame_drift_in_place(std::span<double> b, double scale);
std::vector<double> tame_drift(std::span<const double> b, double delta, double alpha);

enum class GridStorage {
  full,      ///< every row from -n0 to N
  terminal,  ///< only the most recent row
};

enum class OverflowPolicy {
  abort,       ///< first non-finite state throws OverflowError
  quarantine,  ///< diverged particles are frozen and recorded; the run continues
};

enum class ParticleOrder { forward, reverse };

/// Numerical solution U_n^a on the grid t_n = n delta, n = -n0 .. N.
/// The piecewise-constant extension between grid points is implicit.
class ParticleGrid {
 public:
  ParticleGrid(SchemeParams params, std::string model_name, std::size_t dim, GridStorage storage);

  std::size_t particles() const noexcept { return params_.particles; }
  std::size_t dim() const noexcept { return dim_; }
  std::int64_t first_index() const noexcept { return -delay_; }
  std::int64_t last_index() const noexcept { return horizon_steps_; }
  /// Index of the most recently appended row.
  std::int64_t latest_index() const noexcept { return latest_; }
  GridStorage storage() const noexcept { return storage_; }
  const SchemeParams& params() const noexcept { return params_; }
  const std::string& model_name() const noexcept { return model_name_; }

  double time(std::int64_t n) const;
  bool has_row(std::int64_t n) const noexcept;
  /// Row n as particles() x dim() values. Throws std::out_of_range if not stored.
  std::span<const double> row(std::int64_t n) const;
  std::span<const double> state(std::size_t particle, std::int64_t n) const;

  /// Step at which each particle was quarantined, if ever.
  const std::vector<std::optional<std::int64_t>>& divergence_steps() const noexcept {
    return diverged_at_;
  }
  std::size_t diverged_count() const noexcept;

  void append_row(std::span<const double> row);
  void mark_diverged(std::size_t particle, std::int64_t step);

 private:
  SchemeParams params_;
  std::string model_name_;
  std::size_t dim_;
  GridStorage storage_;
  std::int64_t delay_;
  std::int64_t horizon_steps_;
  std::int64_t latest_;
  std::vector<double> states_;
  std::vector<std::optional<std::int64_t>> diverged_at_;
};

/// The last n0 + 1 rows of the solution, enough for one step of the scheme.
class DelayBuffer {
 public:
  DelayBuffer(std::size_t particles, std::size_t dim, std::int64_t delay_steps);

  /// Appends row newest() + 1; the first push is row -n0.
  void push(std::span<const double> row);

  std::int64_t newest() const noexcept { return newest_; }
  std::int64_t delay() const noexcept { return delay_; }
  std::size_t particles() const noexcept { return particles_; }
  std::size_t dim() const noexcept { return dim_; }

  bool holds(std::int64_t n) const noexcept { return n <= newest_ && n >= newest_ - delay_ && n >= first_; }
  /// Throws std::logic_error outside the retained window.
  std::span<const double> row(std::int64_t n) const;
  std::span<const double> state(std::size_t particle, std::int64_t n) const;

  struct DelayedState {
    std::span<const double> current;  ///< U_n
    std::span<const double> lagged;   ///< U_{n - n0}
  };
  DelayedState delayed_state(std::size_t particle, std::int64_t n) const;

 private:
  std::size_t particles_;
  std::size_t dim_;
  std::int64_t delay_;
  std::int64_t first_;
  std::int64_t newest_;
  std::vector<double> ring_;
};

struct StepOptions {
  int workers = 1;
  ParticleOrder order = ParticleOrder::forward;
};

/// One step from row n = history.newest() to row n + 1, written into `next`
/// (particles x d). `mu` must be the empirical measure of row n and
/// `increments` holds particles x m Brownian increments.
/// Returns the lowest particle index whose new state is not finite.
std::optional<std::size_t> em_step(const ModelSpec& model, const SchemeParams& params,
                                   const DelayBuffer& history, const EmpiricalMeasure& mu,
                                   std::span<const double> increments, std::span<double> next,
                                   const StepOptions& options = {});

struct SimulationOptions {
  GridStorage storage = GridStorage::full;
  OverflowPolicy overflow = OverflowPolicy::abort;
  /// Quarantine threshold on |U|; non-finite states always count.
  double divergence_threshold = 1e10;
  int workers = 1;
  ParticleOrder order = ParticleOrder::forward;
  /// Called with (n, row) for every row, initial segment included.
  std::function<void(std::int64_t, std::span<const double>)> observer;
};

class OverflowError : public std::runtime_error {
 public:
  OverflowError(std::size_t particle, std::int64_t step, ParticleGrid partial);

  std::size_t particle() const noexcept { return particle_; }
  std::int64_t step() const noexcept { return step_; }
  /// Grid holding every finite row computed before the failure.
  const ParticleGrid& partial() const noexcept { return partial_; }

 private:
  std::size_t particle_;
  std::int64_t step_;
  ParticleGrid partial_;
};

/// Runs the scheme on [-tau, T].
///
/// Throws ValidationError if validate() reports a violation and ShapeError if
/// the noise grid does not match (particles, m, delta, T / delta).
ParticleGrid simulate(const ModelSpec& model, const SchemeParams& params, const BrownianGrid& noise,
                      const SimulationOptions& options = {});

/// Empirical measure of all particles at grid index n.
EmpiricalMeasure measure_from_column(const ParticleGrid& grid, std::int64_t n);

/// CSV with header `t,particle,comp0,...`, one line per stored (n, particle).
void write_grid_csv(const ParticleGrid& grid, std::ostream& out);

}  // namespace mvnsdde
