#pragma once

// Convergence studies driven by coupled simulations.
//
// Exact solutions are unobservable, so every error below is measured against
// a reference run on the same Brownian paths: the finest step size for
// time-step studies, the largest particle count for particle-count studies.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mvnsdde/model.hpp"
#include "mvnsdde/scheme.hpp"

namespace mvnsdde {

struct ErrorRow {
  double resolution = 0.0;  ///< delta or particle count
  double rms_error = 0.0;
  double stderr_ = 0.0;  ///< standard error of rms_error (delta method)
  std::size_t samples = 0;
};

struct ErrorTable {
  std::vector<ErrorRow> rows;
};

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Master seed of replicate r; replicate 0 uses `seed` itself.
std::uint64_t replicate_seed(std::uint64_t seed, std::size_t r);

/// Least squares of log2(rms_error) on log2(resolution).
/// Throws DegenerateFitError with fewer than two rows, a non-positive error,
/// or a single distinct resolution.
LogLogFit fit_loglog_slope(const ErrorTable& table);

/// Copy of `table` without rows at `resolution` (self-comparison rows).
ErrorTable without_resolution(const ErrorTable& table, double resolution);

/// Root mean square of squared-error samples, with its delta-method standard error.
ErrorRow summarize_squared_errors(double resolution, std::span<const double> squared_errors);

/// Pools squared errors from independent replicates. With more than one
/// replicate the standard error comes from the spread of the per-replicate
/// means, since particles within one run share their mean-field error.
ErrorRow summarize_replicates(double resolution, const std::vector<std::vector<double>>& squared_errors);

/// Strong error at T of each delta against a reference run at delta_ref.
///
/// Every delta must be 2^k delta_ref (k >= 0); all runs are driven by one
/// Brownian grid at delta_ref, coarsened as needed. With `replicates` > 1 the
/// whole study is repeated on independent seeds and the errors pooled.
/// `params.delta` is ignored.
ErrorTable strong_error_vs_dt(const ModelSpec& model, const SchemeParams& params, double delta_ref,
                              std::span<const double> deltas, int workers = 1,
                              std::size_t replicates = 1);

/// Error at T of Xi-particle systems against the largest listed Xi.
/// Particle a uses stream a in every run, so the systems are coupled.
/// `replicates` works as in strong_error_vs_dt.
ErrorTable chaos_error_vs_particles(const ModelSpec& model, const SchemeParams& params,
                                   std::span<const std::size_t> xis, int workers = 1,
                                   std::size_t replicates = 1);

struct MomentPeak {
  double value = 0.0;
  std::int64_t step = 0;
};

/// Streams rows and keeps the largest sample p-th moment (1/Xi) sum_a |U_n^a|^p.
class MomentTracker {
 public:
  MomentTracker(int p, std::size_t dim);
  void observe(std::int64_t n, std::span<const double> row);
  MomentPeak peak() const noexcept { return peak_; }

 private:
  int p_;
  std::size_t dim_;
  bool seen_ = false;
  MomentPeak peak_;
};

/// Largest sample p-th moment over all stored rows, and where it occurs.
MomentPeak moment_monitor(const ParticleGrid& grid, int p);

struct TamingReport {
  MomentPeak tamed_peak;  ///< p = 2
  std::size_t tamed_diverged = 0;
  std::size_t untamed_diverged = 0;
  std::size_t particles = 0;
  std::optional<std::int64_t> first_untamed_divergence;
  double untamed_divergence_fraction() const {
    return particles ? static_cast<double>(untamed_diverged) / static_cast<double>(particles) : 0.0;
  }
};

inline constexpr double kDivergenceThreshold = 1e10;

/// Runs the model tamed and untamed on the same noise. A particle diverges
/// when its state leaves |U| <= 1e10 or stops being finite.
TamingReport taming_comparison(const ModelSpec& model, const SchemeParams& params, int workers = 1);

struct EmpiricalRateResult {
  ErrorTable table;  ///< rms_error holds the mean W2^2 over repetitions
  std::string proxy;
};

/// Mean W2^2 between Xi-point N(0, I_d) samples and the target law, d in {1, 5}.
EmpiricalRateResult empirical_measure_rate(std::size_t d, std::span<const std::size_t> xis,
                                           std::size_t mc_reps, std::uint64_t seed);

/// Columns resolution,rms_error,stderr,samples.
void write_table_csv(const ErrorTable& table, std::ostream& out);

/// Log-log plot of `csv_file` with a slope-1/2 guide through the first point.
void write_gnuplot_script(const ErrorTable& table, const std::string& name,
                          const std::string& csv_file, const std::string& x_label,
                          std::ostream& out);

}  // namespace mvnsdde
