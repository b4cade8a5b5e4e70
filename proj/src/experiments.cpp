#include "mvnsdde/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "mvnsdde/errors.hpp"
#include "mvnsdde/format.hpp"
#include "mvnsdde/measure.hpp"
#include "mvnsdde/noise.hpp"

namespace mvnsdde {

namespace {

double squared_gap(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return s;
}

SimulationOptions terminal_only(int workers) {
  SimulationOptions o;
  o.storage = GridStorage::terminal;
  o.workers = workers;
  return o;
}

template <typename T>
void require_strictly_monotone(std::span<const T> values, const char* what) {
  if (values.empty()) throw ConfigError(std::string(what) + " list is empty");
  bool up = true, down = true;
  for (std::size_t i = 1; i < values.size(); ++i) {
    up = up && values[i] > values[i - 1];
    down = down && values[i] < values[i - 1];
  }
  if (values.size() > 1 && !up && !down) throw ConfigError(std::string(what) + " must be strictly monotone");
}

}  // namespace

std::uint64_t replicate_seed(std::uint64_t seed, std::size_t r) {
  if (r == 0) return seed;
  // splitmix64 finalizer
  std::uint64_t x = seed ^ static_cast<std::uint64_t>(r);
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

LogLogFit fit_loglog_slope(const ErrorTable& table) {
  const auto& rows = table.rows;
  if (rows.size() < 2) throw DegenerateFitError("degenerate fit: need at least two rows with nonzero error");
  double sx = 0.0, sy = 0.0;
  for (const auto& r : rows) {
    if (!(r.rms_error > 0.0) || !(r.resolution > 0.0)) {
      throw DegenerateFitError("degenerate fit: zero error or resolution at resolution " +
                               format_real(r.resolution) + " (drop self-comparison rows)");
    }
    sx += std::log2(r.resolution);
    sy += std::log2(r.rms_error);
  }
  const double n = static_cast<double>(rows.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& r : rows) {
    const double dx = std::log2(r.resolution) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log2(r.rms_error) - my);
  }
  if (!(sxx > 0.0)) throw DegenerateFitError("degenerate fit: all rows share one resolution");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

ErrorTable without_resolution(const ErrorTable& table, double resolution) {
  ErrorTable out;
  for (const auto& r : table.rows) {
    if (r.resolution != resolution) out.rows.push_back(r);
  }
  return out;
}

ErrorRow summarize_squared_errors(double resolution, std::span<const double> squared_errors) {
  ErrorRow row;
  row.resolution = resolution;
  row.samples = squared_errors.size();
  if (squared_errors.empty()) return row;
  const double n = static_cast<double>(squared_errors.size());
  double sum = 0.0;
  for (double e : squared_errors) sum += e;
  const double mean = sum / n;
  double ss = 0.0;
  for (double e : squared_errors) ss += (e - mean) * (e - mean);
  row.rms_error = std::sqrt(mean);
  if (squared_errors.size() > 1 && row.rms_error > 0.0) {
    const double se_mean = std::sqrt(ss / (n - 1.0) / n);
    row.stderr_ = se_mean / (2.0 * row.rms_error);
  }
  return row;
}

ErrorRow summarize_replicates(double resolution, const std::vector<std::vector<double>>& squared_errors) {
  if (squared_errors.size() == 1) return summarize_squared_errors(resolution, squared_errors.front());
  ErrorRow row;
  row.resolution = resolution;
  std::vector<double> means;
  for (const auto& rep : squared_errors) {
    row.samples += rep.size();
    double sum = 0.0;
    for (double e : rep) sum += e;
    means.push_back(rep.empty() ? 0.0 : sum / static_cast<double>(rep.size()));
  }
  if (means.empty()) return row;
  const double r = static_cast<double>(means.size());
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= r;
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  row.rms_error = std::sqrt(mean);
  if (row.rms_error > 0.0) row.stderr_ = std::sqrt(ss / (r - 1.0) / r) / (2.0 * row.rms_error);
  return row;
}

ErrorTable strong_error_vs_dt(const ModelSpec& model, const SchemeParams& params, double delta_ref,
                              std::span<const double> deltas, int workers, std::size_t replicates) {
  require_strictly_monotone(deltas, "deltas");
  if (replicates == 0) throw ConfigError("replicates must be >= 1");
  if (!(delta_ref > 0.0)) throw ConfigError("delta_ref must be positive");

  std::vector<std::size_t> factors;
  for (double delta : deltas) {
    const double ratio = delta / delta_ref;
    const double k = std::round(std::log2(ratio));
    if (!(k >= 0.0) || std::ldexp(delta_ref, static_cast<int>(k)) != delta) {
      throw ConfigError("delta " + format_real(delta) + " is not a power-of-two multiple of delta_ref " +
                        format_real(delta_ref));
    }
    factors.push_back(std::size_t{1} << static_cast<int>(k));
  }

  const std::size_t xi = params.particles;
  std::vector<std::vector<std::vector<double>>> squared(deltas.size(),
                                                       std::vector<std::vector<double>>(replicates));
  for (std::size_t r = 0; r < replicates; ++r) {
    const std::uint64_t seed = replicate_seed(params.seed, r);
    const auto noise = BrownianGrid::generate(seed, xi, model.bm_dim, delta_ref, params.horizon);

    SchemeParams ref_params = params;
    ref_params.delta = delta_ref;
    ref_params.seed = seed;
    const auto reference = simulate(model, ref_params, noise, terminal_only(workers));
    const auto ref_row = reference.row(reference.last_index());

    for (std::size_t i = 0; i < deltas.size(); ++i) {
      SchemeParams p = params;
      p.delta = deltas[i];
      p.seed = seed;
      const auto coarse = simulate(model, p, noise.coarsen(factors[i]), terminal_only(workers));
      for (std::size_t a = 0; a < xi; ++a) {
        squared[i][r].push_back(squared_gap(coarse.state(a, coarse.last_index()),
                                            ref_row.subspan(a * model.state_dim, model.state_dim)));
      }
    }
  }

  ErrorTable table;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    table.rows.push_back(summarize_replicates(deltas[i], squared[i]));
  }
  return table;
}

ErrorTable chaos_error_vs_particles(const ModelSpec& model, const SchemeParams& params,
                                    std::span<const std::size_t> xis, int workers, std::size_t replicates) {
  if (xis.empty()) throw ConfigError("particle count list is empty");
  if (replicates == 0) throw ConfigError("replicates must be >= 1");
  for (std::size_t i = 0; i < xis.size(); ++i) {
    if (xis[i] == 0 || (i > 0 && xis[i] <= xis[i - 1])) {
      throw ConfigError("particle counts must be positive and strictly increasing");
    }
  }
  const std::size_t xi_max = xis.back();
  const std::size_t d = model.state_dim;

  std::vector<std::vector<std::vector<double>>> squared(xis.size(), std::vector<std::vector<double>>(replicates));
  for (std::size_t r = 0; r < replicates; ++r) {
    const std::uint64_t seed = replicate_seed(params.seed, r);
    SchemeParams ref_params = params;
    ref_params.particles = xi_max;
    ref_params.seed = seed;
    const auto ref_noise = BrownianGrid::generate(seed, xi_max, model.bm_dim, params.delta, params.horizon);
    const auto reference = simulate(model, ref_params, ref_noise, terminal_only(workers));
    const auto ref_row = reference.row(reference.last_index());

    for (std::size_t i = 0; i < xis.size(); ++i) {
      SchemeParams p = ref_params;
      p.particles = xis[i];
      const auto noise = BrownianGrid::generate(seed, xis[i], model.bm_dim, params.delta, params.horizon);
      const auto run = simulate(model, p, noise, terminal_only(workers));
      auto& out = squared[i][r];
      out.resize(xis[i]);
      for (std::size_t a = 0; a < xis[i]; ++a) {
        out[a] = squared_gap(run.state(a, run.last_index()), ref_row.subspan(a * d, d));
      }
    }
  }

  ErrorTable table;
  for (std::size_t i = 0; i < xis.size(); ++i) {
    table.rows.push_back(summarize_replicates(static_cast<double>(xis[i]), squared[i]));
  }
  return table;
}

MomentTracker::MomentTracker(int p, std::size_t dim) : p_(p), dim_(dim) {
  if (p < 2) throw std::invalid_argument("moment order p must be >= 2");
  if (dim == 0) throw ShapeError("state dimension must be >= 1");
}

void MomentTracker::observe(std::int64_t n, std::span<const double> row) {
  const std::size_t count = row.size() / dim_;
  double acc = 0.0;
  for (std::size_t a = 0; a < count; ++a) {
    double sq = 0.0;
    for (std::size_t k = 0; k < dim_; ++k) sq += row[a * dim_ + k] * row[a * dim_ + k];
    acc += (p_ % 2 == 0) ? std::pow(sq, p_ / 2) : std::pow(std::sqrt(sq), p_);
  }
  const double value = acc / static_cast<double>(count);
  if (!seen_ || value > peak_.value) peak_ = {value, n};
  seen_ = true;
}

MomentPeak moment_monitor(const ParticleGrid& grid, int p) {
  MomentTracker tracker(p, grid.dim());
  for (std::int64_t n = grid.first_index(); n <= grid.latest_index(); ++n) {
    if (grid.has_row(n)) tracker.observe(n, grid.row(n));
  }
  return tracker.peak();
}

TamingReport taming_comparison(const ModelSpec& model, const SchemeParams& params, int workers) {
  const auto noise = BrownianGrid::generate(params.seed, params.particles, model.bm_dim, params.delta,
                                            params.horizon);
  SimulationOptions options;
  options.storage = GridStorage::terminal;
  options.overflow = OverflowPolicy::quarantine;
  options.divergence_threshold = kDivergenceThreshold;
  options.workers = workers;

  TamingReport report;
  report.particles = params.particles;

  MomentTracker tracker(2, model.state_dim);
  options.observer = [&tracker](std::int64_t n, std::span<const double> row) { tracker.observe(n, row); };
  SchemeParams tamed = params;
  tamed.taming_enabled = true;
  const auto tamed_run = simulate(model, tamed, noise, options);
  report.tamed_peak = tracker.peak();
  report.tamed_diverged = tamed_run.diverged_count();

  options.observer = nullptr;
  SchemeParams untamed = params;
  untamed.taming_enabled = false;
  const auto untamed_run = simulate(model, untamed, noise, options);
  report.untamed_diverged = untamed_run.diverged_count();
  for (const auto& step : untamed_run.divergence_steps()) {
    if (step && (!report.first_untamed_divergence || *step < *report.first_untamed_divergence)) {
      report.first_untamed_divergence = step;
    }
  }
  return report;
}

EmpiricalRateResult empirical_measure_rate(std::size_t d, std::span<const std::size_t> xis,
                                           std::size_t mc_reps, std::uint64_t seed) {
  if (d != 1 && d != 5) throw ConfigError("empirical_measure_rate supports d = 1 or d = 5");
  for (std::size_t i = 0; i < xis.size(); ++i) {
    if (xis[i] == 0 || (i > 0 && xis[i] <= xis[i - 1])) {
      throw ConfigError("sample sizes must be positive and strictly increasing");
    }
  }
  if (d == 5 && !xis.empty() && xis.back() > kAssignmentCap) {
    throw CapacityError("d = 5 uses exact assignment; sample sizes are capped at " +
                        std::to_string(kAssignmentCap));
  }

  EmpiricalRateResult result;
  result.proxy = d == 1 ? "one-sample: W2^2 to N(0,1) by quantile quadrature"
                        : "two-sample: W2^2 between two independent N(0,I_5) samples of equal size";
  if (mc_reps == 0) return result;

  auto sample = [&](StreamDomain domain, std::size_t xi, std::size_t rep) {
    const std::uint64_t stream = (static_cast<std::uint64_t>(xi) << 32) | rep;
    std::vector<double> pts(xi * d);
    for (std::size_t i = 0; i < xi; ++i) {
      for (std::size_t k = 0; k < d; k += 2) {
        const auto z = counter_normal_pair(seed, domain, stream, static_cast<std::uint32_t>(i),
                                           static_cast<std::uint32_t>(k / 2));
        pts[i * d + k] = z[0];
        if (k + 1 < d) pts[i * d + k + 1] = z[1];
      }
    }
    return EmpiricalMeasure(std::move(pts), d);
  };

  for (std::size_t xi : xis) {
    std::vector<double> values(mc_reps);
    for (std::size_t rep = 0; rep < mc_reps; ++rep) {
      const auto mu = sample(StreamDomain::sample_a, xi, rep);
      if (d == 1) {
        values[rep] = w2sq_to_standard_normal_1d(mu);
      } else {
        const double w = w2_assignment(mu, sample(StreamDomain::sample_b, xi, rep));
        values[rep] = w * w;
      }
    }
    ErrorRow row;
    row.resolution = static_cast<double>(xi);
    row.samples = mc_reps;
    double sum = 0.0;
    for (double v : values) sum += v;
    row.rms_error = sum / static_cast<double>(mc_reps);
    if (mc_reps > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - row.rms_error) * (v - row.rms_error);
      row.stderr_ = std::sqrt(ss / static_cast<double>(mc_reps - 1) / static_cast<double>(mc_reps));
    }
    result.table.rows.push_back(row);
  }
  return result;
}

void write_table_csv(const ErrorTable& table, std::ostream& out) {
  out << "resolution,rms_error,stderr,samples\n";
  for (const auto& r : table.rows) {
    out << format_real(r.resolution) << ',' << format_real(r.rms_error) << ',' << format_real(r.stderr_)
        << ',' << r.samples << '\n';
  }
}

void write_gnuplot_script(const ErrorTable& table, const std::string& name, const std::string& csv_file,
                          const std::string& x_label, std::ostream& out) {
  double anchor = 1.0;
  for (const auto& r : table.rows) {
    if (r.rms_error > 0.0 && r.resolution > 0.0) {
      anchor = r.rms_error / std::sqrt(r.resolution);
      break;
    }
  }
  out << "set terminal pngcairo size 800,600\n"
      << "set output '" << name << ".png'\n"
      << "set datafile separator ','\n"
      << "set logscale xy 2\n"
      << "set key top left\n"
      << "set xlabel '" << x_label << "'\n"
      << "set ylabel 'RMS error'\n"
      << "ref(x) = " << format_real(anchor) << " * x**0.5\n"
      << "plot '" << csv_file << "' skip 1 using 1:2 with linespoints lc rgb 'red' title 'RMS error', \\\n"
      << "     ref(x) with lines lc rgb 'blue' title 'slope 1/2'\n";
}

}  // namespace mvnsdde
