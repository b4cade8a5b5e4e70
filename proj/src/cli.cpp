#include "mvnsdde/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "mvnsdde/errors.hpp"
#include "mvnsdde/experiments.hpp"
#include "mvnsdde/format.hpp"
#include "mvnsdde/noise.hpp"
#include "mvnsdde/scheme.hpp"

namespace mvnsdde::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

RunConfig::RunConfig() {
  scheme.delta = 0x1p-11;
  scheme.tau = 0.03125;
  scheme.alpha = 0.5;
  scheme.particles = 1000;
  scheme.horizon = 1.0;
  scheme.taming_enabled = true;
  scheme.moment_order_p = 12.0;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

double parse_real(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) {
    throw ConfigError("key '" + key + "': '" + text + "' is not a number");
  }
  return v;
}

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const unsigned long long v = std::strtoull(text.c_str(), &end, 10);
  if (text.empty() || text[0] == '-' || end != text.c_str() + text.size()) {
    throw ConfigError("key '" + key + "': '" + text + "' is not a non-negative integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("key '" + key + "': '" + text + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

template <typename T, typename F>
std::string join(const std::vector<T>& values, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ", ";
    out += fmt(values[i]);
  }
  return out;
}

struct KeySpec {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Getter>
KeySpec real(std::string name, Getter field) {
  return {name,
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_real(name, v); },
          [field](const RunConfig& c) { return format_real(field(c)); }};
}

template <typename Getter>
KeySpec count(std::string name, Getter field) {
  return {name,
          [name, field](RunConfig& c, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(parse_unsigned(name, v));
          },
          [field](const RunConfig& c) { return std::to_string(field(c)); }};
}

const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = [] {
    std::vector<KeySpec> s;
    s.push_back({"command", [](RunConfig& c, const std::string& v) { c.command = v; },
                 [](const RunConfig& c) { return c.command; }});
    s.push_back({"model", [](RunConfig& c, const std::string& v) { c.model = v; },
                 [](const RunConfig& c) { return c.model; }});
    s.push_back(real("beta", [](auto& c) -> auto& { return c.model_params.beta; }));
    s.push_back(real("a_coef", [](auto& c) -> auto& { return c.model_params.a_coef; }));
    s.push_back(real("b_coef", [](auto& c) -> auto& { return c.model_params.b_coef; }));
    s.push_back(real("sigma0", [](auto& c) -> auto& { return c.model_params.sigma0; }));
    s.push_back(real("x0", [](auto& c) -> auto& { return c.model_params.x0; }));
    s.push_back(real("delta", [](auto& c) -> auto& { return c.scheme.delta; }));
    s.push_back(real("tau", [](auto& c) -> auto& { return c.scheme.tau; }));
    s.push_back(real("alpha", [](auto& c) -> auto& { return c.scheme.alpha; }));
    s.push_back(count("particles", [](auto& c) -> auto& { return c.scheme.particles; }));
    s.push_back(real("horizon", [](auto& c) -> auto& { return c.scheme.horizon; }));
    s.push_back({"seed",
                 [](RunConfig& c, const std::string& v) {
                   c.scheme.seed = parse_unsigned("seed", v);
                   c.seed_set = true;
                 },
                 [](const RunConfig& c) { return std::to_string(c.scheme.seed); }});
    s.push_back({"taming",
                 [](RunConfig& c, const std::string& v) { c.scheme.taming_enabled = parse_bool("taming", v); },
                 [](const RunConfig& c) { return std::string(c.scheme.taming_enabled ? "true" : "false"); }});
    s.push_back(real("moment_order_p", [](auto& c) -> auto& { return c.scheme.moment_order_p; }));
    s.push_back(real("error_exponent_q", [](auto& c) -> auto& { return c.error_exponent_q; }));
    s.push_back(count("monitor_p", [](auto& c) -> auto& { return c.monitor_p; }));
    s.push_back(real("delta_ref", [](auto& c) -> auto& { return c.delta_ref; }));
    s.push_back({"deltas",
                 [](RunConfig& c, const std::string& v) {
                   c.deltas.clear();
                   for (const auto& item : split_list(v)) c.deltas.push_back(parse_real("deltas", item));
                 },
                 [](const RunConfig& c) { return join(c.deltas, format_real); }});
    s.push_back({"xis",
                 [](RunConfig& c, const std::string& v) {
                   c.xis.clear();
                   for (const auto& item : split_list(v)) c.xis.push_back(parse_unsigned("xis", item));
                 },
                 [](const RunConfig& c) {
                   return join(c.xis, [](std::size_t x) { return std::to_string(x); });
                 }});
    s.push_back(count("mc_reps", [](auto& c) -> auto& { return c.mc_reps; }));
    s.push_back(count("dim", [](auto& c) -> auto& { return c.dim; }));
    s.push_back(count("replicates", [](auto& c) -> auto& { return c.replicates; }));
    s.push_back({"outdir", [](RunConfig& c, const std::string& v) { c.outdir = v; },
                 [](const RunConfig& c) { return c.outdir; }});
    s.push_back({"name", [](RunConfig& c, const std::string& v) { c.name = v; },
                 [](const RunConfig& c) { return c.name; }});
    s.push_back(count("workers", [](auto& c) -> auto& { return c.workers; }));
    s.push_back({"gnuplot", [](RunConfig& c, const std::string& v) { c.gnuplot = parse_bool("gnuplot", v); },
                 [](const RunConfig& c) { return std::string(c.gnuplot ? "true" : "false"); }});
    s.push_back({"dump_noise",
                 [](RunConfig& c, const std::string& v) { c.dump_noise = parse_bool("dump_noise", v); },
                 [](const RunConfig& c) { return std::string(c.dump_noise ? "true" : "false"); }});
    return s;
  }();
  return specs;
}

const KeySpec& find_key(const std::string& name) {
  for (const auto& spec : key_specs()) {
    if (spec.name == name) return spec;
  }
  std::string valid;
  for (const auto& spec : key_specs()) valid += (valid.empty() ? "" : ", ") + spec.name;
  throw ConfigError("unknown config key '" + name + "'; valid keys: " + valid);
}

Json config_json(const RunConfig& c) {
  Json j = Json::object();
  for (const auto& spec : key_specs()) j[spec.name] = spec.get(c);
  return j;
}

fs::path output_path(const RunConfig& c, const std::string& suffix) {
  return fs::path(c.outdir) / (c.name + suffix);
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

void write_json(const fs::path& path, const Json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

Json table_json(const ErrorTable& table) {
  Json rows = Json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"resolution", r.resolution}, {"rms_error", r.rms_error}, {"stderr", r.stderr_},
                    {"samples", r.samples}});
  }
  return rows;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Writes the table outputs and fits with reference rows removed. Returns the exit status.
int finish_table(const RunConfig& c, const ErrorTable& table, std::optional<double> reference,
                 const std::string& x_label, Json summary, Clock::time_point start, std::ostream& out,
                 std::ostream& err) {
  {
    auto csv = open_output(output_path(c, ".csv"));
    write_table_csv(table, csv);
  }
  if (c.gnuplot) {
    auto gp = open_output(output_path(c, ".gp"));
    write_gnuplot_script(table, c.name, c.name + ".csv", x_label, gp);
  }
  const ErrorTable fit_rows = reference ? without_resolution(table, *reference) : table;
  int status = kExitOk;
  try {
    const auto fit = fit_loglog_slope(fit_rows);
    summary["slope"] = fit.slope;
    summary["intercept"] = fit.intercept;
    out << c.name << ": slope " << format_real(fit.slope) << '\n';
  } catch (const DegenerateFitError& e) {
    summary["slope"] = nullptr;
    summary["intercept"] = nullptr;
    summary["fit_error"] = e.what();
    err << "mvnsdde: " << e.what() << '\n';
    status = kExitFailure;
  }
  summary["table"] = table_json(table);
  summary["runtime_seconds"] = seconds_since(start);
  write_json(output_path(c, ".summary.json"), summary);
  return status;
}

int run_validate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto model = model_from_config(c);
  const auto report = validate(model, scheme_from_config(c), c.error_exponent_q);
  Json summary = {{"name", c.name}, {"command", c.command}, {"config", config_json(c)},
                  {"ok", report.ok()}, {"violations", report.violations}};
  const double excess = probe_neutral_contraction(model, 10.0, 1000, c.scheme.seed);
  summary["contraction_probe_excess"] = excess;
  write_json(output_path(c, ".summary.json"), summary);
  if (!report.ok() || excess > 1e-9) {
    for (const auto& v : report.violations) err << "mvnsdde: violation: " << v << '\n';
    if (excess > 1e-9) err << "mvnsdde: violation: neutral map is not a lambda-contraction\n";
    return kExitInvalid;
  }
  out << "ok\n";
  return kExitOk;
}

int run_simulate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const auto model = model_from_config(c);
  const auto params = scheme_from_config(c);
  const auto report = validate(model, params);
  if (!report.ok()) throw ValidationError(report.summary());
  const auto noise = BrownianGrid::generate(params.seed, params.particles, model.bm_dim, params.delta,
                                            params.horizon);
  if (c.dump_noise) {
    auto dump = open_output(output_path(c, ".bgrd"));
    write_grid_dump(noise, dump);
  }
  SimulationOptions options;
  options.workers = c.workers;
  Json summary = {{"name", c.name}, {"command", c.command}, {"config", config_json(c)}};
  try {
    const auto grid = simulate(model, params, noise, options);
    {
      auto csv = open_output(output_path(c, ".csv"));
      write_grid_csv(grid, csv);
    }
    const auto peak = moment_monitor(grid, c.monitor_p);
    summary["moment_p"] = c.monitor_p;
    summary["moment_max"] = peak.value;
    summary["moment_argmax_step"] = peak.step;
    summary["runtime_seconds"] = seconds_since(start);
    write_json(output_path(c, ".summary.json"), summary);
    out << c.name << ": max p=" << c.monitor_p << " moment " << format_real(peak.value) << " at step "
        << peak.step << '\n';
    return kExitOk;
  } catch (const OverflowError& e) {
    {
      auto csv = open_output(output_path(c, ".csv"));
      write_grid_csv(e.partial(), csv);
    }
    summary["overflow"] = {{"particle", e.particle()}, {"step", e.step()}};
    summary["runtime_seconds"] = seconds_since(start);
    write_json(output_path(c, ".summary.json"), summary);
    err << "mvnsdde: overflow: " << e.what() << '\n';
    return kExitOverflow;
  }
}

int run_convergence_dt(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const auto model = model_from_config(c);
  const auto table = strong_error_vs_dt(model, scheme_from_config(c), c.delta_ref, c.deltas, c.workers,
                                        c.replicates);
  Json summary = {{"name", c.name}, {"command", c.command}, {"config", config_json(c)},
                  {"estimator", c.replicates > 1 ? "pooled over independent seeds" : "across particles of one coupled run"}};
  return finish_table(c, table, c.delta_ref, "step size", std::move(summary), start, out, err);
}

int run_convergence_particles(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const auto model = model_from_config(c);
  const auto table = chaos_error_vs_particles(model, scheme_from_config(c), c.xis, c.workers, c.replicates);
  Json summary = {{"name", c.name}, {"command", c.command}, {"config", config_json(c)},
                  {"reference_particles", c.xis.empty() ? 0 : c.xis.back()}};
  // chaos_error_vs_particles rejects an empty list, so xis has a last entry here.
  return finish_table(c, table, static_cast<double>(c.xis.back()), "particles", std::move(summary), start, out, err);
}

int run_taming_compare(const RunConfig& c, std::ostream& out, std::ostream&) {
  const auto start = Clock::now();
  const auto model = model_from_config(c);
  const auto report = taming_comparison(model, scheme_from_config(c), c.workers);
  Json summary = {{"name", c.name}, {"command", c.command}, {"config", config_json(c)}};
  summary["tamed_moment_p"] = 2;
  summary["tamed_moment_max"] = report.tamed_peak.value;
  summary["tamed_moment_argmax_step"] = report.tamed_peak.step;
  summary["tamed_diverged"] = report.tamed_diverged;
  summary["untamed_diverged"] = report.untamed_diverged;
  summary["untamed_divergence_fraction"] = report.untamed_divergence_fraction();
  summary["first_untamed_divergence_step"] =
      report.first_untamed_divergence ? Json(*report.first_untamed_divergence) : Json(nullptr);
  summary["divergence_threshold"] = kDivergenceThreshold;
  summary["runtime_seconds"] = seconds_since(start);
  write_json(output_path(c, ".summary.json"), summary);
  out << c.name << ": untamed divergence fraction " << format_real(report.untamed_divergence_fraction())
      << ", tamed max second moment " << format_real(report.tamed_peak.value) << '\n';
  return kExitOk;
}

int run_empirical_rate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto start = Clock::now();
  const auto result = empirical_measure_rate(c.dim, c.xis, c.mc_reps, c.scheme.seed);
  Json summary = {{"name", c.name}, {"command", c.command}, {"config", config_json(c)},
                  {"proxy", result.proxy}, {"metric", "mean W2^2 (column rms_error)"}};
  return finish_table(c, result.table, std::nullopt, "sample size", std::move(summary), start, out, err);
}

}  // namespace

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> names = {"simulate",       "convergence-dt", "convergence-particles",
                                                 "taming-compare", "empirical-rate", "validate"};
  return names;
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& spec : key_specs()) n.push_back(spec.name);
    return n;
  }();
  return names;
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues entries;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    entries.emplace_back(trim(std::string_view(content).substr(0, eq)),
                         trim(std::string_view(content).substr(eq + 1)));
  }
  return entries;
}

RunConfig build_run_config(const std::string& command, const KeyValues& file_entries,
                           const KeyValues& overrides) {
  RunConfig c;
  for (const auto& [key, value] : file_entries) find_key(key).set(c, value);
  for (const auto& [key, value] : overrides) find_key(key).set(c, value);
  if (!command.empty()) c.command = command;
  if (std::find(subcommands().begin(), subcommands().end(), c.command) == subcommands().end()) {
    throw ConfigError("unknown subcommand '" + c.command + "'");
  }
  if (!c.seed_set) throw ConfigError("missing required key 'seed' (no clock-based default)");
  if (c.outdir.empty()) {
    const char* env = std::getenv("MVNSDDE_OUTDIR");
    c.outdir = env && *env ? env : ".";
  }
  if (c.name.empty()) c.name = c.command;
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  return c;
}

RunConfig load_run_config(const std::string& command, const std::optional<fs::path>& file,
                          const KeyValues& overrides) {
  KeyValues entries;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    std::ostringstream text;
    text << in.rdbuf();
    entries = parse_key_values(text.str());
  }
  return build_run_config(command, entries, overrides);
}

std::string echo_config(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& spec : key_specs()) os << spec.name << " = " << spec.get(c) << '\n';
  return os.str();
}

ModelSpec model_from_config(const RunConfig& c) { return make_model(c.model, c.model_params); }

SchemeParams scheme_from_config(const RunConfig& c) { return c.scheme; }

int dispatch(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    fs::create_directories(c.outdir);
    {
      auto echo = open_output(fs::path(c.outdir) / "config.echo");
      echo << echo_config(c);
    }
    if (c.command == "validate") return run_validate(c, out, err);
    if (c.command == "simulate") return run_simulate(c, out, err);
    if (c.command == "convergence-dt") return run_convergence_dt(c, out, err);
    if (c.command == "convergence-particles") return run_convergence_particles(c, out, err);
    if (c.command == "taming-compare") return run_taming_compare(c, out, err);
    if (c.command == "empirical-rate") return run_empirical_rate(c, out, err);
    err << "mvnsdde: unknown subcommand '" << c.command << "'\n";
    return kExitFailure;
  } catch (const ValidationError& e) {
    err << "mvnsdde: validation failed: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const OverflowError& e) {
    err << "mvnsdde: overflow: " << e.what() << '\n';
    return kExitOverflow;
  } catch (const std::exception& e) {
    err << "mvnsdde: " << e.what() << '\n';
    return kExitFailure;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tamed Euler-Maruyama particle simulations of McKean-Vlasov neutral delay SDEs"};
  app.require_subcommand(1, 1);

  std::string config_file;
  std::map<std::string, std::string> values;
  bool no_taming = false;
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_file, "flat key = value config file");
    sub->add_flag("--no-taming", no_taming, "disable drift taming (taming = false)");
    for (const auto& key : config_keys()) {
      if (key == "command") continue;
      sub->add_option("--" + key, values[key], "override config key '" + key + "'");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitFailure;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  KeyValues overrides;
  for (const auto& key : config_keys()) {
    if (key == "command") continue;
    if (app.get_subcommands().front()->count("--" + key) > 0) overrides.emplace_back(key, values[key]);
  }
  if (no_taming) overrides.emplace_back("taming", "false");

  RunConfig config;
  try {
    config = load_run_config(command,
                             config_file.empty() ? std::nullopt : std::optional<fs::path>(config_file),
                             overrides);
  } catch (const std::exception& e) {
    err << "mvnsdde: " << e.what() << '\n';
    return kExitFailure;
  }
  return dispatch(config, out, err);
}

}  // namespace mvnsdde::cli
