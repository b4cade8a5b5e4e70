#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "mvnsdde/scheme.hpp"
#include "oracles.hpp"

using namespace mvnsdde;

namespace {

SchemeParams params_for(double delta, double tau, std::size_t particles, double horizon = 1.0) {
  SchemeParams p;
  p.delta = delta;
  p.tau = tau;
  p.alpha = 0.5;
  p.particles = particles;
  p.horizon = horizon;
  return p;
}

ModelSpec constant_model(double drift, double sigma) {
  ModelSpec m;
  m.name = "constant";
  m.neutral = [](std::span<const double>, std::span<double> out) { out[0] = 0.0; };
  m.drift = [drift](std::span<const double>, std::span<const double>, const EmpiricalMeasure&,
                    std::span<double> out) { out[0] = drift; };
  m.diffusion = [sigma](std::span<const double>, std::span<const double>, const EmpiricalMeasure&,
                        std::span<double> out) { out[0] = sigma; };
  m.initial_segment = [](double, std::span<double> out) { out[0] = 0.25; };
  m.lambda = 0.5;
  return m;
}

oracle::ScalarModel example51_oracle(double beta = 0.5) {
  oracle::ScalarModel m;
  m.neutral = [beta](double y) { return -beta * y; };
  m.drift = [beta](double x, double y, double mean) {
    return x - x * x * x + beta * y - beta * beta * beta * y * y * y + mean;
  };
  m.diffusion = [beta](double x, double y, double) { return x + beta * y; };
  m.segment = [](double t) { return t; };
  return m;
}

std::vector<std::vector<double>> increments_by_particle(const BrownianGrid& g) {
  const auto flat = g.materialize();
  std::vector<std::vector<double>> out(g.particles(), std::vector<double>(g.steps()));
  for (std::size_t a = 0; a < g.particles(); ++a) {
    for (std::size_t s = 0; s < g.steps(); ++s) out[a][s] = flat[a * g.steps() + s];
  }
  return out;
}

// Rows -n0..0 hold the value n; rows are single-particle, single-component.
DelayBuffer indexed_buffer(std::int64_t n0, std::int64_t upto) {
  DelayBuffer buf(1, 1, n0);
  for (std::int64_t n = -n0; n <= upto; ++n) {
    const double v = static_cast<double>(n);
    buf.push(std::span<const double>(&v, 1));
  }
  return buf;
}

}  // namespace

TEST_CASE("tame_drift") {
  CHECK(tame_drift(std::vector<double>{0.0}, 0.25, 0.5)[0] == 0.0);
  CHECK(tame_drift(std::vector<double>{2.0}, 0.25, 0.5)[0] == doctest::Approx(1.0));
  CHECK(tame_drift(std::vector<double>{1e6}, 0.01, 0.5)[0] < 10.0);

  SUBCASE("one shared denominator for the whole vector") {
    const auto t = tame_drift(std::vector<double>{3.0, 4.0}, 0.25, 0.5);
    CHECK(t[0] == doctest::Approx(3.0 / 3.5));
    CHECK(t[1] == doctest::Approx(4.0 / 3.5));
  }
}

TEST_CASE("delay buffer lookback") {
  SUBCASE("n = 0, n0 = 1") {
    const auto buf = indexed_buffer(1, 0);
    const auto [cur, lag] = buf.delayed_state(0, 0);
    CHECK(cur[0] == 0.0);
    CHECK(lag[0] == -1.0);
  }
  SUBCASE("n = n0 reads the end of the initial segment") {
    const auto buf = indexed_buffer(4, 4);
    const auto [cur, lag] = buf.delayed_state(0, 4);
    CHECK(cur[0] == 4.0);
    CHECK(lag[0] == 0.0);
  }
  SUBCASE("n = n0 + 3") {
    const auto buf = indexed_buffer(4, 7);
    const auto [cur, lag] = buf.delayed_state(0, 7);
    CHECK(cur[0] == 7.0);
    CHECK(lag[0] == 3.0);
  }
  SUBCASE("rows outside the window are unreachable") {
    const auto buf = indexed_buffer(2, 5);
    CHECK_THROWS_AS(buf.row(6), std::logic_error);
    CHECK_THROWS_AS(buf.row(2), std::logic_error);
    CHECK(buf.row(3)[0] == 3.0);
  }
}

TEST_CASE("em_step") {
  SUBCASE("zero coefficients keep every particle in place") {
    const auto m = constant_model(0.0, 0.0);
    DelayBuffer hist(3, 1, 2);
    for (int n = -2; n <= 0; ++n) hist.push(std::vector<double>{1.0, -2.0, 0.5});
    const EmpiricalMeasure mu({1.0, -2.0, 0.5}, 1);
    std::vector<double> next(3);
    const auto bad = em_step(m, params_for(0.125, 0.25, 3), hist, mu, std::vector<double>{0.3, -0.1, 2.0}, next);
    CHECK_FALSE(bad);
    CHECK(next == std::vector<double>{1.0, -2.0, 0.5});
  }

  SUBCASE("example51, one particle, first step from the initial segment") {
    const auto m = example51();
    auto p = params_for(1.0 / 32.0, 1.0 / 32.0, 1);
    DelayBuffer hist(1, 1, 1);
    hist.push(std::vector<double>{-1.0 / 32.0});
    hist.push(std::vector<double>{0.0});
    const EmpiricalMeasure mu({0.0}, 1);
    std::vector<double> next(1);
    em_step(m, p, hist, mu, std::vector<double>{0.0}, next);
    // U_1 = D(U_0) + U_0 - D(U_{-1}) + b_delta * delta, with b = -1/64 + 1/262144.
    const double b = -1.0 / 64.0 + 1.0 / 262144.0;
    const double tamed = b / (1.0 + std::sqrt(1.0 / 32.0) * std::abs(b));
    CHECK(next[0] == doctest::Approx(-1.0 / 64.0 + tamed / 32.0).epsilon(1e-14));
    CHECK(next[0] == doctest::Approx(-0.0161118).epsilon(1e-6));
  }

  SUBCASE("displacement is linear in the noise") {
    const auto m = constant_model(0.0, 0.7);
    DelayBuffer hist(1, 1, 1);
    hist.push(std::vector<double>{0.25});
    hist.push(std::vector<double>{0.25});
    const EmpiricalMeasure mu({0.25}, 1);
    std::vector<double> once(1), twice(1);
    em_step(m, params_for(0.125, 0.25, 1), hist, mu, std::vector<double>{0.2}, once);
    em_step(m, params_for(0.125, 0.25, 1), hist, mu, std::vector<double>{0.4}, twice);
    CHECK(twice[0] - 0.25 == doctest::Approx(2.0 * (once[0] - 0.25)));
  }

  SUBCASE("non-finite states are reported by particle") {
    const auto m = constant_model(std::numeric_limits<double>::infinity(), 0.0);
    DelayBuffer hist(2, 1, 1);
    hist.push(std::vector<double>{0.0, 0.0});
    hist.push(std::vector<double>{0.0, 0.0});
    std::vector<double> next(2);
    auto p = params_for(0.125, 0.25, 2);
    p.taming_enabled = false;
    const auto bad = em_step(m, p, hist, EmpiricalMeasure({0.0, 0.0}, 1), std::vector<double>{0.0, 0.0}, next);
    REQUIRE(bad);
    CHECK(*bad == 0);
  }
}

TEST_CASE("simulate matches the dense reference recursion") {
  const double delta = 1.0 / 64.0, tau = 1.0 / 16.0;
  for (bool tamed : {true, false}) {
    auto p = params_for(delta, tau, 7, 0.5);
    p.taming_enabled = tamed;
    const auto noise = BrownianGrid::generate(17, 7, 1, delta, 0.5);
    const auto grid = simulate(example51(), p, noise);
    const auto ref = oracle::scalar_scheme(example51_oracle(), delta, 4, 32, 0.5, tamed, tau,
                                           increments_by_particle(noise));
    for (std::size_t a = 0; a < 7; ++a) {
      for (std::int64_t n = -4; n <= 32; ++n) {
        CHECK(grid.state(a, n)[0] ==
              doctest::Approx(ref[a][static_cast<std::size_t>(n + 4)]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("simulate edge cases") {
  SUBCASE("single particle interacts with itself") {
    const double delta = 1.0 / 128.0, tau = 1.0 / 32.0;
    const auto noise = BrownianGrid::generate(3, 1, 1, delta, 1.0);
    const auto grid = simulate(example51(), params_for(delta, tau, 1), noise);
    const auto ref =
        oracle::scalar_scheme(example51_oracle(), delta, 4, 128, 0.5, true, tau, increments_by_particle(noise));
    CHECK(grid.state(0, 128)[0] == doctest::Approx(ref[0].back()).epsilon(1e-12));
    CHECK(measure_from_column(grid, 100).size() == 1);
    CHECK(measure_from_column(grid, 100).mean()[0] == grid.state(0, 100)[0]);
  }

  SUBCASE("deterministic exponential decay") {
    const double delta = 0x1p-10;
    const auto model = linear_meanfield(-1.0, 0.0, 0.0, 1.0);
    auto p = params_for(delta, 1.0 / 32.0, 4);
    p.taming_enabled = false;
    const auto grid = simulate(model, p,
                               BrownianGrid::generate(1, 4, 1, delta, 1.0));
    CHECK(std::abs(grid.state(2, grid.last_index())[0] - std::exp(-1.0)) < 1e-3);
  }

  SUBCASE("zero initial data is an equilibrium of example51") {
    auto m = example51();
    m.initial_segment = [](double, std::span<double> out) { out[0] = 0.0; };
    const double delta = 1.0 / 256.0;
    const auto grid = simulate(m, params_for(delta, 1.0 / 32.0, 5), BrownianGrid::generate(8, 5, 1, delta, 1.0));
    for (std::int64_t n = grid.first_index(); n <= grid.last_index(); ++n) {
      for (double v : grid.row(n)) CHECK(v == 0.0);
    }
  }

  SUBCASE("initial rows equal the segment") {
    const double delta = 1.0 / 256.0;
    const auto grid = simulate(example51(), params_for(delta, 1.0 / 32.0, 3),
                               BrownianGrid::generate(8, 3, 1, delta, 1.0));
    CHECK(grid.first_index() == -8);
    CHECK(grid.state(1, -8)[0] == -1.0 / 32.0);
    for (std::int64_t n = -8; n <= 0; ++n) CHECK(grid.state(2, n)[0] == static_cast<double>(n) * delta);
  }

  SUBCASE("identical particles give a degenerate measure") {
    const double delta = 1.0 / 64.0;
    const auto grid = simulate(constant_model(0.5, 0.0), params_for(delta, 1.0 / 16.0, 4),
                               BrownianGrid::generate(8, 4, 1, delta, 1.0));
    const auto mu = measure_from_column(grid, 10);
    CHECK(mu.size() == 4);
    CHECK(moment_wq(mu, 2) == doctest::Approx(std::abs(grid.state(0, 10)[0])));
    CHECK(w2_1d(mu, mu) == 0.0);
    CHECK_THROWS_AS(measure_from_column(grid, 65), std::out_of_range);
    CHECK_THROWS_AS(measure_from_column(grid, -5), std::out_of_range);
  }
}

TEST_CASE("simulate preconditions") {
  const double delta = 1.0 / 64.0;
  const auto noise = BrownianGrid::generate(1, 4, 1, delta, 1.0);
  CHECK_THROWS_AS(simulate(example51(), params_for(delta, 0.03, 4), noise), ValidationError);
  CHECK_THROWS_AS(simulate(example51(), params_for(delta, 1.0 / 16.0, 5), noise), ShapeError);
  CHECK_THROWS_AS(simulate(example51(), params_for(delta, 1.0 / 16.0, 4), noise.coarsen(2)), ShapeError);
}

TEST_CASE("lookback reads exactly the stored row") {
  const double delta = 1.0 / 64.0;
  const std::int64_t n0 = 4;
  auto m = example51();
  std::vector<std::pair<double, double>> seen;
  const auto inner = m.drift;
  m.drift = [&seen, inner](std::span<const double> x, std::span<const double> y, const EmpiricalMeasure& mu,
                           std::span<double> out) {
    seen.emplace_back(x[0], y[0]);
    inner(x, y, mu, out);
  };
  const std::size_t xi = 2;
  const auto grid = simulate(m, params_for(delta, n0 * delta, xi), BrownianGrid::generate(4, xi, 1, delta, 1.0));
  REQUIRE(seen.size() == xi * 64);
  for (std::int64_t n = 0; n < 64; ++n) {
    for (std::size_t a = 0; a < xi; ++a) {
      const auto& [x, y] = seen[static_cast<std::size_t>(n) * xi + a];
      CHECK(x == grid.state(a, n)[0]);
      CHECK(y == grid.state(a, n - n0)[0]);
    }
  }
}

TEST_CASE("particle labels are exchangeable") {
  const double delta = 1.0 / 128.0;
  const std::size_t xi = 6;
  const std::vector<std::uint64_t> perm = {3, 0, 5, 1, 4, 2};
  const auto p = params_for(delta, 1.0 / 32.0, xi);
  const auto base_noise = BrownianGrid::generate(21, xi, 1, delta, 1.0);
  const auto grid = simulate(example51(), p, base_noise);
  const auto permuted = simulate(example51(), p, base_noise.with_stream_ids(perm));
  for (std::size_t a = 0; a < xi; ++a) {
    CHECK(permuted.state(a, 128)[0] == doctest::Approx(grid.state(perm[a], 128)[0]).epsilon(1e-12));
  }
}

TEST_CASE("update order and worker count do not change the result") {
  const double delta = 1.0 / 256.0;
  const auto p = params_for(delta, 1.0 / 32.0, 50);
  const auto noise = BrownianGrid::generate(12, 50, 1, delta, 1.0);
  SimulationOptions forward, reverse, threaded;
  reverse.order = ParticleOrder::reverse;
  threaded.workers = 4;
  const auto a = simulate(example51(), p, noise, forward);
  const auto b = simulate(example51(), p, noise, reverse);
  const auto c = simulate(example51(), p, noise, threaded);
  for (std::int64_t n = a.first_index(); n <= a.last_index(); ++n) {
    CHECK(std::equal(a.row(n).begin(), a.row(n).end(), b.row(n).begin()));
    CHECK(std::equal(a.row(n).begin(), a.row(n).end(), c.row(n).begin()));
  }
}

TEST_CASE("terminal storage keeps only the last row") {
  const double delta = 1.0 / 64.0;
  const auto p = params_for(delta, 1.0 / 16.0, 3);
  const auto noise = BrownianGrid::generate(2, 3, 1, delta, 1.0);
  SimulationOptions opts;
  opts.storage = GridStorage::terminal;
  std::int64_t observed = 0;
  opts.observer = [&observed](std::int64_t, std::span<const double>) { ++observed; };
  const auto term = simulate(example51(), p, noise, opts);
  const auto full = simulate(example51(), p, noise);
  CHECK(observed == 64 + 4 + 1);
  CHECK(term.has_row(64));
  CHECK_FALSE(term.has_row(63));
  CHECK(std::equal(term.row(64).begin(), term.row(64).end(), full.row(64).begin()));
}

TEST_CASE("overflow handling") {
  const double delta = 0.25, tau = 0.5;
  const auto model = cubic_no_mf(5.0);
  auto p = params_for(delta, tau, 20, 4.0);
  p.taming_enabled = false;
  const auto noise = BrownianGrid::generate(5, 20, 1, delta, 4.0);

  SUBCASE("abort carries the finite prefix") {
    try {
      simulate(model, p, noise);
      FAIL("expected an overflow");
    } catch (const OverflowError& e) {
      CHECK(e.step() >= 1);
      CHECK(e.partial().latest_index() == e.step() - 1);
      for (double v : e.partial().row(e.partial().latest_index())) CHECK(std::isfinite(v));
    }
  }

  SUBCASE("quarantine freezes diverged particles") {
    SimulationOptions opts;
    opts.overflow = OverflowPolicy::quarantine;
    const auto grid = simulate(model, p, noise, opts);
    CHECK(grid.diverged_count() == 20);
    for (std::size_t a = 0; a < 20; ++a) {
      const auto step = *grid.divergence_steps()[a];
      CHECK(grid.state(a, grid.last_index())[0] == grid.state(a, step - 1)[0]);
    }
  }

  SUBCASE("tamed run stays finite") {
    p.taming_enabled = true;
    const auto grid = simulate(model, p, noise);
    for (double v : grid.row(grid.last_index())) CHECK(std::isfinite(v));
  }
}

TEST_CASE("grid CSV export") {
  const double delta = 0.25;
  auto p = params_for(delta, 0.5, 2, 0.5);
  p.taming_enabled = false;
  const auto grid = simulate(linear_meanfield(-1.0, 0.5, 0.0, 1.0), p,
                             BrownianGrid::generate(1, 2, 1, delta, 0.5));
  std::ostringstream os;
  write_grid_csv(grid, os);
  std::istringstream lines(os.str());
  std::string line;
  std::getline(lines, line);
  CHECK(line == "t,particle,comp0");
  std::getline(lines, line);
  CHECK(line == "-0.5,0,1");
  std::size_t count = 1;
  while (std::getline(lines, line)) ++count;
  CHECK(count == 2 * 5);
  // 1 + 0.25 * (-1 + 0.5) = 0.875
  CHECK(os.str().find("0.25,1,0.875\n") != std::string::npos);
}
