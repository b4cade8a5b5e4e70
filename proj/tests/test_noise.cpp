#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "mvnsdde/noise.hpp"

using namespace mvnsdde;

TEST_CASE("philox4x32-10 known answers") {
  // Random123 kat_vectors.
  CHECK(philox4x32_10({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(philox4x32_10({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
        PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(philox4x32_10({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
        PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("generate is deterministic and seed-sensitive") {
  const auto a = BrownianGrid::generate(42, 100, 2, 0.01, 5.0).materialize();
  const auto b = BrownianGrid::generate(42, 100, 2, 0.01, 5.0).materialize();
  const auto c = BrownianGrid::generate(43, 100, 2, 0.01, 5.0).materialize();
  REQUIRE(a.size() == 100000);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("grid bookkeeping") {
  const auto g = BrownianGrid::generate(1, 3, 1, 0x1p-5, 1.0);
  CHECK(g.steps() == 32);
  CHECK(static_cast<double>(g.steps()) * g.delta() == 1.0);
  CHECK_THROWS_AS(BrownianGrid::generate(1, 3, 1, 0.3, 1.0), GridError);
  CHECK_THROWS_AS(BrownianGrid::generate(1, 0, 1, 0.25, 1.0), GridError);
  CHECK_THROWS_AS(BrownianGrid::generate(1, 1, 1, -0.25, 1.0), GridError);
  CHECK_THROWS_AS(g.coarsen(3), GridError);
  CHECK_THROWS_AS(g.coarsen(0), GridError);
  CHECK(g.coarsen(4).steps() == 8);
  CHECK(g.coarsen(4).delta() == 0.125);
}

TEST_CASE("single-step sample moments") {
  const double delta = 0.01;
  const std::size_t n = 10000;
  const auto g = BrownianGrid::generate(2024, n, 1, delta, delta);
  const auto xs = g.materialize();
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n - 1);
  CHECK(std::abs(mean) < 4.0 * std::sqrt(delta / static_cast<double>(n)));
  CHECK(std::abs(var - delta) < 0.05 * delta);
}

TEST_CASE("increments are uncorrelated across components and particles") {
  // 10^5 pairs each; the standard error of a correlation estimate is 1/sqrt(N).
  const std::size_t particles = 1000, steps = 100;
  const auto g = BrownianGrid::generate(99, particles, 2, 1.0, static_cast<double>(steps));
  const auto xs = g.materialize();
  auto at = [&](std::size_t a, std::size_t s, std::size_t k) { return xs[(a * steps + s) * 2 + k]; };
  double cross_comp = 0.0, cross_particle = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a + 1 < particles; a += 2) {
    for (std::size_t s = 0; s < steps; ++s) {
      cross_comp += at(a, s, 0) * at(a, s, 1);
      cross_particle += at(a, s, 0) * at(a + 1, s, 0);
      ++pairs;
    }
  }
  const double bound = 5.0 / std::sqrt(static_cast<double>(pairs));
  CHECK(std::abs(cross_comp / static_cast<double>(pairs)) < bound);
  CHECK(std::abs(cross_particle / static_cast<double>(pairs)) < bound);
}

TEST_CASE("coarsening") {
  const auto fine = BrownianGrid::generate(7, 5, 3, 0x1p-6, 1.0);
  const auto xs = fine.materialize();

  SUBCASE("factor one is the identity") { CHECK(fine.coarsen(1).materialize() == xs); }

  SUBCASE("two steps collapse to their sum") {
    const auto two = BrownianGrid::generate(7, 5, 3, 0.5, 1.0);
    const auto u = two.materialize();
    const auto one = two.coarsen(2).materialize();
    for (std::size_t a = 0; a < 5; ++a) {
      for (std::size_t k = 0; k < 3; ++k) {
        CHECK(one[a * 3 + k] == u[(a * 2 + 0) * 3 + k] + u[(a * 2 + 1) * 3 + k]);
      }
    }
  }

  SUBCASE("coarse entries are block sums of fine entries") {
    const std::size_t k = 8;
    const auto coarse = fine.coarsen(k).materialize();
    const std::size_t fs = fine.steps(), cs = fs / k;
    for (std::size_t a = 0; a < 5; ++a) {
      for (std::size_t j = 0; j < cs; ++j) {
        for (std::size_t c = 0; c < 3; ++c) {
          double sum = 0.0;
          for (std::size_t n = j * k; n < (j + 1) * k; ++n) sum += xs[(a * fs + n) * 3 + c];
          CHECK(coarse[(a * cs + j) * 3 + c] == sum);
        }
      }
    }
  }

  SUBCASE("composition and endpoint invariance") {
    CHECK(fine.coarsen(2).coarsen(4).materialize() == fine.coarsen(8).materialize());
    for (std::size_t k : {1u, 2u, 4u, 16u, 64u}) {
      const auto coarse = fine.coarsen(k);
      const auto cx = coarse.materialize();
      for (std::size_t a = 0; a < 5; ++a) {
        for (std::size_t c = 0; c < 3; ++c) {
          double fine_sum = 0.0, coarse_sum = 0.0;
          for (std::size_t n = 0; n < fine.steps(); ++n) fine_sum += xs[(a * fine.steps() + n) * 3 + c];
          for (std::size_t n = 0; n < coarse.steps(); ++n) coarse_sum += cx[(a * coarse.steps() + n) * 3 + c];
          CHECK(coarse_sum == doctest::Approx(fine_sum).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("streams are keyed by absolute particle id") {
  const auto small = BrownianGrid::generate(5, 4, 1, 0.125, 1.0).materialize();
  const auto large = BrownianGrid::generate(5, 16, 1, 0.125, 1.0).materialize();
  CHECK(std::equal(small.begin(), small.end(), large.begin()));

  const auto swapped = BrownianGrid::generate(5, 2, 1, 0.125, 1.0).with_stream_ids({1, 0});
  for (std::size_t s = 0; s < 8; ++s) {
    CHECK(swapped.increment(0, s, 0) == large[8 + s]);
    CHECK(swapped.increment(1, s, 0) == large[s]);
  }
}

TEST_CASE("binary dump layout") {
  const auto g = BrownianGrid::generate(0x0123456789abcdefULL, 3, 2, 0.25, 1.0).coarsen(2);
  std::stringstream buf;
  write_grid_dump(g, buf);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "BGRD");
  CHECK(bytes.size() == 4 + 4 + 8 * 3 + 8 + 8 + 8 * 3 * 2 * 2);
  CHECK(static_cast<unsigned char>(bytes[4]) == kGridDumpVersion);  // little-endian low byte first

  const auto dump = read_grid_dump(buf);
  CHECK(dump.particles == 3);
  CHECK(dump.bm_dim == 2);
  CHECK(dump.steps == 2);
  CHECK(dump.delta == 0.5);
  CHECK(dump.seed == 0x0123456789abcdefULL);
  CHECK(dump.increments == g.materialize());

  std::stringstream junk("XXXX");
  CHECK_THROWS_AS(read_grid_dump(junk), GridError);
}
