#include "mvnsdde/noise.hpp"

#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <type_traits>

#include "mvnsdde/measure.hpp"

namespace mvnsdde {

namespace {

constexpr std::uint32_t kMulA = 0xD2511F53;
constexpr std::uint32_t kMulB = 0xCD9E8D57;
constexpr std::uint32_t kWeylA = 0x9E3779B9;
constexpr std::uint32_t kWeylB = 0xBB67AE85;

constexpr std::uint32_t kPairBits = 24;

// Uniform on (0, 1), never touching either endpoint.
double to_open_unit(std::uint32_t hi, std::uint32_t lo) noexcept {
  const std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 32) | lo;
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

template <typename T>
void put_le(std::ostream& out, T value) {
  std::uint64_t bits;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw GridError("truncated grid dump");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (std::is_same_v<T, double>) {
    return std::bit_cast<double>(bits);
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept {
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kMulA) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kMulB) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeylA;
    key[1] += kWeylB;
  }
  return ctr;
}

std::array<double, 2> counter_normal_pair(std::uint64_t seed, StreamDomain domain,
                                          std::uint64_t stream, std::uint32_t index,
                                          std::uint32_t pair) noexcept {
  const PhiloxCounter ctr = {(static_cast<std::uint32_t>(domain) << kPairBits) | pair, index,
                             static_cast<std::uint32_t>(stream),
                             static_cast<std::uint32_t>(stream >> 32)};
  const PhiloxKey key = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  const auto bits = philox4x32_10(ctr, key);
  return {normal::quantile(to_open_unit(bits[0], bits[1])),
          normal::quantile(to_open_unit(bits[2], bits[3]))};
}

BrownianGrid BrownianGrid::generate(std::uint64_t seed, std::size_t particles, std::size_t bm_dim,
                                    double delta_base, double horizon) {
  if (!(delta_base > 0.0) || !(horizon > 0.0)) {
    throw GridError("Brownian grid needs positive step and horizon");
  }
  if (particles == 0 || bm_dim == 0) throw GridError("Brownian grid needs particles >= 1 and bm_dim >= 1");
  if (bm_dim > (std::size_t{2} << kPairBits)) throw GridError("Brownian dimension too large");
  const double ratio = horizon / delta_base;
  const double steps = std::round(ratio);
  if (steps < 1.0 || std::abs(ratio - steps) > 1e-9 * steps) {
    throw GridError("horizon / delta = " + std::to_string(ratio) + " is not an integer");
  }
  if (steps > static_cast<double>(std::numeric_limits<std::uint32_t>::max())) {
    throw GridError("too many time steps for the stream counter");
  }
  BrownianGrid g;
  g.seed_ = seed;
  g.particles_ = particles;
  g.bm_dim_ = bm_dim;
  g.base_delta_ = delta_base;
  g.base_steps_ = static_cast<std::size_t>(steps);
  g.horizon_ = horizon;
  return g;
}

BrownianGrid BrownianGrid::coarsen(std::size_t factor) const {
  if (factor == 0 || steps() % factor != 0) {
    throw GridError("coarsening factor " + std::to_string(factor) + " does not divide " +
                    std::to_string(steps()) + " steps");
  }
  BrownianGrid g = *this;
  g.factor_ = factor_ * factor;
  return g;
}

BrownianGrid BrownianGrid::with_stream_ids(std::vector<std::uint64_t> ids) const {
  if (ids.size() != particles_) throw ShapeError("one stream id per particle required");
  BrownianGrid g = *this;
  g.stream_ids_ = std::move(ids);
  return g;
}

void BrownianGrid::fill(std::size_t particle, std::size_t step, std::span<double> out) const {
  if (particle >= particles_ || step >= steps()) throw std::out_of_range("Brownian increment index out of range");
  if (out.size() != bm_dim_) throw ShapeError("increment buffer must have bm_dim entries");
  const double scale = std::sqrt(base_delta_);
  const std::uint64_t stream = stream_id(particle);
  for (auto& v : out) v = 0.0;
  const std::size_t first = step * factor_;
  for (std::size_t s = first; s < first + factor_; ++s) {
    for (std::size_t k = 0; k < bm_dim_; k += 2) {
      const auto z = counter_normal_pair(seed_, StreamDomain::brownian, stream,
                                         static_cast<std::uint32_t>(s),
                                         static_cast<std::uint32_t>(k / 2));
      out[k] += scale * z[0];
      if (k + 1 < bm_dim_) out[k + 1] += scale * z[1];
    }
  }
}

double BrownianGrid::increment(std::size_t particle, std::size_t step, std::size_t component) const {
  if (component >= bm_dim_) throw std::out_of_range("Brownian component out of range");
  std::vector<double> buf(bm_dim_);
  fill(particle, step, buf);
  return buf[component];
}

std::vector<double> BrownianGrid::materialize() const {
  const std::size_t n = steps();
  std::vector<double> out(particles_ * n * bm_dim_);
  for (std::size_t a = 0; a < particles_; ++a) {
    for (std::size_t s = 0; s < n; ++s) {
      fill(a, s, std::span<double>(out).subspan((a * n + s) * bm_dim_, bm_dim_));
    }
  }
  return out;
}

void write_grid_dump(const BrownianGrid& grid, std::ostream& out) {
  out.write("BGRD", 4);
  put_le<std::uint32_t>(out, kGridDumpVersion);
  put_le<std::uint64_t>(out, grid.particles());
  put_le<std::uint64_t>(out, grid.bm_dim());
  put_le<std::uint64_t>(out, grid.steps());
  put_le<double>(out, grid.delta());
  put_le<std::uint64_t>(out, grid.seed());
  for (double v : grid.materialize()) put_le<double>(out, v);
}

GridDump read_grid_dump(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "BGRD") throw GridError("not a BGRD grid dump");
  GridDump d;
  d.version = get_le<std::uint32_t>(in);
  if (d.version != kGridDumpVersion) throw GridError("unsupported grid dump version");
  d.particles = get_le<std::uint64_t>(in);
  d.bm_dim = get_le<std::uint64_t>(in);
  d.steps = get_le<std::uint64_t>(in);
  d.delta = get_le<double>(in);
  d.seed = get_le<std::uint64_t>(in);
  d.increments.resize(d.particles * d.bm_dim * d.steps);
  for (auto& v : d.increments) v = get_le<double>(in);
  return d;
}

}  // namespace mvnsdde
