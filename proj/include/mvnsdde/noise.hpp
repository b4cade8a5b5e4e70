#pragma once

// Reproducible Brownian increments.
//
// Every base increment is a pure function of (seed, stream id, step,
// component), computed from a Philox4x32-10 block and an inverse-CDF normal
// transform. Nothing is stored: a BrownianGrid is a small descriptor and any
// entry can be evaluated independently, in any order, on any thread.
// Coarsening by k sums k consecutive base increments, so grids at different
// step sizes drawn from one seed share the same Brownian path.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "mvnsdde/errors.hpp"

namespace mvnsdde {

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key) noexcept;

/// Separates independent consumers of one master seed.
enum class StreamDomain : std::uint32_t {
  brownian = 0,
  sample_a = 1,
  sample_b = 2,
};

/// Two independent N(0,1) variates addressed by (seed, domain, stream, index, pair).
/// `pair` selects components 2*pair and 2*pair+1.
std::array<double, 2> counter_normal_pair(std::uint64_t seed, StreamDomain domain,
                                          std::uint64_t stream, std::uint32_t index,
                                          std::uint32_t pair) noexcept;

class BrownianGrid {
 public:
  /// Increments ~ N(0, delta_base) for `particles` streams over [0, horizon].
  /// Throws GridError when horizon / delta_base is not an integer.
  static BrownianGrid generate(std::uint64_t seed, std::size_t particles, std::size_t bm_dim,
                               double delta_base, double horizon);

  /// Sums `factor` consecutive increments. Throws GridError unless factor divides steps().
  BrownianGrid coarsen(std::size_t factor) const;

  /// Particle a draws from stream `ids[a]` instead of stream a.
  BrownianGrid with_stream_ids(std::vector<std::uint64_t> ids) const;

  std::size_t particles() const noexcept { return particles_; }
  std::size_t bm_dim() const noexcept { return bm_dim_; }
  std::size_t steps() const noexcept { return base_steps_ / factor_; }
  double delta() const noexcept { return base_delta_ * static_cast<double>(factor_); }
  double horizon() const noexcept { return horizon_; }
  std::uint64_t seed() const noexcept { return seed_; }
  std::size_t coarsening() const noexcept { return factor_; }
  std::uint64_t stream_id(std::size_t particle) const noexcept {
    return stream_ids_.empty() ? particle : stream_ids_[particle];
  }

  /// Writes the bm_dim() components of increment (particle, step) into `out`.
  void fill(std::size_t particle, std::size_t step, std::span<double> out) const;
  double increment(std::size_t particle, std::size_t step, std::size_t component) const;

  /// All increments, particle-major, step-major, component-minor.
  std::vector<double> materialize() const;

 private:
  BrownianGrid() = default;

  std::uint64_t seed_ = 0;
  std::size_t particles_ = 0;
  std::size_t bm_dim_ = 0;
  double base_delta_ = 0.0;
  std::size_t base_steps_ = 0;
  double horizon_ = 0.0;
  std::size_t factor_ = 1;
  std::vector<std::uint64_t> stream_ids_;
};

/// Contents of a "BGRD" debug dump.
struct GridDump {
  std::uint32_t version = 0;
  std::uint64_t particles = 0;
  std::uint64_t bm_dim = 0;
  std::uint64_t steps = 0;
  double delta = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> increments;
};

inline constexpr std::uint32_t kGridDumpVersion = 1;

/// Binary dump: "BGRD", version u32, particles u64, bm_dim u64, steps u64,
/// delta f64, seed u64, then materialize() as f64. All little-endian.
void write_grid_dump(const BrownianGrid& grid, std::ostream& out);
GridDump read_grid_dump(std::istream& in);

}  // namespace mvnsdde
