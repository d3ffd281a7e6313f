#ifndef AMEM_RNG_HPP
#define AMEM_RNG_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace amem {

/// Philox-4x32-10 counter-based generator. A stream is a pure function of
/// (seed, purpose tag, index); streams never share state, so replications can
/// be generated in any order or concurrently with identical results.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view tag, std::uint64_t index);

  /// Raw 64-bit draw.
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lower, double upper) { return lower + (upper - lower) * uniform(); }
  /// Standard normal (Box-Muller).
  double normal();

  /// One Philox block for the given key and counter.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 2> key, std::array<std::uint32_t, 4> counter);

 private:
  std::array<std::uint32_t, 2> key_{};
  std::array<std::uint32_t, 4> counter_{};
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  std::optional<double> spare_normal_;
};

}  // namespace amem

#endif  // AMEM_RNG_HPP
