#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace mlbn {

/// Philox4x64-10 counter-based bijection (Salmon et al., SC'11).
///
/// Stateless: the same (counter, key) always maps to the same four words,
/// which is what makes per-particle streams reproducible regardless of the
/// order in which worker threads consume them.
struct Philox4x64 {
  using Counter = std::array<std::uint64_t, 4>;
  using Key = std::array<std::uint64_t, 2>;

  static Counter block(Counter counter, Key key) noexcept;
};

/// SplitMix64 finalizer; used to derive child stream ids.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// A reproducible stream of random numbers keyed by (seed, stream_id).
///
/// Distinct pairs give independent streams; identical pairs give identical
/// sequences. Gaussian variates come from Box-Muller on open-interval
/// uniforms.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) noexcept;

  std::uint64_t seed() const noexcept { return key_[0]; }
  std::uint64_t stream_id() const noexcept { return key_[1]; }

  std::uint64_t next_u64() noexcept;
  // Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double normal() noexcept;
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Independent stream derived from this stream's key and `tag`. Does not
  /// consume from this stream.
  RngStream child(std::uint64_t tag) const noexcept;
  RngStream child(std::initializer_list<std::uint64_t> tags) const noexcept;

 private:
  Philox4x64::Key key_;
  std::uint64_t block_index_ = 0;
  Philox4x64::Counter buffer_{};
  int buffer_pos_ = 4;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mlbn
