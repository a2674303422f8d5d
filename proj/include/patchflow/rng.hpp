#pragma once

#include <cstdint>
#include <string_view>

namespace patchflow {

// Counter-based random stream keyed by (seed, component, purpose).
//
// Every draw is a pure function of the key and a counter, so results do not
// depend on the host's standard library distributions or on the order in
// which other components draw. substream() derives an independent stream for
// one indexed item (e.g. one frame of one camera).
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view component, std::string_view purpose);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of resolution.
  double next_unit();
  // Uniform in [lo, hi].
  double uniform(double lo, double hi);

  RandomStream substream(std::uint64_t index) const;

  std::uint64_t draws() const { return counter_; }

 private:
  explicit RandomStream(std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace patchflow
