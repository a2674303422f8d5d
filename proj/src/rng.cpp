#include "patchflow/rng.hpp"

namespace patchflow {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RandomStream::RandomStream(std::uint64_t seed, std::string_view component,
                           std::string_view purpose) {
  std::uint64_t k = mix64(seed + kGolden);
  k = mix64(k ^ fnv1a64(component));
  k = mix64(k ^ (fnv1a64(purpose) + kGolden));
  key_ = k;
}

std::uint64_t RandomStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * kGolden);
}

double RandomStream::next_unit() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_unit();
}

RandomStream RandomStream::substream(std::uint64_t index) const {
  return RandomStream(mix64(key_ ^ mix64(index + kGolden)));
}

}  // namespace patchflow
