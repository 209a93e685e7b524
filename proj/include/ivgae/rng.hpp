#pragma once

#include <cstdint>
#include <initializer_list>

namespace ivgae {

// Deterministic, splittable generator.
//
// The stream is SplitMix64: state advances by the golden-ratio increment and
// each output is the SplitMix finalizer of the state. A child stream is keyed
// by hashing the parent's seed together with a tag tuple, e.g.
// (purpose, epoch, step); children never consume the parent's state, so the
// order in which sub-streams are created does not matter.
//
// Normals use Box-Muller on two uniforms (no cached second variate), which
// keeps streams identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p);
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Independent child stream for the given tags.
  Rng split(std::initializer_list<std::uint64_t> tags) const;

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
};

/// SplitMix64 finalizer; exposed for hashing tags and fingerprints.
std::uint64_t mix64(std::uint64_t x);

// Purpose tags for Rng::split, one per consumer so streams never collide.
namespace stream {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrainStep = 2;
inline constexpr std::uint64_t kEvalNegatives = 3;
inline constexpr std::uint64_t kSynth = 4;
inline constexpr std::uint64_t kSuggest = 5;
inline constexpr std::uint64_t kCandidates = 6;
}  // namespace stream

}  // namespace ivgae
