// SPDX-License-Identifier: Apache-2.0
//
// Seeded, replayable noise. Every stochastic draw in the library goes through
// a NoiseSource so tests can freeze or replay it. The transforms from raw
// 64-bit words to uniforms, normals and Gumbels are written out here rather
// than taken from <random> distributions, whose output is
// implementation-defined.
#pragma once

#include <cstdint>
#include <random>

namespace asgn {

/// splitmix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t x);
/// Combines a base seed with a stream counter.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

class NoiseSource {
 public:
  virtual ~NoiseSource() = default;
  /// Uniform in the open interval (0, 1).
  virtual double uniform() = 0;
  virtual double normal() = 0;
  /// Standard Gumbel(0, 1).
  virtual double gumbel() = 0;
};

class SeededNoise final : public NoiseSource {
 public:
  explicit SeededNoise(std::uint64_t seed) : engine_(seed) {}
  double uniform() override;
  double normal() override;
  double gumbel() override;

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Returns zero for every normal and Gumbel draw and 0.5 for uniforms.
/// Used for deterministic evaluation passes.
class ZeroNoise final : public NoiseSource {
 public:
  double uniform() override { return 0.5; }
  double normal() override { return 0.0; }
  double gumbel() override { return 0.0; }
};

}  // namespace asgn
