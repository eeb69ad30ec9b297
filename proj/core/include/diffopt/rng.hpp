#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "diffopt/types.hpp"

namespace diffopt {

/// Seeded random stream used for every stochastic draw in the library.
///
/// Normal draws use a fresh std::normal_distribution per call so that no
/// cached variate survives between calls; the engine state alone therefore
/// captures the full stream position and can be checkpointed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream for (seed, stream, index), e.g. one per evaluation
  /// task. Streams with different arguments do not share state.
  static Rng derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

  double normal();
  double uniform();
  /// Uniform integer in the closed range [lo, hi].
  int uniform_int(int lo, int hi);
  /// rows x cols standard normal matrix, filled row by row.
  Matrix normal_matrix(Index rows, Index cols);

  std::string state() const;
  void restore(const std::string& state);

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace diffopt
