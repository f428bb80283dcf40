#pragma once

#include "cpadmm/tensor.hpp"

#include <cstdint>
#include <random>

namespace cpadmm {

using Rng = std::mt19937_64;

/// Mixes a base seed with a stream label (splitmix64 finalizer), so that
/// restarts and realizations get decorrelated but reproducible seeds.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Uniform draw on [0, 1) with 53 random bits.
[[nodiscard]] inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// rows x cols matrix with i.i.d. U[0,1) entries, filled row by row.
[[nodiscard]] Matrix uniform_matrix(Index rows, Index cols, Rng& rng);

/// rows x cols matrix with i.i.d. N(0, stddev^2) entries, filled row by row.
[[nodiscard]] Matrix gaussian_matrix(Index rows, Index cols, double stddev,
                                     Rng& rng);

}  // namespace cpadmm
