#pragma once

#include <cstdint>
#include <random>

#include "hubvae/types.hpp"

namespace hubvae {

using Rng = std::mt19937_64;

// Derives a decorrelated seed for a named substream (epoch pools, step noise,
// validation, k-means, ...). splitmix64 finalizer over the mixed words.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t counter = 0);

// Stream tags used throughout training. Values are arbitrary but fixed:
// changing them changes every seeded run.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kPool = 2;
inline constexpr std::uint64_t kStepNoise = 3;
inline constexpr std::uint64_t kHubSample = 4;
inline constexpr std::uint64_t kKmeans = 5;
inline constexpr std::uint64_t kValidation = 6;
inline constexpr std::uint64_t kShuffle = 7;
inline constexpr std::uint64_t kBinarize = 8;
inline constexpr std::uint64_t kSplit = 9;
inline constexpr std::uint64_t kGenerate = 10;
}  // namespace streams

Matrix gaussian_matrix(Index rows, Index cols, Rng& rng);

// Fisher-Yates permutation of 0..n-1.
std::vector<Index> random_permutation(Index n, Rng& rng);

}  // namespace hubvae
