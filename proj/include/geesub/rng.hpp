#pragma once

#include <cstdint>
#include <random>

namespace geesub::rng {

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Independent child seed for a named sub-stream of `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Counter-based uniform in [0, 1): a pure function of (key, counter), so the
/// value for subject i never depends on how other subjects were visited.
double uniform_at(std::uint64_t key, std::uint64_t counter);

// Sequential engine for data generation.
using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed) { return Engine(mix64(seed)); }

// Stream tags for derive_seed, fixed so runs stay reproducible.
inline constexpr std::uint64_t kStreamCovariates = 0x636f76;
inline constexpr std::uint64_t kStreamResponses = 0x726573;
inline constexpr std::uint64_t kStreamPilotDraw = 0x70696c;
inline constexpr std::uint64_t kStreamSecondDraw = 0x736563;
inline constexpr std::uint64_t kStreamUniformDraw = 0x756e69;

}  // namespace geesub::rng
