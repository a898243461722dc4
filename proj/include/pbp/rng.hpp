#pragma once

#include <cstdint>

namespace pbp {

/// SplitMix64 (Steele, Lea & Flood). The whole state is one 64-bit word:
///
///   state += 0x9e3779b97f4a7c15
///   z = state
///   z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9
///   z = (z ^ (z >> 27)) * 0x94d049bb133111eb
///   return z ^ (z >> 31)
///
/// Doubles take the top 53 bits; bounded integers use rejection so every
/// implementation that follows these rules reproduces the same scenes.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next();

    /// Uniform in [0, 1).
    double uniform01();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_;
};

/// Independent draw sequences derived from one scene seed.
enum class Stream : std::uint64_t {
    SceneLayout = 1,
    TargetSwitch = 2,
    ObstacleActivation = 3,
    Benchmark = 4,
    Jitter = 5,
};

/// substream(seed, s) = SplitMix64(SplitMix64(seed ^ (s * 0xd1b54a32d192ed03)).next())
SplitMix64 substream(std::uint64_t seed, Stream stream);

}  // namespace pbp
