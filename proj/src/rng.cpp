#include "pbp/rng.hpp"

namespace pbp {

std::uint64_t SplitMix64::next() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31u);
}

double SplitMix64::uniform01() {
    return static_cast<double>(next() >> 11u) * 0x1.0p-53;
}

double SplitMix64::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
    // Reject the low (2^64 mod n) values so the modulo is unbiased.
    const std::uint64_t threshold = (0 - n) % n;
    std::uint64_t r = next();
    while (r < threshold) {
        r = next();
    }
    return r % n;
}

SplitMix64 substream(std::uint64_t seed, Stream stream) {
    SplitMix64 mixer(seed ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ull));
    return SplitMix64(mixer.next());
}

}  // namespace pbp
