#pragma once

#include <cstdint>

namespace crw {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based stream: draw k of trial j is a pure function of
/// (master seed, j, k), so trials can run in any order or thread.
class TrialStream {
public:
    TrialStream(std::uint64_t seed, std::uint64_t trial) : key_(mix64(seed ^ mix64(trial + 0x632be59bd9b4e019ULL))) {}

    std::uint64_t next() { return mix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace crw
