#pragma once

#include <cstdint>
#include <limits>

namespace costco {

/// Counter-based 64-bit generator. Output k of stream (seed, id) is
/// mix(key + k * golden), where key is derived from (seed, id) with the same
/// finalizer, so independent streams are cheap to derive and replay.
/// Satisfies UniformRandomBitGenerator; combine with <random> distributions.
class CounterRng {
public:
    using result_type = std::uint64_t;

    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(mix(seed) ^ (stream * kGolden + 0x632be59bd9b4e019ULL))) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() { return mix(key_ + (++counter_) * kGolden); }

    /// Child stream, e.g. one per replica or per restart.
    CounterRng derive(std::uint64_t stream) const { return CounterRng(key_, stream); }

    std::uint64_t counter() const { return counter_; }

private:
    static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

    // splitmix64 finalizer
    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace costco
