#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace ttsenkf {

/// Purpose tags. Each tag selects an independent family of streams.
enum class Stream : std::uint64_t {
    Init = 1,
    TruthSlow,
    TruthFast,
    TruthMeasurement,
    Slow,
    Fast,
    Observation,
    ObservationFast,
    Resample,
    Jitter,
    PredictSlow,
    PredictFast,
    Sweep,
};

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

/// SplitMix64 generator, usable with <random> distributions.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double normal() { return normal_(*this); }
    double uniform() { return uniform_(*this); }

private:
    std::uint64_t state_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

/// Counter-based addressing: the draws for (seed, tag, step, member) never
/// depend on how many other streams were consumed, or in which order.
struct StreamKey {
    std::uint64_t seed = 0;
    Stream tag = Stream::Init;
    std::uint64_t step = 0;

    Rng member(std::uint64_t i) const {
        std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(tag));
        h = hash_combine(h, step);
        return Rng(hash_combine(h, i));
    }
};

inline StreamKey stream_key(std::uint64_t seed, Stream tag, std::uint64_t step) {
    return StreamKey{seed, tag, step};
}

}  // namespace ttsenkf
