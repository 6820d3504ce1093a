#ifndef LSGD_RNG_HPP
#define LSGD_RNG_HPP

// Counter-based random streams. A stream is addressed by a seed and a tuple
// of integer keys (trial, machine, time step, purpose...), so the numbers a
// run consumes never depend on scheduling or on how many other streams exist.

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>

#include "lsgd/numerics.hpp"

namespace lsgd {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline constexpr std::uint64_t mix_keys(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x3c6ef372fe94f82bULL));
    return h;
}

/// Purpose tags keep streams for different roles apart.
enum class StreamTag : std::uint64_t {
    Oracle = 1,
    ServerBatch,
    LocalBatch,
    ClientChoice,
    OutputChoice,
    Direction,
    Adversary,
    Instance,
    Truth,
    Mean,
    Center,
    Trial,
    Test,
};

inline constexpr std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

/// SplitMix64 generator; satisfies UniformRandomBitGenerator.
class Stream {
public:
    using result_type = std::uint64_t;

    explicit Stream(std::uint64_t state) : state_(state) {}
    Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) : state_(mix_keys(seed, keys)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double normal() {
        std::normal_distribution<double> n(0.0, 1.0);
        return n(*this);
    }

    Vec normal_vec(Eigen::Index d, double stddev = 1.0) {
        std::normal_distribution<double> n(0.0, stddev);
        Vec v(d);
        for (Eigen::Index i = 0; i < d; ++i) v(i) = n(*this);
        return v;
    }

    std::size_t below(std::size_t n) {
        std::uniform_int_distribution<std::size_t> u(0, n - 1);
        return u(*this);
    }

private:
    std::uint64_t state_;
};

}  // namespace lsgd

#endif
