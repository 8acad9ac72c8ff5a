#pragma once

// Counter-based random numbers: every draw is a pure function of
// (key..., draw index), so trajectories reproduce regardless of
// execution order or threading.

#include <cmath>
#include <cstdint>
#include <vector>

namespace sude {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ 0x6a09e667f3bcc909ULL ^ (b * 0x9e3779b97f4a7c15ULL));
}

class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    CounterRng(std::uint64_t seed, std::uint64_t stream)
        : key_(mix_key(seed, stream)) {}

    CounterRng fork(std::uint64_t stream) const {
        return CounterRng(mix_key(key_, stream));
    }

    std::uint64_t next_u64() { return splitmix64(key_ ^ counter_++); }

    // Uniform in (0,1).
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::vector<double> normal_vec(std::size_t n) {
        std::vector<double> v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = next_normal();
        return v;
    }

    // Uniform integer in [lo, hi].
    std::uint64_t next_in(std::uint64_t lo, std::uint64_t hi) {
        std::uint64_t span = hi - lo + 1;
        return lo + next_u64() % span;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace sude
