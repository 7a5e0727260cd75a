#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace upca {

// Self-contained random machinery: every stochastic piece of the project
// draws from these generators, so results are reproducible across
// compilers and standard libraries.

constexpr std::uint64_t kGolden64 = 0x9e3779b97f4a7c15ULL;

/// splitmix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

/// Derived stream seed. For a fixed master the map index -> seed is
/// injective: index*kGolden64+1 is a bijection (odd multiplier), and so is
/// mix64, hence distinct indices can never collide.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return mix64(master + kGolden64) ^ mix64(index * kGolden64 + 1);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                    std::uint64_t index) {
    return derive_seed(derive_seed(master, tag), index);
}

/// Injective packing of grid-cell coordinates (each < 2^16) into one index.
inline std::uint64_t encode_cell(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                                 std::uint64_t d) {
    if (a >= 0x10000 || b >= 0x10000 || c >= 0x10000 || d >= 0x10000)
        throw std::invalid_argument("encode_cell: coordinate exceeds 16 bits");
    return (a << 48) | (b << 32) | (c << 16) | d;
}

/// xoshiro256++ with splitmix64 seeding and a Box-Muller Gaussian.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& word : state_) {
            sm += kGolden64;
            word = mix64(sm);
        }
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1).
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in (0, 1]; safe as a log argument.
    double next_open_double() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Standard normal via Box-Muller; draws come in cached pairs.
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = next_open_double();
        const double u2 = next_double();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        have_cached_ = true;
        return radius * std::cos(angle);
    }

    /// Unbiased uniform draw from {0, ..., n-1}.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below(0)");
        const std::uint64_t limit = ~std::uint64_t(0) - ~std::uint64_t(0) % n;
        std::uint64_t draw;
        do {
            draw = next_u64();
        } while (draw >= limit);
        return draw % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i)
            std::swap(items[i - 1], items[below(i)]);
    }

    /// First k entries of a partial Fisher-Yates pass over {0, ..., m-1}.
    std::vector<int> sample_without_replacement(int m, int k) {
        if (k < 0 || k > m) throw std::invalid_argument("sample_without_replacement");
        std::vector<int> pool(m);
        for (int i = 0; i < m; ++i) pool[i] = i;
        for (int i = 0; i < k; ++i)
            std::swap(pool[i], pool[i + int(below(std::uint64_t(m - i)))]);
        pool.resize(k);
        return pool;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4] = {};
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace upca
