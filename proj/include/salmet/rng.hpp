#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace salmet {

// splitmix64 finalizer (Steele/Lea/Flood; Vigna's public-domain constants).
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from (master, tag, indices).
// The mixing function is frozen: a regression vector in the test suite pins
// the exact output so the mapping stays stable across releases.
inline std::uint64_t derive_stream_seed(std::uint64_t master, std::string_view tag,
                                        std::span<const std::uint64_t> indices = {}) {
    std::uint64_t h = mix64(master);
    for (unsigned char b : tag) h = mix64(h ^ b);
    for (std::uint64_t idx : indices) h = mix64(h ^ idx);
    return h;
}

inline std::uint64_t derive_stream_seed(std::uint64_t master, std::string_view tag,
                                        std::initializer_list<std::uint64_t> indices) {
    return derive_stream_seed(master, tag, std::span<const std::uint64_t>(indices.begin(), indices.size()));
}

// Counter-based splitmix64 stream. Cheap to construct, so every parallel work
// item gets its own stream via derive_stream_seed and scheduling order can
// never change a result.
class StreamRng {
public:
    explicit StreamRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1), 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n). Multiply-shift map; bias is O(n / 2^64).
    std::uint64_t next_below(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller (fixed algorithm, unlike
    // std::normal_distribution which is implementation-defined).
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        while (u1 <= 0.0) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// In-place Fisher-Yates shuffle.
template <typename T>
void shuffle(std::vector<T>& v, StreamRng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

// Random permutation of 0..n-1.
inline std::vector<int> random_permutation(int n, StreamRng& rng) {
    std::vector<int> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    shuffle(p, rng);
    return p;
}

// k distinct values from 0..n-1, in draw order (partial Fisher-Yates).
inline std::vector<int> sample_without_replacement(int n, int k, StreamRng& rng) {
    std::vector<int> pool(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        std::size_t j = static_cast<std::size_t>(i) +
                        static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(n - i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
        out.push_back(pool[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace salmet
