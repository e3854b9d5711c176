#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "salmet/rng.hpp"

using namespace salmet;

TEST_CASE("splitmix64 stream matches the reference sequence") {
    StreamRng r(0);
    // first outputs for seed 0, as published for splitmix64
    CHECK(r.next_u64() == 0xe220a8397b1dcdafull);
    CHECK(r.next_u64() == 0x6e789e6aa1b965f4ull);
    CHECK(r.next_u64() == 0x06c45d188009454full);
}

TEST_CASE("derive_stream_seed is deterministic and index-sensitive") {
    const std::uint64_t a = derive_stream_seed(42, "rand-ordering", {7ull, 42ull});
    const std::uint64_t b = derive_stream_seed(42, "rand-ordering", {7ull, 42ull});
    CHECK(a == b);
    CHECK(a != derive_stream_seed(42, "rand-ordering", {7ull, 43ull}));
    CHECK(a != derive_stream_seed(42, "rand-ordering", {8ull, 42ull}));
    CHECK(a != derive_stream_seed(43, "rand-ordering", {7ull, 42ull}));
    CHECK(a != derive_stream_seed(42, "rand-orderingz", {7ull, 42ull}));
}

TEST_CASE("derive_stream_seed regression vectors stay frozen") {
    // Computed once at release; these values must never change, or every
    // seeded run in the wild silently loses reproducibility.
    CHECK(derive_stream_seed(42, "rand-ordering", {7ull, 42ull}) == 0x6a8252a3de8eedecull);
    CHECK(derive_stream_seed(42, "rand-ordering", {7ull, 43ull}) == 0x255d3e7e0c6a24cdull);
    CHECK(derive_stream_seed(0, "") == 0xe220a8397b1dcdafull);
}

TEST_CASE("next_double lies in [0,1) and fills the range") {
    StreamRng r(123);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        const double v = r.next_double();
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1.0);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);
}

TEST_CASE("next_below stays in range and covers small domains") {
    StreamRng r(7);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const std::uint64_t v = r.next_below(5);
        REQUIRE(v < 5);
        seen.insert(v);
    }
    CHECK(seen.size() == 5);
}

TEST_CASE("random_permutation is a bijection") {
    StreamRng r(99);
    std::vector<int> p = random_permutation(257, r);
    std::vector<int> sorted = p;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 257; ++i) REQUIRE(sorted[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("sample_without_replacement yields k distinct in-range ids") {
    StreamRng r(1);
    std::vector<int> s = sample_without_replacement(1024, 100, r);
    REQUIRE(s.size() == 100);
    std::set<int> uniq(s.begin(), s.end());
    CHECK(uniq.size() == 100);
    for (int v : s) {
        REQUIRE(v >= 0);
        REQUIRE(v < 1024);
    }
}

TEST_CASE("gaussian draws have sane moments") {
    StreamRng r(2026);
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double v = r.next_gaussian();
        sum += v;
        sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}
