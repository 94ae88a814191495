#include "doctest.h"
#include "helpers.hpp"

#include "streamdiar/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <vector>

using namespace streamdiar;

TEST_SUITE("rng") {

TEST_CASE("same seed reproduces the same sequence") {
    Rng a(12345);
    Rng b(12345);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c(12345);
    Rng d(12345);
    for (int i = 0; i < 1000; ++i) {
        // normal() uses internal spare state; it must reproduce too
        CHECK(c.normal() == d.normal());
        CHECK(c.uniform() == d.uniform());
    }
}

TEST_CASE("different seeds diverge") {
    Rng a(1);
    Rng b(2);
    int same = 0;
    for (int i = 0; i < 100; ++i) {
        if (a.next_u64() == b.next_u64()) ++same;
    }
    CHECK(same == 0);
}

TEST_CASE("derive gives independent streams") {
    // Streams derived from the same base seed must not collide for distinct
    // stream ids, and derived streams must differ from the base itself.
    std::set<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 1000; ++s) seeds.insert(Rng::derive(777, s));
    CHECK(seeds.size() == 1000);
    CHECK(Rng::derive(777, 0) != 777);
    CHECK(Rng::derive(777, 1) != Rng::derive(778, 1));

    // Consuming one stream never shifts another: interleaving draws from one
    // derived generator does not change what a second produces.
    Rng lone(Rng::derive(42, 7));
    std::vector<std::uint64_t> expect;
    for (int i = 0; i < 50; ++i) expect.push_back(lone.next_u64());

    Rng other(Rng::derive(42, 8));
    Rng subject(Rng::derive(42, 7));
    for (int i = 0; i < 50; ++i) {
        (void)other.next_u64();
        CHECK(subject.next_u64() == expect[static_cast<std::size_t>(i)]);
    }
}

TEST_CASE("uniform stays in range and covers it") {
    Rng rng(9);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 10000; ++i) {
        double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo < 0.01);
    CHECK(hi > 0.99);

    for (int i = 0; i < 1000; ++i) {
        double u = rng.uniform(-3.0, 5.0);
        CHECK(u >= -3.0);
        CHECK(u < 5.0);
    }
}

TEST_CASE("bounded is in range and roughly uniform") {
    Rng rng(11);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 70000; ++i) {
        std::uint64_t v = rng.bounded(7);
        CHECK(v < 7);
        ++counts[static_cast<std::size_t>(v)];
    }
    // each bucket expects 10000; allow 5% slack
    for (int c : counts) {
        CHECK(c > 9500);
        CHECK(c < 10500);
    }
}

TEST_CASE("normal has near-zero mean and unit variance") {
    Rng rng(13);
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sumsq += x * x;
    }
    double mean = sum / n;
    double var = sumsq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("geometric_length has the requested mean and minimum 1") {
    Rng rng(17);
    for (double target : {1.0, 2.5, 10.0, 40.0}) {
        const int n = 50000;
        double sum = 0.0;
        std::int64_t lo = 1 << 30;
        for (int i = 0; i < n; ++i) {
            std::int64_t len = rng.geometric_length(target);
            CHECK(len >= 1);
            lo = std::min(lo, len);
            sum += static_cast<double>(len);
        }
        CHECK(lo == 1); // support starts at 1
        double mean = sum / n;
        CHECK(mean == doctest::Approx(target).epsilon(0.05));
    }
}

TEST_CASE("shuffle produces a permutation and all orders of three elements") {
    Rng rng(19);
    std::vector<int> v(100);
    std::iota(v.begin(), v.end(), 0);
    rng.shuffle(v);
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 100; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    CHECK(v != sorted); // 100!-to-1 against identity

    // All 6 orders of a 3-element vector appear with roughly equal frequency.
    std::map<std::vector<int>, int> freq;
    for (int trial = 0; trial < 6000; ++trial) {
        std::vector<int> w = {0, 1, 2};
        rng.shuffle(w);
        ++freq[w];
    }
    CHECK(freq.size() == 6);
    for (const auto& [order, count] : freq) {
        CHECK(count > 800);
        CHECK(count < 1200);
    }
}

} // TEST_SUITE
