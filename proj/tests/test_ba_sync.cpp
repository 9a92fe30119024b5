#include <doctest.h>

#include <cmath>

#include "sortilab/ba_sync.hpp"

using namespace sortilab;
using namespace sortilab::ba;

namespace {

std::vector<bool> corrupt_first(std::uint32_t n, std::uint32_t t) {
    std::vector<bool> bad(n, false);
    for (std::uint32_t i = 0; i < t; ++i) bad[i] = true;
    return bad;
}

}  // namespace

TEST_CASE("n must be at least 3t+1") {
    CHECK_THROWS_AS(random_campaign(6, 2, 1, 1), std::invalid_argument);
    CHECK_THROWS_AS(run_bba_star(6, 2, std::vector<std::uint8_t>(6, 0), BbaAdversary{corrupt_first(6, 2), {}},
                                 Digest256{}),
                    std::invalid_argument);
    CHECK_NOTHROW(random_campaign(7, 2, 1, 1));
}

TEST_CASE("unanimous honest bits end in the first loop") {
    for (std::uint8_t b : {0, 1}) {
        auto bad = corrupt_first(7, 2);
        auto o = run_bba_star(7, 2, std::vector<std::uint8_t>(7, b), BbaAdversary{bad, bba_splitter()}, Digest256{});
        for (std::uint32_t i = 2; i < 7; ++i) CHECK(o.out[i] == std::optional<std::uint8_t>(b));
        CHECK(o.loops == 1);
    }
}

TEST_CASE("no adversary: the coin settles split inputs") {
    std::vector<std::uint8_t> bits = {0, 1, 0, 1, 0, 1, 1};
    auto o = run_bba_star(7, 2, bits, BbaAdversary{std::vector<bool>(7, false), {}}, hash(std::string_view("r")));
    CHECK(agreement(std::vector<bool>(7, false), o.out));
    for (auto& x : o.out) CHECK(x.has_value());
}

TEST_CASE("graded consensus grades") {
    auto bad = corrupt_first(7, 2);
    SUBCASE("unanimous honest input gets grade 2") {
        auto g = run_gc(7, 2, std::vector<Value>(7, 9), GcAdversary{bad, gc_equivocator(1, 2)});
        for (std::uint32_t i = 2; i < 7; ++i) {
            CHECK(g[i].grade == 2);
            CHECK(g[i].value == std::optional<Value>(9));
        }
    }
    SUBCASE("equivocation cannot split positive grades") {
        std::vector<Value> in = {0, 0, 1, 1, 1, 2, 2};
        auto g = run_gc(7, 2, in, GcAdversary{bad, gc_equivocator(1, 2)});
        CHECK(graded_properties(bad, in, g));
    }
}

TEST_CASE("exhaustive binary check at n=4, t=1") {
    auto st = exhaustive_campaign(4, 1);
    CHECK(st.trials == 4 * 16 * 5);
    CHECK(st.violations() == 0);
}

TEST_CASE("randomized campaign at n=7, t=2 (short)") {
    auto st = random_campaign(7, 2, 300, 11);
    CHECK(st.trials == 300);
    CHECK(st.violations() == 0);
}

TEST_CASE("thresholds are literal 2t+1, not fractions of n") {
    // n=10, t=1: 2t+1 = 3 zero messages halt, far below 2n/3.
    std::vector<std::uint8_t> bits = {0, 0, 0, 1, 1, 1, 1, 1, 1, 1};
    auto o = run_bba_star(10, 1, bits, BbaAdversary{std::vector<bool>(10, false), {}}, Digest256{});
    for (auto& x : o.out) CHECK(x == std::optional<std::uint8_t>(0));
}

TEST_CASE("splitter loop progress is at least a third") {
    auto st = progress_campaign(7, 2, 2000, 5);
    REQUIRE(st.split_loops > 0);
    const double p = double(st.split_loops_agreed) / double(st.split_loops);
    const double sigma = std::sqrt((1.0 / 3) * (2.0 / 3) / double(st.split_loops));
    CHECK(p >= 1.0 / 3 - 3 * sigma);
    CHECK(st.violations() == 0);
}
