#include <doctest.h>

#include <cmath>

#include "sortilab/seed_game.hpp"

using namespace sortilab::seed_game;

TEST_CASE("no corruption, every leader honest") {
    Config c;
    c.h = 1;
    c.rounds = 200;
    const auto r = play(c);
    CHECK(r.honest_leaders == 200);
    CHECK(r.frequency == 1);
    CHECK(r.corrupted == 0);
}

TEST_CASE("honest fraction must exceed two thirds") {
    Config c;
    c.h = 0.6;
    CHECK_THROWS_AS(play(c), std::invalid_argument);
}

TEST_CASE("the limit game matches its stationary law") {
    const double s = stationary_honest_frequency(0.8);
    CHECK(s == doctest::Approx(0.75248).epsilon(1e-4));
    Config c;
    c.population = 0;
    c.rounds = 40000;
    const auto r = play(c);
    const double sd = std::sqrt(s * (1 - s) / static_cast<double>(r.rounds));
    // the chain is positively correlated; allow 6 binomial sd
    CHECK(std::abs(r.frequency - s) < 6 * sd);
}

TEST_CASE("population game is deterministic per seed") {
    Config c;
    c.rounds = 300;
    const auto a = play(c), b = play(c);
    CHECK(a.honest_leaders == b.honest_leaders);
    CHECK(a.options == b.options);
    CHECK(a.corrupted == 200);
    c.seed = 2;
    CHECK(play(c).options != a.options);
}
