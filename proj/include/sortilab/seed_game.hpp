#pragma once

#include <cstdint>
#include <map>

#include "sortilab/crypto.hpp"

// The adversary's seed-steering game: whenever the first users of the
// step-1 ordering are corrupted, each of them (or an empty block) yields a
// different next seed, and the adversary keeps the seed whose next ordering
// starts with the longest corrupted run.
namespace sortilab::seed_game {

struct Config {
    double h = 0.8;
    std::uint64_t rounds = 10'000;
    std::uint64_t seed = 1;
    // Users ordered by real credential hashes. 0 switches to the
    // large-population limit, where the corrupted run is geometric.
    std::uint32_t population = 1000;
    Scheme scheme = Scheme::Prf;
};

struct Result {
    std::uint64_t rounds = 0;
    std::uint64_t honest_leaders = 0;
    double frequency = 0;
    double sigma = 0;  // binomial standard deviation of the frequency at p_h
    double p_h = 0;
    std::uint32_t corrupted = 0;  // population mode only
    std::uint64_t longest_run = 0;
    std::map<std::uint64_t, std::uint64_t> options;  // number of seed options -> rounds
};

// Throws std::invalid_argument unless 2/3 < h <= 1.
Result play(const Config& cfg);

// Long-run honest-leader frequency of the game in the large-population limit,
// from the stationary law of the option count (truncated at max_options).
double stationary_honest_frequency(double h, int max_options = 80);

}  // namespace sortilab::seed_game
