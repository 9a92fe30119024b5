#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "sortilab/crypto.hpp"
#include "sortilab/rng.hpp"

// Stand-alone synchronous-network protocols: binary BA with a common coin,
// two-step graded consensus, and their composition.
namespace sortilab::ba {

using Player = std::uint32_t;
using Value = std::uint64_t;

// What a malicious sender puts on one link in one tick.
enum class Emit : std::uint8_t { None, Zero, One, Improper };

struct TallyView {
    std::uint32_t zeros = 0;
    std::uint32_t ones = 0;
    std::uint32_t silent = 0;  // no proper message; zeros + ones + silent = n
};

struct BbaTick {
    std::uint32_t n = 0;
    std::uint32_t t = 0;
    std::uint32_t loop = 0;  // gamma, from 0
    int step = 1;            // 1, 2 or 3 inside the loop
    const std::vector<bool>* corrupted = nullptr;
    // Bit each honest player puts on the wire this tick (halted players
    // included through their starred bit). Empty for corrupted players.
    std::vector<std::optional<std::uint8_t>> honest_sent;
    // H(SIG_j(r, gamma)) for every player; meaningful in step 3. The adversary
    // sees honest ones because it is rushing.
    std::vector<Digest256> coin_hash;
    std::vector<bool> honest_halted;
};

// emit[sender][recipient]; only rows of corrupted senders are read.
using EmitMatrix = std::vector<std::vector<Emit>>;

struct BbaAdversary {
    std::vector<bool> corrupted;
    std::function<void(const BbaTick&, EmitMatrix&)> strategy;
};

struct BbaOutcome {
    std::vector<std::optional<std::uint8_t>> out;  // honest outputs
    std::vector<std::uint32_t> halt_loop;          // loop in which each honest player halted
    std::uint32_t loops = 0;                       // loops started
    bool exceeded = false;
    // For each started loop: were all honest players already agreed at its start,
    // and were they agreed at its end (running bits and halted outputs).
    std::vector<bool> agreed_at_start;
    std::vector<bool> agreed_at_end;
    std::vector<std::vector<TallyView>> tallies;  // [tick][player], honest only
};

struct BbaOptions {
    std::uint32_t max_loops = 60;
    bool record_tallies = false;
};

BbaOutcome run_bba_star(std::uint32_t n, std::uint32_t t, const std::vector<std::uint8_t>& bits,
                        const BbaAdversary& adv, const Digest256& common_r, BbaOptions opt = {});

struct GcEmit {
    bool send = false;
    bool proper = true;
    Value value = 0;
};

struct GcTick {
    std::uint32_t n = 0;
    std::uint32_t t = 0;
    int step = 2;  // 2 or 3
    const std::vector<bool>* corrupted = nullptr;
    std::vector<std::optional<Value>> honest_sent;
};

using GcMatrix = std::vector<std::vector<GcEmit>>;

struct GcAdversary {
    std::vector<bool> corrupted;
    std::function<void(const GcTick&, GcMatrix&)> strategy;
};

struct Graded {
    std::optional<Value> value;  // nullopt is bottom
    int grade = 0;
};

std::vector<Graded> run_gc(std::uint32_t n, std::uint32_t t, const std::vector<Value>& values, const GcAdversary& adv);

struct BaAdversary {
    std::vector<bool> corrupted;
    std::function<void(const GcTick&, GcMatrix&)> gc;
    std::function<void(const BbaTick&, EmitMatrix&)> bba;
};

struct BaOutcome {
    std::vector<Graded> graded;
    BbaOutcome bba;
    std::vector<std::optional<Value>> out;  // honest outputs; nullopt is bottom
};

BaOutcome run_ba_star(std::uint32_t n, std::uint32_t t, const std::vector<Value>& values, const BaAdversary& adv,
                      const Digest256& common_r, BbaOptions opt = {});

// Reusable adversary behaviours.
std::function<void(const BbaTick&, EmitMatrix&)> bba_silent();
std::function<void(const BbaTick&, EmitMatrix&)> bba_random(Rng& rng);
// Rushing splitter: pushes alternate honest players toward opposite bits and
// steers the coin of those left to it away from the forced bit.
std::function<void(const BbaTick&, EmitMatrix&)> bba_splitter();
std::function<void(const GcTick&, GcMatrix&)> gc_silent();
std::function<void(const GcTick&, GcMatrix&)> gc_random(Rng& rng, Value domain);
std::function<void(const GcTick&, GcMatrix&)> gc_equivocator(Value a, Value b);

// Agreement and consistency checks over honest outputs.
bool agreement(const std::vector<bool>& corrupted, const std::vector<std::optional<std::uint8_t>>& out);
bool graded_properties(const std::vector<bool>& corrupted, const std::vector<Value>& inputs,
                       const std::vector<Graded>& g);

// --- property campaigns -----------------------------------------------------------

struct CampaignStats {
    std::uint64_t trials = 0;
    std::uint64_t ba_agreement_violations = 0;
    std::uint64_t ba_consistency_violations = 0;
    std::uint64_t bba_agreement_violations = 0;
    std::uint64_t bba_consistency_violations = 0;
    std::uint64_t graded_violations = 0;
    std::uint64_t exceeded = 0;  // runs that hit the loop cap
    std::uint64_t loops_total = 0;
    std::uint32_t loops_max = 0;
    // Loops that start with the honest bits split, and how many of them end agreed.
    std::uint64_t split_loops = 0;
    std::uint64_t split_loops_agreed = 0;

    std::uint64_t violations() const {
        return ba_agreement_violations + ba_consistency_violations + bba_agreement_violations +
               bba_consistency_violations + graded_violations + exceeded;
    }
    void merge(const CampaignStats& o);
};

// Randomized: each trial draws a corruption set of size t, inputs, and a
// rushing adversary (random, splitter, silent, equivocating), and runs both
// BA* and a bare BBA*.
CampaignStats random_campaign(std::uint32_t n, std::uint32_t t, std::uint64_t trials, std::uint64_t seed);

// Every binary input vector and every corruption set of size t, against the
// silent, splitter and a few random adversaries.
CampaignStats exhaustive_campaign(std::uint32_t n, std::uint32_t t, std::uint64_t seed = 1);

// Splitter only, from inputs it can keep split: the loop-progress measurement.
CampaignStats progress_campaign(std::uint32_t n, std::uint32_t t, std::uint64_t trials, std::uint64_t seed);

}  // namespace sortilab::ba
