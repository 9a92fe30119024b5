#include <doctest.h>

#include <cmath>

#include <algorithm>
#include <optional>

#include "sortilab/report.hpp"
#include "sortilab/simnet.hpp"

using namespace sortilab;
using namespace sortilab::simnet;

namespace {

SimConfig base(Variant v, const char* adversary, Round rounds, std::uint64_t seed = 1) {
    SimConfig c;
    c.variant = v;
    c.adversary = adversary;
    c.rounds = rounds;
    c.seed = seed;
    return c;
}

// Every honest user holds the same first R blocks; some may already be further on.
bool converged(const Trace& t) {
    const std::size_t R = t.config.rounds;
    std::optional<std::vector<std::string>> ref;
    for (std::size_t u = 0; u < t.chains.size(); ++u) {
        if (t.malicious[u]) continue;
        if (t.chains[u].size() < R) return false;
        std::vector<std::string> head(t.chains[u].begin(), t.chains[u].begin() + static_cast<std::ptrdiff_t>(R));
        if (ref && *ref != head) return false;
        ref = std::move(head);
    }
    return true;
}

}  // namespace

TEST_CASE("honest runs produce R blocks with no fork") {
    for (Variant v : {Variant::Alg1, Variant::Alg2}) {
        CAPTURE(to_string(v));
        Trace t = simulate(base(v, "honest", 12));
        CHECK(t.completed);
        CHECK(t.rounds.size() == 12);
        CHECK(t.counters.forks == 0);
        CHECK(converged(t));
        for (const auto& r : t.rounds) {
            CHECK(r.distinct == 1);
            CHECK(r.t_first >= r.t_start);
        }
        CHECK(report::exit_status(report::summarize(t)) == 0);
    }
}

TEST_CASE("same seed, same trace") {
    for (Variant v : {Variant::Alg1, Variant::Alg2}) {
        auto a = simulate(base(v, "equivocate", 6, 9));
        auto b = simulate(base(v, "equivocate", 6, 9));
        CHECK(report::to_jsonl(a, report::summarize(a)) == report::to_jsonl(b, report::summarize(b)));
        auto c = simulate(base(v, "equivocate", 6, 10));
        CHECK(report::to_jsonl(a, report::summarize(a)) != report::to_jsonl(c, report::summarize(c)));
    }
}

TEST_CASE("corruption budget is floor((1-h) N)") {
    SimConfig c = base(Variant::Alg1, "saturate", 2);
    CHECK(c.budget() == 4);
    c.h = 0.9;
    CHECK(c.budget() == 2);
    Trace t = simulate(c);
    CHECK(std::count(t.malicious.begin(), t.malicious.end(), true) == 2);
}

TEST_CASE("inconsistent configurations are rejected") {
    SimConfig c = base(Variant::Alg1, "honest", 2);
    c.t_H = 25;
    CHECK_THROWS_AS(simulate(c), std::invalid_argument);
    c = base(Variant::Alg1, "honest", 2);
    c.m = 10;
    CHECK_THROWS_AS(simulate(c), std::invalid_argument);
    c = base(Variant::Alg2, "honest", 2);
    c.weighted = true;
    CHECK_THROWS_AS(simulate(c), std::invalid_argument);
    CHECK_THROWS_AS(make_strategy("nope"), std::invalid_argument);
}

TEST_CASE("saturated honest-leader rounds take 6 lambda + Lambda in alg1") {
    SimConfig c = base(Variant::Alg1, "saturate", 8);
    c.initial_malicious = 0;
    Trace t = simulate(c);
    for (const auto& r : t.rounds) {
        CHECK(r.leader_honest);
        CHECK(r.t_first - r.t_start == doctest::Approx(12.0));
        CHECK(r.ending_step == 5);
    }
}

TEST_CASE("weighted committees run in alg1") {
    SimConfig c = base(Variant::Alg1, "equivocate", 6);
    c.weighted = true;
    c.balances = std::vector<Money>(20, 0);
    for (UserId u = 0; u < 20; ++u) c.balances[u] = 500 + 100 * u;
    c.n = 20;
    c.n1 = 20;
    Trace t = simulate(c);
    CHECK(t.completed);
    CHECK(t.counters.forks == 0);
    CHECK(converged(t));
}

TEST_CASE("a physical partition stalls the minority side and heals") {
    SimConfig c = base(Variant::Alg2, "honest", 8);
    c.initial_malicious = 0;
    PartitionWindow w;
    w.from = Time(5);
    w.to = Time(60);
    w.component.assign(20, 0);
    for (UserId u = 14; u < 20; ++u) w.component[u] = 1;  // 6 users cannot reach t_H = 14 alone
    c.partitions.push_back(w);
    Trace t = simulate(c);
    CHECK(t.completed);
    REQUIRE(t.rounds.size() == 8);
    CHECK(t.rounds[2].t_last >= 60);  // the minority learns round 2 only after the heal
    CHECK(t.counters.forks == 0);
    CHECK(converged(t));
}

TEST_CASE("engineered fork lasts one round and heals") {
    Trace t = simulate(base(Variant::Alg2, "fork_partition", 6));
    REQUIRE(t.rounds.size() == 6);
    for (const auto& r : t.rounds) {
        CAPTURE(r.round);
        CHECK(r.distinct == (r.round == 2 ? 2u : 1u));
    }
    CHECK(converged(t));
    CHECK(t.counters.switches > 0);
    CHECK(report::exit_status(report::summarize(t)) == 0);
    CHECK_THROWS_AS(simulate(base(Variant::Alg1, "fork_partition", 3)), std::invalid_argument);
}

TEST_CASE("post-halt corruption never certifies a second block") {
    for (Variant v : {Variant::Alg1, Variant::Alg2}) {
        Trace t = simulate(base(v, "post_halt_corrupt", 8));
        CHECK(t.counters.corruptions == 4);
        CHECK(t.counters.erased_key_refusals > 0);
        CHECK(t.counters.forged_certificates == 0);
        CHECK(t.counters.forks == 0);
    }
}

TEST_CASE("cascaded keys carry alg2 past mu") {
    SimConfig c = base(Variant::Alg2, "equivocate", 8);
    c.mu = 4;
    Trace t = simulate(c);
    CHECK(t.completed);
    CHECK(t.counters.forks == 0);
    CHECK(converged(t));
    bool beyond = false;
    for (const auto& r : t.rounds) beyond |= r.ending_step > c.mu;
    CHECK(beyond);
}
