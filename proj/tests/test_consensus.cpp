#include <doctest.h>

#include <cmath>

#include "sortilab/consensus.hpp"

using namespace sortilab;
using namespace sortilab::consensus;

TEST_CASE("step kinds follow the three-step loop") {
    const Step m = 180, fin = m + 3;
    CHECK(step_kind(1, fin) == StepKind::Propose);
    CHECK(step_kind(4, fin) == StepKind::GcOutput);
    for (Step s = 5; s < fin; ++s) {
        CAPTURE(s);
        const StepKind want = s % 3 == 2 ? StepKind::Fixed0 : s % 3 == 0 ? StepKind::Fixed1 : StepKind::Coin;
        CHECK(step_kind(s, fin) == want);
    }
    CHECK(step_kind(fin, fin) == StepKind::Final);
    CHECK(step_kind(fin, 0) == StepKind::Fixed1);  // no final step in alg2
}

TEST_CASE("alg1 step deadlines are (2s-3) lambda + Lambda") {
    ProtocolParams p;
    p.lambda = Time(3, 2);
    p.Lambda = Time(7);
    CHECK(step_deadline(p, 1) == Time(0));
    for (Step s = 2; s < 30; ++s) CHECK(step_deadline(p, s) == Time(2 * s - 3) * p.lambda + p.Lambda);
}

TEST_CASE("alg2 waits and the cascade inflation") {
    ProtocolParams p;
    p.variant = Variant::Alg2;
    p.mu = 10;
    CHECK(step_deadline(p, 2) == p.lambda + p.Lambda);
    CHECK(step_deadline(p, 3) == Time(3) * p.lambda + p.Lambda);
    CHECK(step_deadline(p, 7) == Time(2) * p.lambda);
    CHECK(small_bound(p, 10) == p.lambda);
    CHECK(small_bound(p, 11) == p.lambda * Time(11, 10));
    CHECK(step_deadline(p, 11) == Time(2) * p.lambda * Time(11, 10));
}

TEST_CASE("variant names") {
    CHECK(variant_from_string("alg1") == Variant::Alg1);
    CHECK(variant_from_string("uncapped") == Variant::Alg2);
    CHECK(variant_from_string(to_string(Variant::Alg2)) == Variant::Alg2);
    CHECK_THROWS(variant_from_string("alg3"));
}

namespace {

ChainEntry entry(std::uint64_t height, const char* tag, bool empty, std::optional<Digest256> cred = {}) {
    ChainEntry e;
    e.height = height;
    e.round = height;
    e.hash = hash(std::string_view(tag));
    e.cert.bit = empty ? 1 : 0;
    if (cred) {
        LeaderEvidence ev;
        ev.cred.hash = *cred;
        e.leader = ev;
    }
    return e;
}

}  // namespace

TEST_CASE("entry preference order") {
    Digest256 small{}, large{};
    large.bytes[0] = 0xff;
    auto longer = entry(5, "a", true);
    auto shorter = entry(4, "b", false, small);
    CHECK(compare_entries(longer, shorter) < 0);
    auto full = entry(4, "c", false, large);
    auto empty = entry(4, "d", true);
    CHECK(compare_entries(full, empty) < 0);
    CHECK(compare_entries(shorter, full) < 0);  // smaller leader credential
    CHECK(compare_entries(full, shorter) > 0);
    CHECK(compare_entries(full, full) == 0);
}

TEST_CASE("ancestry walks parents") {
    auto g = std::make_shared<ChainEntry>();
    g->genesis = true;
    g->hash = hash(std::string_view("g"));
    auto a = std::make_shared<ChainEntry>(entry(1, "a", false));
    a->parent = g;
    auto b = std::make_shared<ChainEntry>(entry(2, "b", false));
    b->parent = a;
    auto c = std::make_shared<ChainEntry>(entry(2, "c", false));
    c->parent = g;
    CHECK(is_ancestor(*g, *b));
    CHECK(is_ancestor(*a, *b));
    CHECK_FALSE(is_ancestor(*a, *c));
    CHECK(is_ancestor(*b, *b));
}

TEST_CASE("clean tally drops voters with two different votes") {
    auto mk = [](UserId u, std::optional<std::uint8_t> bit, const char* v, Digest256 cred) {
        Vote x;
        x.bit = bit;
        x.value = VoteValue::of(hash(std::string_view(v)));
        Credential c;
        c.user = u;
        c.hash = cred;
        x.creds = {c};
        x.esig.owner = u;
        return x;
    };
    Digest256 c0{}, c1{}, c2{};
    c0.bytes[0] = 5;
    c1.bytes[0] = 1;
    c2.bytes[0] = 9;
    StepVotes sv;
    sv[0] = {mk(0, 0, "x", c0)};
    sv[1] = {mk(1, 0, "x", c1), mk(1, 1, "x", c1)};  // contradicting: excluded
    sv[2] = {mk(2, 1, "y", c2), mk(2, 1, "y", c2)};  // repeated identical vote counts once
    CleanTally t = clean_tally(sv);
    CHECK(t.total == 2);
    CHECK(t.bit_weight(0) == 1);
    CHECK(t.bit_weight(1) == 1);
    CHECK(t.of({std::uint8_t{0}, VoteValue::of(hash(std::string_view("x")))}) == 1);
    REQUIRE(t.min_cred);
    CHECK(*t.min_cred == c0);  // the excluded voter's smaller credential does not count
}
