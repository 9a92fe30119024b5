#include <doctest.h>

#include <cmath>

#include "sortilab/config.hpp"

using namespace sortilab;
using namespace sortilab::config;

TEST_CASE("times parse as exact rationals") {
    CHECK(parse_time("3") == consensus::Time(3));
    CHECK(parse_time(" 3/2 ") == consensus::Time(3, 2));
    CHECK(parse_time("1.25") == consensus::Time(5, 4));
    CHECK(parse_time(".5") == consensus::Time(1, 2));
    CHECK(format_time(consensus::Time(6, 4)) == "3/2");
    CHECK(format_time(consensus::Time(7)) == "7");
    CHECK_THROWS(parse_time(""));
    CHECK_THROWS(parse_time("1/0"));
    CHECK_THROWS(parse_time("-1"));
    CHECK_THROWS(parse_time("abc"));
}

TEST_CASE("a full file parses") {
    const auto c = parse(R"(
# desk run
variant = alg2
users = 12
h = 0.75        # budget 3
lambda = 1/2
big_lambda = 4
rounds = 7
adversary = equivocate
seed = 42
t_H = 9
mu = 8
scheme = ed25519
corrupt = 3.5 4
corrupt = 10 5
partition = 2 9 0,0,0,0,0,0,1,1,1,1,1,1
)");
    CHECK(c.variant == consensus::Variant::Alg2);
    CHECK(c.users == 12);
    CHECK(c.h == 0.75);
    CHECK(c.budget() == 3);
    CHECK(c.lambda == consensus::Time(1, 2));
    CHECK(c.Lambda == consensus::Time(4));
    CHECK(c.adversary == "equivocate");
    CHECK(c.seed == 42);
    CHECK(c.t_H == 9);
    CHECK(c.scheme == Scheme::Ed25519);
    REQUIRE(c.corruptions.size() == 2);
    CHECK(c.corruptions[0].at == consensus::Time(7, 2));
    CHECK(c.corruptions[1].user == 5);
    REQUIRE(c.partitions.size() == 1);
    CHECK(c.partitions[0].component.size() == 12);
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("diagnostics carry the line number") {
    auto line_of = [](const char* text) {
        try {
            parse(text, "x.cfg");
        } catch (const ConfigError& e) {
            return e.line();
        }
        return -1;
    };
    CHECK(line_of("users = 5\nbogus = 1\n") == 2);
    CHECK(line_of("users = 5\n\nusers = 6\n") == 3);
    CHECK(line_of("users\n") == 1);
    CHECK(line_of("users = five\n") == 1);
    CHECK(line_of("adversary = nobody\n") == 1);
    CHECK(line_of("mode = coins\n") == 1);
    CHECK(line_of("partition = 5 2 0,1\n") == 1);
    CHECK(line_of("rounds =\n") == 1);
    try {
        parse("\n\nh = x\n", "x.cfg");
        FAIL("no error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).rfind("x.cfg:3:", 0) == 0);
    }
}

TEST_CASE("validation rejects inconsistent runs") {
    RunConfig c;
    CHECK_NOTHROW(validate(c));
    c.t_H = 21;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = RunConfig{};
    c.m = 10;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = RunConfig{};
    c.variant = consensus::Variant::Alg2;
    c.weighted = true;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = RunConfig{};
    c.balances = {1, 2, 3};
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = RunConfig{};
    c.corruptions.push_back({consensus::Time(1), 20});
    CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("dump and parse round trip") {
    RunConfig c;
    c.variant = consensus::Variant::Alg1;
    c.users = 6;
    c.h = 0.8333333333333334;
    c.weighted = true;
    c.balances = {5, 6, 7, 8, 9, 10};
    c.lambda = consensus::Time(3, 2);
    c.lookback = 3;
    c.initial_malicious = 1;
    c.corruptions.push_back({consensus::Time(9, 4), 2});
    c.partitions.push_back({consensus::Time(1), consensus::Time(5), {0, 1, 0, 1, 0, 1}});
    const std::string text = dump(c);
    const RunConfig back = parse(text);
    CHECK(dump(back) == text);
    CHECK(back.h == c.h);
    CHECK(back.lookback == 3);
    CHECK(back.balances == c.balances);
    CHECK(back.partitions[0].component == c.partitions[0].component);
}

TEST_CASE("flag overrides go through the same path") {
    RunConfig c;
    apply(c, "rounds", "99");
    CHECK(c.rounds == 99);
    try {
        apply(c, "rounds", "-1");
        FAIL("no error");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 0);
    }
}
