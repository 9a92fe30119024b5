#include <doctest.h>

#include <cmath>

#include <openssl/sha.h>

#include "sortilab/crypto.hpp"

using namespace sortilab;

namespace {

Bytes bytes_of(std::string_view s) { return Bytes(s.begin(), s.end()); }

// 2^256 * p computed by long division in base 256, independent of Threshold.
Digest256 scaled(std::uint64_t num, std::uint64_t den) {
    Digest256 d{};
    unsigned __int128 rem = num % den;
    for (int i = 0; i < 32; ++i) {
        rem *= 256;
        d.bytes[i] = static_cast<std::uint8_t>(rem / den);
        rem %= den;
    }
    return d;
}

Digest256 plus_one(Digest256 d) {
    for (int i = 31; i >= 0; --i)
        if (++d.bytes[i] != 0) break;
    return d;
}

}  // namespace

TEST_CASE("hash matches the published SHA-256 vectors") {
    CHECK(hash(std::string_view("")).hex() == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(hash(std::string_view("abc")).hex() == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(hash(std::string_view("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")).hex() ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
}

TEST_CASE("hash agrees with a second SHA-256 implementation on random inputs") {
    for (int len : {1, 31, 55, 56, 64, 1000}) {
        Bytes b(len);
        for (int i = 0; i < len; ++i) b[i] = static_cast<std::uint8_t>(i * 131 + len);
        unsigned char ref[32];
        SHA256(b.data(), b.size(), ref);
        Digest256 mine = hash(std::span<const std::uint8_t>(b));
        CHECK(std::equal(ref, ref + 32, mine.bytes.begin()));
    }
}

TEST_CASE("encoder framing separates fields") {
    CHECK(hash(Encoder().blob(bytes_of("ab")).blob(bytes_of("c"))) !=
          hash(Encoder().blob(bytes_of("a")).blob(bytes_of("bc"))));
    CHECK(hash(Encoder().tag("x").u64(1)) != hash(Encoder().tag("x").u32(1)));
}

TEST_CASE("hex round trip") {
    Digest256 d = hash(std::string_view("round trip"));
    CHECK(Digest256::from_hex(d.hex()) == d);
}

TEST_CASE("threshold holds floor(p * 2^256) exactly") {
    for (auto [num, den] : std::vector<std::pair<std::uint64_t, std::uint64_t>>{{1, 3}, {2, 7}, {1, 2}, {999, 1000}}) {
        CAPTURE(num);
        CAPTURE(den);
        Threshold t = Threshold::from_ratio(num, den);
        Digest256 edge = scaled(num, den);
        CHECK(t.admits(edge));
        CHECK_FALSE(t.admits(plus_one(edge)));
        CHECK(static_cast<double>(t.value()) == doctest::Approx(double(num) / double(den)).epsilon(1e-15));
    }
    CHECK(Threshold::always().admits(Digest256::from_hex(std::string(64, 'f'))));
    CHECK(Threshold::never_but_zero().admits(Digest256{}));
    CHECK_FALSE(Threshold::never_but_zero().admits(plus_one(Digest256{})));
}

TEST_CASE("threshold admission rate tracks p") {
    Threshold t = Threshold::from_double(0.3);
    int hits = 0;
    const int N = 20000;
    for (int i = 0; i < N; ++i) hits += t.admits(hash(Encoder().tag("rate").u32(i)));
    const double sigma = std::sqrt(0.3 * 0.7 / N);
    CHECK(std::abs(double(hits) / N - 0.3) < 4 * sigma);
}

TEST_CASE("long-term signatures verify and reject tampering") {
    for (Scheme s : {Scheme::Prf, Scheme::Ed25519}) {
        CAPTURE(to_string(s));
        KeyDirectory dir;
        auto kp = generate_keypair(3, hash(std::string_view("seed")), s);
        auto other = generate_keypair(4, hash(std::string_view("seed")), s);
        dir.add(kp);
        dir.add(other);
        Bytes msg = bytes_of("pay 5");
        Signature sig = sign(kp, msg);
        CHECK(dir.verify(msg, sig));
        CHECK(sign(kp, msg) == sig);  // unique signatures
        CHECK_FALSE(dir.verify(bytes_of("pay 6"), sig));
        Signature wrong = sig;
        wrong.signer = 4;
        CHECK_FALSE(dir.verify(msg, wrong));
        Signature flipped = sig;
        flipped.bytes[0] ^= 1;
        CHECK_FALSE(dir.verify(msg, flipped));
    }
}

TEST_CASE("ephemeral keys are single use") {
    for (Scheme s : {Scheme::Prf, Scheme::Ed25519}) {
        CAPTURE(to_string(s));
        KeyDirectory dir;
        EphemeralKeychain kc(7, s, hash(std::string_view("master")), 0, 10, 8);
        kc.register_with(dir);
        Bytes msg = bytes_of("vote");
        auto sig = kc.sign(2, 3, msg);
        CHECK(dir.verify_ephemeral(msg, sig));
        CHECK(kc.consumed(2, 3));
        CHECK_THROWS_AS(kc.sign(2, 3, msg), AlreadyConsumed);
        CHECK_THROWS_AS(kc.sign_retaining(2, 3, bytes_of("other")), AlreadyConsumed);
        auto keep = kc.sign_retaining(2, 4, msg);
        CHECK(dir.verify_ephemeral(msg, keep));
        CHECK_FALSE(kc.consumed(2, 4));
        CHECK_THROWS_AS(kc.sign(11, 1, msg), OutOfRange);
        CHECK_THROWS_AS(kc.sign(2, 9, msg), OutOfRange);
        auto moved = sig;
        moved.step = 4;
        CHECK_FALSE(dir.verify_ephemeral(msg, moved));
    }
}

TEST_CASE("cascade-extended keys verify end to end") {
    for (Scheme s : {Scheme::Prf, Scheme::Ed25519}) {
        CAPTURE(to_string(s));
        KeyDirectory dir;
        const Step mu = 4;
        EphemeralKeychain kc(1, s, hash(std::string_view("cascade")), 0, 5, mu);
        kc.register_with(dir);
        CHECK(kc.last_step(3) == mu);
        Bytes terminal_msg = bytes_of("step-4 vote");
        auto t = kc.extend_stash(3, dir, std::span<const std::uint8_t>(terminal_msg));
        REQUIRE(t);
        CHECK(dir.verify_ephemeral(terminal_msg, *t));
        CHECK(kc.consumed(3, mu));
        CHECK(kc.last_step(3) == 2 * mu);
        // two more extensions deep
        kc.extend_stash(3, dir);
        kc.extend_stash(3, dir);
        CHECK(kc.last_step(3) == 4 * mu);
        Bytes msg = bytes_of("late vote");
        auto late = kc.sign(3, 4 * mu - 1, msg);
        CHECK(late.chain.size() == 3);
        CHECK(dir.verify_ephemeral(msg, late));
        // a broken link invalidates the signature
        auto bad = late;
        bad.chain[1].authorization.bytes[0] ^= 1;
        CHECK_FALSE(dir.verify_ephemeral(msg, bad));
        auto cut = late;
        cut.chain.erase(cut.chain.begin());
        CHECK_FALSE(dir.verify_ephemeral(msg, cut));
        // other rounds keep their own range
        CHECK(kc.last_step(2) == mu);
        CHECK_THROWS_AS(kc.sign(2, mu + 1, msg), OutOfRange);
    }
}
