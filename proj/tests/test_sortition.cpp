#include <doctest.h>

#include <cmath>

#include "sortilab/crypto.hpp"
#include "sortilab/rng.hpp"
#include "sortilab/sortition.hpp"

using namespace sortilab;

TEST_CASE("credentials are deterministic and authentic") {
    KeyDirectory dir;
    auto kp = generate_keypair(5, hash(std::string_view("k")), Scheme::Prf);
    dir.add(kp);
    Digest256 q = hash(std::string_view("Q"));
    Credential a = make_credential(kp, 4, 2, q), b = make_credential(kp, 4, 2, q);
    CHECK(a == b);
    CHECK(a.hash == hash(a.signature.bytes));
    CHECK(credential_authentic(a, q, dir));
    CHECK_FALSE(credential_authentic(a, hash(std::string_view("other")), dir));
    CHECK(make_credential(kp, 4, 3, q).hash != a.hash);
}

TEST_CASE("ineligible users cannot produce credentials") {
    auto kp = generate_keypair(5, hash(std::string_view("k")), Scheme::Prf);
    Eligibility only_even = [](UserId u) { return u % 2 == 0; };
    CHECK_THROWS_AS(make_credential(kp, 1, 1, Digest256{}, only_even), IneligibleUser);
}

TEST_CASE("selection frequency matches p") {
    const int N = 4000;
    std::vector<LongTermKeypair> kps;
    for (int i = 0; i < N; ++i) kps.push_back(generate_keypair(i, hash(std::string_view("sel")), Scheme::Prf));
    Threshold t = Threshold::from_ratio(1, 10);
    int hits = 0;
    for (int i = 0; i < N; ++i)
        for (Step s = 1; s <= 5; ++s) hits += selected(make_credential(kps[i], 9, s, Digest256{}), t);
    const double n = 5.0 * N, sigma = std::sqrt(n * 0.1 * 0.9);
    CHECK(std::abs(hits - 0.1 * n) < 4 * sigma);
}

TEST_CASE("leader is the smallest credential hash") {
    KeyDirectory dir;
    std::vector<Credential> creds;
    for (UserId i = 0; i < 30; ++i) {
        auto kp = generate_keypair(i, hash(std::string_view("lead")), Scheme::Prf);
        dir.add(kp);
        creds.push_back(make_credential(kp, 2, 1, Digest256{}));
    }
    auto best = *std::min_element(creds.begin(), creds.end(),
                                  [](const Credential& a, const Credential& b) { return a.hash < b.hash; });
    CHECK(leader_among(creds, dir).first == best.user);
}

TEST_CASE("copy allotment: K = floor(n a / A)") {
    auto c = weighted_copies(3'700'000, 1'000'000'000, 1000);
    CHECK(c.whole == 3);
    CHECK(static_cast<double>(c.residual_value) == doctest::Approx(0.7).epsilon(1e-12));
    auto exact = weighted_copies(4'000'000, 1'000'000'000, 1000);
    CHECK(exact.whole == 4);
    CHECK(static_cast<double>(exact.residual_value) == doctest::Approx(0.0));
    CHECK(weighted_copies(0, 1000, 10).whole == 0);
}

TEST_CASE("selected copies average n a_i / A") {
    const std::uint64_t A = 1'000'000'000, n = 1000;
    for (std::uint64_t a : {3'700'000ull, 250'000ull}) {
        auto kp = generate_keypair(1, hash(std::string_view("copies")), Scheme::Prf);
        auto allot = weighted_copies(a, A, n);
        const int trials = 20000;
        double sum = 0;
        for (int r = 0; r < trials; ++r) {
            auto sel = selected_copies(kp, r, 2, hash(Encoder().tag("q").u32(r)), allot);
            for (std::size_t k = 0; k < allot.whole && k < sel.size(); ++k) CHECK(sel[k].copy == k + 1);
            sum += static_cast<double>(sel.size());
        }
        const double expect = double(n) * double(a) / double(A);
        const double frac = expect - std::floor(expect);
        const double sigma = std::sqrt(frac * (1 - frac) / trials);
        CHECK(std::abs(sum / trials - expect) < 3 * sigma + 1e-12);
    }
}

TEST_CASE("rng mappings are stable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
    Rng c(7);
    for (int i = 0; i < 1000; ++i) {
        CHECK(c.below(13) < 13);
        double u = c.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
    CHECK(Rng::kName == "mt19937_64/v1");
}
