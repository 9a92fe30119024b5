// One PASS/FAIL line per acceptance criterion. Tolerances are fixed here.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include "sortilab/ba_sync.hpp"
#include "sortilab/consensus.hpp"
#include "sortilab/params.hpp"
#include "sortilab/report.hpp"
#include "sortilab/seed_game.hpp"
#include "sortilab/simnet.hpp"
#include "sortilab/sortition.hpp"

using namespace sortilab;
using simnet::SimConfig;
using simnet::Trace;
using consensus::Time;
using consensus::Variant;

namespace {

constexpr double kLambda = 1, kBigLambda = 6;
constexpr double kEps = 1e-9;               // float slack on simulated times
constexpr double kBaMaxSeconds = 120;       // criterion 1
constexpr double kSeedGameMaxSeconds = 60;  // criterion 5
constexpr double kOracleTol = 1e-12;        // criterion 7
constexpr double kStochasticTol = 1e-9;     // criterion 8
constexpr std::uint32_t kSeedGamePopulation = 500;
constexpr std::uint64_t kCorpusTarget = 10'000;  // criterion 10a

int failures = 0;

void line(int id, const char* sub, bool pass, const std::string& detail) {
    std::printf("criterion %2d%s: %s  %s\n", id, sub, pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

std::string fmt(const char* f, auto... xs) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, xs...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

SimConfig sim(Variant v, const std::string& adversary, Round rounds, std::uint64_t seed) {
    SimConfig c;
    c.variant = v;
    c.adversary = adversary;
    c.rounds = rounds;
    c.seed = seed;
    c.lambda = Time(static_cast<std::int64_t>(kLambda));
    c.Lambda = Time(static_cast<std::int64_t>(kBigLambda));
    c.retain_rounds = 4;
    return c;
}

// Everything simulated without a partition.
struct Corpus {
    std::uint64_t runs = 0, rounds = 0, forks = 0, incomplete = 0;
    std::uint64_t forged_certificates = 0, refusals = 0, corruptions = 0;

    Trace run(const SimConfig& c) {
        Trace t = simnet::simulate(c);
        ++runs;
        rounds += t.rounds.size();
        forks += t.counters.forks;
        incomplete += !t.completed;
        forged_certificates += t.counters.forged_certificates;
        refusals += t.counters.erased_key_refusals;
        corruptions += t.counters.corruptions;
        return t;
    }
} corpus;

double dt(const simnet::RoundRecord& r) { return r.t_first - r.t_start; }

double malicious_bound(const simnet::RoundRecord& r, const SimConfig& c) {
    return (6.0 * r.coin_trials(c.m) + 10) * kLambda + kBigLambda;
}

// Honest users agree on the first R blocks.
bool honest_prefix_agrees(const Trace& t) {
    const std::size_t R = t.config.rounds;
    const std::vector<std::string>* ref = nullptr;
    for (std::size_t u = 0; u < t.chains.size(); ++u) {
        if (t.malicious[u]) continue;
        if (t.chains[u].size() < R) return false;
        if (ref && !std::equal(ref->begin(), ref->begin() + static_cast<std::ptrdiff_t>(R), t.chains[u].begin()))
            return false;
        ref = &t.chains[u];
    }
    return true;
}

// ---------------------------------------------------------------------------------

void criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto rnd = ba::random_campaign(7, 2, 10'000, 1);
    const auto exh = ba::exhaustive_campaign(4, 1);
    const double secs = seconds_since(t0);
    const bool ok = rnd.trials == 10'000 && rnd.violations() == 0 && exh.violations() == 0 && secs < kBaMaxSeconds;
    line(1, "", ok,
         fmt("BA*/BBA* n=7 t=2: %llu trials, %llu violations; exhaustive n=4 t=1: %llu trials, %llu violations; %.1fs",
             (unsigned long long)rnd.trials, (unsigned long long)rnd.violations(), (unsigned long long)exh.trials,
             (unsigned long long)exh.violations(), secs));
}

void criterion2() {
    const auto st = ba::progress_campaign(7, 2, 10'000, 2);
    const double n = static_cast<double>(st.split_loops);
    const double f = n > 0 ? static_cast<double>(st.split_loops_agreed) / n : 0;
    const double p = 1.0 / 3.0, sigma = std::sqrt(p * (1 - p) / std::max(n, 1.0));
    line(2, "", st.trials >= 10'000 && f >= p - 2 * sigma && st.violations() == 0,
         fmt("splitter, %llu trials: split-start loops %llu, ended in agreement %.4f, floor 1/3 - 2sigma = %.4f, violations %llu",
             (unsigned long long)st.trials, (unsigned long long)st.split_loops, f, p - 2 * sigma, (unsigned long long)st.violations()));
}

void criterion3() {
    SimConfig c = sim(Variant::Alg1, "saturate", 100, 3);
    c.initial_malicious = 0;
    const Trace t = corpus.run(c);
    const double target = 8 * kLambda + kBigLambda;
    std::size_t exact = 0, within = 0;
    double lo = 1e300, hi = 0;
    for (const auto& r : t.rounds) {
        exact += std::abs(dt(r) - target) < kEps;
        within += dt(r) <= target + kEps;
        lo = std::min(lo, dt(r));
        hi = std::max(hi, dt(r));
    }
    const bool ok = t.completed && t.rounds.size() == 100 && exact == 100;
    line(3, "", ok,
         fmt("saturated all-honest alg1: dt in [%g, %g], equal to 8l+L=%g in %zu/100 rounds, <= 8l+L in %zu/100",
             lo, hi, target, exact, within));
}

void criterion4() {
    std::uint64_t rounds = 0, violations = 0, malicious_leader = 0, strict = 0;
    double worst = 0;
    for (const char* adv : {"withhold", "equivocate", "targeted"})
        for (std::uint64_t seed = 1; seed <= 2; ++seed) {
            const SimConfig c = sim(Variant::Alg1, adv, 167, 40 + seed);
            const Trace t = corpus.run(c);
            for (const auto& r : t.rounds) {
                ++rounds;
                malicious_leader += !r.leader_honest;
                const double b = malicious_bound(r, c);
                violations += dt(r) > b + kEps;
                worst = std::max(worst, dt(r) - b);
                strict += !report::check_round(r, c).ok;
            }
            violations += !t.completed;
        }
    line(4, "", rounds >= 1000 && violations == 0,
         fmt("%llu rounds (%llu malicious leaders) under withhold/equivocate/targeted: %llu over (6L+10)l+L, "
             "max dt - bound = %g; honest-leader 8l+L breaches %llu",
             (unsigned long long)rounds, (unsigned long long)malicious_leader, (unsigned long long)violations, worst,
             (unsigned long long)strict));
}

void criterion5() {
    const auto t0 = std::chrono::steady_clock::now();
    seed_game::Config c;
    c.h = 0.8;
    c.rounds = 10'000;
    c.population = kSeedGamePopulation;
    const auto r = seed_game::play(c);
    const double secs = seconds_since(t0);
    line(5, "", r.rounds >= 10'000 && r.frequency >= r.p_h - 3 * r.sigma && secs < kSeedGameMaxSeconds,
         fmt("seed game h=0.8, %u users (%u corrupted), %llu rounds: honest-leader frequency %.4f vs %.4f - 3sigma "
             "= %.4f (stationary %.4f); %.1fs",
             kSeedGamePopulation, r.corrupted, (unsigned long long)r.rounds, r.frequency, r.p_h,
             r.p_h - 3 * r.sigma, seed_game::stationary_honest_frequency(0.8), secs));
}

void criterion6() {
    std::vector<double> xs;
    std::uint64_t honest = 0;
    const char* mix[] = {"saturate", "withhold", "equivocate", "targeted"};
    for (int i = 0; i < 4; ++i) {
        const Trace t = corpus.run(sim(Variant::Alg1, mix[i], 250, 60 + i));
        for (const auto& r : t.rounds) {
            xs.push_back(dt(r));
            honest += r.leader_honest;
        }
    }
    double mean = 0, sq = 0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) sq += (x - mean) * (x - mean);
    const double sd = std::sqrt(sq / static_cast<double>(xs.size() - 1));
    const double se = sd / std::sqrt(static_cast<double>(xs.size()));
    const double limit = 12.7 * kLambda + kBigLambda;
    line(6, "", xs.size() >= 1000 && mean <= limit + 3 * se,
         fmt("h=0.8 mixed run, %zu rounds (%.3f honest leaders): mean dt %.3f (se %.3f) vs 12.7l+L = %g; table "
             "coefficient %.3f",
             xs.size(), static_cast<double>(honest) / static_cast<double>(xs.size()), mean, se, limit,
             params::expected_block_time(0.8, kLambda, kBigLambda).lambda_coeff));
}

// Trinomial enumeration at 50 digits.
double brute_failure(std::uint64_t N, double h, std::uint64_t n, const std::function<bool(std::uint64_t, std::uint64_t)>& fails) {
    using Big = boost::multiprecision::cpp_dec_float_50;
    const Big p = Big(n) / Big(N);
    const Big pg = p * Big(h), pb = p * (Big(1) - Big(h)), po = Big(1) - pg - pb;
    std::vector<Big> fact(N + 1, Big(1));
    for (std::uint64_t i = 1; i <= N; ++i) fact[i] = fact[i - 1] * Big(i);
    Big bad = 0;
    for (std::uint64_t g = 0; g <= N; ++g)
        for (std::uint64_t b = 0; g + b <= N; ++b)
            if (fails(g, b))
                bad += fact[N] / (fact[g] * fact[b] * fact[N - g - b]) * pow(pg, g) * pow(pb, b) * pow(po, N - g - b);
    return static_cast<double>(bad);
}

void criterion7() {
    using params::Variant;
    const auto capped = params::committee_failure(0.8, 1500, 1001, Variant::Capped);
    const std::uint64_t t69 = static_cast<std::uint64_t>(std::llround(0.69 * 4000));
    const auto unc69 = params::committee_failure(0.8, 4000, t69, Variant::Uncapped);
    const auto best = params::best_threshold(0.8, 4000);
    const auto min1 = params::min_committee_size(0.8, 1e-12, Variant::Capped);
    const auto min2 = params::min_committee_size(0.8, 1e-18, Variant::Uncapped);

    double worst = 0;
    for (double h : {0.7, 0.8, 0.9})
        for (std::uint64_t n : {5u, 12u, 20u, 30u}) {
            const double c = brute_failure(30, h, n, [n](auto g, auto b) { return g <= 2 * b || g + 4 * b >= 2 * n; });
            worst = std::max(worst, std::abs(c - static_cast<double>(params::committee_failure(h, n, params::capped_threshold(n), Variant::Capped, 30).exact)));
            for (std::uint64_t t : {n / 2 + 1, 2 * n / 3 + 1}) {
                const double u = brute_failure(30, h, n, [t](auto g, auto b) { return g <= t || g + 2 * b >= 2 * t; });
                worst = std::max(worst, std::abs(u - static_cast<double>(params::committee_failure(h, n, t, Variant::Uncapped, 30).exact)));
            }
        }

    const bool a = capped.exact <= 1e-12L;
    const bool b = unc69.exact <= 1e-18L;
    const bool order = std::abs(std::log10(double(min1.n) / 1500)) < 1 && std::abs(std::log10(double(min2.n) / 4000)) < 1;
    const bool oracle = worst < kOracleTol;
    line(7, "", a && b && order && oracle,
         fmt("alg1 n=1500 t_H=1001: %.3Le (<=1e-12 %s); alg2 n=4000 t_H=%llu: %.3Le, best t_H=%llu: %.3Le (<=1e-18 %s); "
             "minimal n %llu / %llu (order %s); n<=30 oracle max diff %.1e",
             capped.exact, a ? "yes" : "no", (unsigned long long)t69, unc69.exact, (unsigned long long)best.t_H,
             best.failure, b ? "yes" : "no", (unsigned long long)min1.n, (unsigned long long)min2.n,
             order ? "ok" : "off", worst));
}

void criterion8() {
    const auto k12 = params::lookback_k(0.8, 1e-12);
    const auto k18 = params::lookback_k(0.8, 1e-18);
    const int X = 40;
    const auto con = params::contraction_check(0.8, X);
    const auto sc = params::seed_markov(0.8, X);
    double row_err = 0;
    for (int i = 0; i < sc.X; ++i) row_err = std::max(row_err, std::abs(sc.P.row(i).sum() - 1));
    const bool k_ok = k12.k <= std::ceil(std::log2(1e12)) && k18.k <= std::ceil(std::log2(1e18));
    line(8, "", k_ok && con.holds && row_err < kStochasticTol,
         fmt("k = %d (F=1e-12), %d (F=1e-18) vs log_1/2 F = %.1f, %.1f; P2/P <= 1/2 for x <= %d of %d, worst %.3Lg at "
             "(%d,%d); row-sum error %.1e",
             k12.k, k18.k, std::log2(1e12), std::log2(1e18), con.largest_x_ok, X, con.max_ratio, con.worst_x,
             con.worst_y, row_err));
}

void criterion9() {
    const std::uint64_t A = 1'000'000'000, n = 1000;
    const auto ex = weighted_copies(3'700'000, A, n);
    const bool k_ok = ex.whole == 3;
    bool mean_ok = true;
    std::string detail;
    const std::uint64_t money[] = {3'700'000, 250'000, 12'345'678, 999'999};
    const int rounds = 20'000;
    for (std::size_t i = 0; i < 4; ++i) {
        const auto kp = generate_keypair(static_cast<UserId>(i), hash(std::string_view("weighted")), Scheme::Prf);
        const auto allot = weighted_copies(money[i], A, n);
        double sum = 0;
        for (int r = 0; r < rounds; ++r)
            sum += static_cast<double>(selected_copies(kp, r, 2, hash(Encoder().tag("q").u32(r)), allot).size());
        const double expect = double(n) * double(money[i]) / double(A);
        const double frac = expect - std::floor(expect);
        const double sigma = std::sqrt(frac * (1 - frac) / rounds);
        const double z = sigma > 0 ? std::abs(sum / rounds - expect) / sigma : 0;
        mean_ok &= z <= 3;
        detail += fmt(" %.4f/%.4f", sum / rounds, expect);
    }
    line(9, "", k_ok && mean_ok, fmt("K=%llu for a=3.7e6; mean copies vs n a/A over %d rounds:%s",
                                     (unsigned long long)ex.whole, rounds, detail.c_str()));
}

void criterion10() {
    // (a) fill the no-partition corpus to the target.
    const char* strategies[] = {"honest", "saturate", "withhold", "equivocate", "targeted"};
    std::uint64_t seed = 100;
    while (corpus.rounds < kCorpusTarget) {
        for (const char* s : strategies)
            for (Variant v : {Variant::Alg1, Variant::Alg2}) {
                if (corpus.rounds >= kCorpusTarget) break;
                SimConfig c = sim(v, s, 150, ++seed);
                if (v == Variant::Alg1 && seed % 2 == 0) {
                    c.weighted = true;
                    c.balances.resize(c.users);
                    for (UserId u = 0; u < c.users; ++u) c.balances[u] = 400 + 97 * u;
                    c.lookback = 2;
                }
                corpus.run(c);
            }
    }
    line(10, "a", corpus.rounds >= kCorpusTarget && corpus.forks == 0 && corpus.incomplete == 0,
         fmt("no-partition corpus: %llu runs, %llu rounds, %llu forks, %llu unfinished runs",
             (unsigned long long)corpus.runs, (unsigned long long)corpus.rounds, (unsigned long long)corpus.forks,
             (unsigned long long)corpus.incomplete));

    // (b) engineered split at round 2, then heal.
    int runs = 0, forked = 0, bad = 0;
    std::string note;
    for (std::uint64_t s = 1; s <= 5; ++s) {
        const Trace t = simnet::simulate(sim(Variant::Alg2, "fork_partition", 8, s));
        ++runs;
        std::vector<Round> fork_rounds;
        for (const auto& r : t.rounds)
            if (r.distinct > 1) fork_rounds.push_back(r.round);
        bool ok = t.completed && fork_rounds.size() <= 1 && honest_prefix_agrees(t);
        if (!fork_rounds.empty()) {
            ++forked;
            const Round f = fork_rounds.front();
            ok &= f + 2 < t.rounds.size();
            if (ok) {
                // one branch grows, and everybody holds round f+1 before round f+2 ends
                ok &= t.rounds[f + 1].distinct == 1;
                ok &= t.rounds[f + 1].t_last <= t.rounds[f + 2].t_first + kEps;
                ok &= t.counters.switches > 0;
            }
            if (s == 1)
                note = fmt("seed 1: fork at round %llu, round %llu single branch, last honest user on it at %.3f, "
                           "round %llu decided at %.3f, %llu chain switches",
                           (unsigned long long)f, (unsigned long long)f + 1, t.rounds[f + 1].t_last,
                           (unsigned long long)f + 2, t.rounds[f + 2].t_first, (unsigned long long)t.counters.switches);
        }
        bad += !ok;
    }
    // a scheduled physical partition with no adversary must not fork either
    SimConfig pc = sim(Variant::Alg2, "honest", 8, 7);
    pc.initial_malicious = 0;
    simnet::PartitionWindow w{Time(5), Time(60), std::vector<int>(pc.users, 0)};
    for (UserId u = 14; u < pc.users; ++u) w.component[u] = 1;
    pc.partitions.push_back(w);
    const Trace pt = simnet::simulate(pc);
    const bool phys = pt.completed && pt.counters.forks == 0 && honest_prefix_agrees(pt);
    line(10, "b", forked == runs && bad == 0 && phys,
         fmt("engineered partition: %d/%d runs forked, %d broke a property; physical split forks %llu. %s", forked,
             runs, bad, (unsigned long long)pt.counters.forks, note.c_str()));
}

// Corrupt every certificate signer of a finished run, then try to sign a
// competing value with the keys they used.
struct DirectForgery {
    std::size_t certs = 0, attempts = 0, refused = 0, forged = 0;
    std::size_t control_forged = 0;
};

DirectForgery direct_forgery(Variant v, std::uint64_t seed, Step mu) {
    SimConfig c = sim(v, "honest", 6, seed);
    c.initial_malicious = 0;
    c.mu = mu;
    simnet::Simulator s(c, simnet::make_strategy(c.adversary));
    s.run();
    DirectForgery d;
    const Step mu_eff = v == Variant::Alg1 ? c.m + 3 : c.mu;
    const Digest256 key_seed = hash(Encoder().tag("sim-keys").u64(c.seed));
    for (auto e = s.node(0).tip(); e && !e->genesis; e = e->parent) {
        const Certificate& cert = e->cert;
        const Committee& com = s.committee(e->parent);
        const Step vs = cert.vote_step();
        const Digest256 bogus = hash(Encoder().tag("competing").digest(e->hash));
        const std::optional<UserId> leader = cert.leader ? std::optional<UserId>(cert.leader->cred.user) : std::nullopt;
        ++d.certs;
        Certificate alt = cert;
        alt.bit = 0;
        alt.final_step = false;
        alt.ending_step = vs + 1;
        alt.votes.clear();
        Certificate control = alt;
        for (const auto& vote : cert.votes) {
            const UserId u = vote.voter();
            Vote nv = vote;
            nv.bit = 0;
            nv.value = VoteValue::of(bogus, v == Variant::Alg2 ? leader : std::nullopt);
            const Bytes payload = vote_payload(nv.round, nv.step, nv.bit, nv.value);
            ++d.attempts;
            try {
                nv.esig = s.node(u).keychain().sign_retaining(nv.round, nv.step, payload);
                alt.votes.push_back(nv);
            } catch (const AlreadyConsumed&) {
                ++d.refused;
            } catch (const OutOfRange&) {
                ++d.refused;
            }
            // Control: the same secret without erasure, as a keychain that never deleted anything.
            EphemeralKeychain fresh(u, c.scheme, hash(Encoder().tag("eph").digest(key_seed).u32(u)), 0, c.rounds + 64,
                                    mu_eff);
            if (nv.step <= fresh.last_step(nv.round)) {
                nv.esig = fresh.sign(nv.round, nv.step, payload);
                control.votes.push_back(nv);
            }
        }
        if (ending_parity_ok(alt.ending_step, 0)) {
            d.forged += !alt.votes.empty() && verify_certificate(alt, bogus, com);
            d.control_forged += verify_certificate(control, bogus, com);
        }
    }
    return d;
}

std::pair<bool, std::string> criterion11() {
    // Corpus: the adversary corrupts each user the moment it decides.
    std::uint64_t forged = 0, refused = 0, corrupted = 0, rounds = 0;
    for (Variant v : {Variant::Alg1, Variant::Alg2})
        for (std::uint64_t s = 1; s <= 3; ++s) {
            const Trace t = corpus.run(sim(v, "post_halt_corrupt", 100, 200 + s));
            forged += t.counters.forged_certificates;
            refused += t.counters.erased_key_refusals;
            corrupted += t.counters.corruptions;
            rounds += t.rounds.size();
        }

    // Whole-committee corruption after the fact, plus the non-erasing control.
    const DirectForgery d1 = direct_forgery(Variant::Alg1, 11, 30);
    const DirectForgery d2 = direct_forgery(Variant::Alg2, 12, 30);

    // Cascade: mu small enough that every certificate vote needs an extended stash.
    SimConfig cc = sim(Variant::Alg2, "equivocate", 12, 13);
    cc.mu = 4;
    simnet::Simulator s(cc, simnet::make_strategy(cc.adversary));
    const Trace ct = s.run();
    std::size_t certs = 0, verified = 0, cascaded_votes = 0;
    for (UserId u : s.honest_users()) {
        for (auto e = s.node(u).tip(); e && !e->genesis; e = e->parent) {
            if (e->round >= cc.rounds) continue;
            ++certs;
            const Committee& com = s.committee(e->parent);
            const Digest256 claimed = e->cert.bit == 1 ? com.empty_hash() : e->hash;
            verified += verify_certificate(e->cert, claimed, com);
            for (const auto& v : e->cert.votes) cascaded_votes += !v.esig.chain.empty();
        }
    }
    const bool corpus_ok = forged == 0 && refused > 0;
    const bool direct_ok = d1.forged + d2.forged == 0 && d1.refused == d1.attempts && d2.refused == d2.attempts &&
                           d1.control_forged == d1.certs && d2.control_forged == d2.certs;
    const bool cascade_ok = ct.completed && certs > 0 && verified == certs && cascaded_votes > 0 && ct.counters.forks == 0;
    return {corpus_ok && direct_ok && cascade_ok,
         fmt("post-halt corpus %llu rounds, %llu corruptions, %llu erased-key refusals, %llu second certificates; "
             "full-committee corruption: %zu/%zu attempts refused, %zu forged, control without erasure forged %zu/%zu; "
             "cascade mu=4: %zu/%zu certificates verify, %zu votes on extended keys",
             (unsigned long long)rounds, (unsigned long long)corrupted, (unsigned long long)refused,
             (unsigned long long)forged, d1.refused + d2.refused, d1.attempts + d2.attempts, d1.forged + d2.forged,
             d1.control_forged + d2.control_forged, d1.certs + d2.certs, verified, certs, cascaded_votes)};
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    criterion1();
    criterion2();
    criterion3();
    criterion4();
    criterion5();
    criterion6();
    criterion7();
    criterion8();
    criterion9();
    const auto c11 = criterion11();  // its post-halt runs join the corpus counted by 10a
    criterion10();
    line(11, "", c11.first, c11.second);
    std::printf("acceptance: %d failing line(s), %.0fs\n", failures, seconds_since(t0));
    return failures == 0 ? 0 : 1;
}
