#include "sortilab/ba_sync.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

namespace sortilab::ba {

namespace {

void check_sizes(std::uint32_t n, std::uint32_t t, std::size_t inputs, const std::vector<bool>& corrupted) {
    if (n < 3 * t + 1) throw std::invalid_argument("need n >= 3t+1");
    if (inputs != n || corrupted.size() != n) throw std::invalid_argument("input vectors must have n entries");
    if (static_cast<std::size_t>(std::count(corrupted.begin(), corrupted.end(), true)) > t)
        throw std::invalid_argument("more than t corrupted players");
}

// Long-term keys of the stand-alone game, derived from the common string.
std::vector<LongTermKeypair> player_keys(std::uint32_t n, const Digest256& common_r) {
    std::vector<LongTermKeypair> keys;
    keys.reserve(n);
    for (Player j = 0; j < n; ++j)
        keys.push_back(generate_keypair(j, hash(Encoder().tag("bba-key").digest(common_r).u32(j)), Scheme::Prf));
    return keys;
}

Digest256 coin_hash(const LongTermKeypair& kp, const Digest256& common_r, std::uint32_t loop) {
    Signature s = sign(kp, Encoder().tag("coin").digest(common_r).u32(loop));
    return hash(s.bytes);
}

struct Received {
    TallyView tally;
    std::optional<Digest256> coin_min;
};

// What an honest recipient gets in one BBA tick.
Received receive(Player i, std::uint32_t n, const std::vector<bool>& corrupted,
                 const std::vector<std::optional<std::uint8_t>>& honest_sent, const std::vector<bool>& halted,
                 const EmitMatrix& emit, const std::vector<Digest256>& coins, bool coin_step) {
    Received r;
    for (Player j = 0; j < n; ++j) {
        std::optional<std::uint8_t> bit;
        bool in_coin_set = false;
        if (corrupted[j]) {
            switch (emit[j][i]) {
                case Emit::Zero: bit = 0; in_coin_set = true; break;
                case Emit::One: bit = 1; in_coin_set = true; break;
                default: break;
            }
        } else {
            bit = honest_sent[j];
            in_coin_set = bit.has_value() && !halted[j];
        }
        if (!bit) ++r.tally.silent;
        else if (*bit == 0) ++r.tally.zeros;
        else ++r.tally.ones;
        if (coin_step && in_coin_set && (!r.coin_min || coins[j] < *r.coin_min)) r.coin_min = coins[j];
    }
    return r;
}

struct Player_ {
    std::uint8_t b = 0;
    bool halted = false;
};

// Effect of one step's tally on a running player. Returns true when it halts.
bool apply_step(int step, Player_& p, const Received& rc, std::uint32_t t) {
    const std::uint32_t q = 2 * t + 1;
    switch (step) {
        case 1:
            if (rc.tally.zeros >= q) { p.b = 0; p.halted = true; return true; }
            p.b = rc.tally.ones >= q ? 1 : 0;
            return false;
        case 2:
            if (rc.tally.ones >= q) { p.b = 1; p.halted = true; return true; }
            p.b = rc.tally.zeros >= q ? 0 : 1;
            return false;
        default:
            if (rc.tally.zeros >= q) p.b = 0;
            else if (rc.tally.ones >= q) p.b = 1;
            else p.b = rc.coin_min && rc.coin_min->lsb() ? 1 : 0;
            return false;
    }
}

bool honest_agree(const std::vector<bool>& corrupted, const std::vector<Player_>& ps) {
    std::optional<std::uint8_t> seen;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (corrupted[i]) continue;
        if (seen && *seen != ps[i].b) return false;
        seen = ps[i].b;
    }
    return true;
}

}  // namespace

BbaOutcome run_bba_star(std::uint32_t n, std::uint32_t t, const std::vector<std::uint8_t>& bits,
                        const BbaAdversary& adv, const Digest256& common_r, BbaOptions opt) {
    check_sizes(n, t, bits.size(), adv.corrupted);
    const auto& corrupted = adv.corrupted;
    const auto keys = player_keys(n, common_r);

    std::vector<Player_> ps(n);
    for (Player i = 0; i < n; ++i) ps[i].b = bits[i] ? 1 : 0;

    BbaOutcome out;
    out.out.assign(n, std::nullopt);
    out.halt_loop.assign(n, 0);

    EmitMatrix emit(n, std::vector<Emit>(n, Emit::None));
    auto all_halted = [&] {
        for (Player i = 0; i < n; ++i)
            if (!corrupted[i] && !ps[i].halted) return false;
        return true;
    };

    for (std::uint32_t loop = 0; !all_halted(); ++loop) {
        if (loop >= opt.max_loops) {
            out.exceeded = true;
            break;
        }
        ++out.loops;
        out.agreed_at_start.push_back(honest_agree(corrupted, ps));

        std::vector<Digest256> coins(n);
        for (Player j = 0; j < n; ++j) coins[j] = coin_hash(keys[j], common_r, loop);

        for (int step = 1; step <= 3; ++step) {
            BbaTick tick;
            tick.n = n;
            tick.t = t;
            tick.loop = loop;
            tick.step = step;
            tick.corrupted = &corrupted;
            tick.honest_sent.assign(n, std::nullopt);
            tick.honest_halted.assign(n, false);
            for (Player j = 0; j < n; ++j) {
                if (corrupted[j]) continue;
                tick.honest_sent[j] = ps[j].b;
                tick.honest_halted[j] = ps[j].halted;
            }
            if (step == 3) tick.coin_hash = coins;

            for (auto& row : emit) std::fill(row.begin(), row.end(), Emit::None);
            if (adv.strategy) adv.strategy(tick, emit);

            std::vector<Received> got(n);
            for (Player i = 0; i < n; ++i) {
                if (corrupted[i]) continue;
                got[i] = receive(i, n, corrupted, tick.honest_sent, tick.honest_halted, emit, coins, step == 3);
            }
            if (opt.record_tallies) {
                std::vector<TallyView> row(n);
                for (Player i = 0; i < n; ++i) row[i] = got[i].tally;
                out.tallies.push_back(std::move(row));
            }
            for (Player i = 0; i < n; ++i) {
                if (corrupted[i] || ps[i].halted) continue;
                if (apply_step(step, ps[i], got[i], t)) {
                    out.out[i] = ps[i].b;
                    out.halt_loop[i] = loop;
                }
            }
        }
        out.agreed_at_end.push_back(honest_agree(corrupted, ps));
    }
    return out;
}

std::vector<Graded> run_gc(std::uint32_t n, std::uint32_t t, const std::vector<Value>& values,
                           const GcAdversary& adv) {
    check_sizes(n, t, values.size(), adv.corrupted);
    const auto& corrupted = adv.corrupted;

    GcMatrix emit(n, std::vector<GcEmit>(n));
    // counts[i] maps a value to the number of senders i received it from.
    auto exchange = [&](int step, const std::vector<std::optional<Value>>& honest) {
        GcTick tick{n, t, step, &corrupted, honest};
        for (auto& row : emit) std::fill(row.begin(), row.end(), GcEmit{});
        if (adv.strategy) adv.strategy(tick, emit);
        std::vector<std::map<Value, std::uint32_t>> counts(n);
        for (Player i = 0; i < n; ++i) {
            if (corrupted[i]) continue;
            for (Player j = 0; j < n; ++j) {
                if (corrupted[j]) {
                    const GcEmit& e = emit[j][i];
                    if (e.send && e.proper) ++counts[i][e.value];
                } else if (honest[j]) {
                    ++counts[i][*honest[j]];
                }
            }
        }
        return counts;
    };

    std::vector<std::optional<Value>> sent(n);
    for (Player i = 0; i < n; ++i)
        if (!corrupted[i]) sent[i] = values[i];
    auto c2 = exchange(2, sent);

    for (Player i = 0; i < n; ++i) {
        sent[i].reset();
        if (corrupted[i]) continue;
        for (const auto& [x, c] : c2[i])
            if (c >= 2 * t + 1) {
                sent[i] = x;
                break;
            }
    }
    auto c3 = exchange(3, sent);

    std::vector<Graded> out(n);
    for (Player i = 0; i < n; ++i) {
        if (corrupted[i]) continue;
        std::optional<Value> best;
        std::uint32_t best_c = 0;
        for (const auto& [x, c] : c3[i])
            if (c > best_c) {
                best = x;
                best_c = c;
            }
        if (best_c >= 2 * t + 1) out[i] = {best, 2};
        else if (best_c >= t + 1) out[i] = {best, 1};
        else out[i] = {std::nullopt, 0};
    }
    return out;
}

BaOutcome run_ba_star(std::uint32_t n, std::uint32_t t, const std::vector<Value>& values, const BaAdversary& adv,
                      const Digest256& common_r, BbaOptions opt) {
    BaOutcome res;
    res.graded = run_gc(n, t, values, GcAdversary{adv.corrupted, adv.gc});
    std::vector<std::uint8_t> bits(n, 1);
    for (Player i = 0; i < n; ++i)
        if (!adv.corrupted[i] && res.graded[i].grade == 2) bits[i] = 0;
    res.bba = run_bba_star(n, t, bits, BbaAdversary{adv.corrupted, adv.bba}, common_r, opt);
    res.out.assign(n, std::nullopt);
    for (Player i = 0; i < n; ++i) {
        if (adv.corrupted[i] || !res.bba.out[i]) continue;
        if (*res.bba.out[i] == 0) res.out[i] = res.graded[i].value;
    }
    return res;
}

// --- adversaries --------------------------------------------------------------

std::function<void(const BbaTick&, EmitMatrix&)> bba_silent() {
    return [](const BbaTick&, EmitMatrix&) {};
}

std::function<void(const BbaTick&, EmitMatrix&)> bba_random(Rng& rng) {
    return [&rng](const BbaTick& tk, EmitMatrix& e) {
        for (Player j = 0; j < tk.n; ++j) {
            if (!(*tk.corrupted)[j]) continue;
            for (Player i = 0; i < tk.n; ++i) e[j][i] = static_cast<Emit>(rng.below(4));
        }
    };
}

std::function<void(const BbaTick&, EmitMatrix&)> bba_splitter() {
    return [](const BbaTick& tk, EmitMatrix& e) {
        const auto& bad = *tk.corrupted;
        std::vector<Player> mal;
        for (Player j = 0; j < tk.n; ++j)
            if (bad[j]) mal.push_back(j);
        if (mal.empty()) return;

        // Candidate emission patterns toward one recipient: every assignment of
        // {None, Zero, One} to the corrupted senders when that is small, else
        // uniform patterns plus single-sender coin reveals.
        std::vector<std::vector<Emit>> cands;
        if (mal.size() <= 5) {
            std::size_t total = 1;
            for (std::size_t k = 0; k < mal.size(); ++k) total *= 3;
            for (std::size_t code = 0; code < total; ++code) {
                std::vector<Emit> c(mal.size());
                std::size_t x = code;
                for (auto& v : c) {
                    v = static_cast<Emit>(x % 3);
                    x /= 3;
                }
                cands.push_back(std::move(c));
            }
        } else {
            for (Emit u : {Emit::None, Emit::Zero, Emit::One}) {
                cands.emplace_back(mal.size(), u);
                if (tk.step == 3)
                    for (std::size_t k = 0; k < mal.size(); ++k)
                        for (Emit w : {Emit::Zero, Emit::One}) {
                            std::vector<Emit> c(mal.size(), Emit::None);
                            for (std::size_t q = 0; q < mal.size(); ++q)
                                if (q != k && tk.coin_hash[mal[q]] > tk.coin_hash[mal[k]]) c[q] = w;
                            c[k] = w;
                            cands.push_back(std::move(c));
                        }
            }
        }

        // Honest contribution, identical for every recipient.
        TallyView base;
        std::optional<Digest256> honest_coin;
        for (Player j = 0; j < tk.n; ++j) {
            if (bad[j]) continue;
            if (!tk.honest_sent[j]) continue;
            if (*tk.honest_sent[j] == 0) ++base.zeros;
            else ++base.ones;
            if (tk.step == 3 && !tk.honest_halted[j] && (!honest_coin || tk.coin_hash[j] < *honest_coin))
                honest_coin = tk.coin_hash[j];
        }

        const std::uint32_t q = 2 * tk.t + 1;
        std::uint32_t parity = 0;
        for (Player i = 0; i < tk.n; ++i) {
            if (bad[i] || tk.honest_halted[i]) continue;
            const std::uint8_t target = static_cast<std::uint8_t>(parity++ & 1);
            int best_score = -1;
            const std::vector<Emit>* best = &cands.front();
            for (const auto& c : cands) {
                TallyView tv = base;
                std::optional<Digest256> coin = honest_coin;
                for (std::size_t k = 0; k < mal.size(); ++k) {
                    if (c[k] == Emit::Zero) ++tv.zeros;
                    else if (c[k] == Emit::One) ++tv.ones;
                    else continue;
                    if (tk.step == 3 && (!coin || tk.coin_hash[mal[k]] < *coin)) coin = tk.coin_hash[mal[k]];
                }
                bool halts = false;
                std::uint8_t b;
                if (tk.step == 1) {
                    halts = tv.zeros >= q;
                    b = halts ? 0 : (tv.ones >= q ? 1 : 0);
                } else if (tk.step == 2) {
                    halts = tv.ones >= q;
                    b = halts ? 1 : (tv.zeros >= q ? 0 : 1);
                } else {
                    b = tv.zeros >= q ? 0 : (tv.ones >= q ? 1 : (coin && coin->lsb() ? 1 : 0));
                }
                int score = (halts ? 0 : 2) + (b == target ? 1 : 0);
                if (score > best_score) {
                    best_score = score;
                    best = &c;
                }
            }
            for (std::size_t k = 0; k < mal.size(); ++k) e[mal[k]][i] = (*best)[k];
        }
    };
}

std::function<void(const GcTick&, GcMatrix&)> gc_silent() {
    return [](const GcTick&, GcMatrix&) {};
}

std::function<void(const GcTick&, GcMatrix&)> gc_random(Rng& rng, Value domain) {
    return [&rng, domain](const GcTick& tk, GcMatrix& e) {
        for (Player j = 0; j < tk.n; ++j) {
            if (!(*tk.corrupted)[j]) continue;
            for (Player i = 0; i < tk.n; ++i) {
                GcEmit g;
                std::uint64_t k = rng.below(4);
                g.send = k != 0;
                g.proper = k != 3;
                g.value = rng.below(domain);
                e[j][i] = g;
            }
        }
    };
}

std::function<void(const GcTick&, GcMatrix&)> gc_equivocator(Value a, Value b) {
    return [a, b](const GcTick& tk, GcMatrix& e) {
        for (Player j = 0; j < tk.n; ++j) {
            if (!(*tk.corrupted)[j]) continue;
            for (Player i = 0; i < tk.n; ++i) e[j][i] = GcEmit{true, true, (i % 2) ? b : a};
        }
    };
}

bool agreement(const std::vector<bool>& corrupted, const std::vector<std::optional<std::uint8_t>>& out) {
    std::optional<std::uint8_t> seen;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (corrupted[i] || !out[i]) continue;
        if (seen && *seen != *out[i]) return false;
        seen = out[i];
    }
    return true;
}

bool graded_properties(const std::vector<bool>& corrupted, const std::vector<Value>& inputs,
                       const std::vector<Graded>& g) {
    std::optional<Value> unanimous;
    bool same = true;
    std::optional<Value> positive;
    int lo = 2, hi = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (corrupted[i]) continue;
        if (unanimous && *unanimous != inputs[i]) same = false;
        unanimous = inputs[i];
        lo = std::min(lo, g[i].grade);
        hi = std::max(hi, g[i].grade);
        if (g[i].grade > 0) {
            if (!g[i].value) return false;
            if (positive && *positive != *g[i].value) return false;
            positive = g[i].value;
        }
    }
    if (hi - lo > 1) return false;
    if (same && unanimous)
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!corrupted[i] && (g[i].grade != 2 || g[i].value != unanimous)) return false;
    return true;
}

}  // namespace sortilab::ba

namespace sortilab::ba {

void CampaignStats::merge(const CampaignStats& o) {
    trials += o.trials;
    ba_agreement_violations += o.ba_agreement_violations;
    ba_consistency_violations += o.ba_consistency_violations;
    bba_agreement_violations += o.bba_agreement_violations;
    bba_consistency_violations += o.bba_consistency_violations;
    graded_violations += o.graded_violations;
    exceeded += o.exceeded;
    loops_total += o.loops_total;
    loops_max = std::max(loops_max, o.loops_max);
    split_loops += o.split_loops;
    split_loops_agreed += o.split_loops_agreed;
}

namespace {

enum class Adv { Silent, Random, Splitter, Equivocate };

std::optional<Value> honest_common(const std::vector<bool>& bad, const std::vector<Value>& in) {
    std::optional<Value> v;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (bad[i]) continue;
        if (v && *v != in[i]) return std::nullopt;
        v = in[i];
    }
    return v;
}

void record_bba(CampaignStats& st, const std::vector<bool>& bad, const std::vector<std::uint8_t>& bits,
                const BbaOutcome& o) {
    if (o.exceeded) ++st.exceeded;
    if (!agreement(bad, o.out)) ++st.bba_agreement_violations;
    std::vector<Value> as_values(bits.begin(), bits.end());
    if (auto c = honest_common(bad, as_values)) {
        for (std::size_t i = 0; i < bits.size(); ++i)
            if (!bad[i] && o.out[i] != std::optional<std::uint8_t>(static_cast<std::uint8_t>(*c))) {
                ++st.bba_consistency_violations;
                break;
            }
    }
    st.loops_total += o.loops;
    st.loops_max = std::max(st.loops_max, o.loops);
    for (std::size_t l = 0; l < o.agreed_at_start.size(); ++l) {
        if (o.agreed_at_start[l]) continue;
        ++st.split_loops;
        if (o.agreed_at_end[l]) ++st.split_loops_agreed;
    }
}

void record_ba(CampaignStats& st, const std::vector<bool>& bad, const std::vector<Value>& in, const BaOutcome& o) {
    if (!graded_properties(bad, in, o.graded)) ++st.graded_violations;
    std::optional<std::optional<Value>> seen;
    bool agree = true, all_out = true;
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (bad[i]) continue;
        if (!o.bba.out[i]) all_out = false;
        if (seen && *seen != o.out[i]) agree = false;
        seen = o.out[i];
    }
    if (!agree || !all_out || o.bba.exceeded) ++st.ba_agreement_violations;
    if (auto c = honest_common(bad, in)) {
        for (std::size_t i = 0; i < in.size(); ++i)
            if (!bad[i] && o.out[i] != std::optional<Value>(*c)) {
                ++st.ba_consistency_violations;
                break;
            }
    }
}

void run_one(CampaignStats& st, std::uint32_t n, std::uint32_t t, const std::vector<bool>& bad,
             const std::vector<Value>& values, Adv kind, Rng& rng, const Digest256& common_r) {
    BaAdversary ba{bad, {}, {}};
    BbaAdversary bba{bad, {}};
    switch (kind) {
        case Adv::Silent:
            ba.gc = gc_silent();
            ba.bba = bba.strategy = bba_silent();
            break;
        case Adv::Random:
            ba.gc = gc_random(rng, 3);
            ba.bba = bba.strategy = bba_random(rng);
            break;
        case Adv::Splitter:
            ba.gc = gc_random(rng, 3);
            ba.bba = bba.strategy = bba_splitter();
            break;
        case Adv::Equivocate:
            ba.gc = gc_equivocator(values.front(), values.front() + 1);
            ba.bba = bba.strategy = bba_splitter();
            break;
    }
    BbaOptions opt;
    opt.max_loops = 200;
    record_ba(st, bad, values, run_ba_star(n, t, values, ba, common_r, opt));
    std::vector<std::uint8_t> bits(n);
    for (Player i = 0; i < n; ++i) bits[i] = static_cast<std::uint8_t>(values[i] & 1u);
    record_bba(st, bad, bits, run_bba_star(n, t, bits, bba, hash(Encoder().tag("bba").digest(common_r)), opt));
    ++st.trials;
}

std::vector<bool> random_corruption(std::uint32_t n, std::uint32_t t, Rng& rng) {
    std::vector<Player> ids(n);
    for (Player i = 0; i < n; ++i) ids[i] = i;
    for (std::uint32_t i = n; i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    std::vector<bool> bad(n, false);
    for (std::uint32_t k = 0; k < t; ++k) bad[ids[k]] = true;
    return bad;
}

void check_nt(std::uint32_t n, std::uint32_t t) {
    if (n < 3 * t + 1) throw std::invalid_argument("need n >= 3t+1 (got n=" + std::to_string(n) +
                                                   ", t=" + std::to_string(t) + ")");
}

}  // namespace

CampaignStats random_campaign(std::uint32_t n, std::uint32_t t, std::uint64_t trials, std::uint64_t seed) {
    check_nt(n, t);
    Rng rng(seed);
    CampaignStats st;
    for (std::uint64_t k = 0; k < trials; ++k) {
        const auto bad = random_corruption(n, t, rng);
        std::vector<Value> values(n);
        const bool unanimous = rng.bernoulli(0.3);
        const Value common = rng.below(3);
        for (auto& v : values) v = unanimous ? common : rng.below(3);
        const Adv kind = static_cast<Adv>(rng.below(4));
        const Digest256 cr = hash(Encoder().tag("campaign").u64(seed).u64(k));
        run_one(st, n, t, bad, values, kind, rng, cr);
    }
    return st;
}

CampaignStats exhaustive_campaign(std::uint32_t n, std::uint32_t t, std::uint64_t seed) {
    check_nt(n, t);
    if (n > 16) throw std::invalid_argument("exhaustive campaign is limited to n <= 16");
    Rng rng(seed);
    CampaignStats st;
    std::uint64_t k = 0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::uint32_t>(__builtin_popcount(mask)) != t) continue;
        std::vector<bool> bad(n);
        for (Player i = 0; i < n; ++i) bad[i] = (mask >> i) & 1u;
        for (std::uint32_t in = 0; in < (1u << n); ++in) {
            std::vector<Value> values(n);
            for (Player i = 0; i < n; ++i) values[i] = (in >> i) & 1u;
            for (Adv kind : {Adv::Silent, Adv::Splitter, Adv::Equivocate, Adv::Random, Adv::Random}) {
                const Digest256 cr = hash(Encoder().tag("exhaustive").u64(seed).u64(k++));
                run_one(st, n, t, bad, values, kind, rng, cr);
            }
        }
    }
    return st;
}

CampaignStats progress_campaign(std::uint32_t n, std::uint32_t t, std::uint64_t trials, std::uint64_t seed) {
    check_nt(n, t);
    Rng rng(seed);
    CampaignStats st;
    BbaOptions opt;
    opt.max_loops = 200;
    for (std::uint64_t k = 0; k < trials; ++k) {
        const auto bad = random_corruption(n, t, rng);
        // t+1 honest ones: enough for the corrupted votes to lift some honest
        // players, and only some, over 2t+1 in the first fixed step.
        std::vector<std::uint8_t> bits(n);
        std::uint32_t ones = 0;
        for (Player i = 0; i < n; ++i)
            if (!bad[i] && ones < t + 1) {
                bits[i] = 1;
                ++ones;
            }
        const Digest256 cr = hash(Encoder().tag("progress").u64(seed).u64(k));
        record_bba(st, bad, bits, run_bba_star(n, t, bits, BbaAdversary{bad, bba_splitter()}, cr, opt));
        ++st.trials;
    }
    return st;
}

}  // namespace sortilab::ba
