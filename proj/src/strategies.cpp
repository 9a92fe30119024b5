#include <algorithm>
#include <stdexcept>

#include "sortilab/simnet.hpp"

namespace sortilab::simnet {

using consensus::Message;
using consensus::MsgKind;

namespace {

Time random_delay(Rng& rng, Time bound) { return bound * Time(static_cast<std::int64_t>(rng.below(17)), 16); }

void deliver_to(Simulator& sim, const MsgPtr& m, const std::vector<UserId>& to, Time at) {
    for (UserId u : to) sim.deliver(m, u, at);
}

// Re-signs a corrupted user's vote with a different bit or value. Fails on erased keys.
MsgPtr resign(Simulator& sim, UserId u, const Vote& v, std::optional<std::uint8_t> bit, const VoteValue& val) {
    try {
        Vote w = v;
        w.bit = bit;
        w.value = val;
        w.esig = sim.node(u).keychain().sign_retaining(v.round, v.step, vote_payload(v.round, v.step, bit, val));
        return consensus::make_vote_msg(w);
    } catch (const AlreadyConsumed&) {
        ++sim.counters().erased_key_refusals;
    } catch (const OutOfRange&) {
    }
    return nullptr;
}

class Honest : public Strategy {
public:
    std::string name() const override { return "honest"; }
    void attach(Simulator& sim) override { rng_ = sim.rng().fork(1); }
    Time delay(Simulator&, const MsgPtr&, UserId, UserId, Time bound) override { return random_delay(rng_, bound); }

protected:
    Rng rng_;
};

class Saturate : public Strategy {
public:
    std::string name() const override { return "saturate"; }
    Time delay(Simulator&, const MsgPtr&, UserId, UserId, Time bound) override { return bound; }
};

// Corrupted users stay silent; a corrupted leader still shows its credential
// where the protocol lets it, so that honest users wait for a block that never comes.
class Withhold : public Saturate {
public:
    std::string name() const override { return "withhold"; }
    void malicious_send(Simulator& sim, UserId from, const MsgPtr& m, bool originate) override {
        if (originate && m->kind == MsgKind::CredentialOnly) sim.broadcast(from, m);
    }
};

// Splits the honest users into two halves and shows them different things.
class Splitter : public Saturate {
public:
    void attach(Simulator& sim) override {
        auto honest = sim.honest_users();
        for (std::size_t i = 0; i < honest.size(); ++i) (i % 2 ? b_ : a_).push_back(honest[i]);
        mal_ = sim.malicious_users();
    }

protected:
    void to_all_malicious(Simulator& sim, const MsgPtr& m) { deliver_to(sim, m, mal_, sim.now()); }

    // Two different votes from one corrupted user: one per half.
    void split_vote(Simulator& sim, UserId from, const MsgPtr& m) {
        const Vote& v = *m->vote;
        MsgPtr other;
        if (v.bit) {
            const std::uint8_t nb = *v.bit ^ 1u;
            VoteValue val = v.value;
            if (nb == 0 && val.bottom) {
                other = nullptr;
            } else {
                other = resign(sim, from, v, nb, val);
            }
        } else if (auto it = twin_.find(v.value); it != twin_.end()) {
            other = resign(sim, from, v, std::nullopt, it->second);
        }
        to_all_malicious(sim, m);
        deliver_to(sim, m, a_, sim.now());
        deliver_to(sim, other ? other : m, b_, sim.now());
    }

    // A second block from a corrupted proposer: the same payset plus one self-payment.
    MsgPtr twin_proposal(Simulator& sim, UserId from, const MsgPtr& m) {
        Block b = *m->block;
        Payment extra = make_payment(sim.node(from).keypair(), from, 1, b.round, sim.params().payment_window,
                                     Bytes{0x7a});
        b.payset.push_back(extra);
        std::sort(b.payset.begin(), b.payset.end(), canonical_less);
        try {
            auto es = sim.node(from).keychain().sign_retaining(b.round, 1, consensus::proposal_payload(b.round, b.hash()));
            MsgPtr t = consensus::make_proposal_msg(b, es, m->cred);
            const auto leader = sim.params().variant == Variant::Alg2 ? std::optional<UserId>(from) : std::nullopt;
            twin_[VoteValue::of(m->block_hash, leader)] = VoteValue::of(t->block_hash, leader);
            twin_[VoteValue::of(t->block_hash, leader)] = VoteValue::of(m->block_hash, leader);
            return t;
        } catch (const AlreadyConsumed&) {
            ++sim.counters().erased_key_refusals;
            return nullptr;
        }
    }

    std::vector<UserId> a_, b_, mal_;
    std::map<VoteValue, VoteValue> twin_;
};

class Equivocate : public Splitter {
public:
    std::string name() const override { return "equivocate"; }
    void malicious_send(Simulator& sim, UserId from, const MsgPtr& m, bool originate) override {
        if (!originate) {
            sim.broadcast(from, m);
            return;
        }
        switch (m->kind) {
            case MsgKind::Proposal: {
                MsgPtr t = twin_proposal(sim, from, m);
                to_all_malicious(sim, m);
                deliver_to(sim, m, a_, sim.now());
                deliver_to(sim, t ? t : m, b_, sim.now());
                break;
            }
            case MsgKind::Vote: split_vote(sim, from, m); break;
            default: sim.broadcast(from, m); break;
        }
    }
};

// The corrupted leader's block reaches half of the honest users just before
// their step-2 deadline and the other half only through relays.
class Targeted : public Splitter {
public:
    std::string name() const override { return "targeted"; }
    void malicious_send(Simulator& sim, UserId from, const MsgPtr& m, bool originate) override {
        if (!originate) {
            sim.broadcast(from, m);
            return;
        }
        const auto& p = sim.params();
        switch (m->kind) {
            case MsgKind::Proposal: {
                const Time late = consensus::step_deadline(p, 2) - p.lambda / Time(2);
                to_all_malicious(sim, m);
                deliver_to(sim, m, a_, sim.now() + late);
                break;
            }
            case MsgKind::Vote:
                if (m->vote->bit)
                    split_vote(sim, from, m);
                else
                    sim.broadcast(from, m);
                break;
            default: sim.broadcast(from, m); break;
        }
    }
};

// Adversarial partition in the uncapped variant. During round kForkRound the
// larger side A (with every corrupted user) falls just short of t_H on its own;
// corrupted users hide their 0-votes from A and hand them, with A's step-4
// 0-votes, to the smaller side B. A certifies the empty block, B the proposed
// one. A alone can then extend its branch; the partition heals after that.
class ForkPartition : public Saturate {
public:
    static constexpr Round kForkRound = 2;

    std::string name() const override { return "fork_partition"; }

    void attach(Simulator& sim) override {
        if (sim.params().variant != Variant::Alg2)
            throw std::invalid_argument("fork_partition drives the alg2 recovery rules; use --variant alg2");
        const auto honest = sim.honest_users();
        const auto mal = sim.malicious_users();
        const std::uint64_t tH = sim.params().t_H, M = mal.size();
        if (M == 0 || tH <= M) throw std::invalid_argument("fork_partition needs 0 < #malicious < t_H");
        const std::uint64_t ha = tH - M + 1;
        if (ha >= honest.size() || (honest.size() - ha) + M >= tH)
            throw std::invalid_argument("fork_partition: no split with |A| < t_H <= |A|+M and |B|+M < t_H");
        comp_.assign(sim.size(), 0);
        for (std::size_t i = ha; i < honest.size(); ++i) {
            comp_[honest[i]] = 1;
            b_.push_back(honest[i]);
        }
        for (std::size_t i = 0; i < ha; ++i) a_side_.push_back(honest[i]);
        for (UserId u : mal) a_side_.push_back(u);
    }

    void round_started(Simulator& sim, Round r, const EntryPtr&) override {
        if (r == kForkRound && !started_) {
            started_ = true;
            sim.set_partition(comp_);
        }
    }

    void observe(Simulator& sim, UserId from, const MsgPtr& m) override {
        if (!sim.partitioned() || m->round != kForkRound) return;
        if (m->step == 1) {
            // step-1 messages cross the partition through the adversary
            const auto& other = comp_[from] == 0 ? b_ : a_side_;
            deliver_to(sim, m, other, sim.now());
        } else if (m->kind == MsgKind::Vote && m->step == 4 && m->vote->bit == std::optional<std::uint8_t>(0) &&
                   comp_[from] == 0) {
            deliver_to(sim, m, b_, sim.now());
        }
    }

    void malicious_send(Simulator& sim, UserId from, const MsgPtr& m, bool) override {
        if (healed_) {
            sim.broadcast(from, m);
            return;
        }
        if (m->round == kForkRound && m->kind == MsgKind::Vote && m->vote->bit == std::optional<std::uint8_t>(0)) {
            if (m->step == 4) deliver_to(sim, m, b_, sim.now());
            return;
        }
        if (m->round == kForkRound && m->step == 1) {
            deliver_to(sim, m, a_side_, sim.now());
            deliver_to(sim, m, b_, sim.now());
            return;
        }
        deliver_to(sim, m, a_side_, sim.now());
    }

    void decided(Simulator& sim, UserId u, Round r, const EntryPtr&) override {
        if (r == kForkRound + 1 && !sim.corrupted(u) && comp_[u] == 0 && !heal_scheduled_) {
            heal_scheduled_ = true;
            sim.schedule_wake(sim.now() + sim.params().lambda, 1);
        }
    }

    void wake(Simulator& sim, std::uint64_t tag) override {
        if (tag == 1 && !healed_) {
            healed_ = true;
            sim.heal();
        }
    }

private:
    std::vector<int> comp_;
    std::vector<UserId> a_side_, b_;
    bool started_ = false;
    bool heal_scheduled_ = false;
    bool healed_ = false;
};

// Corrupts users right after they finish a round, then tries to produce a
// competing certificate for that round with everything it now holds.
class PostHaltCorrupt : public Honest {
public:
    std::string name() const override { return "post_halt_corrupt"; }
    std::uint32_t initial_corruptions(const SimConfig&) const override { return 0; }

    void decided(Simulator& sim, UserId u, Round r, const EntryPtr& e) override {
        if (sim.corrupted(u) || e->cert.votes.empty()) return;
        if (!sim.corrupt(u)) return;
        forge(sim, r, e);
    }

private:
    void forge(Simulator& sim, Round r, const EntryPtr& e) {
        const Certificate& cert = e->cert;
        const Committee& c = sim.committee(e->parent);
        const Step vs = cert.vote_step();
        // Competing value at the same vote step, and the opposite bit one step later.
        struct Attempt {
            Step step;
            std::uint8_t bit;
            VoteValue value;
        };
        std::vector<Attempt> attempts;
        const Digest256 bogus = hash(Encoder().tag("competing").digest(e->hash));
        const auto leader = sim.params().variant == Variant::Alg2 && cert.leader
                                ? std::optional<UserId>(cert.leader->cred.user)
                                : std::nullopt;
        if (cert.bit == 0) attempts.push_back({vs, 0, VoteValue::of(bogus, leader)});
        if (cert.bit == 1 || cert.final_step) attempts.push_back({vs, 0, VoteValue::of(bogus, leader)});
        attempts.push_back({vs + 1, static_cast<std::uint8_t>(cert.bit ^ 1u), VoteValue::of(c.empty_hash())});

        for (const auto& a : attempts) {
            Certificate alt;
            alt.round = r;
            alt.bit = a.bit;
            alt.final_step = false;
            alt.ending_step = a.step + 1;
            if (!ending_parity_ok(alt.ending_step, a.bit)) continue;
            alt.leader = a.bit == 0 ? cert.leader : std::nullopt;
            for (UserId u : sim.malicious_users()) {
                auto& kc = sim.node(u).keychain();
                try {
                    Vote v;
                    v.round = r;
                    v.step = a.step;
                    v.bit = a.bit;
                    v.value = a.value;
                    v.creds = {make_credential(sim.node(u).keypair(), r, a.step, c.q_prev)};
                    if (!credential_valid(c, v.creds[0], a.step)) continue;
                    v.esig = kc.sign_retaining(r, a.step, vote_payload(r, a.step, v.bit, v.value));
                    ++sim.counters().forged_signatures;
                    alt.votes.push_back(std::move(v));
                } catch (const AlreadyConsumed&) {
                    ++sim.counters().erased_key_refusals;
                } catch (const OutOfRange&) {
                }
            }
            const Digest256 claimed = a.bit == 1 ? c.empty_hash() : a.value.hash;
            if (!alt.votes.empty() && verify_certificate(alt, claimed, c)) ++sim.counters().forged_certificates;
        }
    }
};

}  // namespace

std::vector<std::string> strategy_names() {
    return {"honest", "saturate", "withhold", "equivocate", "targeted", "fork_partition", "post_halt_corrupt"};
}

std::unique_ptr<Strategy> make_strategy(const std::string& name) {
    if (name == "honest") return std::make_unique<Honest>();
    if (name == "saturate") return std::make_unique<Saturate>();
    if (name == "withhold") return std::make_unique<Withhold>();
    if (name == "equivocate") return std::make_unique<Equivocate>();
    if (name == "targeted") return std::make_unique<Targeted>();
    if (name == "fork_partition") return std::make_unique<ForkPartition>();
    if (name == "post_halt_corrupt") return std::make_unique<PostHaltCorrupt>();
    std::string all;
    for (const auto& n : strategy_names()) all += (all.empty() ? "" : ", ") + n;
    throw std::invalid_argument("unknown adversary '" + name + "' (known: " + all + ")");
}

}  // namespace sortilab::simnet
