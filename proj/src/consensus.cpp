#include "sortilab/consensus.hpp"

#include <algorithm>
#include <stdexcept>

namespace sortilab::consensus {

std::string to_string(Variant v) { return v == Variant::Alg1 ? "alg1" : "alg2"; }

Variant variant_from_string(const std::string& s) {
    if (s == "alg1" || s == "capped") return Variant::Alg1;
    if (s == "alg2" || s == "uncapped") return Variant::Alg2;
    throw std::invalid_argument("unknown variant '" + s + "' (expected alg1 or alg2)");
}

StepKind step_kind(Step s, Step final_step) {
    switch (s) {
        case 1: return StepKind::Propose;
        case 2: return StepKind::GcFirst;
        case 3: return StepKind::GcSecond;
        case 4: return StepKind::GcOutput;
        default: break;
    }
    if (final_step != 0 && s == final_step) return StepKind::Final;
    switch ((s - 2) % 3) {
        case 0: return StepKind::Fixed0;
        case 1: return StepKind::Fixed1;
        default: return StepKind::Coin;
    }
}

const char* to_string(StepKind k) {
    switch (k) {
        case StepKind::Propose: return "propose";
        case StepKind::GcFirst: return "gc-1";
        case StepKind::GcSecond: return "gc-2";
        case StepKind::GcOutput: return "gc-out";
        case StepKind::Fixed0: return "fixed-0";
        case StepKind::Fixed1: return "fixed-1";
        case StepKind::Coin: return "coin";
        case StepKind::Final: return "final";
    }
    return "?";
}

Time small_bound(const ProtocolParams& p, Step s) {
    if (p.variant == Variant::Alg2 && s > p.mu) return p.lambda * p.cascade_factor;
    return p.lambda;
}

Time step_deadline(const ProtocolParams& p, Step s) {
    if (s <= 1) return Time(0);
    if (p.variant == Variant::Alg1) return Time(2 * static_cast<std::int64_t>(s) - 3) * p.lambda + p.Lambda;
    if (s == 2) return p.lambda + p.Lambda;
    if (s == 3) return Time(3) * p.lambda + p.Lambda;
    return Time(2) * small_bound(p, s);
}

// --- chain entries --------------------------------------------------------------

int compare_entries(const ChainEntry& a, const ChainEntry& b) {
    if (a.height != b.height) return a.height > b.height ? -1 : 1;
    if (a.hash == b.hash) return 0;
    if (a.empty() != b.empty()) return a.empty() ? 1 : -1;
    if (a.leader && b.leader && a.leader->cred.hash != b.leader->cred.hash)
        return a.leader->cred.hash < b.leader->cred.hash ? -1 : 1;
    return a.hash < b.hash ? -1 : 1;
}

bool is_ancestor(const ChainEntry& anc, const ChainEntry& e) {
    const ChainEntry* cur = &e;
    while (cur && cur->height > anc.height) cur = cur->parent.get();
    return cur && cur->hash == anc.hash;
}

ProvenChain proven_chain(const EntryPtr& tip) {
    ProvenChain out;
    for (const ChainEntry* e = tip.get(); e && !e->genesis; e = e->parent.get()) {
        if (!e->block) throw std::runtime_error("proven_chain: block of round " + std::to_string(e->round) + " unknown");
        ProvenBlock pb;
        pb.block = *e->block;
        pb.cert = e->cert;
        if (e->leader && !e->empty()) pb.leader_credential = e->leader->cred;
        out.push_back(std::move(pb));
    }
    std::reverse(out.begin(), out.end());
    return out;
}

bool ChainHistory::contains(const Digest256& id) const {
    const ChainEntry* e = parent_;
    for (Round i = 0; i < window_ && e && !e->genesis; ++i, e = e->parent.get())
        if (e->payment_ids.count(id)) return true;
    return false;
}

Registry::Registry(const Genesis& g) {
    genesis_ = std::make_shared<ChainEntry>();
    genesis_->genesis = true;
    genesis_->hash = g.hash();
    genesis_->seed = g.seed;
    genesis_->status = g.status;
    by_hash_[genesis_->hash] = genesis_;
}

EntryPtr Registry::find(const Digest256& h) const {
    auto it = by_hash_.find(h);
    return it == by_hash_.end() ? nullptr : it->second;
}

EntryPtr Registry::intern(const EntryPtr& parent, const Digest256& hash, const Certificate& cert,
                          const std::optional<LeaderEvidence>& leader, const Block* block) {
    if (auto e = find(hash)) {
        if (block && !e->block) attach_block(e, *block);
        if (!e->leader && leader) e->leader = leader;
        return e;
    }
    auto e = std::make_shared<ChainEntry>();
    e->round = parent->next_round();
    e->hash = hash;
    e->parent = parent;
    e->height = parent->height + 1;
    e->cert = cert;
    e->leader = leader;
    if (cert.bit == 1) {
        Block eb = empty_block(e->round, parent->seed, parent->hash);
        e->seed = next_seed(parent->seed, e->round, eb);
        by_hash_[hash] = e;
        attach_block(e, eb);
        return e;
    }
    if (block) {
        e->seed = next_seed(parent->seed, e->round, *block);
    } else if (leader) {
        Block stub;
        stub.leader_seed_sig = leader->seed_sig;
        e->seed = next_seed(parent->seed, e->round, stub);
    } else {
        throw std::invalid_argument("Registry::intern: non-empty entry without block or leader evidence");
    }
    by_hash_[hash] = e;
    if (block) attach_block(e, *block);
    return e;
}

void Registry::attach_block(const EntryPtr& e, const Block& b) {
    if (!e->block) {
        e->block = b;
        for (const auto& p : b.payset) e->payment_ids.insert(p.id());
    }
    if (!e->status && e->parent && e->parent->status) {
        e->status = apply_payset(*e->parent->status, e->block->payset);
        // children that arrived first
        for (auto& [h, c] : by_hash_)
            if (c->parent == e && c->block && !c->status) attach_block(c, *c->block);
    }
}

// --- messages ----------------------------------------------------------------------

std::optional<LeaderEvidence> Message::evidence() const {
    if (kind == MsgKind::Proposal && block && block->leader_seed_sig) return LeaderEvidence{*block->leader_seed_sig, cred};
    if (kind == MsgKind::CredentialOnly) return LeaderEvidence{seed_sig, cred};
    return std::nullopt;
}

Bytes proposal_payload(Round r, const Digest256& block_hash) {
    return Encoder().tag("proposal").u64(r).digest(block_hash).take();
}

MsgPtr make_payment_msg(const Payment& p) {
    auto m = std::make_shared<Message>();
    m->kind = MsgKind::Payment;
    m->round = p.rho;
    m->origin = p.payer;
    m->payment = p;
    m->id = hash(Encoder().tag("m-pay").digest(p.id()));
    return m;
}

MsgPtr make_proposal_msg(const Block& b, const EphemeralSignature& esig, const Credential& cred) {
    auto m = std::make_shared<Message>();
    m->kind = MsgKind::Proposal;
    m->round = b.round;
    m->step = 1;
    m->origin = cred.user;
    m->block = b;
    m->block_hash = b.hash();
    m->block_esig = esig;
    m->cred = cred;
    m->id = hash(Encoder().tag("m-prop").digest(m->block_hash).blob(esig.sig.bytes).digest(cred.hash));
    return m;
}

MsgPtr make_credential_msg(Round r, const Signature& seed_sig, const Credential& cred) {
    auto m = std::make_shared<Message>();
    m->kind = MsgKind::CredentialOnly;
    m->round = r;
    m->step = 1;
    m->origin = cred.user;
    m->seed_sig = seed_sig;
    m->cred = cred;
    m->id = hash(Encoder().tag("m-cred").u64(r).blob(seed_sig.bytes).digest(cred.hash));
    return m;
}

MsgPtr make_vote_msg(const Vote& v) {
    auto m = std::make_shared<Message>();
    m->kind = MsgKind::Vote;
    m->round = v.round;
    m->step = v.step;
    m->origin = v.voter();
    m->vote = v;
    Encoder e;
    e.tag("m-vote").raw(vote_payload(v.round, v.step, v.bit, v.value)).u32(v.voter()).blob(v.esig.sig.bytes);
    for (const auto& c : v.creds) e.digest(c.hash);
    m->id = hash(e);
    return m;
}

Committee make_committee(const ChainEntry& parent, const ProtocolParams& p, const KeyDirectory& keys) {
    Committee c;
    c.round = parent.next_round();
    c.q_prev = parent.seed;
    c.prev_hash = parent.hash;
    c.keys = &keys;
    c.leader_p = p.leader_p;
    c.verifier_p = p.verifier_p;
    c.weighted = p.weighted;
    c.t_H = p.t_H;
    c.final_step = p.final_step();
    if (p.weighted) {
        const ChainEntry* src = &parent;
        for (Round i = 1; i < p.lookback && src->parent; ++i) src = src->parent.get();
        if (!src->status) throw std::logic_error("weighted committee needs the status of round " + std::to_string(c.round));
        auto st = std::make_shared<const Status>(*src->status);
        const Money total = st->total();
        const std::uint64_t n1 = p.n_leaders, n = p.n_verifiers;
        c.allot = [st, total, n1, n](UserId u, Step s) {
            return weighted_copies(st->balance(u), total, s == 1 ? n1 : n);
        };
    }
    return c;
}

bool message_valid(const Message& m, const ChainEntry& parent, const Committee& c, const ProtocolParams& p) {
    if (m.kind == MsgKind::Payment) return true;
    const Round r = parent.next_round();
    if (m.round != r) return false;
    const KeyDirectory& keys = *c.keys;

    if (m.kind == MsgKind::Proposal) {
        if (!m.block) return false;
        const Block& b = *m.block;
        if (b.round != r || b.prev_hash != parent.hash || !b.leader_seed_sig) return false;
        if (m.cred.user != m.origin || b.leader_seed_sig->signer != m.origin) return false;
        if (b.hash() != m.block_hash) return false;
        if (!credential_valid(c, m.cred, 1)) return false;
        if (!keys.verify(seed_sig_payload(parent.seed), *b.leader_seed_sig)) return false;
        if (m.block_esig.owner != m.origin || m.block_esig.round != r || m.block_esig.step != 1) return false;
        if (!keys.verify_ephemeral(proposal_payload(r, m.block_hash), m.block_esig)) return false;
        if (b.payset.empty()) return true;
        if (!parent.status) return false;
        return payset_valid(b.payset, *parent.status, r, ChainHistory(&parent, p.payment_window), keys);
    }

    if (m.kind == MsgKind::CredentialOnly) {
        if (p.variant != Variant::Alg2 || m.cred.user != m.origin) return false;
        return leader_evidence_valid(c, LeaderEvidence{m.seed_sig, m.cred});
    }

    if (!m.vote) return false;
    const Vote& v = *m.vote;
    if (v.round != r || v.step < 2 || v.voter() != m.origin) return false;
    if (p.variant == Variant::Alg1 && v.step > p.final_step()) return false;
    if (p.variant == Variant::Alg2 && v.step > p.max_steps) return false;
    if (v.step <= 3) {
        if (v.bit) return false;
    } else if (!v.bit || *v.bit > 1) {
        return false;
    }
    if (p.variant == Variant::Alg1) {
        if (v.value.leader) return false;
        if (v.step >= 4 && v.value.bottom) return false;
    } else if (!v.value.bottom && !v.value.leader) {
        return false;
    }
    if (v.bit && *v.bit == 0 && v.value.bottom) return false;
    return vote_weight(c, v) > 0;
}

// --- tallies -----------------------------------------------------------------------

std::uint64_t CleanTally::bit_weight(std::uint8_t b) const {
    std::uint64_t w = 0;
    for (const auto& [k, x] : weight)
        if (k.first && *k.first == b) w += x;
    return w;
}

CleanTally clean_tally(const StepVotes& sv) {
    CleanTally t;
    for (const auto& [voter, votes] : sv) {
        const Vote& first = votes.front();
        bool consistent = true;
        for (const auto& v : votes)
            if (v.bit != first.bit || v.value != first.value) consistent = false;
        if (!consistent) continue;
        t.weight[{first.bit, first.value}] += first.weight();
        t.total += first.weight();
        for (const auto& c : first.creds)
            if (!t.min_cred || c.hash < *t.min_cred) t.min_cred = c.hash;
    }
    return t;
}

// --- node --------------------------------------------------------------------------

namespace {

constexpr int kAlg1Step = 0;
constexpr int kLeaderFix = 1;
constexpr int kT2 = 2;
constexpr int kT3 = 3;
constexpr int kStepTimeout = 4;

constexpr Step kNoLimit = ~Step{0};

std::string short_hex(const VoteValue& v) {
    if (v.bottom) return "bottom";
    std::string s = v.hash.hex().substr(0, 12);
    if (v.leader) s += "/" + std::to_string(*v.leader);
    return s;
}

}  // namespace

Node::Node(UserId id, LongTermKeypair kp, EphemeralKeychain chain, NodeEnv& env)
    : id_(id), kp_(std::move(kp)), chain_(std::move(chain)), env_(env) {}

bool Node::has_block(const Digest256& h) const { return known_.count(h) && !missing_blocks_.count(h); }

std::size_t Node::orphan_count() const {
    std::size_t n = 0;
    for (const auto& [r, v] : orphans_) n += v.size();
    return n;
}

void Node::note(Round r, Step s, std::string action, std::string detail, Time now) {
    if (!env_.record_log()) return;
    log_.push_back(LogRecord{r, s, std::move(action), std::move(detail), to_double(now)});
}

std::uint64_t Node::tag(Step s, int what) const {
    return (epoch_ << 24) | (static_cast<std::uint64_t>(s & 0xFFFFF) << 4) | static_cast<std::uint64_t>(what);
}

Node::Inbox& Node::inbox(Round r, const EntryPtr& parent) {
    auto [it, fresh] = inboxes_.try_emplace(InboxKey{r, parent->hash});
    if (fresh) {
        it->second.parent = parent;
        it->second.r = r;
        it->second.c = &env_.committee(parent);
    }
    return it->second;
}

VoteValue Node::empty_value(const Inbox& in) const { return VoteValue::of(in.c->empty_hash()); }

std::optional<UserId> Node::leader_of(const Inbox& in) const {
    if (in.evidence.empty()) return std::nullopt;
    std::vector<Credential> creds;
    creds.reserve(in.evidence.size());
    for (const auto& [u, e] : in.evidence) creds.push_back(e.cred);
    return leader_among(creds, *in.c->keys).first;
}

std::vector<Credential> Node::my_creds(const Committee& c, Step s) const {
    if (c.eligible && !c.eligible(id_)) return {};
    if (c.weighted) return selected_copies(kp_, c.round, s, c.q_prev, c.allot(id_, s));
    Credential cr = make_credential(kp_, c.round, s, c.q_prev);
    if (!selected(cr, s == 1 ? c.leader_p : c.verifier_p)) return {};
    return {cr};
}

void Node::start(const EntryPtr& genesis, Time now) {
    known_[genesis->hash] = genesis;
    by_next_[0].push_back(genesis);
    begin_round(genesis, now);
}

void Node::begin_round(const EntryPtr& parent, Time now) {
    tip_ = parent;
    ++epoch_;
    const Round r = parent->next_round();
    act_ = Active{};
    act_.r = r;
    act_.start = now;
    act_.epoch = epoch_;
    act_.in = &inbox(r, parent);
    act_.v = VoteValue::none();

    for (auto it = inboxes_.begin(); it != inboxes_.end();) {
        if (it->first.first + 2 < r && &it->second != act_.in)
            it = inboxes_.erase(it);
        else
            ++it;
    }
    while (!orphans_.empty() && orphans_.begin()->first + 1 < r) orphans_.erase(orphans_.begin());
    std::erase_if(pending_, [&](const Payment& p) { return p.rho + p.window < r; });
    const Round keep = env_.params().payment_window + 2;
    while (!payments_seen_.empty() && payments_seen_.begin()->first + keep < r) payments_seen_.erase(payments_seen_.begin());
    while (!by_next_.empty() && by_next_.begin()->first + 3 < r) by_next_.erase(by_next_.begin());

    env_.round_started(id_, r, parent, now);
    note(r, 1, "start", parent->hash.hex().substr(0, 12), now);

    const ProtocolParams& p = env_.params();
    propose(now);
    if (p.variant == Variant::Alg1) {
        act_.step = 1;
        alg1_schedule_after(1);
        if (auto hit = scan_endings(*act_.in, kNoLimit)) certify(*act_.in, *hit, now);
    } else {
        act_.step = 2;
        const Time fix = std::min(Time(2) * p.lambda, step_deadline(p, 2));
        env_.set_timer(id_, now + fix, tag(2, kLeaderFix));
        env_.set_timer(id_, now + step_deadline(p, 2), tag(2, kT2));
        env_.set_timer(id_, now + step_deadline(p, 3), tag(3, kT3));
        alg2_progress(now);
    }
}

bool Node::blocks_complete() const {
    for (const auto& h : missing_blocks_) {
        auto it = known_.find(h);
        if (it != known_.end() && is_ancestor(*it->second, *tip_)) return false;
    }
    return true;
}

void Node::propose(Time now) {
    Inbox& in = *act_.in;
    const Committee& c = *in.c;
    auto creds = my_creds(c, 1);
    if (creds.empty()) return;
    const Credential cred = *std::min_element(creds.begin(), creds.end(),
                                              [](const Credential& a, const Credential& b) { return a.hash < b.hash; });
    const ProtocolParams& p = env_.params();
    const EntryPtr& parent = in.parent;
    std::vector<Payment> pay;
    const bool may_pay = p.variant == Variant::Alg1 || blocks_complete();
    if (may_pay && parent->status)
        pay = build_maximal_payset(pending_, *parent->status, act_.r, ChainHistory(parent.get(), p.payment_window),
                                   env_.keys());
    Signature seed_sig = sign(kp_, Encoder().raw(seed_sig_payload(parent->seed)));
    Block b = make_block(act_.r, std::move(pay), seed_sig, parent->hash);
    EphemeralSignature es;
    try {
        Bytes payload = proposal_payload(act_.r, b.hash());
        es = malicious_ ? chain_.sign_retaining(act_.r, 1, payload) : chain_.sign(act_.r, 1, payload);
    } catch (const AlreadyConsumed&) {
        note(act_.r, 1, "skip", "step key erased", now);
        return;
    }
    MsgPtr prop = make_proposal_msg(b, es, cred);
    if (p.variant == Variant::Alg2) {
        MsgPtr cm = make_credential_msg(act_.r, seed_sig, cred);
        env_.send(id_, cm, true);
        accept(in, cm, now, false, false);
    }
    env_.send(id_, prop, true);
    accept(in, prop, now, false, false);
    note(act_.r, 1, "propose", b.hash().hex().substr(0, 12) + " pay=" + std::to_string(b.payset.size()), now);
}

bool Node::cast(Step s, std::optional<std::uint8_t> bit, const VoteValue& v, Time now) {
    Inbox& in = *act_.in;
    auto creds = my_creds(*in.c, s);
    if (creds.empty()) return false;
    const Round r = act_.r;
    const ProtocolParams& p = env_.params();
    Bytes payload = vote_payload(r, s, bit, v);
    EphemeralSignature es;
    try {
        if (p.variant == Variant::Alg2) {
            while (s > chain_.last_step(r)) chain_.extend_stash(r, env_.keys());
            if (s == chain_.last_step(r))
                es = *chain_.extend_stash(r, env_.keys(), std::span<const std::uint8_t>(payload));
            else
                es = malicious_ ? chain_.sign_retaining(r, s, payload) : chain_.sign(r, s, payload);
        } else {
            es = malicious_ ? chain_.sign_retaining(r, s, payload) : chain_.sign(r, s, payload);
        }
    } catch (const AlreadyConsumed&) {
        note(r, s, "skip", "step key erased", now);
        return false;
    } catch (const OutOfRange&) {
        note(r, s, "skip", "no key for step", now);
        return false;
    }
    Vote vote{r, s, bit, v, std::move(creds), std::move(es)};
    MsgPtr m = make_vote_msg(vote);
    env_.send(id_, m, true);
    accept(in, m, now, false, false);
    env_.voted(id_, r, s, now);
    note(r, s, to_string(step_kind(s, p.final_step())),
         (bit ? "b=" + std::to_string(*bit) + " " : std::string()) + short_hex(v), now);
    return true;
}

void Node::receive(const MsgPtr& m, Time now) {
    if (m->kind == MsgKind::Payment) {
        if (m->payment->rho + env_.params().payment_window + 2 < round()) return;
        if (!payments_seen_[m->payment->rho].insert(m->id).second) return;
        if (m->payment->rho + m->payment->window >= round()) pending_.push_back(*m->payment);
        env_.send(id_, m, false);
        return;
    }
    const Round r = m->round;
    const Round cur = round();
    if (r + 2 < cur) return;

    bool any = false;
    std::vector<EntryPtr> parents;
    if (auto it = by_next_.find(r); it != by_next_.end()) parents = it->second;
    for (const auto& parent : parents) {
        Inbox& in = inbox(r, parent);
        if (in.seen.count(m->id)) {
            any = true;
            continue;
        }
        if (!env_.valid(m, parent)) continue;
        any = true;
        accept(in, m, now, true, true);
    }
    if (!any && r + 1 >= cur) {
        auto& q = orphans_[r];
        if (q.size() < 20000) q.push_back(m);
    }
}

void Node::retry_orphans(Round r, Time now) {
    auto it = orphans_.find(r);
    if (it == orphans_.end()) return;
    std::vector<MsgPtr> q = std::move(it->second);
    orphans_.erase(it);
    for (const auto& m : q) receive(m, now);
}

void Node::accept(Inbox& in, const MsgPtr& m, Time now, bool relay, bool react) {
    if (!in.seen.insert(m->id).second) return;
    const ProtocolParams& p = env_.params();
    const bool active = (&in == act_.in) && !act_.halted;

    if (m->kind == MsgKind::Proposal || m->kind == MsgKind::CredentialOnly) {
        if (m->kind == MsgKind::Proposal && p.variant == Variant::Alg2 && in.first_proposal.count(m->origin)) {
            return;  // a second proposal from the same user is dropped
        }
        const bool forward = !in.best_cred || m->cred.hash <= *in.best_cred;
        if (forward) in.best_cred = m->cred.hash;
        if (auto ev = m->evidence()) in.evidence.try_emplace(m->origin, *ev);
        if (m->kind == MsgKind::Proposal) {
            in.first_proposal.try_emplace(m->origin, m);
            in.blocks.try_emplace(m->block_hash, *m->block);
            if (missing_blocks_.count(m->block_hash)) {
                missing_blocks_.erase(m->block_hash);
                EntryPtr e = known_.at(m->block_hash);
                env_.registry().attach_block(e, *m->block);
                env_.block_known(id_, in.r, e, now);
            }
        }
        if (relay && forward) env_.send(id_, m, false);
        if (!react) return;
        if (active && p.variant == Variant::Alg2) {
            alg2_progress(now);
        } else if (auto hit = scan_endings(in, kNoLimit)) {
            certify(in, *hit, now);
        }
        return;
    }

    const Vote& v = *m->vote;
    auto& list = in.votes[v.step][v.voter()];
    if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
    if (relay) env_.send(id_, m, false);
    if (!react) return;
    if (active && p.variant == Variant::Alg2) {
        alg2_progress(now);
        return;
    }
    if (auto hit = find_ending(in, v.step, kNoLimit)) certify(in, *hit, now);
}

std::optional<EndingHit> Node::find_ending(const Inbox& in, Step vs, Step max_s_prime) const {
    const ProtocolParams& p = env_.params();
    auto it = in.votes.find(vs);
    if (it == in.votes.end()) return std::nullopt;
    const StepVotes& sv = it->second;
    const std::uint64_t tH = in.c->t_H;
    const Step fin = p.final_step();

    if (fin != 0 && vs == fin) {
        const VoteValue ev = empty_value(in);
        std::uint64_t w = 0;
        for (const auto& [u, votes] : sv)
            for (const auto& v : votes)
                if (v.bit && *v.bit == 1 && v.value == ev) {
                    w += v.weight();
                    break;
                }
        if (w >= tH) return EndingHit{fin, 1, ev, true};
        return std::nullopt;
    }

    const Step sp = vs + 1;
    if (sp > max_s_prime) return std::nullopt;
    if (fin != 0 && sp > fin) return std::nullopt;

    if (ending_parity_ok(sp, 0)) {
        std::map<VoteValue, std::uint64_t> w;
        for (const auto& [u, votes] : sv) {
            std::set<VoteValue> counted;
            for (const auto& v : votes)
                if (v.bit && *v.bit == 0 && !v.value.bottom && counted.insert(v.value).second) w[v.value] += v.weight();
        }
        for (const auto& [val, x] : w) {
            if (x < tH) continue;
            const bool ok = p.variant == Variant::Alg1 ? in.blocks.count(val.hash) != 0
                                                       : (val.leader && in.evidence.count(*val.leader) != 0);
            if (ok) return EndingHit{sp, 0, val, false};
        }
    }
    if (ending_parity_ok(sp, 1)) {
        std::uint64_t w = 0;
        for (const auto& [u, votes] : sv)
            for (const auto& v : votes)
                if (v.bit && *v.bit == 1) {
                    w += v.weight();
                    break;
                }
        if (w >= tH) return EndingHit{sp, 1, empty_value(in), false};
    }
    return std::nullopt;
}

std::optional<EndingHit> Node::scan_endings(const Inbox& in, Step max_s_prime) const {
    for (const auto& [vs, sv] : in.votes) {
        (void)sv;
        if (vs < 4) continue;
        if (auto hit = find_ending(in, vs, max_s_prime)) return hit;
    }
    return std::nullopt;
}

void Node::certify(Inbox& in, const EndingHit& hit, Time now) {
    const Digest256 h = hit.bit == 1 ? in.c->empty_hash() : hit.value.hash;
    if (!in.certified.insert(h).second) return;
    const ProtocolParams& p = env_.params();

    Certificate cert;
    cert.round = in.r;
    cert.ending_step = hit.s_prime;
    cert.bit = hit.bit;
    cert.final_step = hit.final_step;
    const Step vs = cert.vote_step();
    for (const auto& [u, votes] : in.votes[vs]) {
        for (const auto& v : votes) {
            if (!v.bit || *v.bit != hit.bit) continue;
            if ((hit.bit == 0 || hit.final_step) && v.value != hit.value) continue;
            cert.votes.push_back(v);
            break;
        }
    }

    std::optional<LeaderEvidence> ev;
    const Block* block = nullptr;
    Block eb;
    if (hit.bit == 1) {
        eb = empty_block(in.r, in.c->q_prev, in.c->prev_hash);
        block = &eb;
    } else {
        auto bi = in.blocks.find(h);
        if (bi != in.blocks.end()) block = &bi->second;
        if (p.variant == Variant::Alg2) {
            ev = in.evidence.at(*hit.value.leader);
            cert.leader = ev;
        } else if (block) {
            for (const auto& [u, pm] : in.first_proposal)
                if (pm->block_hash == h) ev = pm->evidence();
        }
    }

    EntryPtr e = env_.registry().intern(in.parent, h, cert, ev, block);
    const bool was_active = (&in == act_.in) && !act_.halted;
    if (was_active) act_.halted = true;
    const bool fresh = known_.emplace(h, e).second;
    if (fresh) by_next_[e->next_round()].push_back(e);
    if (fresh && !block) missing_blocks_.insert(h);
    note(in.r, hit.s_prime, was_active ? "halt" : "reconstruct",
         std::string(hit.bit ? "empty " : "block ") + h.hex().substr(0, 12), now);
    env_.decided(id_, in.r, e, now);
    if (block) env_.block_known(id_, in.r, e, now);
    adopt(e, now);
}

void Node::adopt(const EntryPtr& e, Time now) {
    if (tip_ == e) return;
    bool take = false;
    if (e->parent == tip_) {
        take = true;
    } else if (compare_entries(*e, *tip_) < 0) {
        take = true;
        env_.switched(id_, tip_, e, now);
        note(e->round, 0, "switch", tip_->hash.hex().substr(0, 12) + " -> " + e->hash.hex().substr(0, 12), now);
    }
    if (take) begin_round(e, now);
    retry_orphans(e->next_round(), now);
}

// --- capped variant ------------------------------------------------------------------

std::optional<Step> Node::next_verifier_step(Step after) const {
    const Step fin = env_.params().final_step();
    for (Step s = after + 1; s <= fin; ++s)
        if (!my_creds(*act_.in->c, s).empty()) return s;
    return std::nullopt;
}

void Node::alg1_schedule_after(Step s) {
    if (auto ns = next_verifier_step(s))
        env_.set_timer(id_, act_.start + step_deadline(env_.params(), *ns), tag(*ns, kAlg1Step));
}

void Node::alg1_step(Step s, Time now) {
    Inbox& in = *act_.in;
    const ProtocolParams& p = env_.params();
    const StepKind kind = step_kind(s, p.final_step());
    act_.step = s;

    switch (kind) {
        case StepKind::Propose: return;
        case StepKind::GcFirst: {
            auto l = leader_of(in);
            VoteValue v = VoteValue::none();
            if (l) {
                auto it = in.first_proposal.find(*l);
                if (it != in.first_proposal.end()) v = VoteValue::of(it->second->block_hash);
            }
            cast(s, std::nullopt, v, now);
            break;
        }
        case StepKind::GcSecond: {
            CleanTally t = clean_tally(in.votes[2]);
            VoteValue v = VoteValue::none();
            for (const auto& [k, w] : t.weight)
                if (!k.second.bottom && 3 * w > 2 * t.total) v = k.second;
            cast(s, std::nullopt, v, now);
            break;
        }
        case StepKind::GcOutput: {
            CleanTally t = clean_tally(in.votes[3]);
            std::optional<VoteValue> best;
            std::uint64_t bw = 0;
            for (const auto& [k, w] : t.weight)
                if (!k.second.bottom && w > bw) {
                    bw = w;
                    best = k.second;
                }
            int g = 0;
            VoteValue v = empty_value(in);
            if (best && 3 * bw > 2 * t.total) {
                g = 2;
                v = *best;
            } else if (best && 3 * bw > t.total) {
                g = 1;
                v = *best;
            }
            act_.v = v;
            act_.b = g == 2 ? 0 : 1;
            cast(s, act_.b, v, now);
            break;
        }
        case StepKind::Final: cast(s, 1, empty_value(in), now); break;
        default: {
            CleanTally t = clean_tally(in.votes[s - 1]);
            std::map<VoteValue, std::uint64_t> by_value;
            for (const auto& [k, w] : t.weight) by_value[k.second] += w;
            VoteValue v = empty_value(in);
            std::uint64_t bw = 0;
            bool tie = false;
            for (const auto& [val, w] : by_value) {
                if (w > bw) {
                    bw = w;
                    v = val;
                    tie = false;
                } else if (w == bw) {
                    tie = true;
                }
            }
            if (tie || bw == 0) v = empty_value(in);
            const std::uint64_t zeros = t.bit_weight(0), ones = t.bit_weight(1);
            std::uint8_t b;
            if (3 * zeros > 2 * t.total && t.total > 0)
                b = 0;
            else if (3 * ones > 2 * t.total && t.total > 0)
                b = 1;
            else if (kind == StepKind::Fixed0)
                b = 0;
            else if (kind == StepKind::Fixed1)
                b = 1;
            else
                b = t.min_cred && t.min_cred->lsb() ? 1 : 0;
            act_.v = v;
            act_.b = b;
            cast(s, b, v, now);
            break;
        }
    }
}

// --- uncapped variant ----------------------------------------------------------------

void Node::alg2_enter(Step s, Time now) {
    const ProtocolParams& p = env_.params();
    act_.step = s;
    act_.step_start = now;
    if (s > p.max_steps) {
        act_.halted = true;
        note(act_.r, s, "abandon", "step budget exhausted", now);
        return;
    }
    env_.set_timer(id_, now + step_deadline(p, s), tag(s, kStepTimeout));
}

void Node::alg2_fix_leader(Time now) {
    act_.leader_fixed = true;
    act_.leader = leader_of(*act_.in);
    note(act_.r, 2, "leader", act_.leader ? std::to_string(*act_.leader) : "none", now);
}

std::optional<std::uint8_t> Node::alg2_early_bit(Step s) const {
    const ProtocolParams& p = env_.params();
    auto it = act_.in->votes.find(s - 1);
    if (it == act_.in->votes.end()) return std::nullopt;
    CleanTally t = clean_tally(it->second);
    const std::uint64_t tH = act_.in->c->t_H;
    const std::uint64_t zeros = t.bit_weight(0), ones = t.bit_weight(1);
    switch (step_kind(s, p.final_step())) {
        case StepKind::Fixed0:
            if (ones >= tH) return 1;
            if (zeros >= tH) return 0;
            break;
        case StepKind::Fixed1:
            if (zeros >= tH) return 0;
            break;
        case StepKind::Coin:
            if (zeros >= tH) return 0;
            if (ones >= tH) return 1;
            break;
        default: break;
    }
    return std::nullopt;
}

void Node::alg2_progress(Time now) {
    const std::uint64_t epoch = epoch_;
    for (;;) {
        if (act_.halted || epoch != epoch_) return;
        Inbox& in = *act_.in;
        const std::uint64_t tH = in.c->t_H;
        bool changed = false;

        if (!act_.step2_done && act_.leader_fixed && act_.leader) {
            auto it = in.first_proposal.find(*act_.leader);
            if (it != in.first_proposal.end() && has_block(in.parent->hash)) {
                act_.step2_done = true;
                cast(2, std::nullopt, VoteValue::of(it->second->block_hash, *act_.leader), now);
                changed = true;
            }
        }
        if (!act_.step3_done) {
            auto it = in.votes.find(2);
            if (it != in.votes.end()) {
                CleanTally t = clean_tally(it->second);
                for (const auto& [k, w] : t.weight) {
                    if (w < tH) continue;
                    act_.step3_done = true;
                    cast(3, std::nullopt, k.second, now);
                    alg2_enter(4, now);
                    changed = true;
                    break;
                }
            }
        }
        if (epoch != epoch_ || act_.halted) return;
        if (act_.step3_done && act_.step >= 4) {
            const Step s = act_.step;
            if (s >= 5) {
                if (auto hit = scan_endings(in, s)) {
                    certify(in, *hit, now);
                    return;
                }
            }
            if (s == 4) {
                auto it = in.votes.find(3);
                if (it != in.votes.end()) {
                    CleanTally t = clean_tally(it->second);
                    for (const auto& [k, w] : t.weight) {
                        if (w < tH) continue;
                        if (k.second.bottom) {
                            act_.v = VoteValue::none();
                            act_.b = 1;
                        } else {
                            act_.v = k.second;
                            act_.b = 0;
                        }
                        cast(4, act_.b, act_.v, now);
                        alg2_enter(5, now);
                        changed = true;
                        break;
                    }
                }
            } else if (auto b = alg2_early_bit(s)) {
                act_.b = *b;
                cast(s, *b, act_.v, now);
                alg2_enter(s + 1, now);
                changed = true;
            }
        }
        if (!changed) return;
    }
}

void Node::alg2_timeout(Step s, int what, Time now) {
    Inbox& in = *act_.in;
    switch (what) {
        case kLeaderFix: alg2_fix_leader(now); break;
        case kT2:
            if (!act_.step2_done) {
                act_.step2_done = true;
                cast(2, std::nullopt, VoteValue::none(), now);
            }
            break;
        case kT3:
            if (!act_.step3_done) {
                act_.step3_done = true;
                cast(3, std::nullopt, VoteValue::none(), now);
                alg2_enter(4, now);
            }
            break;
        case kStepTimeout: {
            if (act_.step != s) return;
            if (s == 4) {
                CleanTally t = clean_tally(in.votes[3]);
                std::optional<VoteValue> best;
                std::uint64_t bw = 0;
                for (const auto& [k, w] : t.weight)
                    if (!k.second.bottom && w > bw) {
                        bw = w;
                        best = k.second;
                    }
                const std::uint64_t half = (in.c->t_H + 1) / 2;
                act_.v = (best && bw >= half) ? *best : VoteValue::none();
                act_.b = 1;
            } else {
                const StepKind k = step_kind(s, 0);
                if (k == StepKind::Fixed0) {
                    act_.b = 0;
                } else if (k == StepKind::Fixed1) {
                    act_.b = 1;
                } else {
                    CleanTally t = clean_tally(in.votes[s - 1]);
                    act_.b = t.min_cred && t.min_cred->lsb() ? 1 : 0;
                }
            }
            cast(s, act_.b, act_.v, now);
            alg2_enter(s + 1, now);
            break;
        }
        default: break;
    }
    alg2_progress(now);
}

void Node::timer(std::uint64_t t, Time now) {
    if ((t >> 24) != epoch_ || act_.halted) return;
    const Step s = static_cast<Step>((t >> 4) & 0xFFFFF);
    const int what = static_cast<int>(t & 0xF);
    if (env_.params().variant == Variant::Alg1) {
        const std::uint64_t epoch = epoch_;
        alg1_step(s, now);
        if (epoch != epoch_ || act_.halted) return;
        if (auto hit = find_ending(*act_.in, s, kNoLimit)) {
            certify(*act_.in, *hit, now);
            return;
        }
        alg1_schedule_after(s);
    } else {
        alg2_timeout(s, what, now);
    }
}

}  // namespace sortilab::consensus
