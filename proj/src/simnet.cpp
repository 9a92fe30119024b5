#include "sortilab/simnet.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sortilab::simnet {

using consensus::Node;
using consensus::StepKind;

std::uint32_t SimConfig::budget() const {
    return static_cast<std::uint32_t>(std::floor((1.0 - h) * users + 1e-9));
}

consensus::ProtocolParams SimConfig::protocol() const {
    consensus::ProtocolParams p;
    p.variant = variant;
    p.m = m;
    p.mu = mu;
    p.max_steps = max_steps;
    p.lambda = lambda;
    p.Lambda = Lambda;
    const std::uint64_t nv = n ? std::min<std::uint64_t>(n, users) : users;
    const std::uint64_t nl = n1 ? std::min<std::uint64_t>(n1, users) : users;
    p.verifier_p = Threshold::from_ratio(nv, users);
    p.leader_p = Threshold::from_ratio(nl, users);
    p.t_H = t_H ? t_H : 2 * nv / 3 + 1;
    p.weighted = weighted;
    p.n_leaders = nl;
    p.n_verifiers = nv;
    p.lookback = lookback;
    p.payment_window = payment_window;
    return p;
}

std::uint32_t RoundRecord::coin_trials(Step m) const {
    if (final_voted) return m / 3;
    return std::max<std::uint32_t>(1, coin_steps);
}

void Strategy::malicious_send(Simulator& sim, UserId from, const MsgPtr& m, bool) { sim.broadcast(from, m); }

Simulator::Simulator(SimConfig cfg, std::unique_ptr<Strategy> strategy)
    : cfg_(std::move(cfg)), params_(cfg_.protocol()), strategy_(std::move(strategy)), rng_(cfg_.seed) {
    if (cfg_.users < 2) throw std::invalid_argument("simulation needs at least two users");
    if (cfg_.h <= 0 || cfg_.h > 1) throw std::invalid_argument("h must lie in (0, 1]");
    if (params_.t_H > params_.n_verifiers) throw std::invalid_argument("t_H exceeds the expected committee size n");
    if (cfg_.variant == Variant::Alg1 && (cfg_.m == 0 || cfg_.m % 3 != 0)) throw std::invalid_argument("m must be a positive multiple of 3");
    if (cfg_.lookback < 1) throw std::invalid_argument("look-back k must be at least 1");
    if (cfg_.weighted && cfg_.variant == Variant::Alg2)
        throw std::invalid_argument("weighted committees are simulated for alg1 only");
    if (!strategy_) throw std::invalid_argument("no strategy");

    const Digest256 key_seed = hash(Encoder().tag("sim-keys").u64(cfg_.seed));
    const Round last = cfg_.rounds + 64;
    const Step mu = cfg_.variant == Variant::Alg1 ? cfg_.m + 3 : cfg_.mu;

    Genesis g;
    g.seed = hash(Encoder().tag("genesis-seed").u64(cfg_.seed));
    if (!cfg_.balances.empty() && cfg_.balances.size() != cfg_.users)
        throw std::invalid_argument("balances must list one amount per user");
    for (UserId u = 0; u < cfg_.users; ++u) g.status.balances[u] = cfg_.balances.empty() ? cfg_.balance : cfg_.balances[u];
    registry_ = std::make_unique<consensus::Registry>(g);

    for (UserId u = 0; u < cfg_.users; ++u) {
        kps_.push_back(generate_keypair(u, key_seed, cfg_.scheme));
        keys_.add(kps_.back());
    }
    for (UserId u = 0; u < cfg_.users; ++u) {
        EphemeralKeychain ch(u, cfg_.scheme, hash(Encoder().tag("eph").digest(key_seed).u32(u)), 0, last, mu);
        ch.register_with(keys_);
        nodes_.push_back(std::make_unique<Node>(u, kps_[u], std::move(ch), *this));
    }
    corrupted_.assign(cfg_.users, false);
    budget_left_ = cfg_.budget();
    trace_.config = cfg_;
    trace_.strategy = strategy_->name();

    std::uint32_t init = cfg_.initial_malicious ? *cfg_.initial_malicious : strategy_->initial_corruptions(cfg_);
    init = std::min(init, budget_left_);
    std::vector<UserId> order(cfg_.users);
    for (UserId u = 0; u < cfg_.users; ++u) order[u] = u;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng_.below(i)]);
    for (std::uint32_t i = 0; i < init; ++i) corrupt(order[i]);
    strategy_->attach(*this);
}

Simulator::~Simulator() = default;

bool Simulator::corrupt(UserId u) {
    if (corrupted_[u] || budget_left_ == 0) return false;
    corrupted_[u] = true;
    --budget_left_;
    nodes_[u]->set_malicious();
    ++trace_.counters.corruptions;
    return true;
}

std::vector<UserId> Simulator::honest_users() const {
    std::vector<UserId> out;
    for (UserId u = 0; u < cfg_.users; ++u)
        if (!corrupted_[u]) out.push_back(u);
    return out;
}

std::vector<UserId> Simulator::malicious_users() const {
    std::vector<UserId> out;
    for (UserId u = 0; u < cfg_.users; ++u)
        if (corrupted_[u]) out.push_back(u);
    return out;
}

std::optional<Time> Simulator::round_start(Round r) const {
    auto it = rounds_.find(r);
    if (it == rounds_.end() || !it->second.started) return std::nullopt;
    return it->second.start;
}

Time Simulator::bound_for(const MsgPtr& m) const {
    if (m->large()) return params_.Lambda;
    if (m->kind == consensus::MsgKind::Payment) return params_.lambda;
    return consensus::small_bound(params_, m->step);
}

void Simulator::push(Time at, Ev kind, UserId who, MsgPtr msg, std::uint64_t tag) {
    queue_.push(Event{at, seq_++, kind, who, std::move(msg), tag});
}

void Simulator::schedule_delivery(const MsgPtr& m, UserId to, Time at) {
    Sched& s = sched_[m->id];
    if (s.at.empty()) {
        s.round = m->round;
        s.at.assign(cfg_.users, Time(-1));
    }
    if (s.at[to] >= Time(0) && s.at[to] <= at) return;
    s.at[to] = at;
    push(at, Ev::Deliver, to, m);
}

void Simulator::deliver(const MsgPtr& m, UserId to, Time at) { schedule_delivery(m, to, std::max(at, now_)); }

void Simulator::broadcast(UserId from, const MsgPtr& m) {
    const Time bound = bound_for(m);
    for (UserId v = 0; v < cfg_.users; ++v) {
        if (v == from) continue;
        if (partitioned_ && component_[from] != component_[v]) {
            held_.push_back({m, {from, v}});
            continue;
        }
        if (corrupted_[v]) {
            schedule_delivery(m, v, now_);
            continue;
        }
        Time d = strategy_->delay(*this, m, from, v, bound);
        d = std::clamp(d, Time(0), bound);
        schedule_delivery(m, v, now_ + d);
    }
}

void Simulator::send(UserId from, const MsgPtr& m, bool originate) {
    if (originate) ++trace_.counters.originated;
    if (corrupted_[from]) {
        strategy_->malicious_send(*this, from, m, originate);
        return;
    }
    if (originate) strategy_->observe(*this, from, m);
    broadcast(from, m);
}

void Simulator::set_timer(UserId who, Time at, std::uint64_t tag) { push(at, Ev::Timer, who, nullptr, tag); }

void Simulator::schedule_wake(Time at, std::uint64_t tag) { push(std::max(at, now_), Ev::Wake, 0, nullptr, tag); }

void Simulator::set_partition(std::vector<int> component) {
    if (component.size() != cfg_.users) throw std::invalid_argument("partition must assign every user");
    component_ = std::move(component);
    partitioned_ = true;
}

void Simulator::heal() {
    partitioned_ = false;
    auto held = std::move(held_);
    held_.clear();
    for (const auto& [m, link] : held) {
        const auto [from, to] = link;
        Time d = corrupted_[to] ? Time(0) : std::clamp(strategy_->delay(*this, m, from, to, bound_for(m)), Time(0), bound_for(m));
        schedule_delivery(m, to, now_ + d);
    }
}

const Committee& Simulator::committee(const EntryPtr& parent) {
    auto it = committees_.find(parent->hash);
    if (it != committees_.end()) return *it->second.second;
    auto c = std::make_unique<Committee>(consensus::make_committee(*parent, params_, keys_));
    const Committee& ref = *c;
    committees_.emplace(parent->hash, std::make_pair(parent->next_round(), std::move(c)));
    return ref;
}

bool Simulator::valid(const MsgPtr& m, const EntryPtr& parent) {
    ValidKey k{m->id, parent->hash};
    auto it = valid_.find(k);
    if (it != valid_.end()) return it->second;
    const bool ok = consensus::message_valid(*m, *parent, committee(parent), params_);
    valid_.emplace(k, ok);
    return ok;
}

Simulator::RoundState& Simulator::state(Round r) {
    RoundState& st = rounds_[r];
    if (st.deciders.empty()) {
        st.deciders.assign(cfg_.users, false);
        st.rec.round = r;
        st.rec.t_block = -1;
    }
    return st;
}

void Simulator::issue_payments(Round rho) {
    auto honest = honest_users();
    if (honest.empty() || cfg_.users < 2) return;
    for (std::uint32_t i = 0; i < cfg_.payments_per_round; ++i) {
        const UserId payer = honest[rng_.below(honest.size())];
        UserId payee = static_cast<UserId>(rng_.below(cfg_.users - 1));
        if (payee >= payer) ++payee;
        Payment p = make_payment(kps_[payer], payee, 1 + rng_.below(5), rho, params_.payment_window);
        nodes_[payer]->receive(consensus::make_payment_msg(p), now_);
    }
}

void Simulator::round_started(UserId u, Round r, const EntryPtr& parent, Time t) {
    if (corrupted_[u]) return;
    RoundState& st = state(r);
    if (!st.started) {
        st.started = true;
        st.start = t;
        st.rec.t_start = consensus::to_double(t);

        const Committee& c = committee(parent);
        std::vector<Credential> creds;
        for (UserId v = 0; v < cfg_.users; ++v) {
            if (c.weighted) {
                auto sel = selected_copies(kps_[v], r, 1, c.q_prev, c.allot(v, 1));
                creds.insert(creds.end(), sel.begin(), sel.end());
            } else {
                Credential cr = make_credential(kps_[v], r, 1, c.q_prev);
                if (selected(cr, c.leader_p)) creds.push_back(cr);
            }
        }
        if (!creds.empty()) {
            st.rec.leader = leader_among(creds, keys_).first;
            st.rec.leader_honest = !corrupted_[*st.rec.leader];
        }
        issue_payments(r + 1);
        strategy_->round_started(*this, r, parent);
        if (r >= swept_ + 16) sweep(r);
    }
    if (r >= cfg_.rounds) {
        bool all = true;
        for (UserId v = 0; v < cfg_.users && all; ++v)
            if (!corrupted_[v] && nodes_[v]->round() < cfg_.rounds) all = false;
        if (all) done_ = true;
    }
}

void Simulator::decided(UserId u, Round r, const EntryPtr& e, Time t) {
    strategy_->decided(*this, u, r, e);
    if (corrupted_[u]) return;
    RoundState& st = state(r);
    ++st.hashes[e->hash];
    st.rec.distinct = static_cast<std::uint32_t>(st.hashes.size());
    if (st.deciders[u]) return;
    st.deciders[u] = true;
    ++st.rec.deciders;
    const double td = consensus::to_double(t);
    if (!st.decided) {
        st.decided = true;
        RoundRecord& rec = st.rec;
        rec.block_hash = e->hash.hex();
        rec.empty = e->empty();
        rec.ending_step = e->cert.ending_step;
        rec.bit = e->cert.bit;
        rec.final_step = e->cert.final_step;
        rec.cert_weight = e->cert.weight();
        rec.payset = e->block ? e->block->payset.size() : 0;
        rec.by_leader = !e->empty() && e->leader && rec.leader && e->leader->cred.user == *rec.leader;
        rec.t_first = td;
        rec.honest = static_cast<std::uint32_t>(honest_users().size());
    }
    st.rec.t_last = std::max(st.rec.t_last, td);
}

void Simulator::block_known(UserId u, Round r, const EntryPtr& e, Time t) {
    if (corrupted_[u]) return;
    RoundState& st = state(r);
    const double tb = consensus::to_double(t);
    if (st.rec.t_block < 0 || tb < st.rec.t_block) st.rec.t_block = tb;
    if (st.rec.payset == 0 && e->block && st.decided && st.rec.block_hash == e->hash.hex())
        st.rec.payset = e->block->payset.size();
}

void Simulator::voted(UserId u, Round r, Step s, Time) {
    if (corrupted_[u]) return;
    const StepKind k = consensus::step_kind(s, params_.final_step());
    if (k == StepKind::Coin) state(r).coin_steps.insert(s);
    if (k == StepKind::Final) state(r).rec.final_voted = true;
}

void Simulator::switched(UserId, const EntryPtr&, const EntryPtr&, Time) { ++trace_.counters.switches; }

void Simulator::sweep(Round r) {
    swept_ = r;
    Round min_round = r;
    for (const auto& n : nodes_) min_round = std::min(min_round, n->round());
    std::erase_if(sched_, [&](const auto& kv) { return kv.second.round + 4 < min_round; });
    std::erase_if(committees_, [&](const auto& kv) { return kv.second.first + 4 < min_round; });
    // validity results are cheap to recompute; drop them wholesale once large
    if (valid_.size() > 200000) valid_.clear();
    if (cfg_.retain_rounds > 0 && r > cfg_.retain_rounds) {
        for (const auto& n : nodes_) {
            for (consensus::ChainEntry* e = n->tip().get(); e && !e->genesis; e = e->parent.get()) {
                if (e->round + cfg_.retain_rounds > r) continue;
                if (e->cert.votes.empty()) break;
                e->cert.votes.clear();
                e->cert.votes.shrink_to_fit();
            }
        }
    }
}

void Simulator::finalize() {
    trace_.rounds.clear();
    for (Round r = 0; r < cfg_.rounds; ++r) {
        auto it = rounds_.find(r);
        if (it == rounds_.end()) break;
        RoundState& st = it->second;
        st.rec.coin_steps = static_cast<std::uint32_t>(st.coin_steps.size());
        if (st.rec.distinct > 1) ++trace_.counters.forks;
        trace_.rounds.push_back(st.rec);
    }
    trace_.completed = done_;
    trace_.end_time = consensus::to_double(now_);
    trace_.malicious = corrupted_;
    trace_.tips.clear();
    trace_.chains.assign(cfg_.users, {});
    for (UserId u = 0; u < cfg_.users; ++u) {
        trace_.tips.push_back(nodes_[u]->tip()->hash.hex());
        if (corrupted_[u]) continue;
        std::vector<std::string> chain;
        for (const consensus::ChainEntry* e = nodes_[u]->tip().get(); e && !e->genesis; e = e->parent.get())
            chain.push_back(e->hash.hex());
        std::reverse(chain.begin(), chain.end());
        trace_.chains[u] = std::move(chain);
    }
    if (cfg_.record_log) {
        trace_.logs.clear();
        for (const auto& n : nodes_) trace_.logs.push_back(n->log());
    }
}

Trace Simulator::run() {
    Time max_time = cfg_.max_time;
    if (max_time <= Time(0)) {
        const Time per_round = params_.variant == Variant::Alg1
                                   ? consensus::step_deadline(params_, params_.final_step()) + params_.lambda
                                   : consensus::step_deadline(params_, 3) +
                                         Time(2 * static_cast<std::int64_t>(params_.max_steps)) * params_.lambda *
                                             params_.cascade_factor;
        max_time = per_round * Time(static_cast<std::int64_t>(cfg_.rounds) + 2);
    }
    for (const auto& c : cfg_.corruptions) push(c.at, Ev::Corrupt, c.user);
    for (std::size_t i = 0; i < cfg_.partitions.size(); ++i) {
        push(cfg_.partitions[i].from, Ev::Split, 0, nullptr, i);
        push(cfg_.partitions[i].to, Ev::Heal, 0, nullptr, i);
    }
    for (auto& n : nodes_) n->start(registry_->genesis(), Time(0));

    while (!queue_.empty() && !done_) {
        Event ev = queue_.top();
        queue_.pop();
        if (ev.at > max_time) break;
        now_ = ev.at;
        ++trace_.counters.events;
        switch (ev.kind) {
            case Ev::Deliver:
                ++trace_.counters.deliveries;
                nodes_[ev.who]->receive(ev.msg, now_);
                break;
            case Ev::Timer: nodes_[ev.who]->timer(ev.tag, now_); break;
            case Ev::Corrupt: corrupt(ev.who); break;
            case Ev::Wake: strategy_->wake(*this, ev.tag); break;
            case Ev::Split: set_partition(cfg_.partitions[ev.tag].component); break;
            case Ev::Heal: heal(); break;
        }
    }
    finalize();
    return trace_;
}

Trace simulate(const SimConfig& cfg) {
    Simulator sim(cfg, make_strategy(cfg.adversary));
    return sim.run();
}

}  // namespace sortilab::simnet
