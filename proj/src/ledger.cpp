#include "sortilab/ledger.hpp"

#include <algorithm>
#include <set>

namespace sortilab {

Bytes Payment::signed_payload() const {
    Encoder e;
    e.tag("pay").u64(rho).u32(payer).u32(payee).u64(amount).blob(info).digest(hidden_info_digest).u64(window);
    return e.take();
}

Digest256 Payment::id() const {
    return hash(Encoder().tag("payment-id").blob(signed_payload()).blob(signature.bytes));
}

Payment make_payment(const LongTermKeypair& payer, UserId payee, Money amount, Round rho, Round window, Bytes info,
                     const Digest256& hidden_info_digest) {
    Payment p;
    p.payer = payer.id;
    p.payee = payee;
    p.amount = amount;
    p.rho = rho;
    p.window = window;
    p.info = std::move(info);
    p.hidden_info_digest = hidden_info_digest;
    p.signature = sign(payer, p.signed_payload());
    return p;
}

bool canonical_less(const Payment& a, const Payment& b) {
    if (a.payer != b.payer) return a.payer < b.payer;
    return a.signature.bytes < b.signature.bytes;
}

Money Status::total() const {
    Money t = 0;
    for (const auto& [id, a] : balances) t += a;
    return t;
}

Money Status::balance(UserId i) const {
    auto it = balances.find(i);
    return it == balances.end() ? 0 : it->second;
}

bool validate_payment(const Payment& p, const Status& st, Round r, const PaymentHistory& history,
                      const KeyDirectory& keys) {
    if (r < p.rho || r - p.rho > p.window) return false;
    if (!st.has(p.payer) || p.amount > st.balance(p.payer)) return false;
    if (p.signature.signer != p.payer || !keys.verify(p.signed_payload(), p.signature)) return false;
    return !history.contains(p.id());
}

bool payset_valid(std::span<const Payment> pay, const Status& st, Round r, const PaymentHistory& history,
                  const KeyDirectory& keys) {
    std::map<UserId, Money> spent;
    for (std::size_t i = 0; i < pay.size(); ++i) {
        if (i > 0 && !canonical_less(pay[i - 1], pay[i])) return false;
        if (!validate_payment(pay[i], st, r, history, keys)) return false;
        Money& s = spent[pay[i].payer];
        s += pay[i].amount;
        if (s > st.balance(pay[i].payer)) return false;
    }
    return true;
}

std::vector<Payment> build_maximal_payset(std::span<const Payment> pending, const Status& st, Round r,
                                          const PaymentHistory& history, const KeyDirectory& keys) {
    std::vector<const Payment*> order;
    order.reserve(pending.size());
    for (const auto& p : pending) order.push_back(&p);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return canonical_less(*a, *b); });

    std::vector<Payment> out;
    std::map<UserId, Money> spent;
    std::set<Digest256> seen;
    for (const Payment* p : order) {
        if (!validate_payment(*p, st, r, history, keys)) continue;
        if (!seen.insert(p->id()).second) continue;
        Money& s = spent[p->payer];
        if (s + p->amount > st.balance(p->payer)) continue;
        s += p->amount;
        out.push_back(*p);
    }
    return out;
}

Status apply_payset(const Status& st, std::span<const Payment> pay) {
    Status next = st;
    std::map<UserId, Money> spent;
    for (const auto& p : pay) {
        Money& s = spent[p.payer];
        s += p.amount;
        if (!st.has(p.payer) || s > st.balance(p.payer))
            throw InvalidPayset("payer " + std::to_string(p.payer) + " overspends");
    }
    for (const auto& p : pay) {
        next.balances[p.payer] -= p.amount;
        next.balances[p.payee] += p.amount;
    }
    next.round = st.round + 1;
    return next;
}

Bytes seed_sig_payload(const Digest256& q_prev) { return Encoder().tag("seed").digest(q_prev).take(); }

Bytes Block::encode() const {
    Encoder e;
    e.tag("block").u64(round).u32(static_cast<std::uint32_t>(payset.size()));
    for (const auto& p : payset) e.blob(p.signed_payload()).blob(p.signature.bytes);
    if (leader_seed_sig) {
        e.u8(1).u32(leader_seed_sig->signer).digest(leader_seed_sig->message_digest).blob(leader_seed_sig->bytes);
    } else {
        e.u8(0).digest(prev_seed);
    }
    e.digest(prev_hash);
    return e.take();
}

Digest256 Block::hash() const { return sortilab::hash(encode()); }

Block make_block(Round r, std::vector<Payment> payset, Signature leader_seed_sig, const Digest256& prev_hash) {
    Block b;
    b.round = r;
    b.payset = std::move(payset);
    b.leader_seed_sig = std::move(leader_seed_sig);
    b.prev_hash = prev_hash;
    return b;
}

Block empty_block(Round r, const Digest256& q_prev, const Digest256& prev_hash) {
    Block b;
    b.round = r;
    b.prev_seed = q_prev;
    b.prev_hash = prev_hash;
    return b;
}

Digest256 Genesis::hash() const { return sortilab::hash(Encoder().tag("genesis").digest(seed)); }

Digest256 seed_after_leader(const Signature& seed_sig, Round r) {
    return hash(Encoder().tag("Q").blob(seed_sig.bytes).u64(r));
}

Digest256 seed_after_empty(const Digest256& q_prev, Round r) { return hash(Encoder().tag("Q").blob(q_prev.bytes).u64(r)); }

Digest256 next_seed(const Digest256& q_prev, Round r, const Block& block) {
    if (block.is_empty_form()) {
        if (!block.payset.empty()) throw std::invalid_argument("next_seed: non-empty block without leader seed signature");
        return seed_after_empty(q_prev, r);
    }
    return seed_after_leader(*block.leader_seed_sig, r);
}

Bytes vote_payload(Round r, Step s, std::optional<std::uint8_t> bit, const VoteValue& v) {
    Encoder e;
    e.tag("vote").u64(r).u32(s);
    e.u8(bit ? static_cast<std::uint8_t>(*bit) : 0xff);
    if (v.bottom) {
        e.u8(0);
    } else {
        e.u8(1).digest(v.hash);
        if (v.leader) e.u8(1).u32(*v.leader);
        else e.u8(0);
    }
    return e.take();
}

std::uint64_t Certificate::weight() const {
    std::uint64_t w = 0;
    for (const auto& v : votes) w += v.weight();
    return w;
}

bool credential_valid(const Committee& c, const Credential& cred, Step s) {
    if (cred.round != c.round || cred.step != s) return false;
    if (c.eligible && !c.eligible(cred.user)) return false;
    if (!credential_authentic(cred, c.q_prev, *c.keys)) return false;
    if (c.weighted) {
        if (cred.copy == 0) return false;
        CopyAllotment a = c.allot(cred.user, s);
        if (cred.copy <= a.whole) return true;
        return cred.copy == a.whole + 1 && a.residual_value > 0 && selected(cred, a.residual);
    }
    if (cred.copy != 0) return false;
    return selected(cred, s == 1 ? c.leader_p : c.verifier_p);
}

std::uint64_t vote_weight(const Committee& c, const Vote& v) {
    if (v.round != c.round || v.creds.empty()) return 0;
    if (v.esig.round != v.round || v.esig.step != v.step) return 0;
    std::set<std::uint32_t> copies;
    for (const auto& cr : v.creds) {
        if (cr.user != v.voter() || !copies.insert(cr.copy).second) return 0;
        if (!credential_valid(c, cr, v.step)) return 0;
    }
    if (!c.keys->verify_ephemeral(vote_payload(v.round, v.step, v.bit, v.value), v.esig)) return 0;
    return v.creds.size();
}

bool leader_evidence_valid(const Committee& c, const LeaderEvidence& e) {
    if (e.seed_sig.signer != e.cred.user) return false;
    if (!credential_valid(c, e.cred, 1)) return false;
    return c.keys->verify(seed_sig_payload(c.q_prev), e.seed_sig);
}

bool ending_parity_ok(Step s, std::uint8_t bit) {
    if (bit == 0) return s >= 5 && (s - 2) % 3 == 0;
    if (bit == 1) return s >= 6 && (s - 2) % 3 == 1;
    return false;
}

bool verify_certificate(const Certificate& cert, const Digest256& claimed, const Committee& c) {
    if (cert.round != c.round || cert.votes.empty()) return false;
    if (cert.final_step) {
        if (c.final_step == 0 || cert.ending_step != c.final_step || cert.bit != 1) return false;
    } else if (!ending_parity_ok(cert.ending_step, cert.bit)) {
        return false;
    }
    const Digest256 empty = c.empty_hash();
    if (cert.bit == 1 && claimed != empty) return false;

    std::optional<UserId> leader;
    if (cert.leader) {
        if (!leader_evidence_valid(c, *cert.leader)) return false;
        leader = cert.leader->cred.user;
    }

    const Step vs = cert.vote_step();
    std::set<UserId> voters;
    std::uint64_t weight = 0;
    for (const auto& v : cert.votes) {
        if (v.step != vs || !v.bit || *v.bit != cert.bit) return false;
        if (!voters.insert(v.voter()).second) return false;
        if (cert.final_step && (v.value.bottom || v.value.hash != empty)) return false;
        if (cert.bit == 0) {
            if (v.value.bottom || v.value.hash != claimed) return false;
            if (v.value.leader != leader) return false;
        }
        std::uint64_t w = vote_weight(c, v);
        if (w == 0) return false;
        weight += w;
    }
    return weight >= c.t_H;
}

namespace {

const Credential* tip_credential(const ProvenChain& c) {
    return c.back().leader_credential ? &*c.back().leader_credential : nullptr;
}

int cmp(const auto& a, const auto& b) { return a < b ? -1 : (b < a ? 1 : 0); }

}  // namespace

int compare_chains(const ProvenChain& a, const ProvenChain& b) {
    if (a.size() != b.size()) return a.size() > b.size() ? -1 : 1;
    if (a.empty()) return 0;
    const Block& ta = a.back().block;
    const Block& tb = b.back().block;
    if (ta.is_empty_form() != tb.is_empty_form()) return ta.is_empty_form() ? 1 : -1;
    if (!ta.is_empty_form()) {
        const Credential* ca = tip_credential(a);
        const Credential* cb = tip_credential(b);
        if ((ca == nullptr) != (cb == nullptr)) return ca ? -1 : 1;
        if (ca && cb && ca->hash != cb->hash) return ca->hash < cb->hash ? -1 : 1;
    }
    Digest256 ha = ta.hash(), hb = tb.hash();
    if (ha != hb) return ha < hb ? -1 : 1;
    if (int c = cmp(ta.encode(), tb.encode())) return c;
    for (std::size_t i = a.size() - 1; i-- > 0;) {
        if (int c = cmp(a[i].block.hash(), b[i].block.hash())) return c;
    }
    return 0;
}

std::size_t resolve_fork(std::span<const ProvenChain> chains) {
    if (chains.empty()) throw std::invalid_argument("resolve_fork: no chains");
    std::size_t best = 0;
    for (std::size_t i = 1; i < chains.size(); ++i)
        if (compare_chains(chains[i], chains[best]) < 0) best = i;
    return best;
}

}  // namespace sortilab
