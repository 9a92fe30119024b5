#include "sortilab/sortition.hpp"

#include <algorithm>

namespace sortilab {

Bytes credential_payload(UserId user, std::uint32_t copy, Round r, Step s, const Digest256& q_prev) {
    Encoder e;
    e.tag("cred").u32(user).u32(copy).u64(r).u32(s).digest(q_prev);
    return e.take();
}

Credential make_credential(const LongTermKeypair& kp, Round r, Step s, const Digest256& q_prev, std::uint32_t copy) {
    Credential c;
    c.user = kp.id;
    c.copy = copy;
    c.round = r;
    c.step = s;
    c.signature = sign(kp, credential_payload(kp.id, copy, r, s, q_prev));
    c.hash = hash(c.signature.bytes);
    return c;
}

Credential make_credential(const LongTermKeypair& kp, Round r, Step s, const Digest256& q_prev,
                           const Eligibility& eligible, std::uint32_t copy) {
    if (!eligible(kp.id))
        throw IneligibleUser("user " + std::to_string(kp.id) + " is not eligible in round " + std::to_string(r));
    return make_credential(kp, r, s, q_prev, copy);
}

bool credential_authentic(const Credential& c, const Digest256& q_prev, const KeyDirectory& keys) {
    if (c.signature.signer != c.user) return false;
    if (hash(c.signature.bytes) != c.hash) return false;
    return keys.verify(credential_payload(c.user, c.copy, c.round, c.step, q_prev), c.signature);
}

std::pair<UserId, std::uint32_t> leader_among(std::span<const Credential> creds, const KeyDirectory& keys) {
    if (creds.empty()) throw std::invalid_argument("leader_among: no credentials");
    const Credential* best = &creds[0];
    for (const auto& c : creds.subspan(1)) {
        if (c.hash != best->hash) {
            if (c.hash < best->hash) best = &c;
            continue;
        }
        const Bytes& a = keys.public_key(c.user);
        const Bytes& b = keys.public_key(best->user);
        if (a < b || (a == b && c.copy < best->copy)) best = &c;
    }
    return {best->user, best->copy};
}

CopyAllotment weighted_copies(std::uint64_t money, std::uint64_t total, std::uint64_t n) {
    if (total == 0) throw std::invalid_argument("weighted_copies: total money is zero");
    if (money > total) throw std::invalid_argument("weighted_copies: money exceeds total");
    unsigned __int128 scaled = static_cast<unsigned __int128>(money) * n;
    CopyAllotment a;
    a.whole = static_cast<std::uint64_t>(scaled / total);
    auto rem = static_cast<std::uint64_t>(scaled % total);
    a.residual = Threshold::from_ratio(rem, total);
    a.residual_value = static_cast<long double>(rem) / static_cast<long double>(total);
    return a;
}

std::vector<Credential> selected_copies(const LongTermKeypair& kp, Round r, Step s, const Digest256& q_prev,
                                        const CopyAllotment& allot) {
    std::vector<Credential> out;
    out.reserve(allot.whole + 1);
    for (std::uint32_t v = 1; v <= allot.whole; ++v) out.push_back(make_credential(kp, r, s, q_prev, v));
    Credential extra = make_credential(kp, r, s, q_prev, static_cast<std::uint32_t>(allot.whole + 1));
    if (selected(extra, allot.residual) && allot.residual_value > 0) out.push_back(extra);
    return out;
}

std::vector<std::pair<Round, Step>> lazy_schedule(const LongTermKeypair& kp, Round r, const SeedLookup& seeds,
                                                  std::uint64_t horizon, Step steps, const Threshold& p,
                                                  std::uint64_t lag) {
    std::vector<std::pair<Round, Step>> out;
    for (std::uint64_t m = 1; m <= horizon; ++m) {
        const Round target = r + m;
        if (target < lag) throw std::invalid_argument("lazy_schedule: insufficient chain history");
        const Digest256* q = seeds(target - lag);
        if (q == nullptr) throw std::invalid_argument("lazy_schedule: insufficient chain history");
        for (Step s = 1; s <= steps; ++s)
            if (selected(make_credential(kp, target, s, *q), p)) out.emplace_back(target, s);
    }
    return out;
}

}  // namespace sortilab
