#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "sortilab/crypto.hpp"

namespace sortilab {

struct Credential {
    UserId user = 0;
    std::uint32_t copy = 0;  // 0 outside weighted mode
    Round round = 0;
    Step step = 0;
    Signature signature;
    Digest256 hash;

    long double fraction() const { return digest_fraction(hash); }
    auto operator<=>(const Credential&) const = default;
};

class IneligibleUser : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

using Eligibility = std::function<bool(UserId)>;

Bytes credential_payload(UserId user, std::uint32_t copy, Round r, Step s, const Digest256& q_prev);

Credential make_credential(const LongTermKeypair& kp, Round r, Step s, const Digest256& q_prev,
                           std::uint32_t copy = 0);
// Throws IneligibleUser when the user is not in PK^{r-k}.
Credential make_credential(const LongTermKeypair& kp, Round r, Step s, const Digest256& q_prev,
                           const Eligibility& eligible, std::uint32_t copy = 0);

bool credential_authentic(const Credential& c, const Digest256& q_prev, const KeyDirectory& keys);

inline bool selected(const Credential& c, const Threshold& t) { return t.admits(c.hash); }

// Holder of the smallest credential hash; ties go to the lexicographically
// smaller long-term public key, then to the smaller copy index.
std::pair<UserId, std::uint32_t> leader_among(std::span<const Credential> creds, const KeyDirectory& keys);

struct CopyAllotment {
    std::uint64_t whole = 0;  // K: copies selected outright
    Threshold residual;       // copy K+1 passes iff its credential clears this
    long double residual_value = 0;
};

CopyAllotment weighted_copies(std::uint64_t money, std::uint64_t total, std::uint64_t n);

// Selected copies of user i in step (r,s): copies 1..K plus copy K+1 when its
// credential clears the residual. Returns their credentials.
std::vector<Credential> selected_copies(const LongTermKeypair& kp, Round r, Step s, const Digest256& q_prev,
                                        const CopyAllotment& allot);

using SeedLookup = std::function<const Digest256*(Round)>;

// (round, step) pairs in rounds r+1..r+horizon where user i serves, using the
// seed `lag` rounds back: Q^{r+M-lag}.
std::vector<std::pair<Round, Step>> lazy_schedule(const LongTermKeypair& kp, Round r, const SeedLookup& seeds,
                                                  std::uint64_t horizon, Step steps, const Threshold& p,
                                                  std::uint64_t lag = 2001);

}  // namespace sortilab
