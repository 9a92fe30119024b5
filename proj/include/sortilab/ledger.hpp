#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <unordered_set>
#include <vector>

#include "sortilab/crypto.hpp"
#include "sortilab/sortition.hpp"

namespace sortilab {

using Money = std::uint64_t;

struct Payment {
    UserId payer = 0;
    UserId payee = 0;
    Money amount = 0;
    Round rho = 0;       // first valid round
    Round window = 0;    // valid in [rho, rho + window]
    Bytes info;
    Digest256 hidden_info_digest;
    Signature signature;

    Bytes signed_payload() const;
    Digest256 id() const;
    bool operator==(const Payment&) const = default;
};

Payment make_payment(const LongTermKeypair& payer, UserId payee, Money amount, Round rho, Round window = 0,
                     Bytes info = {}, const Digest256& hidden_info_digest = {});

// Canonical order: payer id, then signature bytes.
bool canonical_less(const Payment& a, const Payment& b);

struct Status {
    Round round = 0;
    std::map<UserId, Money> balances;

    Money total() const;
    Money balance(UserId i) const;
    bool has(UserId i) const { return balances.count(i) != 0; }
    bool operator==(const Status&) const = default;
};

class PaymentHistory {
public:
    virtual ~PaymentHistory() = default;
    virtual bool contains(const Digest256& payment_id) const = 0;
};

class PaymentLog final : public PaymentHistory {
public:
    void add(const Payment& p) { ids_.insert(p.id()); }
    void add_all(std::span<const Payment> ps) {
        for (const auto& p : ps) add(p);
    }
    bool contains(const Digest256& id) const override { return ids_.count(id) != 0; }

private:
    std::unordered_set<Digest256, DigestHasher> ids_;
};

class InvalidPayset : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

bool validate_payment(const Payment& p, const Status& st, Round r, const PaymentHistory& history,
                      const KeyDirectory& keys);
bool payset_valid(std::span<const Payment> pay, const Status& st, Round r, const PaymentHistory& history,
                  const KeyDirectory& keys);
std::vector<Payment> build_maximal_payset(std::span<const Payment> pending, const Status& st, Round r,
                                          const PaymentHistory& history, const KeyDirectory& keys);
Status apply_payset(const Status& st, std::span<const Payment> pay);

struct Block {
    Round round = 0;
    std::vector<Payment> payset;
    std::optional<Signature> leader_seed_sig;  // non-empty form
    Digest256 prev_seed;                       // empty form: Q^{r-1} verbatim
    Digest256 prev_hash;

    bool is_empty_form() const { return !leader_seed_sig.has_value(); }
    Bytes encode() const;
    Digest256 hash() const;
    bool operator==(const Block&) const = default;
};

Bytes seed_sig_payload(const Digest256& q_prev);

Block make_block(Round r, std::vector<Payment> payset, Signature leader_seed_sig, const Digest256& prev_hash);
Block empty_block(Round r, const Digest256& q_prev, const Digest256& prev_hash);

// B^{-1}: a public parameter carrying Q^{-1}.
struct Genesis {
    Digest256 seed;  // Q^{-1}, all zero by default
    Status status;   // S^0

    Digest256 hash() const;
};

Digest256 next_seed(const Digest256& q_prev, Round r, const Block& block);
Digest256 seed_after_leader(const Signature& seed_sig, Round r);
Digest256 seed_after_empty(const Digest256& q_prev, Round r);

// --- votes and certificates -------------------------------------------------

struct VoteValue {
    bool bottom = true;
    Digest256 hash;
    std::optional<UserId> leader;  // pair form (H(B), l) of the uncapped variant

    static VoteValue none() { return {}; }
    static VoteValue of(const Digest256& h, std::optional<UserId> leader = {}) { return {false, h, leader}; }
    auto operator<=>(const VoteValue&) const = default;
};

struct Vote {
    Round round = 0;
    Step step = 0;
    std::optional<std::uint8_t> bit;  // absent for the two graded-consensus steps
    VoteValue value;
    std::vector<Credential> creds;  // one per selected copy
    EphemeralSignature esig;

    UserId voter() const { return esig.owner; }
    std::uint64_t weight() const { return creds.size(); }
    bool operator==(const Vote&) const = default;
};

Bytes vote_payload(Round r, Step s, std::optional<std::uint8_t> bit, const VoteValue& v);

struct LeaderEvidence {
    Signature seed_sig;  // SIG_l(Q^{r-1})
    Credential cred;     // sigma_l^{r,1}
    bool operator==(const LeaderEvidence&) const = default;
};

struct Certificate {
    Round round = 0;
    Step ending_step = 0;  // s'
    std::uint8_t bit = 0;
    bool final_step = false;  // votes are the step-(m+3) votes themselves
    std::vector<Vote> votes;
    std::optional<LeaderEvidence> leader;

    Step vote_step() const { return final_step ? ending_step : ending_step - 1; }
    std::uint64_t weight() const;
    bool operator==(const Certificate&) const = default;
};

// Everything needed to check credentials and votes of one round.
struct Committee {
    Round round = 0;
    Digest256 q_prev;
    Digest256 prev_hash;
    const KeyDirectory* keys = nullptr;
    Eligibility eligible;
    Threshold leader_p;
    Threshold verifier_p;
    bool weighted = false;
    std::function<CopyAllotment(UserId, Step)> allot;
    std::uint64_t t_H = 0;
    Step final_step = 0;  // m+3 in the capped variant, 0 otherwise

    Digest256 empty_hash() const { return empty_block(round, q_prev, prev_hash).hash(); }
};

bool credential_valid(const Committee& c, const Credential& cred, Step s);
// Total weight of a vote whose credentials and signature check out, else 0.
std::uint64_t vote_weight(const Committee& c, const Vote& v);
bool leader_evidence_valid(const Committee& c, const LeaderEvidence& e);

bool ending_parity_ok(Step ending_step, std::uint8_t bit);

bool verify_certificate(const Certificate& cert, const Digest256& claimed_hash, const Committee& c);

struct ProvenBlock {
    Block block;
    Certificate cert;
    std::optional<Credential> leader_credential;  // sigma_l^{r,1} of a non-empty block
    bool operator==(const ProvenBlock&) const = default;
};

using ProvenChain = std::vector<ProvenBlock>;

// Negative when a is preferred over b.
int compare_chains(const ProvenChain& a, const ProvenChain& b);
std::size_t resolve_fork(std::span<const ProvenChain> chains);

void write_chain(std::ostream& os, const ProvenChain& chain);
ProvenChain read_chain(std::istream& is);

}  // namespace sortilab
