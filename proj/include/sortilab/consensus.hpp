#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/rational.hpp>

#include "sortilab/crypto.hpp"
#include "sortilab/ledger.hpp"
#include "sortilab/sortition.hpp"

// Per-user state machines of the two embodiments, driven by an environment
// that delivers messages and fires timers.
namespace sortilab::consensus {

using Time = boost::rational<std::int64_t>;

inline double to_double(const Time& t) { return boost::rational_cast<double>(t); }

enum class Variant : std::uint8_t { Alg1, Alg2 };  // m-bounded / mu-cascaded

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct ProtocolParams {
    Variant variant = Variant::Alg1;
    Step m = 180;           // Alg1: BBA steps, a multiple of 3
    Step mu = 30;           // Alg2: keys per stash
    Step max_steps = 600;   // Alg2: a round stuck past this is abandoned by the node
    std::uint64_t t_H = 0;
    Threshold leader_p = Threshold::always();
    Threshold verifier_p = Threshold::always();
    bool weighted = false;
    std::uint64_t n_leaders = 1;    // expected copies at step 1 (weighted)
    std::uint64_t n_verifiers = 1;  // expected copies at later steps (weighted)
    Time lambda{1};
    Time Lambda{6};
    Time cascade_factor{11, 10};  // lambda multiplier past step mu
    Round payment_window = 0;
    Round lookback = 1;  // weighted: balances as of the block `lookback` rounds back

    Step final_step() const { return variant == Variant::Alg1 ? m + 3 : 0; }
};

enum class StepKind : std::uint8_t { Propose, GcFirst, GcSecond, GcOutput, Fixed0, Fixed1, Coin, Final };

StepKind step_kind(Step s, Step final_step);
const char* to_string(StepKind k);

// Alg1: t_s measured from the round start. Alg2: t_2 and t_3 from the round
// start, later steps the 2*lambda wait from their own start.
Time step_deadline(const ProtocolParams& p, Step s);
// Delivery bound for small messages of step s (lambda, inflated past mu in Alg2).
Time small_bound(const ProtocolParams& p, Step s);

// --- chain entries --------------------------------------------------------------

struct ChainEntry {
    bool genesis = false;
    Round round = 0;
    Digest256 hash;
    std::shared_ptr<ChainEntry> parent;
    std::uint64_t height = 0;  // blocks after genesis
    Digest256 seed;            // Q^round
    Certificate cert;
    std::optional<LeaderEvidence> leader;
    std::optional<Block> block;    // can trail the certificate in Alg2
    std::optional<Status> status;  // S^{round+1}, once the block is attached
    std::set<Digest256> payment_ids;

    Round next_round() const { return genesis ? 0 : round + 1; }
    bool empty() const { return !genesis && cert.bit == 1; }
};
using EntryPtr = std::shared_ptr<ChainEntry>;

// Negative when a is preferred: longer, then non-empty tip, then smaller
// leader credential, then smaller hash.
int compare_entries(const ChainEntry& a, const ChainEntry& b);
bool is_ancestor(const ChainEntry& anc, const ChainEntry& e);
ProvenChain proven_chain(const EntryPtr& tip);

class ChainHistory final : public PaymentHistory {
public:
    ChainHistory(const ChainEntry* parent, Round window) : parent_(parent), window_(window) {}
    bool contains(const Digest256& id) const override;

private:
    const ChainEntry* parent_;
    Round window_;
};

// Interns entries by block hash; shared by all nodes of one simulation.
class Registry {
public:
    explicit Registry(const Genesis& g);
    const EntryPtr& genesis() const { return genesis_; }
    EntryPtr find(const Digest256& h) const;
    EntryPtr intern(const EntryPtr& parent, const Digest256& hash, const Certificate& cert,
                    const std::optional<LeaderEvidence>& leader, const Block* block);
    void attach_block(const EntryPtr& e, const Block& b);
    std::size_t size() const { return by_hash_.size(); }

private:
    EntryPtr genesis_;
    std::unordered_map<Digest256, EntryPtr, DigestHasher> by_hash_;
};

// --- messages ----------------------------------------------------------------------

enum class MsgKind : std::uint8_t { Payment, Proposal, CredentialOnly, Vote };

struct Message {
    MsgKind kind = MsgKind::Vote;
    Round round = 0;
    Step step = 0;
    UserId origin = 0;
    Digest256 id;

    std::optional<Payment> payment;
    std::optional<Block> block;  // proposal
    Digest256 block_hash;
    EphemeralSignature block_esig;
    Credential cred;             // proposal / credential-only
    Signature seed_sig;          // credential-only
    std::optional<Vote> vote;

    bool large() const { return kind == MsgKind::Proposal; }
    std::optional<LeaderEvidence> evidence() const;
};
using MsgPtr = std::shared_ptr<const Message>;

Bytes proposal_payload(Round r, const Digest256& block_hash);

MsgPtr make_payment_msg(const Payment& p);
MsgPtr make_proposal_msg(const Block& b, const EphemeralSignature& esig, const Credential& cred);
MsgPtr make_credential_msg(Round r, const Signature& seed_sig, const Credential& cred);
MsgPtr make_vote_msg(const Vote& v);

// Structural and cryptographic validity of a round message against one parent.
bool message_valid(const Message& m, const ChainEntry& parent, const Committee& c, const ProtocolParams& p);

// Committee of the round built on `parent`.
Committee make_committee(const ChainEntry& parent, const ProtocolParams& p, const KeyDirectory& keys);

// --- tallies -----------------------------------------------------------------------

using VoteKey = std::pair<std::optional<std::uint8_t>, VoteValue>;

struct CleanTally {
    std::map<VoteKey, std::uint64_t> weight;
    std::uint64_t total = 0;
    std::optional<Digest256> min_cred;  // smallest credential hash among counted voters

    std::uint64_t of(const VoteKey& k) const {
        auto it = weight.find(k);
        return it == weight.end() ? 0 : it->second;
    }
    std::uint64_t bit_weight(std::uint8_t b) const;
};

using StepVotes = std::map<UserId, std::vector<Vote>>;

// Voters with more than one distinct vote in the step are left out.
CleanTally clean_tally(const StepVotes& sv);

struct EndingHit {
    Step s_prime = 0;
    std::uint8_t bit = 0;
    VoteValue value;
    bool final_step = false;
};

// --- nodes ---------------------------------------------------------------------------

struct LogRecord {
    Round round = 0;
    Step step = 0;
    std::string action;
    std::string detail;
    double time = 0;
};

class NodeEnv {
public:
    virtual ~NodeEnv() = default;
    virtual const ProtocolParams& params() const = 0;
    virtual KeyDirectory& keys() = 0;
    virtual Registry& registry() = 0;
    virtual const Committee& committee(const EntryPtr& parent) = 0;
    virtual bool valid(const MsgPtr& m, const EntryPtr& parent) = 0;
    virtual void send(UserId from, const MsgPtr& m, bool originate) = 0;
    virtual void set_timer(UserId who, Time at, std::uint64_t tag) = 0;
    virtual bool record_log() const { return false; }

    virtual void round_started(UserId, Round, const EntryPtr&, Time) {}
    virtual void decided(UserId, Round, const EntryPtr&, Time) {}
    virtual void block_known(UserId, Round, const EntryPtr&, Time) {}
    virtual void voted(UserId, Round, Step, Time) {}
    virtual void switched(UserId, const EntryPtr&, const EntryPtr&, Time) {}
};

class Node {
public:
    Node(UserId id, LongTermKeypair kp, EphemeralKeychain chain, NodeEnv& env);

    void start(const EntryPtr& genesis, Time now);
    void receive(const MsgPtr& m, Time now);
    void timer(std::uint64_t tag, Time now);

    // Shadow mode: the node keeps computing honest outputs for the adversary,
    // and signs without erasing from here on.
    void set_malicious() { malicious_ = true; }
    bool malicious() const { return malicious_; }

    UserId id() const { return id_; }
    const LongTermKeypair& keypair() const { return kp_; }
    EphemeralKeychain& keychain() { return chain_; }
    const EntryPtr& tip() const { return tip_; }
    Round round() const { return tip_ ? tip_->next_round() : 0; }
    Step current_step() const { return act_.step; }
    bool knows(const Digest256& h) const { return known_.count(h) != 0; }
    bool has_block(const Digest256& h) const;
    const std::vector<LogRecord>& log() const { return log_; }

    // Messages still queued because no known parent validates them.
    std::size_t orphan_count() const;

private:
    struct Inbox {
        EntryPtr parent;
        Round r = 0;
        const Committee* c = nullptr;
        std::set<Digest256> seen;
        std::map<UserId, MsgPtr> first_proposal;
        std::map<Digest256, Block> blocks;
        std::map<UserId, LeaderEvidence> evidence;
        std::optional<Digest256> best_cred;
        std::map<Step, StepVotes> votes;
        std::set<Digest256> certified;
    };

    struct Active {
        Inbox* in = nullptr;
        Round r = 0;
        Time start{0};
        std::uint64_t epoch = 0;
        bool halted = false;
        Step step = 1;  // Alg1: last handled step; Alg2: step being waited on
        Time step_start{0};
        // Alg2 concurrent steps 2 and 3
        bool leader_fixed = false;
        std::optional<UserId> leader;
        bool step2_done = false;
        bool step3_done = false;
        VoteValue v;  // running value
        std::uint8_t b = 0;
    };

    using InboxKey = std::pair<Round, Digest256>;

    Inbox& inbox(Round r, const EntryPtr& parent);
    void begin_round(const EntryPtr& parent, Time now);
    void accept(Inbox& in, const MsgPtr& m, Time now, bool relay, bool react);
    void retry_orphans(Round r, Time now);
    void note(Round r, Step s, std::string action, std::string detail, Time now);

    std::vector<Credential> my_creds(const Committee& c, Step s) const;
    bool cast(Step s, std::optional<std::uint8_t> bit, const VoteValue& v, Time now);
    void propose(Time now);

    std::optional<EndingHit> find_ending(const Inbox& in, Step vote_step, Step max_s_prime) const;
    std::optional<EndingHit> scan_endings(const Inbox& in, Step max_s_prime) const;
    void certify(Inbox& in, const EndingHit& hit, Time now);
    void adopt(const EntryPtr& e, Time now);
    bool blocks_complete() const;

    // Alg1
    void alg1_step(Step s, Time now);
    void alg1_schedule_after(Step s);
    std::optional<Step> next_verifier_step(Step after) const;
    // Alg2
    void alg2_progress(Time now);
    void alg2_timeout(Step s, int what, Time now);
    void alg2_enter(Step s, Time now);
    void alg2_fix_leader(Time now);
    std::optional<std::uint8_t> alg2_early_bit(Step s) const;

    std::uint64_t tag(Step s, int what) const;
    VoteValue empty_value(const Inbox& in) const;
    std::optional<UserId> leader_of(const Inbox& in) const;

    UserId id_;
    LongTermKeypair kp_;
    EphemeralKeychain chain_;
    NodeEnv& env_;
    bool malicious_ = false;

    EntryPtr tip_;
    std::map<Digest256, EntryPtr> known_;           // certified entries this node knows
    std::map<Round, std::vector<EntryPtr>> by_next_;  // known entries by the round they precede
    std::set<Digest256> missing_blocks_;            // certified but block not received
    std::map<InboxKey, Inbox> inboxes_;
    std::map<Round, std::vector<MsgPtr>> orphans_;  // no known parent validates them yet
    std::map<Round, std::set<Digest256>> payments_seen_;  // by rho
    std::vector<Payment> pending_;
    Active act_;
    std::uint64_t epoch_ = 0;
    std::vector<LogRecord> log_;
};

}  // namespace sortilab::consensus
