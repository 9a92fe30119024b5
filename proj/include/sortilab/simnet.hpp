#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "sortilab/consensus.hpp"
#include "sortilab/rng.hpp"

// Discrete-event network: bounded-delay gossip, an adversary that schedules
// delivery inside the bounds, corruptions and partitions.
namespace sortilab::simnet {

using consensus::EntryPtr;
using consensus::MsgPtr;
using consensus::Time;
using consensus::Variant;

struct Corruption {
    Time at{0};
    UserId user = 0;
};

// A physical split: from `from` until `to`, messages only cross between users
// with equal component labels; held messages are released at `to`.
struct PartitionWindow {
    Time from{0};
    Time to{0};
    std::vector<int> component;  // per user
};

struct SimConfig {
    Variant variant = Variant::Alg1;
    std::uint32_t users = 20;
    double h = 0.8;
    bool weighted = false;
    Money balance = 1000;         // per user at genesis
    std::vector<Money> balances;  // explicit genesis balances; overrides `balance`
    Time lambda{1};
    Time Lambda{6};
    Round rounds = 10;
    std::string adversary = "honest";
    std::uint64_t seed = 1;
    std::uint64_t n = 0;    // expected verifiers per step; 0 = every user
    std::uint64_t n1 = 0;   // expected potential leaders; 0 = every user
    std::uint64_t t_H = 0;  // 0 = floor(2n/3) + 1
    Step m = 180;
    Step mu = 30;
    Step max_steps = 600;
    Scheme scheme = Scheme::Prf;
    std::uint32_t payments_per_round = 2;
    bool record_log = false;
    Time max_time{0};  // 0 = derived from the round count
    Round retain_rounds = 0;  // certificate votes older than this are dropped (0 keeps all)
    std::vector<Corruption> corruptions;
    std::vector<PartitionWindow> partitions;
    Round lookback = 1;  // weighted mode: balances as of the block `lookback` rounds back
    Round payment_window = 0;
    std::optional<std::uint32_t> initial_malicious;  // default: the strategy decides

    std::uint32_t budget() const;  // floor((1-h) * users)
    consensus::ProtocolParams protocol() const;
};

struct RoundRecord {
    Round round = 0;
    std::string block_hash;
    bool empty = false;
    std::optional<UserId> leader;  // smallest step-1 credential over all users
    bool leader_honest = false;
    bool by_leader = false;  // the block is the leader's proposal
    Step ending_step = 0;
    std::uint8_t bit = 0;
    bool final_step = false;
    std::uint64_t cert_weight = 0;
    std::size_t payset = 0;
    double t_start = 0;  // T^r
    double t_first = 0;  // T^{r+1}
    double t_last = 0;   // last honest user to learn the round
    double t_block = 0;  // first honest user holding the block itself
    std::uint32_t coin_steps = 0;  // coin steps with an honest propagator
    bool final_voted = false;
    std::uint32_t distinct = 0;  // distinct blocks certified by honest users
    std::uint32_t deciders = 0;
    std::uint32_t honest = 0;  // honest users at the time of the first decision

    std::uint32_t coin_trials(Step m) const;  // L^r
};

struct Counters {
    std::uint64_t events = 0;
    std::uint64_t deliveries = 0;
    std::uint64_t originated = 0;
    std::uint64_t switches = 0;
    std::uint64_t corruptions = 0;
    std::uint64_t erased_key_refusals = 0;  // adversary signing attempts on erased keys
    std::uint64_t forged_signatures = 0;    // adversary signatures on unused keys
    std::uint64_t forged_certificates = 0;  // second certificates that verified
    std::uint64_t forks = 0;                // rounds with more than one certified block
};

struct Trace {
    SimConfig config;
    std::string strategy;
    std::vector<RoundRecord> rounds;
    Counters counters;
    bool completed = false;
    double end_time = 0;
    std::vector<std::vector<consensus::LogRecord>> logs;  // per user when recorded
    std::vector<bool> malicious;                          // at the end of the run
    std::vector<std::string> tips;                        // per user
    std::vector<std::vector<std::string>> chains;         // per honest user: hashes from round 0
};

class Simulator;

class Strategy {
public:
    virtual ~Strategy() = default;
    virtual std::string name() const = 0;
    // How many users start corrupted (the default takes the whole budget).
    virtual std::uint32_t initial_corruptions(const SimConfig& cfg) const { return cfg.budget(); }
    virtual void attach(Simulator&) {}
    // Delay for a message sent or relayed by an honest user; clamped to [0, bound].
    virtual Time delay(Simulator& sim, const MsgPtr& m, UserId from, UserId to, Time bound) = 0;
    // Output of a corrupted user's shadow logic.
    virtual void malicious_send(Simulator& sim, UserId from, const MsgPtr& m, bool originate);
    virtual void observe(Simulator&, UserId, const MsgPtr&) {}
    virtual void round_started(Simulator&, Round, const EntryPtr&) {}
    virtual void decided(Simulator&, UserId, Round, const EntryPtr&) {}
    virtual void wake(Simulator&, std::uint64_t) {}
};

std::unique_ptr<Strategy> make_strategy(const std::string& name);
std::vector<std::string> strategy_names();

class Simulator final : public consensus::NodeEnv {
public:
    Simulator(SimConfig cfg, std::unique_ptr<Strategy> strategy);
    ~Simulator() override;

    Trace run();

    // --- adversary interface
    Time now() const { return now_; }
    const SimConfig& config() const { return cfg_; }
    std::uint32_t size() const { return cfg_.users; }
    bool corrupted(UserId u) const { return corrupted_[u]; }
    bool corrupt(UserId u);  // false when the budget is spent
    std::uint32_t budget_left() const { return budget_left_; }
    consensus::Node& node(UserId u) { return *nodes_[u]; }
    Rng& rng() { return rng_; }
    Counters& counters() { return trace_.counters; }
    Time bound_for(const MsgPtr& m) const;
    // Adversarial delivery at any time from now on.
    void deliver(const MsgPtr& m, UserId to, Time at);
    // Delivery to every other user as an honest sender would do it.
    void broadcast(UserId from, const MsgPtr& m);
    void schedule_wake(Time at, std::uint64_t tag);
    void set_partition(std::vector<int> component);
    void heal();
    bool partitioned() const { return partitioned_; }
    int component(UserId u) const { return component_.empty() ? 0 : component_[u]; }
    std::vector<UserId> honest_users() const;
    std::vector<UserId> malicious_users() const;
    std::optional<Time> round_start(Round r) const;
    const KeyDirectory& directory() const { return keys_; }

    // --- NodeEnv
    const consensus::ProtocolParams& params() const override { return params_; }
    KeyDirectory& keys() override { return keys_; }
    consensus::Registry& registry() override { return *registry_; }
    const Committee& committee(const EntryPtr& parent) override;
    bool valid(const MsgPtr& m, const EntryPtr& parent) override;
    void send(UserId from, const MsgPtr& m, bool originate) override;
    void set_timer(UserId who, Time at, std::uint64_t tag) override;
    bool record_log() const override { return cfg_.record_log; }
    void round_started(UserId u, Round r, const EntryPtr& parent, Time t) override;
    void decided(UserId u, Round r, const EntryPtr& e, Time t) override;
    void block_known(UserId u, Round r, const EntryPtr& e, Time t) override;
    void voted(UserId u, Round r, Step s, Time t) override;
    void switched(UserId u, const EntryPtr& from, const EntryPtr& to, Time t) override;

private:
    enum class Ev : std::uint8_t { Deliver, Timer, Corrupt, Wake, Split, Heal };
    struct Event {
        Time at;
        std::uint64_t seq;
        Ev kind;
        UserId who;
        MsgPtr msg;
        std::uint64_t tag;
    };
    struct Later {
        bool operator()(const Event& a, const Event& b) const { return a.at != b.at ? a.at > b.at : a.seq > b.seq; }
    };
    struct Sched {
        Round round = 0;
        std::vector<Time> at;  // earliest scheduled delivery per user, -1 when none
    };
    struct RoundState {
        RoundRecord rec;
        Time start{0};
        bool started = false;
        bool decided = false;
        std::vector<bool> deciders;
        std::map<Digest256, std::uint32_t> hashes;
        std::set<Step> coin_steps;
    };
    struct ValidKey {
        Digest256 msg;
        Digest256 parent;
        bool operator==(const ValidKey&) const = default;
    };
    struct ValidKeyHash {
        std::size_t operator()(const ValidKey& k) const noexcept {
            return DigestHasher{}(k.msg) ^ (DigestHasher{}(k.parent) * 0x9e3779b97f4a7c15ULL);
        }
    };

    void push(Time at, Ev kind, UserId who, MsgPtr msg = nullptr, std::uint64_t tag = 0);
    void schedule_delivery(const MsgPtr& m, UserId to, Time at);
    RoundState& state(Round r);
    void issue_payments(Round rho);
    void sweep(Round r);
    bool finished() const;
    void finalize();

    SimConfig cfg_;
    consensus::ProtocolParams params_;
    std::unique_ptr<Strategy> strategy_;
    Rng rng_;
    KeyDirectory keys_;
    std::vector<LongTermKeypair> kps_;
    std::unique_ptr<consensus::Registry> registry_;
    std::vector<std::unique_ptr<consensus::Node>> nodes_;
    std::vector<bool> corrupted_;
    std::uint32_t budget_left_ = 0;

    Time now_{0};
    std::uint64_t seq_ = 0;
    std::priority_queue<Event, std::vector<Event>, Later> queue_;
    std::unordered_map<Digest256, Sched, DigestHasher> sched_;
    std::unordered_map<ValidKey, bool, ValidKeyHash> valid_;
    std::unordered_map<Digest256, std::pair<Round, std::unique_ptr<Committee>>, DigestHasher> committees_;
    std::map<Round, RoundState> rounds_;
    Round swept_ = 0;
    bool done_ = false;

    bool partitioned_ = false;
    std::vector<int> component_;
    std::vector<std::pair<MsgPtr, std::pair<UserId, UserId>>> held_;

    Trace trace_;
};

// Convenience: build and run.
Trace simulate(const SimConfig& cfg);

}  // namespace sortilab::simnet
