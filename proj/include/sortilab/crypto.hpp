#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace sortilab {

using Bytes = std::vector<std::uint8_t>;
using UserId = std::uint32_t;
using Round = std::uint64_t;
using Step = std::uint32_t;

struct Digest256 {
    std::array<std::uint8_t, 32> bytes{};

    auto operator<=>(const Digest256&) const = default;

    bool is_zero() const;
    bool lsb() const { return (bytes[31] & 1u) != 0; }
    std::string hex() const;
    static Digest256 from_hex(std::string_view hex);
};

struct DigestHasher {
    std::size_t operator()(const Digest256& d) const noexcept;
};

// Canonical length-prefixed encoding for every tuple that gets hashed or signed.
class Encoder {
public:
    Encoder& u8(std::uint8_t v);
    Encoder& u32(std::uint32_t v);
    Encoder& u64(std::uint64_t v);
    Encoder& tag(std::string_view s);
    Encoder& raw(std::span<const std::uint8_t> b);
    Encoder& blob(std::span<const std::uint8_t> b);
    Encoder& digest(const Digest256& d);

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

Digest256 hash(std::span<const std::uint8_t> data);
Digest256 hash(std::string_view data);
inline Digest256 hash(const Encoder& e) { return hash(std::span<const std::uint8_t>(e.bytes())); }

// value(d) / 2^256, rounded to nearest long double.
long double digest_fraction(const Digest256& d);

// Probability threshold p in [0,1] held as the integer floor(p * 2^256).
// A digest passes iff its big-endian value is <= the bound.
class Threshold {
public:
    static Threshold from_ratio(std::uint64_t num, std::uint64_t den);
    static Threshold from_double(double p);
    static Threshold always() { return from_ratio(1, 1); }
    static Threshold never_but_zero() { return from_ratio(0, 1); }

    bool admits(const Digest256& d) const;
    long double value() const;
    bool saturated() const { return saturated_; }

private:
    Digest256 bound_{};
    bool saturated_ = false;  // p >= 1 : every digest passes
};

enum class Scheme : std::uint8_t { Prf, Ed25519 };

std::string to_string(Scheme s);
Scheme scheme_from_string(std::string_view s);

struct Signature {
    UserId signer = 0;
    Digest256 message_digest;
    Bytes bytes;

    auto operator<=>(const Signature&) const = default;
};

struct LongTermKeypair {
    UserId id = 0;
    Scheme scheme = Scheme::Prf;
    Bytes public_key;
    Bytes secret;
};

LongTermKeypair generate_keypair(UserId id, const Digest256& seed, Scheme scheme);
Signature sign(const LongTermKeypair& kp, std::span<const std::uint8_t> msg);
inline Signature sign(const LongTermKeypair& kp, const Encoder& e) {
    return sign(kp, std::span<const std::uint8_t>(e.bytes()));
}

class AlreadyConsumed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OutOfRange : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CascadeLink {
    Step authorized_by_step = 0;  // terminal step of the previous stash
    Digest256 new_master_id;
    Step first_step = 0;
    Step last_step = 0;
    Signature authorization;

    auto operator<=>(const CascadeLink&) const = default;
};

struct EphemeralSignature {
    UserId owner = 0;
    Round round = 0;
    Step step = 0;
    Digest256 base_master_id;
    std::vector<CascadeLink> chain;
    Signature sig;

    auto operator<=>(const EphemeralSignature&) const = default;
};

Bytes cascade_payload(UserId owner, Round r, const Digest256& new_master_id, Step first, Step last);

class KeyDirectory;

class EphemeralKeychain {
public:
    EphemeralKeychain() = default;
    EphemeralKeychain(UserId owner, Scheme scheme, const Digest256& master_secret, Round first_round,
                      Round last_round, Step mu);

    UserId owner() const { return owner_; }
    Step mu() const { return mu_; }
    Round first_round() const { return first_round_; }
    Round last_round() const { return last_round_; }
    const Digest256& base_master_id() const { return base_.master_id; }
    const Digest256& base_master_secret() const { return base_.master_secret; }

    // Signs and erases the (r,s) key.
    EphemeralSignature sign(Round r, Step s, std::span<const std::uint8_t> msg);
    // Signs without erasing; used by adversary-held keychains. Erased keys still fail.
    EphemeralSignature sign_retaining(Round r, Step s, std::span<const std::uint8_t> msg);

    // Authorizes a fresh stash for round r with the current terminal key, then erases it.
    // If step_msg is given, the terminal key signs it first (the (r, terminal)-message).
    // extension = number of new steps (0 means mu).
    std::optional<EphemeralSignature> extend_stash(Round r, KeyDirectory& dir,
                                                   std::optional<std::span<const std::uint8_t>> step_msg = {},
                                                   Step extension = 0);
    void register_with(KeyDirectory& dir) const;

    bool consumed(Round r, Step s) const { return consumed_.count({r, s}) != 0; }
    bool in_range(Round r, Step s) const;
    Step last_step(Round r) const;
    std::size_t consumed_count() const { return consumed_.size(); }

private:
    struct Stash {
        Digest256 master_secret;
        Digest256 master_id;
        Step first_step = 1;
        Step last_step = 0;
    };

    const Stash& stash_for(Round r, Step s) const;
    std::vector<CascadeLink> chain_for(Round r, Step s) const;
    EphemeralSignature do_sign(Round r, Step s, std::span<const std::uint8_t> msg, bool erase);

    UserId owner_ = 0;
    Scheme scheme_ = Scheme::Prf;
    Round first_round_ = 0;
    Round last_round_ = 0;
    Step mu_ = 0;
    Stash base_;
    std::map<Round, std::vector<Stash>> extra_;
    std::map<Round, std::vector<CascadeLink>> links_;
    std::set<std::pair<Round, Step>> consumed_;
};

// Public-key directory. For the Prf scheme it also holds secrets so that
// verification can be done by recomputation, standing in for a trusted harness.
// Ephemeral keys are looked up through registered master identifiers, which
// stands in for an identity-based master public key.
class KeyDirectory {
public:
    void add(const LongTermKeypair& kp);
    void add_master(UserId owner, Scheme scheme, const Digest256& master_secret, Round first_round,
                    Round last_round, Step first_step, Step last_step);

    bool has(UserId id) const { return keys_.count(id) != 0; }
    const Bytes& public_key(UserId id) const;

    bool verify(std::span<const std::uint8_t> msg, const Signature& sig) const;
    bool verify(const Encoder& e, const Signature& sig) const {
        return verify(std::span<const std::uint8_t>(e.bytes()), sig);
    }
    bool verify_ephemeral(std::span<const std::uint8_t> msg, const EphemeralSignature& esig) const;
    bool verify_ephemeral(const Encoder& e, const EphemeralSignature& esig) const {
        return verify_ephemeral(std::span<const std::uint8_t>(e.bytes()), esig);
    }

private:
    struct Entry {
        Scheme scheme;
        Bytes public_key;
        Bytes secret;
    };
    struct Master {
        UserId owner;
        Scheme scheme;
        Digest256 secret;
        Round first_round;
        Round last_round;
        Step first_step;
        Step last_step;
    };
    bool verify_derived(const Master& m, Round r, Step s, const Digest256& msg_digest, const Signature& sig) const;

    std::unordered_map<UserId, Entry> keys_;
    std::unordered_map<Digest256, Master, DigestHasher> masters_;
};

Digest256 master_id_of(const Digest256& master_secret);

}  // namespace sortilab
