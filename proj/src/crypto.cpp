#include "sortilab/crypto.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <openssl/sha.h>
#include <sodium.h>

#include <cmath>
#include <cstring>

namespace sortilab {

namespace {

constexpr char kHex[] = "0123456789abcdef";

void ensure_sodium() {
    static const bool ok = [] { return sodium_init() >= 0; }();
    if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

Bytes hmac_sha256(std::span<const std::uint8_t> key, const Digest256& msg) {
    Bytes out(32);
    unsigned int len = 0;
    HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), msg.bytes.data(), msg.bytes.size(), out.data(),
         &len);
    out.resize(len);
    return out;
}

Bytes ed25519_sign(const Digest256& seed, const Digest256& msg) {
    ensure_sodium();
    std::array<unsigned char, crypto_sign_PUBLICKEYBYTES> pk{};
    std::array<unsigned char, crypto_sign_SECRETKEYBYTES> sk{};
    crypto_sign_seed_keypair(pk.data(), sk.data(), seed.bytes.data());
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, msg.bytes.data(), msg.bytes.size(), sk.data());
    sodium_memzero(sk.data(), sk.size());
    return sig;
}

Bytes ed25519_public(const Digest256& seed) {
    ensure_sodium();
    std::array<unsigned char, crypto_sign_PUBLICKEYBYTES> pk{};
    std::array<unsigned char, crypto_sign_SECRETKEYBYTES> sk{};
    crypto_sign_seed_keypair(pk.data(), sk.data(), seed.bytes.data());
    sodium_memzero(sk.data(), sk.size());
    return Bytes(pk.begin(), pk.end());
}

bool ed25519_verify(std::span<const std::uint8_t> pk, const Digest256& msg, const Bytes& sig) {
    ensure_sodium();
    if (pk.size() != crypto_sign_PUBLICKEYBYTES || sig.size() != crypto_sign_BYTES) return false;
    return crypto_sign_verify_detached(sig.data(), msg.bytes.data(), msg.bytes.size(), pk.data()) == 0;
}

Digest256 derived_seed(const Digest256& master_secret, UserId owner, Round r, Step s) {
    return hash(Encoder().tag("eph").digest(master_secret).u32(owner).u64(r).u32(s));
}

Bytes derived_sign(Scheme scheme, const Digest256& seed, const Digest256& msg) {
    if (scheme == Scheme::Ed25519) return ed25519_sign(seed, msg);
    return hmac_sha256(seed.bytes, msg);
}

bool derived_verify(Scheme scheme, const Digest256& seed, const Digest256& msg, const Bytes& sig) {
    if (scheme == Scheme::Ed25519) return ed25519_verify(ed25519_public(seed), msg, sig);
    return hmac_sha256(seed.bytes, msg) == sig;
}

// 256-bit big-endian value of m * 2^shift, saturating is handled by the caller.
Digest256 shifted(std::uint64_t m, int shift) {
    Digest256 d;
    if (shift <= -64) return d;
    if (shift < 0) {
        m >>= -shift;
        shift = 0;
    }
    for (int bit = 0; bit < 64; ++bit) {
        if (((m >> bit) & 1u) == 0) continue;
        int pos = bit + shift;
        if (pos >= 256) continue;
        d.bytes[31 - pos / 8] |= static_cast<std::uint8_t>(1u << (pos % 8));
    }
    return d;
}

}  // namespace

bool Digest256::is_zero() const {
    for (auto b : bytes)
        if (b != 0) return false;
    return true;
}

std::string Digest256::hex() const {
    std::string s;
    s.reserve(64);
    for (auto b : bytes) {
        s.push_back(kHex[b >> 4]);
        s.push_back(kHex[b & 15]);
    }
    return s;
}

Digest256 Digest256::from_hex(std::string_view hex) {
    if (hex.size() != 64) throw std::invalid_argument("digest hex must be 64 characters");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw std::invalid_argument("bad hex digit");
    };
    Digest256 d;
    for (std::size_t i = 0; i < 32; ++i)
        d.bytes[i] = static_cast<std::uint8_t>(nib(hex[2 * i]) << 4 | nib(hex[2 * i + 1]));
    return d;
}

std::size_t DigestHasher::operator()(const Digest256& d) const noexcept {
    std::size_t v;
    std::memcpy(&v, d.bytes.data(), sizeof v);
    return v;
}

Encoder& Encoder::u8(std::uint8_t v) {
    buf_.push_back(v);
    return *this;
}

Encoder& Encoder::u32(std::uint32_t v) {
    for (int i = 3; i >= 0; --i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
}

Encoder& Encoder::u64(std::uint64_t v) {
    for (int i = 7; i >= 0; --i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
}

Encoder& Encoder::tag(std::string_view s) {
    return blob(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

Encoder& Encoder::raw(std::span<const std::uint8_t> b) {
    buf_.insert(buf_.end(), b.begin(), b.end());
    return *this;
}

Encoder& Encoder::blob(std::span<const std::uint8_t> b) {
    u32(static_cast<std::uint32_t>(b.size()));
    return raw(b);
}

Encoder& Encoder::digest(const Digest256& d) { return raw(d.bytes); }

Digest256 hash(std::span<const std::uint8_t> data) {
    Digest256 d;
    SHA256(data.data(), data.size(), d.bytes.data());
    return d;
}

Digest256 hash(std::string_view data) {
    return hash(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

// Truncates to the top 64 bits, which a long double holds exactly; results are
// monotone in the digest and never reach 1.
long double digest_fraction(const Digest256& d) {
    std::uint64_t top = 0;
    for (int i = 0; i < 8; ++i) top = top << 8 | d.bytes[i];
    return std::ldexp(static_cast<long double>(top), -64);
}

Threshold Threshold::from_ratio(std::uint64_t num, std::uint64_t den) {
    if (den == 0) throw std::invalid_argument("threshold denominator is zero");
    Threshold t;
    if (num >= den) {
        t.saturated_ = true;
        t.bound_.bytes.fill(0xff);
        return t;
    }
    unsigned __int128 rem = num;
    for (auto& byte : t.bound_.bytes) {
        rem <<= 8;
        byte = static_cast<std::uint8_t>(rem / den);
        rem %= den;
    }
    return t;
}

Threshold Threshold::from_double(double p) {
    if (!(p > 0.0)) return from_ratio(0, 1);
    if (p >= 1.0) return from_ratio(1, 1);
    int e = 0;
    double frac = std::frexp(p, &e);  // p = frac * 2^e, frac in [0.5,1)
    auto m = static_cast<std::uint64_t>(std::ldexp(frac, 53));
    Threshold t;
    t.bound_ = shifted(m, 256 + e - 53);
    return t;
}

bool Threshold::admits(const Digest256& d) const { return saturated_ || d <= bound_; }

long double Threshold::value() const {
    if (saturated_) return 1.0L;
    return digest_fraction(bound_);
}

std::string to_string(Scheme s) { return s == Scheme::Ed25519 ? "ed25519" : "prf"; }

Scheme scheme_from_string(std::string_view s) {
    if (s == "prf") return Scheme::Prf;
    if (s == "ed25519") return Scheme::Ed25519;
    throw std::invalid_argument("unknown signature scheme: " + std::string(s));
}

LongTermKeypair generate_keypair(UserId id, const Digest256& seed, Scheme scheme) {
    LongTermKeypair kp;
    kp.id = id;
    kp.scheme = scheme;
    Digest256 s = hash(Encoder().tag("ltk").digest(seed).u32(id));
    kp.secret.assign(s.bytes.begin(), s.bytes.end());
    if (scheme == Scheme::Ed25519) {
        kp.public_key = ed25519_public(s);
    } else {
        Digest256 pk = hash(Encoder().tag("pk").digest(s));
        kp.public_key.assign(pk.bytes.begin(), pk.bytes.end());
    }
    return kp;
}

Signature sign(const LongTermKeypair& kp, std::span<const std::uint8_t> msg) {
    Signature sig;
    sig.signer = kp.id;
    sig.message_digest = hash(msg);
    if (kp.scheme == Scheme::Ed25519) {
        Digest256 seed;
        std::memcpy(seed.bytes.data(), kp.secret.data(), 32);
        sig.bytes = ed25519_sign(seed, sig.message_digest);
    } else {
        sig.bytes = hmac_sha256(kp.secret, sig.message_digest);
    }
    return sig;
}

Bytes cascade_payload(UserId owner, Round r, const Digest256& new_master_id, Step first, Step last) {
    return Encoder().tag("cascade").u32(owner).u64(r).digest(new_master_id).u32(first).u32(last).take();
}

Digest256 master_id_of(const Digest256& master_secret) {
    return hash(Encoder().tag("master-id").digest(master_secret));
}

EphemeralKeychain::EphemeralKeychain(UserId owner, Scheme scheme, const Digest256& master_secret, Round first_round,
                                     Round last_round, Step mu)
    : owner_(owner), scheme_(scheme), first_round_(first_round), last_round_(last_round), mu_(mu) {
    if (mu == 0) throw std::invalid_argument("mu must be positive");
    if (last_round < first_round) throw std::invalid_argument("empty round range");
    base_.master_secret = master_secret;
    base_.master_id = master_id_of(master_secret);
    base_.first_step = 1;
    base_.last_step = mu;
}

void EphemeralKeychain::register_with(KeyDirectory& dir) const {
    dir.add_master(owner_, scheme_, base_.master_secret, first_round_, last_round_, 1, mu_);
}

bool EphemeralKeychain::in_range(Round r, Step s) const {
    return r >= first_round_ && r <= last_round_ && s >= 1 && s <= last_step(r);
}

Step EphemeralKeychain::last_step(Round r) const {
    auto it = extra_.find(r);
    if (it == extra_.end() || it->second.empty()) return mu_;
    return it->second.back().last_step;
}

const EphemeralKeychain::Stash& EphemeralKeychain::stash_for(Round r, Step s) const {
    if (s <= mu_) return base_;
    const auto& v = extra_.at(r);
    for (const auto& st : v)
        if (s >= st.first_step && s <= st.last_step) return st;
    throw OutOfRange("no stash covers step");
}

std::vector<CascadeLink> EphemeralKeychain::chain_for(Round r, Step s) const {
    std::vector<CascadeLink> out;
    if (s <= mu_) return out;
    for (const auto& link : links_.at(r)) {
        out.push_back(link);
        if (s <= link.last_step) break;
    }
    return out;
}

EphemeralSignature EphemeralKeychain::do_sign(Round r, Step s, std::span<const std::uint8_t> msg, bool erase) {
    if (!in_range(r, s)) throw OutOfRange("ephemeral key (" + std::to_string(r) + "," + std::to_string(s) +
                                          ") outside the stash of user " + std::to_string(owner_));
    if (consumed(r, s))
        throw AlreadyConsumed("ephemeral key (" + std::to_string(r) + "," + std::to_string(s) + ") of user " +
                              std::to_string(owner_) + " already erased");
    const Stash& st = stash_for(r, s);
    EphemeralSignature es;
    es.owner = owner_;
    es.round = r;
    es.step = s;
    es.base_master_id = base_.master_id;
    es.chain = chain_for(r, s);
    es.sig.signer = owner_;
    es.sig.message_digest = hash(msg);
    es.sig.bytes = derived_sign(scheme_, derived_seed(st.master_secret, owner_, r, s), es.sig.message_digest);
    if (erase) consumed_.insert({r, s});
    return es;
}

EphemeralSignature EphemeralKeychain::sign(Round r, Step s, std::span<const std::uint8_t> msg) {
    return do_sign(r, s, msg, true);
}

EphemeralSignature EphemeralKeychain::sign_retaining(Round r, Step s, std::span<const std::uint8_t> msg) {
    return do_sign(r, s, msg, false);
}

std::optional<EphemeralSignature> EphemeralKeychain::extend_stash(Round r, KeyDirectory& dir,
                                                                  std::optional<std::span<const std::uint8_t>> step_msg,
                                                                  Step extension) {
    if (r < first_round_ || r > last_round_) throw OutOfRange("round outside keychain range");
    const Step terminal = last_step(r);
    if (consumed(r, terminal))
        throw AlreadyConsumed("terminal key (" + std::to_string(r) + "," + std::to_string(terminal) +
                              ") already erased; cannot authorize a new stash");
    if (extension == 0) extension = mu_;

    std::optional<EphemeralSignature> out;
    if (step_msg) out = do_sign(r, terminal, *step_msg, false);

    const Stash& cur = stash_for(r, terminal);
    Stash next;
    next.master_secret = hash(Encoder().tag("next-master").digest(cur.master_secret).u64(r).u32(terminal));
    next.master_id = master_id_of(next.master_secret);
    next.first_step = terminal + 1;
    next.last_step = terminal + extension;

    CascadeLink link;
    link.authorized_by_step = terminal;
    link.new_master_id = next.master_id;
    link.first_step = next.first_step;
    link.last_step = next.last_step;
    Bytes payload = cascade_payload(owner_, r, next.master_id, next.first_step, next.last_step);
    link.authorization.signer = owner_;
    link.authorization.message_digest = hash(payload);
    link.authorization.bytes =
        derived_sign(scheme_, derived_seed(cur.master_secret, owner_, r, terminal), link.authorization.message_digest);

    consumed_.insert({r, terminal});
    dir.add_master(owner_, scheme_, next.master_secret, r, r, next.first_step, next.last_step);
    extra_[r].push_back(next);
    links_[r].push_back(link);
    return out;
}

void KeyDirectory::add(const LongTermKeypair& kp) { keys_[kp.id] = Entry{kp.scheme, kp.public_key, kp.secret}; }

void KeyDirectory::add_master(UserId owner, Scheme scheme, const Digest256& master_secret, Round first_round,
                              Round last_round, Step first_step, Step last_step) {
    masters_[master_id_of(master_secret)] =
        Master{owner, scheme, master_secret, first_round, last_round, first_step, last_step};
}

const Bytes& KeyDirectory::public_key(UserId id) const {
    auto it = keys_.find(id);
    if (it == keys_.end()) throw std::out_of_range("unknown user " + std::to_string(id));
    return it->second.public_key;
}

bool KeyDirectory::verify(std::span<const std::uint8_t> msg, const Signature& sig) const {
    auto it = keys_.find(sig.signer);
    if (it == keys_.end()) return false;
    if (hash(msg) != sig.message_digest) return false;
    const Entry& e = it->second;
    if (e.scheme == Scheme::Ed25519) return ed25519_verify(e.public_key, sig.message_digest, sig.bytes);
    return hmac_sha256(e.secret, sig.message_digest) == sig.bytes;
}

bool KeyDirectory::verify_derived(const Master& m, Round r, Step s, const Digest256& msg_digest,
                                  const Signature& sig) const {
    return derived_verify(m.scheme, derived_seed(m.secret, m.owner, r, s), msg_digest, sig.bytes);
}

bool KeyDirectory::verify_ephemeral(std::span<const std::uint8_t> msg, const EphemeralSignature& es) const {
    if (es.sig.signer != es.owner) return false;
    if (hash(msg) != es.sig.message_digest) return false;
    auto it = masters_.find(es.base_master_id);
    if (it == masters_.end()) return false;
    const Master* cur = &it->second;
    if (cur->owner != es.owner) return false;
    if (es.round < cur->first_round || es.round > cur->last_round) return false;
    Step first = cur->first_step;
    Step last = cur->last_step;
    for (const auto& link : es.chain) {
        if (link.authorized_by_step != last || link.first_step != last + 1 || link.last_step < link.first_step)
            return false;
        if (link.authorization.signer != es.owner) return false;
        Bytes payload = cascade_payload(es.owner, es.round, link.new_master_id, link.first_step, link.last_step);
        if (hash(payload) != link.authorization.message_digest) return false;
        if (!verify_derived(*cur, es.round, last, link.authorization.message_digest, link.authorization)) return false;
        auto nx = masters_.find(link.new_master_id);
        if (nx == masters_.end() || nx->second.owner != es.owner) return false;
        cur = &nx->second;
        if (es.round < cur->first_round || es.round > cur->last_round) return false;
        first = link.first_step;
        last = link.last_step;
    }
    if (es.step < first || es.step > last) return false;
    return verify_derived(*cur, es.round, es.step, es.sig.message_digest, es.sig);
}

}  // namespace sortilab
