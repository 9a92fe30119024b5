#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "sortilab/ledger.hpp"

namespace sortilab {

namespace {

using nlohmann::json;

std::string hex(std::span<const std::uint8_t> b) {
    static constexpr char k[] = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (auto c : b) {
        s.push_back(k[c >> 4]);
        s.push_back(k[c & 15]);
    }
    return s;
}

Bytes unhex(const std::string& s) {
    if (s.size() % 2) throw std::invalid_argument("odd-length hex field");
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        throw std::invalid_argument("bad hex digit");
    };
    Bytes b(s.size() / 2);
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = static_cast<std::uint8_t>(nib(s[2 * i]) << 4 | nib(s[2 * i + 1]));
    return b;
}

json enc(const Signature& s) { return {{"signer", s.signer}, {"md", s.message_digest.hex()}, {"sig", hex(s.bytes)}}; }

Signature dec_sig(const json& j) {
    Signature s;
    s.signer = j.at("signer").get<UserId>();
    s.message_digest = Digest256::from_hex(j.at("md").get<std::string>());
    s.bytes = unhex(j.at("sig").get<std::string>());
    return s;
}

json enc(const Credential& c) {
    return {{"user", c.user}, {"copy", c.copy}, {"round", c.round}, {"step", c.step},
            {"sig", enc(c.signature)}, {"hash", c.hash.hex()}};
}

Credential dec_cred(const json& j) {
    Credential c;
    c.user = j.at("user").get<UserId>();
    c.copy = j.at("copy").get<std::uint32_t>();
    c.round = j.at("round").get<Round>();
    c.step = j.at("step").get<Step>();
    c.signature = dec_sig(j.at("sig"));
    c.hash = Digest256::from_hex(j.at("hash").get<std::string>());
    return c;
}

json enc(const EphemeralSignature& e) {
    json chain = json::array();
    for (const auto& l : e.chain)
        chain.push_back({{"by", l.authorized_by_step},
                         {"master", l.new_master_id.hex()},
                         {"first", l.first_step},
                         {"last", l.last_step},
                         {"auth", enc(l.authorization)}});
    return {{"owner", e.owner}, {"round", e.round}, {"step", e.step},
            {"base", e.base_master_id.hex()}, {"chain", chain}, {"sig", enc(e.sig)}};
}

EphemeralSignature dec_esig(const json& j) {
    EphemeralSignature e;
    e.owner = j.at("owner").get<UserId>();
    e.round = j.at("round").get<Round>();
    e.step = j.at("step").get<Step>();
    e.base_master_id = Digest256::from_hex(j.at("base").get<std::string>());
    for (const auto& l : j.at("chain")) {
        CascadeLink c;
        c.authorized_by_step = l.at("by").get<Step>();
        c.new_master_id = Digest256::from_hex(l.at("master").get<std::string>());
        c.first_step = l.at("first").get<Step>();
        c.last_step = l.at("last").get<Step>();
        c.authorization = dec_sig(l.at("auth"));
        e.chain.push_back(c);
    }
    e.sig = dec_sig(j.at("sig"));
    return e;
}

json enc(const Payment& p) {
    return {{"payer", p.payer}, {"payee", p.payee}, {"amount", p.amount}, {"rho", p.rho},
            {"window", p.window}, {"info", hex(p.info)}, {"hidden", p.hidden_info_digest.hex()},
            {"sig", enc(p.signature)}};
}

Payment dec_payment(const json& j) {
    Payment p;
    p.payer = j.at("payer").get<UserId>();
    p.payee = j.at("payee").get<UserId>();
    p.amount = j.at("amount").get<Money>();
    p.rho = j.at("rho").get<Round>();
    p.window = j.at("window").get<Round>();
    p.info = unhex(j.at("info").get<std::string>());
    p.hidden_info_digest = Digest256::from_hex(j.at("hidden").get<std::string>());
    p.signature = dec_sig(j.at("sig"));
    return p;
}

json enc(const Block& b) {
    json pay = json::array();
    for (const auto& p : b.payset) pay.push_back(enc(p));
    json j = {{"round", b.round}, {"payset", pay}, {"prev_hash", b.prev_hash.hex()}};
    if (b.leader_seed_sig) j["seed_sig"] = enc(*b.leader_seed_sig);
    else j["prev_seed"] = b.prev_seed.hex();
    return j;
}

Block dec_block(const json& j) {
    Block b;
    b.round = j.at("round").get<Round>();
    for (const auto& p : j.at("payset")) b.payset.push_back(dec_payment(p));
    b.prev_hash = Digest256::from_hex(j.at("prev_hash").get<std::string>());
    if (j.contains("seed_sig")) b.leader_seed_sig = dec_sig(j.at("seed_sig"));
    else b.prev_seed = Digest256::from_hex(j.at("prev_seed").get<std::string>());
    return b;
}

json enc(const VoteValue& v) {
    if (v.bottom) return nullptr;
    json j = {{"hash", v.hash.hex()}};
    if (v.leader) j["leader"] = *v.leader;
    return j;
}

VoteValue dec_value(const json& j) {
    if (j.is_null()) return VoteValue::none();
    VoteValue v = VoteValue::of(Digest256::from_hex(j.at("hash").get<std::string>()));
    if (j.contains("leader")) v.leader = j.at("leader").get<UserId>();
    return v;
}

json enc(const Vote& v) {
    json creds = json::array();
    for (const auto& c : v.creds) creds.push_back(enc(c));
    json j = {{"round", v.round}, {"step", v.step}, {"value", enc(v.value)}, {"creds", creds}, {"esig", enc(v.esig)}};
    j["bit"] = v.bit ? json(*v.bit) : json(nullptr);
    return j;
}

Vote dec_vote(const json& j) {
    Vote v;
    v.round = j.at("round").get<Round>();
    v.step = j.at("step").get<Step>();
    if (!j.at("bit").is_null()) v.bit = j.at("bit").get<std::uint8_t>();
    v.value = dec_value(j.at("value"));
    for (const auto& c : j.at("creds")) v.creds.push_back(dec_cred(c));
    v.esig = dec_esig(j.at("esig"));
    return v;
}

json enc(const Certificate& c) {
    json votes = json::array();
    for (const auto& v : c.votes) votes.push_back(enc(v));
    json j = {{"round", c.round}, {"ending_step", c.ending_step}, {"bit", c.bit},
              {"final", c.final_step}, {"votes", votes}};
    if (c.leader) j["leader"] = {{"seed_sig", enc(c.leader->seed_sig)}, {"cred", enc(c.leader->cred)}};
    return j;
}

Certificate dec_cert(const json& j) {
    Certificate c;
    c.round = j.at("round").get<Round>();
    c.ending_step = j.at("ending_step").get<Step>();
    c.bit = j.at("bit").get<std::uint8_t>();
    c.final_step = j.at("final").get<bool>();
    for (const auto& v : j.at("votes")) c.votes.push_back(dec_vote(v));
    if (j.contains("leader"))
        c.leader = LeaderEvidence{dec_sig(j.at("leader").at("seed_sig")), dec_cred(j.at("leader").at("cred"))};
    return c;
}

}  // namespace

void write_chain(std::ostream& os, const ProvenChain& chain) {
    for (const auto& pb : chain) {
        json j = {{"block", enc(pb.block)}, {"cert", enc(pb.cert)}};
        if (pb.leader_credential) j["leader_credential"] = enc(*pb.leader_credential);
        os << j.dump() << '\n';
    }
}

ProvenChain read_chain(std::istream& is) {
    ProvenChain chain;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            json j = json::parse(line);
            ProvenBlock pb;
            pb.block = dec_block(j.at("block"));
            pb.cert = dec_cert(j.at("cert"));
            if (j.contains("leader_credential")) pb.leader_credential = dec_cred(j.at("leader_credential"));
            chain.push_back(std::move(pb));
        } catch (const std::exception& e) {
            throw std::invalid_argument("chain line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return chain;
}

}  // namespace sortilab
