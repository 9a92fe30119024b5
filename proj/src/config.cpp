#include "sortilab/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace sortilab::config {

using consensus::Time;

ConfigError::ConfigError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(line > 0 ? source + ":" + std::to_string(line) + ": " + what : source + ": " + what),
      line_(line) {}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        cur = trim(cur);
        if (!cur.empty()) out.push_back(cur);
    }
    return out;
}

std::vector<std::string> words(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

template <typename T>
T parse_uint(const std::string& v) {
    T x{};
    if (v.empty() || v[0] == '-') throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    const char* end = v.data() + v.size();
    auto [p, ec] = std::from_chars(v.data(), end, x);
    if (ec != std::errc() || p != end) throw std::invalid_argument("expected a non-negative integer, got '" + v + "'");
    return x;
}

double parse_double(const std::string& v) {
    std::size_t used = 0;
    double x = 0;
    try {
        x = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size() || v.empty()) throw std::invalid_argument("expected a number, got '" + v + "'");
    return x;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw std::invalid_argument("expected true/false, got '" + v + "'");
}

const std::set<std::string> kRepeatable = {"corrupt", "partition"};

}  // namespace

Time parse_time(std::string_view sv) {
    const std::string s = trim(sv);
    if (s.empty()) throw std::invalid_argument("empty time value");
    if (auto slash = s.find('/'); slash != std::string::npos) {
        const auto num = parse_uint<std::int64_t>(trim(s.substr(0, slash)));
        const auto den = parse_uint<std::int64_t>(trim(s.substr(slash + 1)));
        if (den == 0) throw std::invalid_argument("zero denominator in '" + s + "'");
        return Time(num, den);
    }
    if (auto dot = s.find('.'); dot != std::string::npos) {
        const std::string ip = s.substr(0, dot), fp = s.substr(dot + 1);
        if (fp.size() > 9) throw std::invalid_argument("at most 9 decimals in '" + s + "'");
        std::int64_t den = 1;
        for (std::size_t i = 0; i < fp.size(); ++i) den *= 10;
        const std::int64_t a = ip.empty() ? 0 : parse_uint<std::int64_t>(ip);
        const std::int64_t b = fp.empty() ? 0 : parse_uint<std::int64_t>(fp);
        return Time(a * den + b, den);
    }
    return Time(parse_uint<std::int64_t>(s));
}

std::string format_time(const Time& t) {
    if (t.denominator() == 1) return std::to_string(t.numerator());
    return std::to_string(t.numerator()) + "/" + std::to_string(t.denominator());
}

void apply(RunConfig& c, const std::string& key, const std::string& value, const std::string& source, int line) {
    try {
        if (key == "variant") c.variant = consensus::variant_from_string(value);
        else if (key == "users") c.users = parse_uint<std::uint32_t>(value);
        else if (key == "h") c.h = parse_double(value);
        else if (key == "mode") {
            if (value == "users") c.weighted = false;
            else if (value == "money") c.weighted = true;
            else throw std::invalid_argument("mode is 'users' or 'money', got '" + value + "'");
        } else if (key == "balance") c.balance = parse_uint<Money>(value);
        else if (key == "balances") {
            c.balances.clear();
            for (const auto& b : split(value, ',')) c.balances.push_back(parse_uint<Money>(b));
        } else if (key == "lambda") c.lambda = parse_time(value);
        else if (key == "big_lambda") c.Lambda = parse_time(value);
        else if (key == "rounds") c.rounds = parse_uint<Round>(value);
        else if (key == "adversary") {
            (void)simnet::make_strategy(value);
            c.adversary = value;
        } else if (key == "seed") c.seed = parse_uint<std::uint64_t>(value);
        else if (key == "n") c.n = parse_uint<std::uint64_t>(value);
        else if (key == "n1") c.n1 = parse_uint<std::uint64_t>(value);
        else if (key == "t_H") c.t_H = parse_uint<std::uint64_t>(value);
        else if (key == "k") c.lookback = parse_uint<Round>(value);
        else if (key == "m") c.m = parse_uint<Step>(value);
        else if (key == "mu") c.mu = parse_uint<Step>(value);
        else if (key == "max_steps") c.max_steps = parse_uint<Step>(value);
        else if (key == "scheme") c.scheme = scheme_from_string(value);
        else if (key == "payments_per_round") c.payments_per_round = parse_uint<std::uint32_t>(value);
        else if (key == "payment_window") c.payment_window = parse_uint<Round>(value);
        else if (key == "record_log") c.record_log = parse_bool(value);
        else if (key == "max_time") c.max_time = parse_time(value);
        else if (key == "retain_rounds") c.retain_rounds = parse_uint<Round>(value);
        else if (key == "initial_malicious") c.initial_malicious = parse_uint<std::uint32_t>(value);
        else if (key == "corrupt") {
            const auto w = words(value);
            if (w.size() != 2) throw std::invalid_argument("corrupt takes '<time> <user>'");
            c.corruptions.push_back({parse_time(w[0]), parse_uint<UserId>(w[1])});
        } else if (key == "partition") {
            const auto w = words(value);
            if (w.size() != 3) throw std::invalid_argument("partition takes '<from> <to> <label>,<label>,...'");
            simnet::PartitionWindow p{parse_time(w[0]), parse_time(w[1]), {}};
            for (const auto& l : split(w[2], ',')) p.component.push_back(static_cast<int>(parse_uint<std::uint32_t>(l)));
            if (p.to <= p.from) throw std::invalid_argument("partition must end after it starts");
            c.partitions.push_back(std::move(p));
        } else {
            throw std::invalid_argument("unknown key '" + key + "'");
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(source, line, key + ": " + e.what());
    }
}

void validate(const RunConfig& c) {
    auto fail = [](const std::string& w) { throw ConfigError("<config>", 0, w); };
    if (c.users < 2) fail("users must be at least 2");
    if (!(c.h > 0 && c.h <= 1)) fail("h must lie in (0, 1]");
    const auto p = c.protocol();
    if (p.t_H > p.n_verifiers) fail("t_H exceeds n");
    if (c.lookback < 1) fail("k must be at least 1");
    if (c.variant == consensus::Variant::Alg1 && (c.m == 0 || c.m % 3 != 0)) fail("m must be a positive multiple of 3");
    if (c.variant == consensus::Variant::Alg2 && c.mu < 4) fail("mu must be at least 4");
    if (c.weighted && c.variant == consensus::Variant::Alg2) fail("mode=money runs with variant alg1 only");
    if (!c.balances.empty() && c.balances.size() != c.users) fail("balances must list one amount per user");
    if (c.lambda <= 0 || c.Lambda <= 0) fail("lambda and big_lambda must be positive");
    for (const auto& x : c.corruptions)
        if (x.user >= c.users) fail("corrupt: user " + std::to_string(x.user) + " out of range");
    for (const auto& x : c.partitions)
        if (x.component.size() != c.users) fail("partition: needs one label per user");
}

RunConfig parse(std::string_view text, const std::string& source) {
    RunConfig c;
    std::set<std::string> seen;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
        const std::string s = trim(raw);
        if (s.empty()) continue;
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError(source, line, "expected 'key = value'");
        const std::string key = trim(s.substr(0, eq)), value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(source, line, "missing key");
        if (value.empty()) throw ConfigError(source, line, key + ": missing value");
        if (!kRepeatable.count(key) && !seen.insert(key).second)
            throw ConfigError(source, line, "duplicate key '" + key + "'");
        apply(c, key, value, source, line);
    }
    return c;
}

RunConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError(path, 0, "cannot open");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

std::string dump(const RunConfig& c) {
    std::ostringstream o;
    o << "variant = " << consensus::to_string(c.variant) << "\n"
      << "users = " << c.users << "\n";
    o.precision(17);
    o << "h = " << c.h << "\n"
      << "mode = " << (c.weighted ? "money" : "users") << "\n"
      << "balance = " << c.balance << "\n";
    if (!c.balances.empty()) {
        o << "balances = ";
        for (std::size_t i = 0; i < c.balances.size(); ++i) o << (i ? "," : "") << c.balances[i];
        o << "\n";
    }
    o << "lambda = " << format_time(c.lambda) << "\n"
      << "big_lambda = " << format_time(c.Lambda) << "\n"
      << "rounds = " << c.rounds << "\n"
      << "adversary = " << c.adversary << "\n"
      << "seed = " << c.seed << "\n"
      << "n = " << c.n << "\n"
      << "n1 = " << c.n1 << "\n"
      << "t_H = " << c.t_H << "\n"
      << "k = " << c.lookback << "\n"
      << "m = " << c.m << "\n"
      << "mu = " << c.mu << "\n"
      << "max_steps = " << c.max_steps << "\n"
      << "scheme = " << to_string(c.scheme) << "\n"
      << "payments_per_round = " << c.payments_per_round << "\n"
      << "payment_window = " << c.payment_window << "\n"
      << "record_log = " << (c.record_log ? "true" : "false") << "\n"
      << "max_time = " << format_time(c.max_time) << "\n"
      << "retain_rounds = " << c.retain_rounds << "\n";
    if (c.initial_malicious) o << "initial_malicious = " << *c.initial_malicious << "\n";
    for (const auto& x : c.corruptions) o << "corrupt = " << format_time(x.at) << " " << x.user << "\n";
    for (const auto& p : c.partitions) {
        o << "partition = " << format_time(p.from) << " " << format_time(p.to) << " ";
        for (std::size_t i = 0; i < p.component.size(); ++i) o << (i ? "," : "") << p.component[i];
        o << "\n";
    }
    return o.str();
}

}  // namespace sortilab::config
