#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "sortilab/simnet.hpp"

// Run configuration as a key-value text:
//
//   # comment
//   variant = alg1
//   users = 20
//   lambda = 1
//   corrupt = 12.5 3          (time, user; repeatable)
//   partition = 10 40 0,0,1,1 (from, to, one label per user; repeatable)
//
// Unknown keys and repeated single-valued keys are errors.
namespace sortilab::config {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, int line, const std::string& what);
    int line() const { return line_; }

private:
    int line_;
};

using RunConfig = simnet::SimConfig;

RunConfig parse(std::string_view text, const std::string& source = "<config>");
RunConfig load(const std::string& path);

// One assignment, as from a file line or a command-line override. `line` 0 means a flag.
void apply(RunConfig& cfg, const std::string& key, const std::string& value, const std::string& source = "<flag>",
           int line = 0);

// Consistency checks the simulator would otherwise reject later.
void validate(const RunConfig& cfg);

// Canonical text form; parse(dump(c)) reproduces c.
std::string dump(const RunConfig& cfg);

// "3", "3/2", "1.25" as exact rationals.
consensus::Time parse_time(std::string_view s);
std::string format_time(const consensus::Time& t);

}  // namespace sortilab::config
