#pragma once

#include <string>
#include <vector>

#include "sortilab/simnet.hpp"

// Per-round bound checks, run summaries and trace serialization.
namespace sortilab::report {

struct RoundCheck {
    double dt = 0;          // T^{r+1} - T^r
    double bound = 0;       // 8*lambda+Lambda or (6L+10)*lambda+Lambda
    std::uint32_t L = 0;    // coin trials read from the trace
    bool applicable = false;  // the bounds are stated for the m-bounded variant
    bool ok = true;
};

RoundCheck check_round(const simnet::RoundRecord& rec, const simnet::SimConfig& cfg);

struct Summary {
    std::uint64_t rounds = 0;
    bool completed = false;
    std::uint64_t honest_leader_rounds = 0;
    std::uint64_t empty_blocks = 0;
    std::uint64_t forks = 0;
    std::uint64_t bound_violations = 0;
    double mean_dt = 0;
    double sd_dt = 0;
    double max_dt = 0;
    double mean_L = 0;
    bool partitioned_run = false;  // partitions were scheduled or the adversary engineers one
};

Summary summarize(const simnet::Trace& t);

// 0 when healthy. 2: fork without a partition, 3: time-bound breach, 4: the run did not finish.
int exit_status(const Summary& s);

// One JSON object per line: a header, one record per round, a summary.
std::string to_jsonl(const simnet::Trace& t, const Summary& s);
// A header row and one row per round, with the bound columns.
std::string to_csv(const simnet::Trace& t);
std::string summary_text(const simnet::Trace& t, const Summary& s);

}  // namespace sortilab::report
