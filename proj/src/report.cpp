#include "sortilab/report.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "sortilab/config.hpp"

namespace sortilab::report {

using nlohmann::ordered_json;

RoundCheck check_round(const simnet::RoundRecord& rec, const simnet::SimConfig& cfg) {
    RoundCheck c;
    c.dt = rec.t_first - rec.t_start;
    c.L = rec.coin_trials(cfg.m);
    c.applicable = cfg.variant == consensus::Variant::Alg1;
    const double lam = consensus::to_double(cfg.lambda), Lam = consensus::to_double(cfg.Lambda);
    c.bound = rec.leader_honest ? 8 * lam + Lam : (6.0 * c.L + 10) * lam + Lam;
    c.ok = !c.applicable || c.dt <= c.bound + 1e-9;
    return c;
}

Summary summarize(const simnet::Trace& t) {
    Summary s;
    s.rounds = t.rounds.size();
    s.completed = t.completed;
    s.forks = t.counters.forks;
    s.partitioned_run = !t.config.partitions.empty() || t.strategy == "fork_partition";
    double sum = 0, sq = 0, lsum = 0;
    for (const auto& r : t.rounds) {
        const RoundCheck c = check_round(r, t.config);
        s.honest_leader_rounds += r.leader_honest;
        s.empty_blocks += r.empty;
        if (!c.ok) ++s.bound_violations;
        sum += c.dt;
        sq += c.dt * c.dt;
        lsum += c.L;
        s.max_dt = std::max(s.max_dt, c.dt);
    }
    if (s.rounds) {
        const double n = static_cast<double>(s.rounds);
        s.mean_dt = sum / n;
        s.sd_dt = s.rounds > 1 ? std::sqrt(std::max(0.0, (sq - n * s.mean_dt * s.mean_dt) / (n - 1))) : 0.0;
        s.mean_L = lsum / n;
    }
    return s;
}

int exit_status(const Summary& s) {
    if (s.forks > 0 && !s.partitioned_run) return 2;
    // the engineered partition stretches rounds on purpose
    if (s.bound_violations > 0 && !s.partitioned_run) return 3;
    if (!s.completed) return 4;
    return 0;
}

namespace {

ordered_json round_json(const simnet::RoundRecord& r, const simnet::SimConfig& cfg) {
    const RoundCheck c = check_round(r, cfg);
    ordered_json j;
    j["round"] = r.round;
    j["block"] = r.block_hash;
    j["empty"] = r.empty;
    j["leader"] = r.leader ? ordered_json(*r.leader) : ordered_json(nullptr);
    j["leader_honest"] = r.leader_honest;
    j["by_leader"] = r.by_leader;
    j["ending_step"] = r.ending_step;
    j["bit"] = r.bit;
    j["final_step"] = r.final_step;
    j["cert_weight"] = r.cert_weight;
    j["payset"] = r.payset;
    j["t_start"] = r.t_start;
    j["t_first"] = r.t_first;
    j["t_last"] = r.t_last;
    j["dt"] = c.dt;
    j["L"] = c.L;
    j["bound"] = c.bound;
    j["bound_ok"] = c.applicable ? ordered_json(c.ok) : ordered_json(nullptr);
    j["distinct"] = r.distinct;
    j["deciders"] = r.deciders;
    j["honest"] = r.honest;
    return j;
}

}  // namespace

std::string to_jsonl(const simnet::Trace& t, const Summary& s) {
    std::ostringstream o;
    ordered_json head;
    head["type"] = "header";
    head["rng"] = std::string(Rng::kName);
    head["strategy"] = t.strategy;
    head["config"] = config::dump(t.config);
    o << head.dump() << "\n";
    for (const auto& r : t.rounds) {
        ordered_json j = round_json(r, t.config);
        j["type"] = "round";
        o << j.dump() << "\n";
    }
    ordered_json sum;
    sum["type"] = "summary";
    sum["rounds"] = s.rounds;
    sum["completed"] = s.completed;
    sum["honest_leader_rounds"] = s.honest_leader_rounds;
    sum["empty_blocks"] = s.empty_blocks;
    sum["forks"] = s.forks;
    sum["bound_violations"] = s.bound_violations;
    sum["mean_dt"] = s.mean_dt;
    sum["sd_dt"] = s.sd_dt;
    sum["max_dt"] = s.max_dt;
    sum["mean_L"] = s.mean_L;
    sum["end_time"] = t.end_time;
    const auto& k = t.counters;
    sum["counters"] = {{"events", k.events},
                       {"deliveries", k.deliveries},
                       {"originated", k.originated},
                       {"switches", k.switches},
                       {"corruptions", k.corruptions},
                       {"erased_key_refusals", k.erased_key_refusals},
                       {"forged_signatures", k.forged_signatures},
                       {"forged_certificates", k.forged_certificates}};
    sum["exit_status"] = exit_status(s);
    o << sum.dump() << "\n";
    return o.str();
}

std::string to_csv(const simnet::Trace& t) {
    std::ostringstream o;
    o << std::setprecision(17);
    o << "round,block,empty,leader,leader_honest,ending_step,bit,final_step,payset,t_start,t_first,dt,L,bound,bound_ok,"
         "distinct\n";
    for (const auto& r : t.rounds) {
        const RoundCheck c = check_round(r, t.config);
        o << r.round << "," << r.block_hash << "," << r.empty << "," << (r.leader ? std::to_string(*r.leader) : "")
          << "," << r.leader_honest << "," << r.ending_step << "," << int(r.bit) << "," << r.final_step << ","
          << r.payset << "," << r.t_start << "," << r.t_first << "," << c.dt << "," << c.L << "," << c.bound << ","
          << (c.applicable ? (c.ok ? "pass" : "fail") : "n/a") << "," << r.distinct << "\n";
    }
    return o.str();
}

std::string summary_text(const simnet::Trace& t, const Summary& s) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(3);
    o << "variant " << consensus::to_string(t.config.variant) << ", adversary " << t.strategy << ", users "
      << t.config.users << ", h " << t.config.h << "\n";
    o << "rounds " << s.rounds << (s.completed ? "" : " (incomplete)") << ", honest leaders " << s.honest_leader_rounds
      << ", empty blocks " << s.empty_blocks << ", forks " << s.forks << "\n";
    o << "round time mean " << s.mean_dt << " sd " << s.sd_dt << " max " << s.max_dt << ", mean L " << s.mean_L
      << "\n";
    o << "bound violations " << s.bound_violations << ", exit status " << exit_status(s) << "\n";
    return o.str();
}

}  // namespace sortilab::report
