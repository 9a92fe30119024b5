#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sortilab/ba_sync.hpp"
#include "sortilab/config.hpp"
#include "sortilab/params.hpp"
#include "sortilab/report.hpp"
#include "sortilab/seed_game.hpp"
#include "sortilab/simnet.hpp"

namespace fs = std::filesystem;
using namespace sortilab;
using nlohmann::ordered_json;

namespace {

std::string default_out_dir() {
    if (const char* d = std::getenv("SORTILAB_OUT_DIR"); d && *d) return d;
    return ".";
}

void write_file(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << text;
}

void emit(const std::string& format, const ordered_json& j, const std::vector<std::string>& columns) {
    if (format == "json") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    const auto& rows = j.is_array() ? j : ordered_json::array({j});
    for (std::size_t i = 0; i < columns.size(); ++i) std::cout << (i ? "," : "") << columns[i];
    std::cout << "\n";
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            const auto& v = r.at(columns[i]);
            std::cout << (i ? "," : "") << (v.is_string() ? v.get<std::string>() : v.dump());
        }
        std::cout << "\n";
    }
}

struct SimulateOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<Round> rounds;
    std::optional<std::string> variant, h, lambda, big_lambda, adversary;
    std::vector<std::string> sets;
    std::string out;
    std::string format = "json";
};

int cmd_simulate(const SimulateOpts& o) {
    config::RunConfig cfg = o.config_path.empty() ? config::RunConfig{} : config::load(o.config_path);
    auto flag = [&](const char* key, const std::optional<std::string>& v) {
        if (v) config::apply(cfg, key, *v);
    };
    flag("variant", o.variant);
    flag("h", o.h);
    flag("lambda", o.lambda);
    flag("big_lambda", o.big_lambda);
    flag("adversary", o.adversary);
    if (o.seed) cfg.seed = *o.seed;
    if (o.rounds) cfg.rounds = *o.rounds;
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw config::ConfigError("--set", 0, "expected key=value, got '" + s + "'");
        config::apply(cfg, s.substr(0, eq), s.substr(eq + 1));
    }
    config::validate(cfg);

    const simnet::Trace trace = simnet::simulate(cfg);
    const report::Summary sum = report::summarize(trace);
    const fs::path dir = o.out.empty() ? fs::path(default_out_dir()) : fs::path(o.out);
    if (o.format == "csv")
        write_file(dir / "trace.csv", report::to_csv(trace));
    else
        write_file(dir / "trace.jsonl", report::to_jsonl(trace, sum));
    const std::string text = report::summary_text(trace, sum);
    write_file(dir / "summary.txt", text);
    std::cout << text;
    return report::exit_status(sum);
}

int cmd_params(double h, double F, const std::string& variant, std::uint64_t population, const std::string& format) {
    const auto v = params::variant_from_string(variant);
    const params::ParamTable t = params::param_table(h, F, v, population);
    ordered_json j;
    j["h"] = t.h;
    j["F"] = t.F;
    j["variant"] = params::to_string(t.variant);
    j["n"] = t.n;
    j["t_H"] = t.t_H;
    j["failure"] = static_cast<double>(t.failure);
    j["chernoff"] = static_cast<double>(t.chernoff);
    j["k"] = t.k;
    j["m"] = t.m;
    j["n1"] = t.n1;
    j["p"] = t.p;
    j["p1"] = t.p1;
    j["p_h"] = t.p_h;
    j["block_time_lambda_coeff"] = t.block_time_coeff;
    j["honest_short_of_t_H"] = static_cast<double>(t.honest_short);
    emit(format, j, {"h", "F", "variant", "n", "t_H", "failure", "chernoff", "k", "m", "n1", "p", "p1", "p_h",
                     "block_time_lambda_coeff", "honest_short_of_t_H"});
    return 0;
}

int cmd_ba(std::uint32_t n, std::uint32_t t, std::uint64_t trials, std::uint64_t seed, bool exhaustive,
           const std::string& format) {
    const ba::CampaignStats st = exhaustive ? ba::exhaustive_campaign(n, t, seed) : ba::random_campaign(n, t, trials, seed);
    ordered_json j;
    j["n"] = n;
    j["t"] = t;
    j["mode"] = exhaustive ? "exhaustive" : "random";
    j["trials"] = st.trials;
    j["ba_agreement_violations"] = st.ba_agreement_violations;
    j["ba_consistency_violations"] = st.ba_consistency_violations;
    j["bba_agreement_violations"] = st.bba_agreement_violations;
    j["bba_consistency_violations"] = st.bba_consistency_violations;
    j["graded_violations"] = st.graded_violations;
    j["loop_cap_hits"] = st.exceeded;
    j["mean_loops"] = st.trials ? static_cast<double>(st.loops_total) / static_cast<double>(st.trials) : 0.0;
    j["max_loops"] = st.loops_max;
    j["split_loops"] = st.split_loops;
    j["split_loops_agreed"] = st.split_loops_agreed;
    emit(format, j, {"n", "t", "mode", "trials", "ba_agreement_violations", "ba_consistency_violations",
                     "bba_agreement_violations", "bba_consistency_violations", "graded_violations", "loop_cap_hits",
                     "mean_loops", "max_loops", "split_loops", "split_loops_agreed"});
    return st.violations() == 0 ? 0 : 1;
}

int cmd_seed_game(const seed_game::Config& c, const std::string& format) {
    const seed_game::Result r = seed_game::play(c);
    ordered_json j;
    j["h"] = c.h;
    j["rounds"] = r.rounds;
    j["population"] = c.population;
    j["corrupted"] = r.corrupted;
    j["honest_leaders"] = r.honest_leaders;
    j["frequency"] = r.frequency;
    j["p_h"] = r.p_h;
    j["sigma"] = r.sigma;
    j["z"] = r.sigma > 0 ? (r.frequency - r.p_h) / r.sigma : 0.0;
    j["stationary"] = seed_game::stationary_honest_frequency(c.h);
    j["longest_run"] = r.longest_run;
    emit(format, j, {"h", "rounds", "population", "corrupted", "honest_leaders", "frequency", "p_h", "sigma", "z",
                     "stationary", "longest_run"});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sortilab: committee-based consensus simulator and parameter calculator"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "Print this help message and exit");  // -h would clash with --h
    std::string format = "json";
    app.add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}));

    SimulateOpts so;
    auto* sim = app.add_subcommand("simulate", "Run a discrete-event simulation");
    sim->add_option("--config", so.config_path, "Key-value run configuration")->check(CLI::ExistingFile);
    sim->add_option("--seed", so.seed, "RNG seed");
    sim->add_option("--rounds", so.rounds, "Rounds to run");
    sim->add_option("--variant", so.variant, "alg1 or alg2");
    sim->add_option("--h", so.h, "Honest fraction");
    sim->add_option("--lambda", so.lambda, "Small-message bound");
    sim->add_option("--big-lambda", so.big_lambda, "Block bound");
    sim->add_option("--adversary", so.adversary, "Adversary strategy");
    sim->add_option("--set", so.sets, "Extra key=value override (repeatable)");
    sim->add_option("--out", so.out, "Output directory (default: $SORTILAB_OUT_DIR or .)");

    double ph = 0.8, pF = 1e-12;
    std::string pvariant = "alg1";
    std::uint64_t population = params::kPopulation;
    auto* par = app.add_subcommand("params", "Committee size, thresholds, look-back and timing table");
    par->add_option("--h", ph, "Honest fraction");
    par->add_option("--F", pF, "Target failure probability");
    par->add_option("--variant", pvariant, "alg1 or alg2");
    par->add_option("--population", population, "Users N");

    std::uint32_t bn = 7, bt = 2;
    std::uint64_t btrials = 10000, bseed = 1;
    bool exhaustive = false;
    auto* bac = app.add_subcommand("ba-campaign", "Property campaign for the synchronous BA protocols");
    bac->add_option("--n", bn, "Players");
    bac->add_option("--t", bt, "Corrupted players");
    bac->add_option("--trials", btrials, "Randomized trials");
    bac->add_option("--seed", bseed, "RNG seed");
    bac->add_flag("--exhaustive", exhaustive, "All binary inputs and corruption sets");

    seed_game::Config sg;
    auto* sgc = app.add_subcommand("seed-game", "Adversarial seed-steering game");
    sgc->add_option("--h", sg.h, "Honest fraction");
    sgc->add_option("--rounds", sg.rounds, "Rounds");
    sgc->add_option("--seed", sg.seed, "RNG seed");
    sgc->add_option("--population", sg.population, "Users ordered by credential (0: large-population limit)");

    for (auto* sc : {sim, par, bac, sgc})
        sc->add_option("--format", format, "Output format")->check(CLI::IsMember({"json", "csv"}));

    CLI11_PARSE(app, argc, argv);
    so.format = format;
    try {
        if (*sim) return cmd_simulate(so);
        if (*par) return cmd_params(ph, pF, pvariant, population, format);
        if (*bac) return cmd_ba(bn, bt, btrials, bseed, exhaustive, format);
        if (*sgc) return cmd_seed_game(sg, format);
    } catch (const config::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 64;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 65;
    }
    return 0;
}
