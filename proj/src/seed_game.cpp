#include "sortilab/seed_game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sortilab/ledger.hpp"
#include "sortilab/params.hpp"
#include "sortilab/rng.hpp"
#include "sortilab/sortition.hpp"

namespace sortilab::seed_game {

namespace {

void check_h(double h) {
    if (!(h > 2.0 / 3.0 && h <= 1.0)) throw std::invalid_argument("seed game needs 2/3 < h <= 1");
}

Result finish(Result r, const Config& cfg) {
    r.rounds = cfg.rounds;
    r.p_h = params::honest_leader_prob(cfg.h);
    r.frequency = cfg.rounds ? static_cast<double>(r.honest_leaders) / static_cast<double>(cfg.rounds) : 0.0;
    r.sigma = cfg.rounds ? std::sqrt(r.p_h * (1 - r.p_h) / static_cast<double>(cfg.rounds)) : 0.0;
    return r;
}

Result play_limit(const Config& cfg) {
    Rng rng(cfg.seed);
    Result res;
    std::uint64_t x = 1;
    for (std::uint64_t i = 0; i < cfg.rounds; ++i) {
        ++res.options[x];
        std::uint64_t run = 0;
        for (std::uint64_t j = 0; j < x; ++j) run = std::max(run, rng.geometric(cfg.h));
        res.longest_run = std::max(res.longest_run, run);
        if (run == 0) {
            ++res.honest_leaders;
            x = 1;
        } else {
            x = run + 1;
        }
    }
    return finish(res, cfg);
}

Result play_population(const Config& cfg) {
    const std::uint32_t N = cfg.population;
    Rng rng(cfg.seed);
    const Digest256 key_seed = hash(Encoder().tag("seed-game-keys").u64(cfg.seed));
    std::vector<LongTermKeypair> kps;
    kps.reserve(N);
    for (std::uint32_t i = 0; i < N; ++i) kps.push_back(generate_keypair(i, key_seed, cfg.scheme));

    Result res;
    res.corrupted = static_cast<std::uint32_t>(std::floor((1.0 - cfg.h) * N + 1e-9));
    std::vector<UserId> order(N);
    std::iota(order.begin(), order.end(), 0);
    for (std::uint32_t i = N; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<bool> bad(N, false);
    for (std::uint32_t i = 0; i < res.corrupted; ++i) bad[order[i]] = true;

    std::vector<Digest256> options{hash(Encoder().tag("seed-game-Q0").u64(cfg.seed))};
    std::vector<std::pair<Digest256, UserId>> ranked(N);
    for (Round r = 1; r <= cfg.rounds; ++r) {
        ++res.options[options.size()];
        std::vector<UserId> best_run;
        Digest256 best_q = options.front();
        UserId first_honest = 0;
        bool have = false;
        for (const auto& q : options) {
            for (UserId u = 0; u < N; ++u) ranked[u] = {make_credential(kps[u], r, 1, q).hash, u};
            std::sort(ranked.begin(), ranked.end());
            std::vector<UserId> run;
            std::size_t j = 0;
            while (j < N && bad[ranked[j].second]) run.push_back(ranked[j++].second);
            if (!have || run.size() > best_run.size()) {
                have = true;
                best_run = std::move(run);
                best_q = q;
                first_honest = j < N ? ranked[j].second : ranked.front().second;
            }
        }
        res.longest_run = std::max<std::uint64_t>(res.longest_run, best_run.size());
        std::vector<Digest256> next;
        if (best_run.empty()) {
            ++res.honest_leaders;
            next.push_back(seed_after_leader(sign(kps[first_honest], seed_sig_payload(best_q)), r));
        } else {
            for (UserId u : best_run) next.push_back(seed_after_leader(sign(kps[u], seed_sig_payload(best_q)), r));
            next.push_back(seed_after_empty(best_q, r));
        }
        options = std::move(next);
    }
    return finish(res, cfg);
}

}  // namespace

Result play(const Config& cfg) {
    check_h(cfg.h);
    return cfg.population == 0 ? play_limit(cfg) : play_population(cfg);
}

double stationary_honest_frequency(double h, int max_options) {
    check_h(h);
    const int X = max_options;
    // state x in 1..X holds the number of seed options; index x-1
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(X, X);
    const double hb = 1.0 - h;
    for (int x = 1; x <= X; ++x) {
        P(x - 1, 0) += std::pow(h, x);
        for (int y = 2; y <= X; ++y) {
            // longest corrupted run over x orderings is exactly y-1
            P(x - 1, y - 1) = std::pow(1 - std::pow(hb, y), x) - std::pow(1 - std::pow(hb, y - 1), x);
        }
        const double lost = 1.0 - P.row(x - 1).sum();
        P(x - 1, X - 1) += std::max(0.0, lost);
    }
    Eigen::RowVectorXd pi = Eigen::RowVectorXd::Zero(X);
    pi(0) = 1;
    for (int it = 0; it < 10000; ++it) {
        Eigen::RowVectorXd nx = pi * P;
        const double d = (nx - pi).cwiseAbs().sum();
        pi = nx;
        if (d < 1e-15) break;
    }
    double f = 0;
    for (int x = 1; x <= X; ++x) f += pi(x - 1) * std::pow(h, x);
    return f;
}

}  // namespace sortilab::seed_game
