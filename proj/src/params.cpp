#include "sortilab/params.hpp"

#include <algorithm>
#include <functional>
#include <limits>

namespace sortilab::params {

namespace {

using ld = long double;

// Neumaier-compensated accumulator.
struct Sum {
    ld s = 0, c = 0;
    void add(ld x) {
        ld t = s + x;
        if (std::fabs(s) >= std::fabs(x)) c += (s - t) + x;
        else c += (x - t) + s;
        s = t;
    }
    ld value() const { return s + c; }
};

ld log_binom_pmf(std::uint64_t M, std::uint64_t k, ld q) {
    if (k > M) return -std::numeric_limits<ld>::infinity();
    ld lc = std::lgamma(static_cast<ld>(M) + 1) - std::lgamma(static_cast<ld>(k) + 1) -
            std::lgamma(static_cast<ld>(M - k) + 1);
    ld a = k == 0 ? 0 : static_cast<ld>(k) * std::log(q);
    ld b = k == M ? 0 : static_cast<ld>(M - k) * std::log1p(-q);
    return lc + a + b;
}

// Sum of Bin(M,q) pmf walking away from `start` in direction dir (+1 or -1),
// starting on the far side of the mode so terms only shrink.
ld walk(std::uint64_t M, ld q, std::uint64_t start, int dir) {
    ld term = std::exp(log_binom_pmf(M, start, q));
    if (term == 0) return 0;
    Sum s;
    s.add(term);
    const ld odds = q / (1 - q);
    std::uint64_t j = start;
    while (true) {
        if (dir > 0) {
            if (j >= M) break;
            term *= static_cast<ld>(M - j) / static_cast<ld>(j + 1) * odds;
            ++j;
        } else {
            if (j == 0) break;
            term *= static_cast<ld>(j) / static_cast<ld>(M - j + 1) / odds;
            --j;
        }
        s.add(term);
        if (term < s.value() * 1e-24L) break;
    }
    return s.value();
}

// P[X >= k], X ~ Bin(M, q).
ld upper_tail(std::uint64_t M, ld q, std::uint64_t k) {
    if (k == 0) return 1;
    if (k > M) return 0;
    if (q <= 0) return 0;
    if (q >= 1) return 1;
    const auto mode = static_cast<std::uint64_t>(std::floor((static_cast<ld>(M) + 1) * q));
    if (k > mode) return walk(M, q, k, +1);
    return 1 - walk(M, q, k - 1, -1);
}

struct Trinomial {
    std::uint64_t N;
    ld pg, pb;
};

Trinomial model(double h, std::uint64_t n, std::uint64_t N) {
    if (!(h > 0.5 && h <= 1)) throw std::invalid_argument("h must lie in (1/2, 1]");
    if (n == 0 || N == 0 || n > N) throw std::invalid_argument("need 1 <= n <= N");
    ld p = static_cast<ld>(n) / static_cast<ld>(N);
    return {N, p * static_cast<ld>(h), p * (1 - static_cast<ld>(h))};
}

// sum_g P(G=g) * P(B >= beta(g) | G=g); B | G=g ~ Bin(N-g, pb/(1-pg)).
ld failure_sum(const Trinomial& m, const std::function<std::uint64_t(std::uint64_t)>& beta) {
    const ld mean = static_cast<ld>(m.N) * m.pg;
    const ld sd = std::sqrt(mean * (1 - m.pg));
    const auto lo = static_cast<std::uint64_t>(std::max<ld>(0, std::floor(mean - 25 * sd - 50)));
    const auto hi = static_cast<std::uint64_t>(std::min<ld>(static_cast<ld>(m.N), std::ceil(mean + 25 * sd + 50)));
    const ld qb = m.pb / (1 - m.pg);
    Sum s;
    for (std::uint64_t g = lo; g <= hi; ++g) {
        ld mg = std::exp(log_binom_pmf(m.N, g, m.pg));
        if (mg == 0) continue;
        s.add(mg * upper_tail(m.N - g, qb, beta(g)));
    }
    // Mass of G below lo counts as failure in every variant (too few good members).
    if (lo > 0) s.add(1 - upper_tail(m.N, m.pg, lo));
    return std::min<ld>(1, std::max<ld>(0, s.value()));
}

std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

std::function<std::uint64_t(std::uint64_t)> capped_beta(std::uint64_t n) {
    return [n](std::uint64_t g) -> std::uint64_t {
        std::uint64_t a = ceil_div(g, 2);                         // g <= 2b
        std::uint64_t b = g >= 2 * n ? 0 : ceil_div(2 * n - g, 4);  // g + 4b >= 2n
        return std::min(a, b);
    };
}

std::function<std::uint64_t(std::uint64_t)> uncapped_beta(std::uint64_t t) {
    return [t](std::uint64_t g) -> std::uint64_t {
        if (g <= t) return 0;
        return g >= 2 * t ? 0 : ceil_div(2 * t - g, 2);  // g + 2b >= 2t
    };
}

// P[a*G + c*B >= d] <= min_theta exp(N log M(theta) - theta d).
ld chernoff(const Trinomial& m, ld a, ld c, ld d) {
    const ld p0 = 1 - m.pg - m.pb;
    auto f = [&](ld th) {
        return static_cast<ld>(m.N) * std::log(p0 + m.pg * std::exp(th * a) + m.pb * std::exp(th * c)) - th * d;
    };
    ld hi = 1e-3L;
    while (hi < 1e3L && f(2 * hi) < f(hi)) hi *= 2;
    ld lo = 0;
    hi *= 2;
    const ld phi = (std::sqrt(5.0L) - 1) / 2;
    ld x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
    ld f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 200; ++it) {
        if (f1 < f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    return std::min<ld>(1, std::exp(std::min({f1, f2, f(0)})));
}

}  // namespace

std::string to_string(Variant v) { return v == Variant::Capped ? "alg1" : "alg2"; }

Variant variant_from_string(const std::string& s) {
    if (s == "alg1" || s == "1" || s == "capped") return Variant::Capped;
    if (s == "alg2" || s == "2" || s == "uncapped") return Variant::Uncapped;
    throw std::invalid_argument("unknown variant '" + s + "'");
}

CommitteeFailure committee_failure(double h, std::uint64_t n, std::uint64_t t_H, Variant v,
                                   std::uint64_t population) {
    const Trinomial m = model(h, n, population);
    CommitteeFailure r;
    if (v == Variant::Capped) {
        // Fails unless good > 2 bad and good + 4 bad < 2n.
        r.exact = failure_sum(m, capped_beta(n));
        r.chernoff = std::min<ld>(1, chernoff(m, -1, 2, 0) + chernoff(m, 1, 4, 2 * static_cast<ld>(n)));
    } else {
        // Fails unless good > t_H and good + 2 bad < 2 t_H.
        r.exact = failure_sum(m, uncapped_beta(t_H));
        r.chernoff = std::min<ld>(1, chernoff(m, -1, 0, -static_cast<ld>(t_H)) +
                                         chernoff(m, 1, 2, 2 * static_cast<ld>(t_H)));
    }
    return r;
}

long double honest_short_of_threshold(double h, std::uint64_t n, std::uint64_t t_H, std::uint64_t population) {
    const Trinomial m = model(h, n, population);
    return 1 - upper_tail(m.N, m.pg, t_H);
}

ThresholdChoice best_threshold(double h, std::uint64_t n, std::uint64_t population) {
    const Trinomial m = model(h, n, population);
    auto fail = [&](std::uint64_t t) { return failure_sum(m, uncapped_beta(t)); };
    // Ternary search over integers; the objective is a rising tail plus a falling one.
    std::uint64_t lo = n / 2, hi = n;
    while (hi - lo > 6) {
        std::uint64_t a = lo + (hi - lo) / 3, b = hi - (hi - lo) / 3;
        if (fail(a) <= fail(b)) hi = b;
        else lo = a;
    }
    ThresholdChoice best{lo, 2};
    const std::uint64_t from = lo > 8 ? lo - 8 : 0;
    for (std::uint64_t t = from; t <= std::min(n, hi + 8); ++t) {
        ld f = fail(t);
        if (f < best.failure) best = {t, f};
    }
    return best;
}

CommitteeSize min_committee_size(double h, double F, Variant v, std::uint64_t population) {
    if (!(h > 2.0 / 3.0) || h > 1) throw Infeasible("honest fraction must exceed 2/3");
    auto eval = [&](std::uint64_t n) -> CommitteeSize {
        if (v == Variant::Capped) {
            auto t = capped_threshold(n);
            return {n, t, committee_failure(h, n, t, v, population).exact};
        }
        auto c = best_threshold(h, n, population);
        return {n, c.t_H, c.failure};
    };
    const std::uint64_t cap = population / 2;
    std::uint64_t good = 1;
    CommitteeSize at = eval(good);
    while (at.failure > F) {
        if (good >= cap) throw Infeasible("no committee size up to N/2 meets F");
        good = std::min(cap, good * 2);
        at = eval(good);
    }
    std::uint64_t bad = good / 2;  // 0 when good == 1
    while (good - bad > 1) {
        std::uint64_t mid = bad + (good - bad) / 2;
        CommitteeSize c = eval(mid);
        if (c.failure <= F) {
            good = mid;
            at = c;
        } else {
            bad = mid;
        }
    }
    for (int i = 0; i < 64 && good > 1; ++i) {
        CommitteeSize c = eval(good - 1);
        if (c.failure > F) break;
        --good;
        at = c;
    }
    return at;
}

long double no_honest_leader_prob(double h, std::uint64_t n1, std::uint64_t population) {
    const ld q = static_cast<ld>(h) * static_cast<ld>(n1) / static_cast<ld>(population);
    if (q >= 1) return 0;
    return std::exp(static_cast<ld>(population) * std::log1p(-q));
}

std::uint64_t min_potential_leader_count(double h, double F, std::uint64_t population) {
    if (!(h > 0) || h > 1) throw std::invalid_argument("h must lie in (0, 1]");
    std::uint64_t n1 = 1;
    while (no_honest_leader_prob(h, n1, population) > F) {
        if (n1 >= population) throw Infeasible("no n_1 meets F");
        ++n1;
    }
    return n1;
}

SeedChainMatrix seed_markov(double h, int X) {
    if (X < 2) throw std::invalid_argument("truncation X must be >= 2");
    SeedChainMatrix s;
    s.h = h;
    s.X = X;
    s.P = seed_markov_matrix<double>(h, X);
    const ld hb = 1 - static_cast<ld>(h);
    ld worst = 0;
    for (int x = 2; x <= X; ++x)
        worst = std::max(worst, -std::expm1(static_cast<ld>(x) * std::log1p(-std::pow(hb, X))));
    s.truncation_mass = static_cast<double>(worst);
    return s;
}

Contraction contraction_check(double h, int X) {
    const Matrix<ld> P = seed_markov_matrix<ld>(static_cast<ld>(h), X);
    const Matrix<ld> Q = P.bottomRightCorner(X - 1, X - 1);
    const Matrix<ld> Q2 = Q * Q;
    Contraction c;
    c.largest_x_ok = 0;
    bool prefix = true;
    for (int i = 0; i < X - 1; ++i) {
        bool row_ok = true;
        for (int j = 0; j < X - 1; ++j) {
            if (Q(i, j) <= 0) continue;
            ld r = Q2(i, j) / Q(i, j);
            if (r > c.max_ratio) {
                c.max_ratio = r;
                c.worst_x = i + 2;
                c.worst_y = j + 2;
            }
            if (r > 0.5L) row_ok = false;
        }
        if (prefix && row_ok) c.largest_x_ok = i + 2;
        else prefix = false;
    }
    c.holds = c.max_ratio <= 0.5L;
    return c;
}

Lookback lookback_k(double h, double F, int X) {
    if (!(h > 2.0 / 3.0) || h > 1) throw Infeasible("honest fraction must exceed 2/3");
    const ld hb = 1 - static_cast<ld>(h);
    if (X == 0) {
        X = 60;
        while (hb > 0 && static_cast<ld>(X) * std::pow(hb, X) >= static_cast<ld>(F) / 100) ++X;
    }
    const Matrix<ld> P = seed_markov_matrix<ld>(static_cast<ld>(h), X);
    const Matrix<ld> Q = P.bottomRightCorner(X - 1, X - 1);
    Matrix<ld> R = Q;
    for (int k = 1; k <= 100000; ++k) {
        ld worst = R.rowwise().sum().maxCoeff();
        if (worst < static_cast<ld>(F)) return {k, X, worst};
        R = R * Q;
    }
    throw Infeasible("seed chain does not mix within 100000 rounds");
}

BlockTime expected_block_time(double h, double lambda, double Lambda) {
    const double ph = honest_leader_prob(h);
    BlockTime b;
    b.lambda_coeff = ph * 8 + (1 - ph) * (12 / ph + 10);
    b.value = b.lambda_coeff * lambda + Lambda;
    return b;
}

std::vector<double> lr_distribution(double p_h, std::uint32_t cap) {
    if (!(p_h > 0) || p_h > 1) throw std::invalid_argument("p_h must lie in (0, 1]");
    if (cap == 0) throw std::invalid_argument("cap must be positive");
    const double q = p_h / 2;
    std::vector<double> mass(cap);
    double miss = 1;
    for (std::uint32_t k = 1; k < cap; ++k) {
        mass[k - 1] = miss * q;
        miss *= 1 - q;
    }
    mass[cap - 1] = miss;
    return mass;
}

double lr_mean(double p_h, std::uint32_t cap) {
    if (cap == 0) return 2 / p_h;
    auto m = lr_distribution(p_h, cap);
    double s = 0;
    for (std::uint32_t k = 0; k < cap; ++k) s += (k + 1) * m[k];
    return s;
}

std::uint32_t min_bba_steps(double p_h, double F) {
    const double q = p_h / 2;
    auto trials = static_cast<std::uint32_t>(std::ceil(std::log(F) / std::log1p(-q) - 1e-12));
    return 3 * std::max<std::uint32_t>(trials, 1);
}

ParamTable param_table(double h, double F, Variant v, std::uint64_t population) {
    if (!(h > 2.0 / 3.0) || h > 1) throw Infeasible("honest fraction must exceed 2/3");
    if (!(F > 0) || F >= 1) throw std::invalid_argument("F must lie in (0, 1)");
    ParamTable t;
    t.h = h;
    t.F = F;
    t.variant = v;
    CommitteeSize cs = min_committee_size(h, F, v, population);
    t.n = cs.n;
    t.t_H = cs.t_H;
    CommitteeFailure cf = committee_failure(h, cs.n, cs.t_H, v, population);
    t.failure = cf.exact;
    t.chernoff = cf.chernoff;
    t.k = lookback_k(h, F).k;
    t.p_h = honest_leader_prob(h);
    t.m = v == Variant::Capped ? min_bba_steps(t.p_h, F) : 0;
    t.n1 = min_potential_leader_count(h, F, population);
    t.p = static_cast<double>(t.n) / static_cast<double>(population);
    t.p1 = static_cast<double>(t.n1) / static_cast<double>(population);
    t.block_time_coeff = expected_block_time(h, 1, 0).lambda_coeff;
    t.honest_short = honest_short_of_threshold(h, t.n, t.t_H, population);
    return t;
}

}  // namespace sortilab::params
