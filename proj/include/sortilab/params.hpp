#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace sortilab::params {

enum class Variant { Capped, Uncapped };  // the two embodiments: m-bounded and mu-cascaded

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

inline constexpr std::uint64_t kPopulation = 1'000'000;

class Infeasible : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Committee model: |SV| ~ Bin(N, n/N), each member honest with probability h.
// Good and bad counts are then jointly trinomial over the N users.
struct CommitteeFailure {
    long double exact = 0;     // P[conditions fail]
    long double chernoff = 0;  // union of optimized moment bounds
};

CommitteeFailure committee_failure(double h, std::uint64_t n, std::uint64_t t_H, Variant v,
                                   std::uint64_t population = kPopulation);

// P[#good < t_H]: how often the honest part of one committee falls short of a certificate.
long double honest_short_of_threshold(double h, std::uint64_t n, std::uint64_t t_H,
                                      std::uint64_t population = kPopulation);

// Capped variant: t_H = floor(2n/3) + 1.
inline std::uint64_t capped_threshold(std::uint64_t n) { return 2 * n / 3 + 1; }

struct ThresholdChoice {
    std::uint64_t t_H = 0;
    long double failure = 0;
};

// Uncapped variant: the t_H minimizing the exact failure at committee size n.
ThresholdChoice best_threshold(double h, std::uint64_t n, std::uint64_t population = kPopulation);

struct CommitteeSize {
    std::uint64_t n = 0;
    std::uint64_t t_H = 0;
    long double failure = 0;
};

// Smallest n meeting F, assuming failure is nonincreasing in n away from
// lattice effects; the bisection result is then walked down while n-1 still meets F.
CommitteeSize min_committee_size(double h, double F, Variant v, std::uint64_t population = kPopulation);

// Smallest n_1 with P[no honest potential leader] <= F.
std::uint64_t min_potential_leader_count(double h, double F, std::uint64_t population = kPopulation);
long double no_honest_leader_prob(double h, std::uint64_t n1, std::uint64_t population = kPopulation);

// --- seed chain -----------------------------------------------------------------
// States {0} U {2..X}; row/column index 0 is state 0, index i >= 1 is state i+1.

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline int state_index(int x) { return x == 0 ? 0 : x - 1; }
inline int index_state(int i) { return i == 0 ? 0 : i + 1; }

// P(x,y) for x,y >= 2 via expm1/log1p so the far tail keeps relative precision.
template <typename Scalar>
Scalar seed_transition(Scalar h, int x, int y) {
    using std::exp;
    using std::expm1;
    using std::log1p;
    using std::pow;
    if (x == 0) return y == 0 ? Scalar(1) : Scalar(0);
    if (y == 0) return pow(h, x);
    const Scalar hb = Scalar(1) - h;
    const Scalar a = Scalar(x) * log1p(-pow(hb, y));
    const Scalar b = Scalar(x) * log1p(-pow(hb, y - 1));
    return -exp(a) * expm1(b - a);
}

template <typename Scalar>
Matrix<Scalar> seed_markov_matrix(Scalar h, int X) {
    const int d = X;  // states 0, 2..X
    Matrix<Scalar> P = Matrix<Scalar>::Zero(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) P(i, j) = seed_transition<Scalar>(h, index_state(i), index_state(j));
    return P;
}

struct SeedChainMatrix {
    double h = 0;
    int X = 0;
    Matrix<double> P;
    double truncation_mass = 0;  // largest row mass lost past X
};

SeedChainMatrix seed_markov(double h, int X);

struct Contraction {
    long double max_ratio = 0;
    int worst_x = 0;
    int worst_y = 0;
    int largest_x_ok = 0;  // every x in [2, largest_x_ok] satisfies the 1/2 bound for all y
    bool holds = false;
};

// max over x,y in [2, X] of P^(2)(x,y) / P(x,y), in long double.
Contraction contraction_check(double h, int X);

struct Lookback {
    int k = 0;
    int X = 0;
    long double residual = 0;  // max_x sum_{y>=2} P^k(x,y)
};

// Smallest k with max_x sum_{y>=2} P^k(x,y) < F. X = 0 picks the truncation
// adaptively: at least 60 and with discarded row mass below F/100.
Lookback lookback_k(double h, double F, int X = 0);

// --- leaders and timing -----------------------------------------------------------

inline double honest_leader_prob(double h) { return h * h * (1 + h - h * h); }

struct BlockTime {
    double lambda_coeff = 0;  // bound is lambda_coeff * lambda + Lambda
    double value = 0;
};

BlockTime expected_block_time(double h, double lambda, double Lambda);

// Mass of L over {1..cap}; all residual mass sits at cap.
std::vector<double> lr_distribution(double p_h, std::uint32_t cap);
double lr_mean(double p_h, std::uint32_t cap);  // cap 0: uncapped, 2/p_h

// Smallest m (a multiple of 3) with P[L reaches the cap without a success] <= F.
std::uint32_t min_bba_steps(double p_h, double F);

struct ParamTable {
    double h = 0;
    double F = 0;
    Variant variant = Variant::Capped;
    std::uint64_t n = 0;
    std::uint64_t t_H = 0;
    long double failure = 0;
    long double chernoff = 0;
    int k = 0;
    std::uint32_t m = 0;
    std::uint64_t n1 = 0;
    double p = 0;
    double p1 = 0;
    double p_h = 0;
    double block_time_coeff = 0;
    long double honest_short = 0;
};

// Full table; h <= 2/3 raises Infeasible.
ParamTable param_table(double h, double F, Variant v, std::uint64_t population = kPopulation);

}  // namespace sortilab::params
