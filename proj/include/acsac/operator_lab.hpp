#pragma once

// Exact tabular mirror of the chunked Bellman machinery: prefix Q-tables,
// the expected-prefix-max backup, its fixed point, the extraction policy,
// and the distributional lemmas (TV marginalization, best-of-N KL, variance
// averaging). Everything here runs in double precision with closed-form
// expectations; no sampling except where a check is explicitly Monte Carlo.

#include "acsac/rng.hpp"
#include "acsac/tabular.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace acsac {

// Q values for every (state, action prefix of length 1..H). Prefixes are
// indexed big-endian in radix A: the first action is the most significant
// digit, so the index of c_{1:k} is the index of the full chunk divided by
// A^(H-k).
struct PrefixQTable {
  int S = 0, A = 0, H = 0;
  std::vector<std::vector<double>> q;  // q[h-1][s * A^h + cidx]

  PrefixQTable() = default;
  PrefixQTable(int S_, int A_, int H_);

  int pow_a(int h) const { return pa_[h]; }
  double& at(int h, int s, int cidx) { return q[h - 1][size_t(s) * pa_[h] + cidx]; }
  double at(int h, int s, int cidx) const { return q[h - 1][size_t(s) * pa_[h] + cidx]; }

  double sup_diff(const PrefixQTable& other) const;
  double sup_abs() const;

 private:
  std::vector<int> pa_;  // pa_[h] = A^h
};

// Finite surrogate for the chunk policies: per-state distributions over
// full-length chunks, one row for the proposal and one for the behavior law.
struct ProposalTable {
  int S = 0, A = 0, H = 0;
  std::vector<std::vector<double>> proposal;  // [S][A^H]
  std::vector<std::vector<double>> behavior;  // [S][A^H]

  void validate() const;  // rows sum to 1 within 1e-12, entries >= 0
  static ProposalTable random(int S, int A, int H, RngStream& rng);
};

// Writes the h actions of chunk index cidx (big-endian, radix A) into out.
void decode_chunk(int cidx, int A, int h, int* out);

struct RolloutOut {
  double g = 0;   // discounted reward over the executed prefix
  int s_end = 0;  // landing state
};

// Open-loop rollout of a length-h action prefix; terminals absorb with
// zero reward, so rolling past one is harmless.
RolloutOut chunk_rollout(const TabularMDP& mdp, int s, const int* actions, int h);
double chunk_return(const TabularMDP& mdp, int s, const int* actions, int h);

// One application of the expected-prefix-max backup. The expectation over N
// i.i.d. proposal chunks is computed exactly by collapsing each support chunk
// c to m(c) = max_k Q(s', c_{1:k}) and applying the order-statistic identity
// E[max of N draws] = sum_i v_i (F_i^N - F_{i-1}^N) over distinct m values.
PrefixQTable apply_BNH(const TabularMDP& mdp, const ProposalTable& prop, int N,
                       const PrefixQTable& Q);

struct FixedPointOut {
  PrefixQTable Q;
  int iterations = 0;
  std::vector<double> ratios;  // empirical per-iteration contraction ratios
};

// Value iteration from Q = 0 until the sup-norm change drops below tol.
FixedPointOut fixed_point(const TabularMDP& mdp, const ProposalTable& prop, int N,
                          double tol);

// Exact policy evaluation of the extraction policy induced by Qsel: enumerate
// all N-tuples of support chunks per state (product probabilities), pick the
// (n, h) argmax with the lexicographic tie-break (smallest n, then smallest
// h), and solve for V by iteration to v_tol. Returns Q^pi over all prefixes.
// Throws when support^N exceeds max_tuples.
PrefixQTable eval_extraction_policy(const TabularMDP& mdp, const ProposalTable& prop,
                                    int N, const PrefixQTable& Qsel, double v_tol,
                                    int64_t max_tuples = 1000000,
                                    std::vector<double>* v_out = nullptr);

struct TvOut {
  double full = 0;
  std::vector<double> marginal;  // marginal[h-1] = TV of the length-h prefix laws
};

// Total variation of two chunk distributions and of all prefix marginals.
TvOut tv_checks(const std::vector<double>& mu, const std::vector<double>& nu, int A,
                int H);

struct KlOut {
  double kl = 0;
  double bound = 0;  // log N - (N-1)/N
  std::vector<double> selected;  // best-of-N distribution over the same atoms
};

// Exact best-of-N selection law over a finite proposal row, its KL to the
// proposal, and the closed-form bound. Ties in q are broken by treating the
// smaller index as infinitesimally larger, matching the argmax scan.
KlOut kl_best_of_n(const std::vector<double>& p, const std::vector<double>& q_values,
                   int N);

// Right-hand side of the variance-of-mean bound; throws when rho is outside
// [-1/(H-1), 1].
double variance_bound_check(double sigma2, double rho, int H);

struct TheoryCheck {
  std::string name;
  bool pass = false;
  double measured = 0;
  double bound = 0;
  double tol = 0;
};

struct TheoryReport {
  std::vector<TheoryCheck> checks;
  bool all_pass() const;
  std::string to_json() const;
};

// Runs every check once on a fixed lab instance plus randomized sweeps.
TheoryReport run_theory_suite(uint64_t seed);

}  // namespace acsac
