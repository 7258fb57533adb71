#pragma once
// Analysis behind the paper-style figures: executed-chunk-size distribution
// over env timesteps, prefix-Q calibration against realized returns,
// turn-vs-straight adaptivity (permutation test), and the gradient-variance
// probe for the averaged multi-horizon TD gradient.
#include "acsac/maze.hpp"
#include "acsac/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace acsac {

struct ChunkDistRow {
  int t = 0;
  double mean_h = 0;
  int count = 0;
};

// Mean selected h* per decision timestep, rows sorted by t.
std::vector<ChunkDistRow> chunk_distribution(const std::vector<DecisionLog>& decisions);
std::string chunk_distribution_csv(const std::vector<ChunkDistRow>& rows,
                                   const std::string& config_hash_hex);

struct CalibrationBin {
  double lo = 0, hi = 0;   // realized-return range of the bin
  double mean_g = 0, mean_q = 0;
  int count = 0;
};

// Equal-frequency bins over realized return-to-go; bin count shrinks (with a
// logged warning) when there are fewer decisions than requested bins.
std::vector<CalibrationBin> calibration_bins(const std::vector<DecisionLog>& decisions,
                                             int bins);
std::string calibration_csv(const std::vector<CalibrationBin>& bins,
                            const std::string& config_hash_hex);

// Spearman rank correlation with average ranks on ties.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

struct PermTestOut {
  double mean_turn = 0, mean_straight = 0;
  int n_turn = 0, n_straight = 0;
  double statistic = 0;  // mean_straight - mean_turn
  double p = 1.0;        // two-sided
};

// Permutation test of mean selected h* between the turn region (Chebyshev
// ball around the corridor corner) and the rest of the maze.
PermTestOut turn_permutation_test(const MazeSpec& env,
                                  const std::vector<DecisionLog>& decisions,
                                  int rounds, uint64_t seed);

// Accumulates per-horizon gradient vectors batch by batch; only sums and the
// HxH Gram matrix are kept, so memory stays H*(dim+H).
class GradVarStats {
 public:
  GradVarStats(int H, int64_t dim);

  // g: H vectors of length dim (one per horizon) from a single minibatch
  void add(const std::vector<std::vector<double>>& g);

  struct Report {
    int H = 0;
    int batches = 0;
    std::vector<double> var_h;  // total variance of g_h across batches
    double var_avg = 0;         // Var of the averaged gradient
    double sigma2 = 0;          // mean per-horizon variance
    double rho = 0;             // mean pairwise correlation
    double bound = 0;           // sigma2 * (rho + (1 - rho)/H)
    bool holds = false;         // var_avg <= max_h var_h
  };
  Report finalize() const;  // needs at least 2 batches

 private:
  int H_;
  int64_t dim_, n_ = 0;
  std::vector<std::vector<double>> sum_;  // H x dim
  std::vector<double> gram_;              // H x H, sum of <g_h, g_h'>
};

// Probes num_batches (>= 32) fixed minibatches on a dedicated stream: for
// each batch, the H per-horizon TD gradients of the critic and their average.
// Parameters are left untouched.
GradVarStats::Report analyze_gradient_variance(RunState& rs, int num_batches);

std::string grad_variance_json(const GradVarStats::Report& rep,
                               const std::string& config_hash_hex);

}  // namespace acsac
