#pragma once
// Training wiring: run state construction, the per-step update with mode
// dispatch (adaptive multi-horizon, single-step, fixed-chunk), the offline
// and online loops with execute-full-prefix replanning, and deterministic
// evaluation on a dedicated RNG stream.
#include "acsac/adam.hpp"
#include "acsac/config.hpp"
#include "acsac/critic.hpp"
#include "acsac/dataset.hpp"
#include "acsac/extraction.hpp"
#include "acsac/flow.hpp"
#include "acsac/maze.hpp"
#include "acsac/rng.hpp"

#include <cstdint>
#include <vector>

namespace acsac {

// derive_seed tags; fixed constants so artifacts stay reproducible
enum : uint64_t {
  kStreamInit = 1,
  kStreamTrain = 2,
  kStreamEval = 3,
  kStreamProbe = 4,
  kStreamPerm = 5,
};

struct DecisionLog {
  int episode = 0;
  int t = 0;  // env step at which extraction ran
  int n_star = 1, h_star = 1;
  double q_hat = 0;  // ensemble-min score of the selected prefix
  double g_hat = 0;  // realized discounted return-to-go from t
  double x = 0, y = 0;
};

struct EvalReport {
  int episodes = 0;
  double success_rate = 0;
  double mean_return = 0;  // undiscounted episode return
  double mean_h = 0;       // mean selected h* over decisions
  std::vector<DecisionLog> decisions;
  std::vector<int> episode_len;
  std::vector<uint8_t> episode_success;
};

struct MetricsRow {
  int64_t step = 0;
  double loss_flow = 0, loss_critic = 0;
  double success = 0, mean_h = 0;
};

struct StepLosses {
  double flow = 0, critic = 0;
};

struct RunState {
  RunConfig cfg;
  MazeSpec env;
  Dataset data;
  FlowPolicy<float> flow;
  CriticEnsemble<float> critic;
  CriticEnsemble<float> target;  // Polyak copy; drives baseline bootstraps only
  Adam<float> opt_flow, opt_critic;
  RngStream train_rng{0};

  int64_t step = 0;       // gradient steps taken
  int64_t env_steps = 0;  // online env steps taken
  StepLosses last;
  std::vector<MetricsRow> metrics;

  // online acting state: the un-executed remainder of the selected prefix
  std::vector<float> pending;
  int pending_next = 0;
  std::array<double, 2> cur_state{0, 0};
  int ep_steps = 0;
  bool ep_open = false;

  RunState() = default;
  RunState(const RunState&) = delete;  // Adam holds pointers into the nets
  RunState& operator=(const RunState&) = delete;
  RunState(RunState&&) = default;
  RunState& operator=(RunState&&) = default;
};

// Builds nets, optimizers, and streams from (config, dataset). Dataset action
// stats are used as stored; they are computed here only if absent.
RunState make_run_state(const RunConfig& cfg, Dataset data);

// Parameter blocks in checkpoint order: flow, critic, and for the baseline
// modes the Polyak target.
std::vector<Param<float>*> checkpoint_blocks(RunState& rs);

void polyak_update(CriticEnsemble<float>& target, CriticEnsemble<float>& online, double tau);

// One gradient step: flow BC on the non-padded windows, then the critic TD
// update for the configured mode. Throws on non-finite losses, naming the
// step index.
StepLosses train_step(RunState& rs);

// cfg.offline_steps updates with eval every cfg.eval_every and at the end.
void train_offline(RunState& rs);

// cfg.online_steps env steps, one flow + one critic update per step,
// replanning when the pending prefix is exhausted; transitions are appended
// to the same dataset the sampler draws from.
void train_online(RunState& rs);

// Deterministic rollouts on the eval stream derived from (seed, rs.step);
// never touches train_rng or the dataset.
EvalReport evaluate(RunState& rs, int episodes);

}  // namespace acsac
