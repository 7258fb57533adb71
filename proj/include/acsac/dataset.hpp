#pragma once
// Episode storage, the scripted data generator, and chunked window sampling
// with absorbing padding + per-offset bootstrap masks.
#include "acsac/maze.hpp"
#include "acsac/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace acsac {

struct Episode {
  int len = 0;
  bool terminated = false;        // done flag was raised at the final transition
  std::vector<float> states;      // (len+1) * obs_dim
  std::vector<float> actions;     // len * act_dim
  std::vector<float> rewards;     // len
  std::vector<uint8_t> done;      // len; 1 only at the final transition
};

struct DatasetMeta {
  std::string env_id = "lmaze";
  int obs_dim = 2;
  int action_dim = 2;
  int num_episodes = 0;
  uint64_t seed = 0;
  std::vector<double> action_mean, action_std;  // per action dimension
  uint64_t config_hash = 0;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Episode> episodes;

  int64_t transitions() const { return transitions_; }

  // Online growth: an open (unsealed) trailing episode that the sampler can
  // already see. Appending one transition grows transitions() by exactly 1.
  void begin_episode(const float* s0);
  void append_transition(const float* a, float r, const float* s_next, bool done);
  void seal_episode();
  bool has_open_episode() const { return open_; }

  void recount();  // refresh the cached transition count (after bulk loads)

 private:
  int64_t transitions_ = 0;
  bool open_ = false;
};

// Per-dimension action stats over every recorded transition (population
// variance, std floored at 1e-6).
void compute_action_stats(Dataset& ds);

struct GenParams {
  int episodes = 500;
  double noise_sigma = 0.2;
  double detour_prob = 0.3;
};

// Scripted waypoint controller on the maze: full-speed pursuit of fixed
// waypoints with Gaussian action noise; a fraction of episodes interleave a
// detour toward a random free-space point. Failures are recorded verbatim.
Dataset generate_offline_data(const MazeSpec& env, const GenParams& gp, uint64_t seed);

// Noise-free controller action at a state (exposed for the controller test).
void controller_action(const MazeSpec& env, const double* pos, int* wp_index, double* out);

struct Window {
  int H = 0, obs_dim = 0, act_dim = 0;
  std::vector<float> states;        // (H+1) * obs_dim, s_t .. s_{t+H}
  std::vector<float> actions;       // H * act_dim
  std::vector<float> rewards;       // H
  std::vector<uint8_t> bootstrap_ok;  // [h-1]: gamma^h bootstrap term allowed at offset h
  bool padded = false;              // window crosses the episode end
  int real_len = 0;                 // transitions actually present
  int episode = 0, t = 0;
};

// Deterministic fill for episode `ep` at start index `t` (t <= len-1).
// Windows crossing the episode end get absorbing padding: repeated final
// state, zero actions, zero rewards. The bootstrap mask zeroes offsets whose
// bootstrap state lies at or beyond termination; the final recorded state of
// an unterminated (capped) episode still bootstraps.
void fill_window(const Dataset& ds, int ep, int t, int H, Window* w);

// Uniform episode, then uniform start index.
Window sample_chunked_window(const Dataset& ds, int H, RngStream& rng);

}  // namespace acsac
