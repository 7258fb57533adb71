#pragma once
// Run configuration: one flat struct covering env, model dims, training
// schedule, and mode. Parsed from JSON with unknown keys rejected, validated
// eagerly, and hashed so every artifact can name the config that produced it.
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace acsac {

// Malformed or inconsistent configuration; the CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

uint64_t fnv1a64(const void* data, size_t n);

struct RunConfig {
  std::string env_id = "lmaze";
  std::string mode = "acsac";  // acsac | single_step | fixed_chunk

  int H = 5;
  int N = 4;
  int F = 10;
  int fixed_h = 5;  // head used by fixed_chunk mode
  double gamma = 0.99;
  double lr = 3e-4;
  double tau = 5e-3;  // Polyak rate for baseline target critics
  int batch = 256;
  int K = 2;

  int n_layer = 2;
  int n_head = 4;
  int d_head = 16;
  std::vector<int> flow_hidden = {512, 512, 512, 512};

  int64_t offline_steps = 50000;
  int64_t online_steps = 20000;
  int64_t eval_every = 5000;
  int eval_episodes = 50;

  int gen_episodes = 500;
  double noise_sigma = 0.2;
  double detour_prob = 0.3;

  uint64_t seed = 0;

  int model_dim() const { return n_head * d_head; }

  void validate() const;  // throws ConfigError

  std::string to_json_string() const;  // canonical (sorted keys)
  uint64_t hash() const;
  std::string hash_hex() const;

  static RunConfig from_json_string(const std::string& text);
  static RunConfig load(const std::string& path);  // parse + validate
};

}  // namespace acsac
