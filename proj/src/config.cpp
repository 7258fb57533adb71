#include "acsac/config.hpp"

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace acsac {

uint64_t fnv1a64(const void* data, size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  uint64_t h = 0xcbf29ce484222325ull;
  for (size_t i = 0; i < n; i++) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

void RunConfig::validate() const {
  auto req = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  req(env_id == "lmaze", "env_id must be 'lmaze', got '" + env_id + "'");
  req(mode == "acsac" || mode == "single_step" || mode == "fixed_chunk",
      "mode must be acsac, single_step, or fixed_chunk, got '" + mode + "'");
  req(H >= 1, "H must be >= 1");
  req(N >= 1, "N must be >= 1");
  req(F >= 1, "F must be >= 1");
  req(gamma > 0.0 && gamma < 1.0, "gamma must lie in (0, 1)");
  req(lr > 0.0, "lr must be positive");
  req(tau > 0.0 && tau <= 1.0, "tau must lie in (0, 1]");
  req(batch >= 1, "batch must be >= 1");
  req(K >= 1, "K must be >= 1");
  req(n_layer >= 1 && n_head >= 1 && d_head >= 1, "critic dims must be >= 1");
  req(!flow_hidden.empty(), "flow_hidden must be nonempty");
  for (int w : flow_hidden) req(w >= 1, "flow_hidden widths must be >= 1");
  req(offline_steps >= 0 && online_steps >= 0, "step counts must be >= 0");
  req(eval_every >= 1, "eval_every must be >= 1");
  req(eval_episodes >= 1, "eval_episodes must be >= 1");
  req(gen_episodes >= 0, "gen_episodes must be >= 0");
  req(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  req(detour_prob >= 0.0 && detour_prob <= 1.0, "detour_prob must lie in [0, 1]");
  if (mode == "fixed_chunk")
    req(fixed_h >= 1 && fixed_h <= H, "fixed_chunk requires fixed_h in [1, H]");
  if (mode == "single_step")
    req(H == 1, "single_step requires H = 1");
}

std::string RunConfig::to_json_string() const {
  nlohmann::json j;
  j["env_id"] = env_id;
  j["mode"] = mode;
  j["H"] = H;
  j["N"] = N;
  j["F"] = F;
  j["fixed_h"] = fixed_h;
  j["gamma"] = gamma;
  j["lr"] = lr;
  j["tau"] = tau;
  j["batch"] = batch;
  j["K"] = K;
  j["n_layer"] = n_layer;
  j["n_head"] = n_head;
  j["d_head"] = d_head;
  j["flow_hidden"] = flow_hidden;
  j["offline_steps"] = offline_steps;
  j["online_steps"] = online_steps;
  j["eval_every"] = eval_every;
  j["eval_episodes"] = eval_episodes;
  j["gen_episodes"] = gen_episodes;
  j["noise_sigma"] = noise_sigma;
  j["detour_prob"] = detour_prob;
  j["seed"] = seed;
  return j.dump();  // nlohmann objects iterate sorted by key
}

uint64_t RunConfig::hash() const {
  std::string s = to_json_string();
  return fnv1a64(s.data(), s.size());
}

std::string RunConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)hash());
  return buf;
}

RunConfig RunConfig::from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config: top level must be an object");

  RunConfig c;
  std::set<std::string> known;
  try {
    auto get = [&](const char* key, auto& field) {
      known.insert(key);
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("env_id", c.env_id);
    get("mode", c.mode);
    get("H", c.H);
    get("N", c.N);
    get("F", c.F);
    get("fixed_h", c.fixed_h);
    get("gamma", c.gamma);
    get("lr", c.lr);
    get("tau", c.tau);
    get("batch", c.batch);
    get("K", c.K);
    get("n_layer", c.n_layer);
    get("n_head", c.n_head);
    get("d_head", c.d_head);
    get("flow_hidden", c.flow_hidden);
    get("offline_steps", c.offline_steps);
    get("online_steps", c.online_steps);
    get("eval_every", c.eval_every);
    get("eval_episodes", c.eval_episodes);
    get("gen_episodes", c.gen_episodes);
    get("noise_sigma", c.noise_sigma);
    get("detour_prob", c.detour_prob);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad field type: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "'");
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig c = from_json_string(ss.str());
  c.validate();
  return c;
}

}  // namespace acsac
