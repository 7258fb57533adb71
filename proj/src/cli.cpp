#include "acsac/cli.hpp"

#include "acsac/analyze.hpp"
#include "acsac/io.hpp"
#include "acsac/log.hpp"
#include "acsac/operator_lab.hpp"
#include "acsac/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace acsac {

namespace {

using nlohmann::json;

struct Args {
  std::string config, data, ckpt, from;
  std::string out = ".";
  std::optional<uint64_t> seed;
  bool force = false;
  int episodes = 0;  // 0: use config eval_episodes
  int bins = 10;
  int rounds = 1000;
  int probe_batches = 64;
};

std::string join(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void ensure_out(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
}

RunConfig load_config(const Args& a) {
  RunConfig cfg = RunConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  return cfg;
}

// Config driving an eval/analyze run: an explicit --config must hash to what
// the checkpoint was written under (unless forced); otherwise the config
// embedded in the checkpoint header is used. A --seed override applies after
// the hash comparison, so re-evaluating under a fresh seed needs no --force.
RunConfig config_for_artifact(const Args& a, const json& header) {
  RunConfig cfg;
  if (!a.config.empty()) {
    cfg = RunConfig::load(a.config);
    std::string want = header.value("config_hash", std::string());
    if (!want.empty() && want != cfg.hash_hex() && !a.force)
      throw ConfigError("checkpoint was written under config hash " + want +
                        " but --config hashes to " + cfg.hash_hex() +
                        "; pass --force to proceed");
  } else {
    if (!header.contains("config"))
      throw IoError("checkpoint header carries no config; pass --config");
    cfg = RunConfig::from_json_string(header["config"].dump());
  }
  if (a.seed) cfg.seed = *a.seed;
  cfg.validate();
  return cfg;
}

void warn_dataset_hash(const Dataset& ds, const RunConfig& cfg) {
  if (ds.meta.config_hash != 0 && ds.meta.config_hash != cfg.hash())
    ACSAC_INFO("note: dataset was generated under config %016llx, this run is %016llx",
               (unsigned long long)ds.meta.config_hash, (unsigned long long)cfg.hash());
}

json checkpoint_header(RunState& rs) {
  json h;
  h["kind"] = "acsac-checkpoint";
  h["config"] = json::parse(rs.cfg.to_json_string());
  h["config_hash"] = rs.cfg.hash_hex();
  h["step"] = rs.step;
  h["env_steps"] = rs.env_steps;
  h["obs_dim"] = rs.flow.obs_dim;
  h["act_dim"] = rs.flow.act_dim;
  h["action_mean"] = rs.data.meta.action_mean;
  h["action_std"] = rs.data.meta.action_std;
  // full mutable state: a resumed phase continues bit-for-bit where a
  // continuous run would be
  h["opt_flow_t"] = rs.opt_flow.step_count();
  h["opt_critic_t"] = rs.opt_critic.step_count();
  h["train_rng"] = rs.train_rng.state();
  return h;
}

void save_run_checkpoint(RunState& rs, const std::string& path) {
  std::vector<const Param<float>*> blocks;
  for (Param<float>* p : checkpoint_blocks(rs)) blocks.push_back(p);
  save_checkpoint(path, checkpoint_header(rs).dump(), blocks);
}

// restores parameters, optimizer moments, and counters; returns the header
json restore_run_checkpoint(RunState& rs, const std::string& bytes) {
  json h = json::parse(load_checkpoint_into(bytes, checkpoint_blocks(rs)));
  rs.step = h.value("step", int64_t(0));
  rs.env_steps = h.value("env_steps", int64_t(0));
  rs.opt_flow.set_step_count(h.value("opt_flow_t", int64_t(0)));
  rs.opt_critic.set_step_count(h.value("opt_critic_t", int64_t(0)));
  if (h.contains("train_rng")) rs.train_rng.set_state(h.at("train_rng").get<std::string>());
  return h;
}

std::string metrics_jsonl(const std::vector<MetricsRow>& rows) {
  std::string out;
  for (const MetricsRow& r : rows) {
    json j{{"step", r.step},
           {"loss_flow", r.loss_flow},
           {"loss_critic", r.loss_critic},
           {"success", r.success},
           {"mean_h", r.mean_h}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string eval_jsonl(const EvalReport& rep, const std::string& hash_hex, int64_t step) {
  json s{{"kind", "eval_summary"}, {"config_hash", hash_hex},   {"step", step},
         {"episodes", rep.episodes}, {"success_rate", rep.success_rate},
         {"mean_return", rep.mean_return}, {"mean_h", rep.mean_h}};
  std::string out = s.dump();
  out += '\n';
  for (const DecisionLog& d : rep.decisions) {
    json j{{"episode", d.episode}, {"t", d.t},         {"n_star", d.n_star},
           {"h_star", d.h_star},   {"q_hat", d.q_hat}, {"g_hat", d.g_hat},
           {"x", d.x},             {"y", d.y}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

int run_gen(const Args& a) {
  RunConfig cfg = load_config(a);
  ensure_out(a.out);
  GenParams gp;
  gp.episodes = cfg.gen_episodes;
  gp.noise_sigma = cfg.noise_sigma;
  gp.detour_prob = cfg.detour_prob;
  Dataset ds = generate_offline_data(MazeSpec::lmaze(), gp, cfg.seed);
  ds.meta.config_hash = cfg.hash();
  std::string path = join(a.out, "dataset.acsd");
  save_dataset(ds, path);
  std::printf("wrote %s: %d episodes, %lld transitions\n", path.c_str(),
              ds.meta.num_episodes, (long long)ds.transitions());
  return 0;
}

int run_train(const Args& a, bool online) {
  RunConfig cfg = load_config(a);
  ensure_out(a.out);
  std::string data_path = a.data.empty() ? join(a.out, "dataset.acsd") : a.data;
  Dataset ds = load_dataset(data_path);
  warn_dataset_hash(ds, cfg);
  RunState rs = make_run_state(cfg, std::move(ds));
  if (!a.from.empty()) {
    std::string bytes = read_file(a.from);
    json h = json::parse(checkpoint_header_json(bytes));
    std::string want = h.value("config_hash", std::string());
    if (!want.empty() && want != cfg.hash_hex() && !a.force)
      throw ConfigError("resume checkpoint was written under config hash " + want +
                        " but this run hashes to " + cfg.hash_hex() +
                        "; pass --force to proceed");
    restore_run_checkpoint(rs, bytes);
  }

  if (online)
    train_online(rs);
  else
    train_offline(rs);

  save_run_checkpoint(rs, join(a.out, "checkpoint.acsc"));
  write_file_atomic(join(a.out, "metrics.jsonl"), metrics_jsonl(rs.metrics));
  if (online) save_dataset(rs.data, join(a.out, "dataset_online.acsd"));
  if (!rs.metrics.empty()) {
    const MetricsRow& m = rs.metrics.back();
    std::printf("done: step=%lld env_steps=%lld success=%.2f mean_h=%.2f "
                "loss_flow=%.4g loss_critic=%.4g\n",
                (long long)rs.step, (long long)rs.env_steps, m.success, m.mean_h,
                m.loss_flow, m.loss_critic);
  }
  return 0;
}

int run_eval(const Args& a) {
  ensure_out(a.out);
  std::string ckpt = a.ckpt.empty() ? join(a.out, "checkpoint.acsc") : a.ckpt;
  std::string bytes = read_file(ckpt);
  json h = json::parse(checkpoint_header_json(bytes));
  RunConfig cfg = config_for_artifact(a, h);

  // stats-only dataset shell: evaluation never samples windows
  Dataset shell;
  shell.meta.env_id = cfg.env_id;
  shell.meta.obs_dim = h.value("obs_dim", 2);
  shell.meta.action_dim = h.value("act_dim", 2);
  shell.meta.action_mean = h.value("action_mean", std::vector<double>{});
  shell.meta.action_std = h.value("action_std", std::vector<double>{});
  if (shell.meta.action_mean.empty() || shell.meta.action_std.empty())
    throw IoError("checkpoint header lacks action stats");
  RunState rs = make_run_state(cfg, std::move(shell));
  restore_run_checkpoint(rs, bytes);

  int eps = a.episodes > 0 ? a.episodes : cfg.eval_episodes;
  EvalReport rep = evaluate(rs, eps);
  write_file_atomic(join(a.out, "eval_log.jsonl"),
                    eval_jsonl(rep, cfg.hash_hex(), rs.step));
  std::printf("eval: episodes=%d success=%.2f mean_return=%.2f mean_h=%.2f\n",
              rep.episodes, rep.success_rate, rep.mean_return, rep.mean_h);
  return 0;
}

int run_analyze(const Args& a) {
  ensure_out(a.out);
  std::string ckpt = a.ckpt.empty() ? join(a.out, "checkpoint.acsc") : a.ckpt;
  std::string bytes = read_file(ckpt);
  json h = json::parse(checkpoint_header_json(bytes));
  RunConfig cfg = config_for_artifact(a, h);
  std::string hash_hex = cfg.hash_hex();

  std::string data_path = a.data.empty() ? join(a.out, "dataset.acsd") : a.data;
  Dataset ds = load_dataset(data_path);
  warn_dataset_hash(ds, cfg);
  // the trained nets' normalization is authoritative
  if (h.contains("action_mean")) {
    ds.meta.action_mean = h["action_mean"].get<std::vector<double>>();
    ds.meta.action_std = h["action_std"].get<std::vector<double>>();
  }
  RunState rs = make_run_state(cfg, std::move(ds));
  restore_run_checkpoint(rs, bytes);

  int eps = a.episodes > 0 ? a.episodes : cfg.eval_episodes;
  EvalReport rep = evaluate(rs, eps);

  std::vector<ChunkDistRow> rows = chunk_distribution(rep.decisions);
  write_file_atomic(join(a.out, "chunk_dist.csv"), chunk_distribution_csv(rows, hash_hex));

  std::vector<CalibrationBin> cal = calibration_bins(rep.decisions, a.bins);
  write_file_atomic(join(a.out, "calibration.csv"), calibration_csv(cal, hash_hex));

  json summary;
  summary["config_hash"] = hash_hex;
  summary["episodes"] = rep.episodes;
  summary["success_rate"] = rep.success_rate;
  summary["mean_h"] = rep.mean_h;
  summary["calibration_bins"] = int(cal.size());
  try {
    std::vector<double> gs, qs;
    for (const CalibrationBin& b : cal) {
      gs.push_back(b.mean_g);
      qs.push_back(b.mean_q);
    }
    summary["spearman_bins"] = spearman(gs, qs);
  } catch (const std::exception& e) {
    ACSAC_INFO("calibration spearman unavailable: %s", e.what());
    summary["spearman_bins"] = nullptr;
  }

  PermTestOut perm = turn_permutation_test(rs.env, rep.decisions, a.rounds,
                                           derive_seed(cfg.seed, kStreamPerm));
  summary["turn_test"] = json{{"mean_turn", perm.mean_turn},
                              {"mean_straight", perm.mean_straight},
                              {"n_turn", perm.n_turn},
                              {"n_straight", perm.n_straight},
                              {"statistic", perm.statistic},
                              {"p", perm.p}};

  GradVarStats::Report gv = analyze_gradient_variance(rs, a.probe_batches);
  write_file_atomic(join(a.out, "grad_variance.json"), grad_variance_json(gv, hash_hex));
  write_file_atomic(join(a.out, "analyze_summary.json"), summary.dump(2) + "\n");

  std::printf("analyze: success=%.2f mean_h=%.2f turn_p=%.4f var_avg=%.4g "
              "(max var_h %.4g)\n",
              rep.success_rate, rep.mean_h, perm.p, gv.var_avg,
              *std::max_element(gv.var_h.begin(), gv.var_h.end()));
  return 0;
}

int run_verify(const Args& a) {
  ensure_out(a.out);
  TheoryReport rep = run_theory_suite(a.seed.value_or(0));
  write_file_atomic(join(a.out, "theory_report.json"), rep.to_json() + "\n");
  int passed = 0;
  for (const TheoryCheck& c : rep.checks) {
    std::printf("[%s] %-32s measured=%.6g bound=%.6g tol=%.3g\n",
                c.pass ? "PASS" : "FAIL", c.name.c_str(), c.measured, c.bound, c.tol);
    passed += c.pass ? 1 : 0;
  }
  std::printf("theory: %d/%d checks pass\n", passed, int(rep.checks.size()));
  return rep.all_pass() ? 0 : 1;
}

}  // namespace

int cli_dispatch(int argc, const char* const* argv) {
  CLI::App app{"adaptive action chunking lab: maze env, flow policy, multi-horizon critic"};
  app.require_subcommand(1);
  Args a;
  int rc = 0;

  auto add_common = [&a](CLI::App* sub, bool need_config) {
    CLI::Option* c = sub->add_option("--config", a.config, "run config (JSON)");
    if (need_config) c->required();
    sub->add_option("--seed", a.seed, "override the config seed");
    sub->add_option("--out", a.out, "output directory")->capture_default_str();
    return sub;
  };

  CLI::App* gen =
      add_common(app.add_subcommand("gen-data", "generate the scripted offline dataset"), true);
  gen->callback([&] { rc = run_gen(a); });

  CLI::App* toff = add_common(
      app.add_subcommand("train-offline", "train flow and critic on a stored dataset"), true);
  toff->add_option("--data", a.data, "dataset path (default <out>/dataset.acsd)");
  toff->add_option("--from", a.from, "checkpoint to resume from");
  toff->add_flag("--force", a.force, "proceed on config hash mismatch");
  toff->callback([&] { rc = run_train(a, false); });

  CLI::App* ton = add_common(
      app.add_subcommand("train-online", "continue training while acting in the env"), true);
  ton->add_option("--data", a.data, "dataset path (default <out>/dataset.acsd)");
  ton->add_option("--from", a.from, "checkpoint to resume from");
  ton->add_flag("--force", a.force, "proceed on config hash mismatch");
  ton->callback([&] { rc = run_train(a, true); });

  CLI::App* ev =
      add_common(app.add_subcommand("eval", "roll out a checkpoint and log every decision"),
                 false);
  ev->add_option("--ckpt", a.ckpt, "checkpoint path (default <out>/checkpoint.acsc)");
  ev->add_option("--episodes", a.episodes, "episodes (default: config eval_episodes)");
  ev->add_flag("--force", a.force, "proceed on config hash mismatch");
  ev->callback([&] { rc = run_eval(a); });

  CLI::App* an = add_common(
      app.add_subcommand("analyze",
                         "chunk sizes, calibration, turn adaptivity, gradient variance"),
      false);
  an->add_option("--ckpt", a.ckpt, "checkpoint path (default <out>/checkpoint.acsc)");
  an->add_option("--data", a.data, "dataset path (default <out>/dataset.acsd)");
  an->add_option("--episodes", a.episodes, "episodes (default: config eval_episodes)");
  an->add_option("--bins", a.bins, "calibration bins")->capture_default_str();
  an->add_option("--rounds", a.rounds, "permutation rounds")->capture_default_str();
  an->add_option("--probe-batches", a.probe_batches, "gradient probe minibatches")
      ->capture_default_str();
  an->add_flag("--force", a.force, "proceed on config hash mismatch");
  an->callback([&] { rc = run_analyze(a); });

  CLI::App* vt = app.add_subcommand("verify-theory", "run the exact tabular operator checks");
  vt->add_option("--seed", a.seed, "suite seed (default 0)");
  vt->add_option("--out", a.out, "output directory")->capture_default_str();
  vt->callback([&] { rc = run_verify(a); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints help or the parse error
    return code == 0 ? 0 : 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}

}  // namespace acsac
