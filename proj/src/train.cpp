#include "acsac/train.hpp"

#include "acsac/log.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace acsac {

namespace {

std::vector<int> all_heads(int H) {
  std::vector<int> hs(static_cast<size_t>(H));
  for (int h = 1; h <= H; h++) hs[size_t(h - 1)] = h;
  return hs;
}

// extraction dispatch shared by acting and evaluation: the deployed scorer is
// always the online critic
ExtractOut<float> act_extract(RunState& rs, const std::vector<float>& state, RngStream& rng) {
  if (rs.cfg.mode == "fixed_chunk")
    return extract_fixed_h(rs.critic, rs.flow, state, rs.cfg.N, rs.cfg.fixed_h, rng);
  return extract(rs.critic, rs.flow, state, rs.cfg.N, rng);
}

}  // namespace

RunState make_run_state(const RunConfig& cfg, Dataset data) {
  cfg.validate();
  RunState rs;
  rs.cfg = cfg;
  rs.env = MazeSpec::lmaze();
  rs.data = std::move(data);
  if (rs.data.meta.action_mean.empty() || rs.data.meta.action_std.empty())
    compute_action_stats(rs.data);
  const int obs = rs.data.meta.obs_dim, act = rs.data.meta.action_dim;

  RngStream init(derive_seed(cfg.seed, kStreamInit));
  rs.flow = FlowPolicy<float>(obs, act, cfg.H, cfg.F, cfg.flow_hidden,
                              rs.data.meta.action_mean, rs.data.meta.action_std,
                              rs.env.action_bound, init);
  rs.critic = CriticEnsemble<float>(cfg.K, obs, act, cfg.H, cfg.n_head, cfg.d_head,
                                    cfg.n_layer, init, "critic");
  rs.target = CriticEnsemble<float>(cfg.K, obs, act, cfg.H, cfg.n_head, cfg.d_head,
                                    cfg.n_layer, init, "target");
  {
    auto src = rs.critic.params();
    auto dst = rs.target.params();
    for (size_t i = 0; i < src.size(); i++) dst[i]->value = src[i]->value;
  }
  rs.opt_flow = Adam<float>("opt_flow", rs.flow.params(), cfg.lr);
  rs.opt_critic = Adam<float>("opt_critic", rs.critic.params(), cfg.lr);
  rs.train_rng = RngStream(derive_seed(cfg.seed, kStreamTrain));
  rs.cur_state = rs.env.start;
  return rs;
}

std::vector<Param<float>*> checkpoint_blocks(RunState& rs) {
  std::vector<Param<float>*> blocks;
  for (Param<float>* p : rs.flow.params()) blocks.push_back(p);
  for (Param<float>* p : rs.critic.params()) blocks.push_back(p);
  if (rs.cfg.mode != "acsac")
    for (Param<float>* p : rs.target.params()) blocks.push_back(p);
  rs.opt_flow.append_state_blocks(blocks);
  rs.opt_critic.append_state_blocks(blocks);
  return blocks;
}

void polyak_update(CriticEnsemble<float>& target, CriticEnsemble<float>& online, double tau) {
  auto tp = target.params();
  auto op = online.params();
  if (tp.size() != op.size()) throw std::runtime_error("polyak: ensemble mismatch");
  for (size_t i = 0; i < tp.size(); i++)
    for (size_t j = 0; j < tp[i]->value.size(); j++)
      tp[i]->value[j] = float((1.0 - tau) * double(tp[i]->value[j]) +
                              tau * double(op[i]->value[j]));
}

StepLosses train_step(RunState& rs) {
  const RunConfig& c = rs.cfg;
  const int B = c.batch, H = c.H;
  const int obs = rs.flow.obs_dim, act = rs.flow.act_dim;
  if (rs.data.transitions() == 0)
    throw std::runtime_error("train_step: empty dataset");

  std::vector<Window> ws;
  ws.reserve(size_t(B));
  for (int b = 0; b < B; b++) ws.push_back(sample_chunked_window(rs.data, H, rs.train_rng));

  StepLosses out;

  // flow BC on complete (non-padded) windows; padding rows are not behavior
  std::vector<float> fs, fc;
  int nb = 0;
  for (const Window& w : ws) {
    if (w.padded) continue;
    fs.insert(fs.end(), w.states.begin(), w.states.begin() + obs);
    fc.insert(fc.end(), w.actions.begin(), w.actions.end());
    nb++;
  }
  if (nb > 0) {
    Tape<float> t;
    int loss = rs.flow.bc_loss(t, fs, fc, nb, rs.train_rng);
    out.flow = double(t.val(loss)[0]);
    if (!std::isfinite(out.flow))
      throw std::runtime_error("non-finite flow loss at step " + std::to_string(rs.step + 1));
    t.backward(loss);
    rs.opt_flow.step();
  }

  // critic TD update
  std::vector<float> states(size_t(B) * obs), chunks(size_t(B) * H * act);
  std::vector<float> rewards(size_t(B) * H);
  std::vector<uint8_t> ok(size_t(B) * H);
  for (int b = 0; b < B; b++) {
    const Window& w = ws[size_t(b)];
    std::copy(w.states.begin(), w.states.begin() + obs, states.begin() + size_t(b) * obs);
    std::copy(w.actions.begin(), w.actions.end(), chunks.begin() + size_t(b) * H * act);
    std::copy(w.rewards.begin(), w.rewards.end(), rewards.begin() + size_t(b) * H);
    std::copy(w.bootstrap_ok.begin(), w.bootstrap_ok.end(), ok.begin() + size_t(b) * H);
  }

  std::vector<double> boot(size_t(B) * H, 0.0);
  std::vector<int> heads;
  if (c.mode == "acsac") {
    heads = all_heads(H);
    // every s_{t+h} bootstraps via the gradient-stopped online critic's own
    // joint (n, h) extraction
    std::vector<float> bs(size_t(B) * H * obs);
    for (int b = 0; b < B; b++)
      std::copy(ws[size_t(b)].states.begin() + obs, ws[size_t(b)].states.end(),
                bs.begin() + size_t(b) * H * obs);
    boot = extraction_values(rs.critic, rs.flow, bs, B * H, c.N, heads, rs.train_rng);
  } else {
    // baselines bootstrap through the Polyak target at their single horizon
    const int hb = c.mode == "single_step" ? 1 : c.fixed_h;
    heads = {hb};
    std::vector<float> bs(size_t(B) * obs);
    for (int b = 0; b < B; b++)
      std::copy(ws[size_t(b)].states.begin() + size_t(hb) * obs,
                ws[size_t(b)].states.begin() + size_t(hb + 1) * obs,
                bs.begin() + size_t(b) * obs);
    std::vector<double> v =
        extraction_values(rs.target, rs.flow, bs, B, c.N, heads, rs.train_rng);
    for (int b = 0; b < B; b++) boot[size_t(b) * H + (hb - 1)] = v[size_t(b)];
  }

  std::vector<float> g = build_targets<float>(rewards, ok, boot, B, H, c.gamma);
  std::vector<float> targets;
  if (int(heads.size()) == H) {
    targets = std::move(g);
  } else {
    targets.resize(size_t(B) * heads.size());
    for (int b = 0; b < B; b++)
      for (size_t i = 0; i < heads.size(); i++)
        targets[size_t(b) * heads.size() + i] = g[size_t(b) * H + (heads[i] - 1)];
  }

  {
    Tape<float> t;
    int loss = td_loss(t, rs.critic, t.input({B, obs}, states),
                       t.input({B, H * act}, chunks), targets, heads);
    out.critic = double(t.val(loss)[0]);
    if (!std::isfinite(out.critic))
      throw std::runtime_error("non-finite critic loss at step " + std::to_string(rs.step + 1));
    t.backward(loss);
    rs.opt_critic.step();
  }
  if (c.mode != "acsac") polyak_update(rs.target, rs.critic, c.tau);

  rs.step++;
  rs.last = out;
  return out;
}

namespace {

void eval_and_record(RunState& rs) {
  EvalReport rep = evaluate(rs, rs.cfg.eval_episodes);
  rs.metrics.push_back({rs.step, rs.last.flow, rs.last.critic, rep.success_rate, rep.mean_h});
  ACSAC_INFO("step %lld  loss_flow %.4f  loss_critic %.4f  success %.2f  mean_h %.2f",
             (long long)rs.step, rs.last.flow, rs.last.critic, rep.success_rate, rep.mean_h);
}

}  // namespace

void train_offline(RunState& rs) {
  if (rs.data.transitions() == 0)
    throw std::runtime_error("train_offline: dataset is empty");
  bool evaled = false;
  for (int64_t s = 0; s < rs.cfg.offline_steps; s++) {
    train_step(rs);
    evaled = false;
    if (rs.step % rs.cfg.eval_every == 0) {
      eval_and_record(rs);
      evaled = true;
    }
  }
  if (!evaled) eval_and_record(rs);
}

void train_online(RunState& rs) {
  if (rs.data.transitions() == 0)
    throw std::runtime_error("train_online: dataset is empty");
  const MazeSpec& env = rs.env;
  const int act = rs.flow.act_dim;
  bool evaled = false;
  for (int64_t s = 0; s < rs.cfg.online_steps; s++) {
    if (!rs.ep_open) {
      rs.cur_state = env.start;
      float s0[2] = {float(rs.cur_state[0]), float(rs.cur_state[1])};
      rs.data.begin_episode(s0);
      rs.ep_open = true;
      rs.ep_steps = 0;
      rs.pending.clear();
      rs.pending_next = 0;
    }
    if (rs.pending_next * act >= int(rs.pending.size())) {
      std::vector<float> sf = {float(rs.cur_state[0]), float(rs.cur_state[1])};
      ExtractOut<float> sel = act_extract(rs, sf, rs.train_rng);
      rs.pending = std::move(sel.prefix);
      rs.pending_next = 0;
    }
    double a[2] = {double(rs.pending[size_t(rs.pending_next) * act]),
                   double(rs.pending[size_t(rs.pending_next) * act + 1])};
    rs.pending_next++;
    StepOut so = env_step(env, rs.cur_state.data(), a);
    float af[2] = {float(a[0]), float(a[1])};
    float sn[2] = {float(so.next[0]), float(so.next[1])};
    rs.data.append_transition(af, float(so.reward), sn, so.done);
    rs.cur_state = so.next;
    rs.ep_steps++;
    rs.env_steps++;
    if (so.done || rs.ep_steps >= env.max_steps) {
      // discard any unexecuted remainder of the prefix
      rs.data.seal_episode();
      rs.ep_open = false;
      rs.pending.clear();
      rs.pending_next = 0;
    }

    train_step(rs);
    evaled = false;
    if (rs.step % rs.cfg.eval_every == 0) {
      eval_and_record(rs);
      evaled = true;
    }
  }
  if (rs.ep_open) {
    rs.data.seal_episode();
    rs.ep_open = false;
    rs.pending.clear();
    rs.pending_next = 0;
  }
  if (!evaled) eval_and_record(rs);
}

EvalReport evaluate(RunState& rs, int episodes) {
  if (episodes < 1) throw std::runtime_error("evaluate: need at least one episode");
  RngStream erng(derive_seed(derive_seed(rs.cfg.seed, kStreamEval), uint64_t(rs.step)));
  const MazeSpec& env = rs.env;
  const int act = rs.flow.act_dim;
  EvalReport rep;
  rep.episodes = episodes;
  int successes = 0;
  double ret_sum = 0;
  int64_t h_sum = 0;

  for (int ep = 0; ep < episodes; ep++) {
    std::array<double, 2> state = env.start;
    std::vector<double> step_rewards;
    size_t first_decision = rep.decisions.size();
    bool done = false;
    int t = 0;
    while (!done && t < env.max_steps) {
      std::vector<float> sf = {float(state[0]), float(state[1])};
      ExtractOut<float> sel = act_extract(rs, sf, erng);
      DecisionLog d;
      d.episode = ep;
      d.t = t;
      d.n_star = sel.n_star;
      d.h_star = sel.h_star;
      d.q_hat = sel.value;
      d.x = state[0];
      d.y = state[1];
      rep.decisions.push_back(d);
      h_sum += sel.h_star;
      for (int row = 0; row < sel.h_star && !done && t < env.max_steps; row++) {
        double a[2] = {double(sel.prefix[size_t(row) * act]),
                       double(sel.prefix[size_t(row) * act + 1])};
        StepOut so = env_step(env, state.data(), a);
        step_rewards.push_back(so.reward);
        state = so.next;
        done = so.done;
        t++;
      }
    }
    if (done) successes++;
    rep.episode_len.push_back(t);
    rep.episode_success.push_back(done ? 1 : 0);
    double ret = 0;
    for (double r : step_rewards) ret += r;
    ret_sum += ret;
    // discounted return-to-go at each decision from the realized tail
    std::vector<double> g(step_rewards.size() + 1, 0.0);
    for (int i = int(step_rewards.size()) - 1; i >= 0; i--)
      g[size_t(i)] = step_rewards[size_t(i)] + rs.cfg.gamma * g[size_t(i) + 1];
    for (size_t di = first_decision; di < rep.decisions.size(); di++)
      rep.decisions[di].g_hat = g[size_t(rep.decisions[di].t)];
  }

  rep.success_rate = double(successes) / episodes;
  rep.mean_return = ret_sum / episodes;
  rep.mean_h = rep.decisions.empty() ? 0.0 : double(h_sum) / double(rep.decisions.size());
  return rep;
}

}  // namespace acsac
