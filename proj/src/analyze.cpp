#include "acsac/analyze.hpp"

#include "acsac/extraction.hpp"
#include "acsac/log.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <stdexcept>

namespace acsac {

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace

std::vector<ChunkDistRow> chunk_distribution(const std::vector<DecisionLog>& decisions) {
  std::map<int, std::pair<int64_t, int>> acc;  // t -> (h sum, count)
  for (const DecisionLog& d : decisions) {
    auto& a = acc[d.t];
    a.first += d.h_star;
    a.second++;
  }
  std::vector<ChunkDistRow> rows;
  rows.reserve(acc.size());
  for (const auto& [t, a] : acc)
    rows.push_back({t, double(a.first) / a.second, a.second});
  return rows;
}

std::string chunk_distribution_csv(const std::vector<ChunkDistRow>& rows,
                                   const std::string& config_hash_hex) {
  std::string out = "# config_hash=" + config_hash_hex + "\n";
  out += "t,mean_h,count\n";
  for (const ChunkDistRow& r : rows)
    out += std::to_string(r.t) + "," + fmt_double(r.mean_h) + "," +
           std::to_string(r.count) + "\n";
  return out;
}

std::vector<CalibrationBin> calibration_bins(const std::vector<DecisionLog>& decisions,
                                             int bins) {
  if (bins < 1) throw std::runtime_error("calibration: need at least one bin");
  const int n = int(decisions.size());
  if (n == 0) return {};
  if (n < bins) {
    ACSAC_INFO("calibration: only %d decisions for %d bins, reducing", n, bins);
    bins = n;
  }
  std::vector<std::pair<double, double>> pts;  // (g_hat, q_hat) sorted by g
  pts.reserve(size_t(n));
  for (const DecisionLog& d : decisions) pts.push_back({d.g_hat, d.q_hat});
  std::sort(pts.begin(), pts.end());

  std::vector<CalibrationBin> out;
  const int base = n / bins, rem = n % bins;
  int at = 0;
  for (int b = 0; b < bins; b++) {
    int len = base + (b < rem ? 1 : 0);
    CalibrationBin cb;
    cb.lo = pts[size_t(at)].first;
    cb.hi = pts[size_t(at + len - 1)].first;
    for (int i = at; i < at + len; i++) {
      cb.mean_g += pts[size_t(i)].first;
      cb.mean_q += pts[size_t(i)].second;
    }
    cb.mean_g /= len;
    cb.mean_q /= len;
    cb.count = len;
    out.push_back(cb);
    at += len;
  }
  return out;
}

std::string calibration_csv(const std::vector<CalibrationBin>& bins,
                            const std::string& config_hash_hex) {
  std::string out = "# config_hash=" + config_hash_hex + "\n";
  out += "bin_low,bin_high,mean_G,mean_Q,count\n";
  for (const CalibrationBin& b : bins)
    out += fmt_double(b.lo) + "," + fmt_double(b.hi) + "," + fmt_double(b.mean_g) +
           "," + fmt_double(b.mean_q) + "," + std::to_string(b.count) + "\n";
  return out;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const int n = int(v.size());
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[size_t(a)] < v[size_t(b)]; });
  std::vector<double> r(static_cast<size_t>(n));
  int i = 0;
  while (i < n) {
    int j = i;
    while (j + 1 < n && v[size_t(idx[size_t(j + 1)])] == v[size_t(idx[size_t(i)])]) j++;
    double rank = 0.5 * (i + j) + 1.0;  // average of 1-based ranks i+1..j+1
    for (int k = i; k <= j; k++) r[size_t(idx[size_t(k)])] = rank;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::runtime_error("spearman: need two equal-length series of >= 2 points");
  std::vector<double> ra = average_ranks(a), rb = average_ranks(b);
  const int n = int(a.size());
  double ma = 0, mb = 0;
  for (int i = 0; i < n; i++) {
    ma += ra[size_t(i)];
    mb += rb[size_t(i)];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (int i = 0; i < n; i++) {
    double da = ra[size_t(i)] - ma, db = rb[size_t(i)] - mb;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  if (va == 0 || vb == 0)
    throw std::runtime_error("spearman: a series is constant");
  return cov / std::sqrt(va * vb);
}

PermTestOut turn_permutation_test(const MazeSpec& env,
                                  const std::vector<DecisionLog>& decisions,
                                  int rounds, uint64_t seed) {
  if (rounds < 1) throw std::runtime_error("permutation test: rounds must be positive");
  std::vector<double> pool;
  int n_turn = 0;
  // turn-labelled values first, then straight, so a shuffle relabels in place
  for (const DecisionLog& d : decisions)
    if (env.in_turn_region(d.x, d.y)) {
      pool.push_back(double(d.h_star));
      n_turn++;
    }
  for (const DecisionLog& d : decisions)
    if (!env.in_turn_region(d.x, d.y)) pool.push_back(double(d.h_star));
  const int n = int(pool.size()), n_straight = n - n_turn;

  PermTestOut out;
  out.n_turn = n_turn;
  out.n_straight = n_straight;
  if (n_turn == 0 || n_straight == 0) return out;  // degenerate, p stays 1

  auto group_means = [&](const std::vector<double>& v) {
    double st = 0, ss = 0;
    for (int i = 0; i < n_turn; i++) st += v[size_t(i)];
    for (int i = n_turn; i < n; i++) ss += v[size_t(i)];
    return std::pair<double, double>{st / n_turn, ss / n_straight};
  };
  auto [mt, ms] = group_means(pool);
  out.mean_turn = mt;
  out.mean_straight = ms;
  out.statistic = ms - mt;

  RngStream rng(seed);
  std::vector<double> perm = pool;
  int hits = 0;
  const double obs = std::abs(out.statistic);
  for (int r = 0; r < rounds; r++) {
    for (int i = n - 1; i > 0; i--)
      std::swap(perm[size_t(i)], perm[size_t(rng.uniform_int(i + 1))]);
    auto [pt, ps] = group_means(perm);
    if (std::abs(ps - pt) >= obs - 1e-12) hits++;
  }
  out.p = double(1 + hits) / double(rounds + 1);
  return out;
}

GradVarStats::GradVarStats(int H, int64_t dim) : H_(H), dim_(dim) {
  if (H < 1 || dim < 1) throw std::runtime_error("grad stats: bad dimensions");
  sum_.assign(size_t(H), std::vector<double>(static_cast<size_t>(dim), 0.0));
  gram_.assign(size_t(H) * H, 0.0);
}

void GradVarStats::add(const std::vector<std::vector<double>>& g) {
  if (int(g.size()) != H_) throw std::runtime_error("grad stats: expected H vectors");
  for (const auto& v : g)
    if (int64_t(v.size()) != dim_) throw std::runtime_error("grad stats: dim mismatch");
  for (int h = 0; h < H_; h++)
    for (int64_t i = 0; i < dim_; i++) sum_[size_t(h)][size_t(i)] += g[size_t(h)][size_t(i)];
  for (int a = 0; a < H_; a++)
    for (int b = a; b < H_; b++) {
      double dot = 0;
      for (int64_t i = 0; i < dim_; i++)
        dot += g[size_t(a)][size_t(i)] * g[size_t(b)][size_t(i)];
      gram_[size_t(a) * H_ + b] += dot;
      if (a != b) gram_[size_t(b) * H_ + a] += dot;
    }
  n_++;
}

GradVarStats::Report GradVarStats::finalize() const {
  if (n_ < 2) throw std::runtime_error("grad stats: need at least two batches");
  const double n = double(n_);
  // sample covariance of total gradients: C[a][b] = cov(<g_a, g_b>) summed
  // over coordinates
  std::vector<double> C(size_t(H_) * H_, 0.0);
  for (int a = 0; a < H_; a++)
    for (int b = 0; b < H_; b++) {
      double mdot = 0;
      for (int64_t i = 0; i < dim_; i++)
        mdot += (sum_[size_t(a)][size_t(i)] / n) * (sum_[size_t(b)][size_t(i)] / n);
      C[size_t(a) * H_ + b] = (gram_[size_t(a) * H_ + b] - n * mdot) / (n - 1.0);
    }
  Report rep;
  rep.H = H_;
  rep.batches = int(n_);
  double var_sum = 0, max_var = 0, off_sum = 0;
  for (int h = 0; h < H_; h++) {
    double v = C[size_t(h) * H_ + h];
    rep.var_h.push_back(v);
    var_sum += v;
    max_var = std::max(max_var, v);
  }
  double all_sum = 0;
  for (double c : C) all_sum += c;
  off_sum = all_sum - var_sum;
  rep.var_avg = all_sum / (double(H_) * H_);
  rep.sigma2 = var_sum / H_;
  rep.rho = (H_ > 1 && rep.sigma2 > 0)
                ? off_sum / (double(H_) * (H_ - 1) * rep.sigma2)
                : 0.0;
  rep.bound = rep.sigma2 * (rep.rho + (1.0 - rep.rho) / H_);
  rep.holds = rep.var_avg <= max_var + 1e-12;
  return rep;
}

GradVarStats::Report analyze_gradient_variance(RunState& rs, int num_batches) {
  if (num_batches < 32)
    throw std::runtime_error("gradient variance probe: need at least 32 batches");
  if (rs.data.transitions() == 0)
    throw std::runtime_error("gradient variance probe: empty dataset");
  const RunConfig& c = rs.cfg;
  const int B = c.batch, H = c.H;
  const int obs = rs.flow.obs_dim, act = rs.flow.act_dim;

  auto cparams = rs.critic.params();
  int64_t dim = 0;
  for (Param<float>* p : cparams) dim += p->size();
  GradVarStats stats(H, dim);

  std::vector<int> all(static_cast<size_t>(H));
  for (int h = 1; h <= H; h++) all[size_t(h - 1)] = h;
  RngStream rng(derive_seed(c.seed, kStreamProbe));

  for (int batch = 0; batch < num_batches; batch++) {
    std::vector<Window> ws;
    ws.reserve(size_t(B));
    for (int b = 0; b < B; b++) ws.push_back(sample_chunked_window(rs.data, H, rng));
    std::vector<float> states(size_t(B) * obs), chunks(size_t(B) * H * act);
    std::vector<float> rewards(size_t(B) * H);
    std::vector<uint8_t> ok(size_t(B) * H);
    std::vector<float> bs(size_t(B) * H * obs);
    for (int b = 0; b < B; b++) {
      const Window& w = ws[size_t(b)];
      std::copy(w.states.begin(), w.states.begin() + obs, states.begin() + size_t(b) * obs);
      std::copy(w.actions.begin(), w.actions.end(), chunks.begin() + size_t(b) * H * act);
      std::copy(w.rewards.begin(), w.rewards.end(), rewards.begin() + size_t(b) * H);
      std::copy(w.bootstrap_ok.begin(), w.bootstrap_ok.end(), ok.begin() + size_t(b) * H);
      std::copy(w.states.begin() + obs, w.states.end(), bs.begin() + size_t(b) * H * obs);
    }
    // multi-horizon targets regardless of mode: the probe studies the
    // averaged objective itself
    std::vector<double> boot =
        extraction_values(rs.critic, rs.flow, bs, B * H, c.N, all, rng);
    std::vector<float> g = build_targets<float>(rewards, ok, boot, B, H, c.gamma);

    std::vector<std::vector<double>> grads(
        size_t(H), std::vector<double>(static_cast<size_t>(dim), 0.0));
    for (int h = 1; h <= H; h++) {
      for (Param<float>* p : cparams) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
      std::vector<float> tgt(static_cast<size_t>(B));
      for (int b = 0; b < B; b++) tgt[size_t(b)] = g[size_t(b) * H + (h - 1)];
      Tape<float> t;
      int loss = td_loss(t, rs.critic, t.input({B, obs}, states),
                         t.input({B, H * act}, chunks), tgt, {h});
      t.backward(loss);
      int64_t at = 0;
      for (Param<float>* p : cparams)
        for (float gv : p->grad) grads[size_t(h - 1)][size_t(at++)] = double(gv);
    }
    for (Param<float>* p : cparams) std::fill(p->grad.begin(), p->grad.end(), 0.0f);
    stats.add(grads);
  }
  return stats.finalize();
}

std::string grad_variance_json(const GradVarStats::Report& rep,
                               const std::string& config_hash_hex) {
  nlohmann::json j;
  j["config_hash"] = config_hash_hex;
  j["H"] = rep.H;
  j["batches"] = rep.batches;
  j["var_h"] = rep.var_h;
  j["var_avg"] = rep.var_avg;
  j["sigma2"] = rep.sigma2;
  j["rho"] = rep.rho;
  j["bound"] = rep.bound;
  j["holds"] = rep.holds;
  return j.dump(2) + "\n";
}

}  // namespace acsac
