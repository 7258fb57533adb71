#include "acsac/analyze.hpp"

#include "doctest.h"

#include <cmath>
#include <vector>

using namespace acsac;

TEST_SUITE_BEGIN("analyze");

namespace {

DecisionLog dec(int t, int h, double q = 0, double g = 0, double x = 0, double y = 0) {
  DecisionLog d;
  d.t = t;
  d.h_star = h;
  d.q_hat = q;
  d.g_hat = g;
  d.x = x;
  d.y = y;
  return d;
}

}  // namespace

TEST_CASE("chunk distribution tabulates decisions by timestep") {
  std::vector<DecisionLog> ds = {dec(0, 3), dec(3, 2)};
  std::vector<ChunkDistRow> rows = chunk_distribution(ds);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].t == 0);
  CHECK(rows[0].mean_h == 3.0);
  CHECK(rows[0].count == 1);
  CHECK(rows[1].t == 3);
  CHECK(rows[1].mean_h == 2.0);
  CHECK(rows[1].count == 1);

  SUBCASE("same-timestep decisions average") {
    ds.push_back(dec(0, 1));
    ds.push_back(dec(0, 2));
    rows = chunk_distribution(ds);
    CHECK(rows[0].mean_h == doctest::Approx(2.0));
    CHECK(rows[0].count == 3);
  }
  SUBCASE("csv carries the config hash and header") {
    std::string csv = chunk_distribution_csv(rows, "deadbeef01234567");
    CHECK(csv == "# config_hash=deadbeef01234567\nt,mean_h,count\n0,3,1\n3,2,1\n");
  }
}

TEST_CASE("calibration bins are equal-frequency over realized returns") {
  // 103 points with g spread out; 10 bins -> sizes 11,11,11,10...
  std::vector<DecisionLog> ds;
  for (int i = 0; i < 103; i++) ds.push_back(dec(0, 1, /*q=*/i * 0.5, /*g=*/double(i)));
  std::vector<CalibrationBin> bins = calibration_bins(ds, 10);
  REQUIRE(bins.size() == 10);
  int total = 0;
  for (size_t i = 0; i < bins.size(); i++) {
    CHECK(bins[i].count == (i < 3 ? 11 : 10));
    total += bins[i].count;
    if (i > 0) CHECK(bins[i].lo >= bins[i - 1].hi);
    CHECK(bins[i].lo <= bins[i].mean_g);
    CHECK(bins[i].mean_g <= bins[i].hi);
  }
  CHECK(total == 103);

  SUBCASE("perfect calibration gives identical bin means") {
    for (DecisionLog& d : ds) d.q_hat = d.g_hat;
    for (const CalibrationBin& b : calibration_bins(ds, 10))
      CHECK(b.mean_q == b.mean_g);
  }
  SUBCASE("constant predictions stay flat across bins") {
    for (DecisionLog& d : ds) d.q_hat = -3.25;
    for (const CalibrationBin& b : calibration_bins(ds, 10))
      CHECK(b.mean_q == doctest::Approx(-3.25));
  }
  SUBCASE("fewer decisions than bins reduces the bin count") {
    std::vector<DecisionLog> three(ds.begin(), ds.begin() + 3);
    std::vector<CalibrationBin> small = calibration_bins(three, 10);
    REQUIRE(small.size() == 3);
    for (const CalibrationBin& b : small) CHECK(b.count == 1);
  }
  SUBCASE("no decisions gives an empty table but a well-formed csv") {
    std::vector<CalibrationBin> none = calibration_bins({}, 10);
    CHECK(none.empty());
    CHECK(calibration_csv(none, "aa") == "# config_hash=aa\nbin_low,bin_high,mean_G,mean_Q,count\n");
  }
  SUBCASE("zero bins is rejected") {
    CHECK_THROWS_AS(calibration_bins(ds, 0), std::runtime_error);
  }
}

TEST_CASE("spearman handles monotone series and ties") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0));
  CHECK(spearman({1, 2, 3, 4}, {5, 3, 2, 1}) == doctest::Approx(-1.0));
  // tie in the first series: ranks (1, 2.5, 2.5, 4) vs (1,2,3,4)
  CHECK(spearman({1, 2, 2, 3}, {10, 20, 30, 40}) ==
        doctest::Approx(4.5 / std::sqrt(22.5)).epsilon(1e-12));
  CHECK_THROWS_AS(spearman({1, 1, 1}, {1, 2, 3}), std::runtime_error);
  CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), std::runtime_error);
}

TEST_CASE("permutation test separates the regions") {
  MazeSpec env = MazeSpec::lmaze();
  REQUIRE(env.in_turn_region(2.0, 6.0));
  REQUIRE(!env.in_turn_region(7.0, 1.0));

  std::vector<DecisionLog> ds;
  SUBCASE("clear separation gives a tiny p") {
    for (int i = 0; i < 30; i++) ds.push_back(dec(i, 1, 0, 0, 2.0, 6.0));
    for (int i = 0; i < 30; i++) ds.push_back(dec(i, 5, 0, 0, 7.0, 1.0));
    PermTestOut out = turn_permutation_test(env, ds, 2000, 17);
    CHECK(out.n_turn == 30);
    CHECK(out.n_straight == 30);
    CHECK(out.mean_turn == 1.0);
    CHECK(out.mean_straight == 5.0);
    CHECK(out.statistic == 4.0);
    CHECK(out.p < 0.01);
  }
  SUBCASE("identical groups give p = 1") {
    for (int i = 0; i < 20; i++) ds.push_back(dec(i, 3, 0, 0, 2.0, 6.0));
    for (int i = 0; i < 20; i++) ds.push_back(dec(i, 3, 0, 0, 7.0, 1.0));
    PermTestOut out = turn_permutation_test(env, ds, 500, 17);
    CHECK(out.statistic == 0.0);
    CHECK(out.p == 1.0);
  }
  SUBCASE("matched mixtures stay insignificant") {
    for (int i = 0; i < 40; i++) {
      ds.push_back(dec(i, 2 + (i % 2) * 2, 0, 0, 2.0, 6.0));
      ds.push_back(dec(i, 2 + (i % 2) * 2, 0, 0, 7.0, 1.0));
    }
    PermTestOut out = turn_permutation_test(env, ds, 2000, 17);
    CHECK(out.p > 0.05);
  }
  SUBCASE("a missing group degenerates to p = 1") {
    for (int i = 0; i < 10; i++) ds.push_back(dec(i, 2, 0, 0, 7.0, 1.0));
    PermTestOut out = turn_permutation_test(env, ds, 100, 17);
    CHECK(out.n_turn == 0);
    CHECK(out.p == 1.0);
  }
}

TEST_CASE("gradient statistics recover known synthetic structure") {
  RngStream rng(5);
  const int H = 3;
  const int64_t dim = 8;
  const double s = 0.5;  // per-coordinate std; total variance = dim * s^2 = 2

  SUBCASE("independent horizons: averaging divides variance by H") {
    GradVarStats st(H, dim);
    for (int b = 0; b < 1000; b++) {
      std::vector<std::vector<double>> g(H, std::vector<double>(dim));
      for (auto& v : g)
        for (double& x : v) x = s * rng.gaussian();
      st.add(g);
    }
    GradVarStats::Report rep = st.finalize();
    REQUIRE(rep.var_h.size() == size_t(H));
    CHECK(rep.sigma2 == doctest::Approx(2.0).epsilon(0.2));
    CHECK(rep.var_avg == doctest::Approx(2.0 / H).epsilon(0.2));
    CHECK(std::abs(rep.rho) < 0.1);
    CHECK(rep.holds);
    CHECK(rep.bound == doctest::Approx(rep.sigma2 * (rep.rho + (1 - rep.rho) / H)));
  }
  SUBCASE("perfectly correlated horizons: averaging buys nothing") {
    GradVarStats st(H, dim);
    for (int b = 0; b < 400; b++) {
      std::vector<double> base(dim);
      for (double& x : base) x = s * rng.gaussian();
      st.add(std::vector<std::vector<double>>(H, base));
    }
    GradVarStats::Report rep = st.finalize();
    CHECK(rep.rho == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(rep.var_avg == doctest::Approx(rep.sigma2).epsilon(1e-9));
    CHECK(rep.holds);
  }
  SUBCASE("H=1 reduces to the plain variance") {
    GradVarStats st(1, dim);
    for (int b = 0; b < 50; b++) {
      std::vector<std::vector<double>> g(1, std::vector<double>(dim));
      for (double& x : g[0]) x = s * rng.gaussian();
      st.add(g);
    }
    GradVarStats::Report rep = st.finalize();
    CHECK(rep.var_avg == rep.var_h[0]);
    CHECK(rep.bound == rep.sigma2);
    CHECK(rep.rho == 0.0);
  }
  SUBCASE("shape mismatches and single batches are rejected") {
    GradVarStats st(H, dim);
    CHECK_THROWS_AS(st.add({{1.0}}), std::runtime_error);
    std::vector<std::vector<double>> g(H, std::vector<double>(dim, 0.0));
    st.add(g);
    CHECK_THROWS_AS(st.finalize(), std::runtime_error);
  }
}

TEST_CASE("the probe runs on a live run state and is reproducible") {
  RunConfig c;
  c.H = 3;
  c.N = 2;
  c.F = 3;
  c.batch = 4;
  c.n_layer = 1;
  c.n_head = 2;
  c.d_head = 4;
  c.flow_hidden = {16, 16};
  c.eval_episodes = 2;
  c.seed = 11;
  GenParams gp;
  gp.episodes = 10;
  Dataset data = generate_offline_data(MazeSpec::lmaze(), gp, 123);
  RunState rs = make_run_state(c, std::move(data));

  GradVarStats::Report a = analyze_gradient_variance(rs, 32);
  CHECK(a.batches == 32);
  REQUIRE(a.var_h.size() == 3);
  for (double v : a.var_h) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  CHECK(a.holds);

  GradVarStats::Report b = analyze_gradient_variance(rs, 32);
  CHECK(a.var_avg == b.var_avg);
  CHECK(a.rho == b.rho);

  // probing leaves parameters and gradients untouched
  for (Param<float>* p : rs.critic.params())
    for (float gv : p->grad) CHECK(gv == 0.0f);

  CHECK_THROWS_AS(analyze_gradient_variance(rs, 31), std::runtime_error);

  std::string js = grad_variance_json(a, "0011223344556677");
  CHECK(js.find("\"config_hash\": \"0011223344556677\"") != std::string::npos);
  CHECK(js.find("\"holds\": true") != std::string::npos);
  CHECK(js.find("\"var_h\"") != std::string::npos);
}

TEST_SUITE_END();
