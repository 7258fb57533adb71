#include "acsac/operator_lab.hpp"
#include "acsac/rng.hpp"

#include "doctest.h"

#include <cmath>

using namespace acsac;

TEST_SUITE_BEGIN("lab");

namespace {

ProposalTable uniform_prop(int S, int A, int H) {
  ProposalTable t;
  t.S = S;
  t.A = A;
  t.H = H;
  size_t width = 1;
  for (int h = 0; h < H; h++) width *= size_t(A);
  std::vector<double> row(width, 1.0 / double(width));
  double sum = 0;
  for (double p : row) sum += p;
  row[0] += 1.0 - sum;
  t.proposal.assign(S, row);
  t.behavior.assign(S, row);
  return t;
}

}  // namespace

TEST_CASE("chunk rollout sums discounted rewards and lands correctly") {
  TabularMDP chain = TabularMDP::chain(3, 0.99);
  int acts[3] = {0, 0, 0};
  CHECK(chunk_return(chain, 0, acts, 3) == doctest::Approx(-2.9701).epsilon(1e-14));
  RolloutOut ro = chunk_rollout(chain, 0, acts, 3);
  CHECK(ro.s_end == 3);
  // rolling past the absorbing goal adds nothing
  RolloutOut past = chunk_rollout(chain, 2, acts, 3);
  CHECK(past.g == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(past.s_end == 3);
  int stay[1] = {1};
  CHECK(chunk_return(chain, 1, stay, 1) == -1.0);
}

TEST_CASE("prefix indexing is big-endian in the action radix") {
  PrefixQTable Q(2, 3, 3);
  // chunk (2,1,0) has full index 2*9 + 1*3 + 0 = 21; its length-2 prefix
  // (2,1) must be index 21 / 3 = 7
  int acts[3];
  decode_chunk(21, 3, 3, acts);
  CHECK(acts[0] == 2);
  CHECK(acts[1] == 1);
  CHECK(acts[2] == 0);
  Q.at(2, 1, 21 / Q.pow_a(1)) = 5.0;
  CHECK(Q.at(2, 1, 7) == 5.0);
}

TEST_CASE("expected prefix max reduces to order statistics") {
  TabularMDP m;
  m.S = 1;
  m.A = 2;
  m.gamma = 0.5;
  m.nxt = {0, 0};
  m.rew = {0, 0};
  m.term = {0};
  ProposalTable prop = uniform_prop(1, 2, 1);
  PrefixQTable Q(1, 2, 1);
  Q.at(1, 0, 1) = 1.0;
  // E[max of two draws from {0,1} uniform] = 1 - (1/2)^2 = 0.75
  CHECK(apply_BNH(m, prop, 2, Q).at(1, 0, 0) ==
        doctest::Approx(0.5 * 0.75).epsilon(1e-15));
  // N = 1 is the plain expectation
  CHECK(apply_BNH(m, prop, 1, Q).at(1, 0, 0) ==
        doctest::Approx(0.5 * 0.5).epsilon(1e-15));
  // zero Q and zero rewards stay exactly zero
  PrefixQTable z(1, 2, 1);
  CHECK(apply_BNH(m, prop, 3, z).sup_abs() == 0.0);
}

TEST_CASE("empty proposal support is rejected") {
  TabularMDP m;
  m.S = 1;
  m.A = 2;
  m.gamma = 0.5;
  m.nxt = {0, 0};
  m.rew = {0, 0};
  m.term = {0};
  ProposalTable prop = uniform_prop(1, 2, 1);
  prop.proposal[0] = {0.0, 0.0};
  PrefixQTable Q(1, 2, 1);
  CHECK_THROWS_WITH_AS(apply_BNH(m, prop, 2, Q),
                       doctest::Contains("empty proposal support"),
                       std::runtime_error);
}

TEST_CASE("fixed point on the chain hits the geometric series value") {
  TabularMDP chain = TabularMDP::chain(2, 0.99);
  FixedPointOut fp = fixed_point(chain, uniform_prop(3, 2, 3), 2, 1e-12);
  CHECK(fp.Q.at(2, 0, 0) == doctest::Approx(-1.99).epsilon(1e-9));
  CHECK(fp.iterations > 1);
  // terminal state rows stay at zero
  for (int h = 1; h <= 3; h++)
    for (int c = 0; c < fp.Q.pow_a(h); c++) CHECK(fp.Q.at(h, 2, c) == 0.0);
  // every recorded ratio in the meaningful regime respects gamma
  for (size_t i = 0; i + 20 < fp.ratios.size(); i++)
    CHECK(fp.ratios[i] <= 0.99 + 1e-9);
}

TEST_CASE("one backup application is a gamma contraction") {
  RngStream rng(17);
  TabularMDP lab = TabularMDP::random(6, 3, 0.9, rng);
  ProposalTable prop = ProposalTable::random(6, 3, 2, rng);
  for (int it = 0; it < 50; it++) {
    PrefixQTable q1(6, 3, 2), q2(6, 3, 2);
    for (auto& lvl : q1.q)
      for (double& v : lvl) v = rng.uniform(-10, 10);
    for (auto& lvl : q2.q)
      for (double& v : lvl) v = rng.uniform(-10, 10);
    double denom = q1.sup_diff(q2);
    double num = apply_BNH(lab, prop, 2, q1).sup_diff(apply_BNH(lab, prop, 2, q2));
    CHECK(num <= 0.9 * denom + 1e-9);
  }
}

TEST_CASE("extraction policy evaluation reproduces the fixed point") {
  RngStream rng(23);
  TabularMDP lab = TabularMDP::random(6, 3, 0.9, rng);
  ProposalTable prop = ProposalTable::random(6, 3, 2, rng);
  FixedPointOut fp = fixed_point(lab, prop, 2, 1e-11);
  PrefixQTable qpi = eval_extraction_policy(lab, prop, 2, fp.Q, 1e-12);
  CHECK(qpi.sup_diff(fp.Q) < 1e-8);
}

TEST_CASE("zero-reward mdp evaluates to exactly zero") {
  TabularMDP m;
  m.S = 2;
  m.A = 2;
  m.gamma = 0.9;
  m.nxt = {1, 0, 0, 1};
  m.rew = {0, 0, 0, 0};
  m.term = {0, 0};
  ProposalTable prop = uniform_prop(2, 2, 2);
  FixedPointOut fp = fixed_point(m, prop, 2, 1e-13);
  CHECK(fp.Q.sup_abs() < 1e-12);
  PrefixQTable qpi = eval_extraction_policy(m, prop, 2, fp.Q, 1e-13);
  CHECK(qpi.sup_abs() < 1e-12);
}

TEST_CASE("tuple enumeration budget is enforced") {
  RngStream rng(29);
  TabularMDP lab = TabularMDP::random(4, 3, 0.9, rng);
  ProposalTable prop = uniform_prop(4, 3, 3);  // 27 atoms per state
  PrefixQTable Q(4, 3, 3);
  CHECK_THROWS_WITH_AS(eval_extraction_policy(lab, prop, 4, Q, 1e-10, 1000),
                       doctest::Contains("smaller lab instance"), std::runtime_error);
}

TEST_CASE("tv of delta pair and random marginalization sweep") {
  std::vector<double> mu = {1, 0, 0, 0}, nu = {0, 1, 0, 0};
  TvOut tv = tv_checks(mu, nu, 2, 2);
  CHECK(tv.full == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(tv.marginal[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(tv.marginal[1] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(tv_checks(mu, mu, 2, 2).full == 0.0);

  RngStream rng(31);
  for (int it = 0; it < 200; it++) {
    std::vector<double> a(8), b(8);
    double sa = 0, sb = 0;
    for (double& v : a) sa += v = -std::log(1.0 - rng.uniform());
    for (double& v : b) sb += v = -std::log(1.0 - rng.uniform());
    for (double& v : a) v /= sa;
    for (double& v : b) v /= sb;
    double ca = 0, cb = 0;
    for (double v : a) ca += v;
    for (double v : b) cb += v;
    a[0] += 1.0 - ca;
    b[0] += 1.0 - cb;
    TvOut t = tv_checks(a, b, 2, 3);
    for (double m : t.marginal) CHECK(m <= t.full + 1e-12);
  }
  std::vector<double> bad = {0.5, 0.2, 0, 0};
  CHECK_THROWS_WITH_AS(tv_checks(bad, mu, 2, 2), doctest::Contains("sum to 1"),
                       std::runtime_error);
}

TEST_CASE("best-of-n selection law and kl bound") {
  KlOut k = kl_best_of_n({0.5, 0.5}, {0.0, 1.0}, 2);
  CHECK(k.selected[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(k.selected[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(k.kl == doctest::Approx(0.1308122) .epsilon(1e-6));
  CHECK(k.bound == doctest::Approx(std::log(2.0) - 0.5).epsilon(1e-15));
  CHECK(k.kl <= k.bound);

  KlOut k1 = kl_best_of_n({0.3, 0.7}, {2.0, 1.0}, 1);
  CHECK(k1.kl == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(k1.bound == 0.0);

  // ties fall to the smaller index, matching a first-maximum scan
  KlOut kt = kl_best_of_n({0.5, 0.5}, {1.0, 1.0}, 2);
  CHECK(kt.selected[0] == doctest::Approx(0.75).epsilon(1e-15));

  RngStream rng(37);
  for (int it = 0; it < 100; it++) {
    std::vector<double> p(6), qv(6);
    double sum = 0;
    for (double& v : p) sum += v = -std::log(1.0 - rng.uniform());
    for (double& v : p) v /= sum;
    double c = 0;
    for (double v : p) c += v;
    p[0] += 1.0 - c;
    for (double& v : qv) v = rng.gaussian();
    for (int n : {2, 4, 8}) {
      KlOut kr = kl_best_of_n(p, qv, n);
      double mass = 0;
      for (double sv : kr.selected) mass += sv;
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(kr.kl <= kr.bound + 1e-9);
    }
  }
}

TEST_CASE("variance bound formula and range guard") {
  CHECK(variance_bound_check(1.0, 0.0, 2) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(variance_bound_check(3.0, 1.0, 9) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(variance_bound_check(1.0, 0.0, 1000) <= 1.0 / 999);
  CHECK_THROWS_WITH_AS(variance_bound_check(1.0, -0.9, 5), doctest::Contains("rho"),
                       std::runtime_error);
}

TEST_CASE("theory suite passes every check and serializes") {
  TheoryReport rep = run_theory_suite(7);
  CHECK(rep.checks.size() >= 18);
  for (const TheoryCheck& c : rep.checks) {
    CAPTURE(c.name);
    CAPTURE(c.measured);
    CAPTURE(c.bound);
    CHECK(c.pass);
  }
  CHECK(rep.all_pass());
  std::string js = rep.to_json();
  CHECK(js.find("\"all_pass\": true") != std::string::npos);
  CHECK(js.find("mc_target_unbiased") != std::string::npos);
}

TEST_SUITE_END();
