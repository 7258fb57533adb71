#include "acsac/adam.hpp"
#include "acsac/mlp.hpp"
#include "acsac/rng.hpp"
#include "acsac/tensor.hpp"

#include "doctest.h"
#include "gradcheck.hpp"

#include <cstring>

using namespace acsac;

TEST_SUITE_BEGIN("ndgrad");

TEST_CASE("matmul forward") {
  Tape<double> t;
  int a = t.input({2, 2}, std::vector<double>{1, 2, 3, 4});
  int b = t.input({2, 1}, std::vector<double>{5, 6});
  int c = t.matmul(a, b);
  CHECK(t.val(c)[0] == doctest::Approx(17).epsilon(1e-12));
  CHECK(t.val(c)[1] == doctest::Approx(39).epsilon(1e-12));
}

TEST_CASE("masked softmax weights") {
  Tape<double> t;
  int x = t.input({3}, std::vector<double>{1, 2, -50});
  int y = t.masked_softmax(x, {1, 1, 0}, {3});
  CHECK(t.val(y)[0] == doctest::Approx(0.26894142).epsilon(1e-4));
  CHECK(t.val(y)[1] == doctest::Approx(0.73105858).epsilon(1e-4));
  CHECK(t.val(y)[2] == 0.0);  // exactly zero, not merely tiny
  double s = t.val(y)[0] + t.val(y)[1];
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("masked softmax rejects fully masked row") {
  Tape<double> t;
  int x = t.input({2, 2}, std::vector<double>{1, 2, 3, 4});
  CHECK_THROWS(t.masked_softmax(x, {1, 1, 0, 0}, {2, 2}));
}

TEST_CASE("layer norm of constant row is zero before scale/shift") {
  Tape<double> t;
  Param<double> g("g", {4}), b("b", {4});
  std::fill(g.value.begin(), g.value.end(), 1.0);
  int x = t.input({4}, std::vector<double>{5, 5, 5, 5});
  int y = t.layer_norm(x, t.param(g), t.param(b));
  for (int i = 0; i < 4; i++) CHECK(std::abs(t.val(y)[i]) < 1e-12);
}

TEST_CASE("sum of x*x gradient") {
  Param<double> p("x", {3});
  p.value = {1, 2, 3};
  Tape<double> t;
  int x = t.param(p);
  int loss = t.sum(t.mul(x, x));
  CHECK(t.val(loss)[0] == doctest::Approx(14.0));
  t.backward(loss);
  CHECK(p.grad[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(p.grad[1] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(p.grad[2] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("loss independent of a parameter leaves its grad zero") {
  Param<double> used("u", {2}), unused("n", {2});
  used.value = {1, 2};
  unused.value = {3, 4};
  Tape<double> t;
  int x = t.param(used);
  t.param(unused);
  int loss = t.sum(t.mul(x, x));
  t.backward(loss);
  CHECK(unused.grad[0] == 0.0);
  CHECK(unused.grad[1] == 0.0);
  CHECK(used.grad[0] != 0.0);
}

TEST_CASE("backward twice without a fresh forward throws") {
  Param<double> p("x", {2});
  p.value = {1, 2};
  Tape<double> t;
  int loss = t.sum(t.param(p));
  t.backward(loss);
  CHECK_THROWS(t.backward(loss));
}

TEST_CASE("shape mismatch names the op") {
  Tape<double> t;
  int a = t.input({2, 3}, std::vector<double>(6, 1.0));
  int b = t.input({2, 3}, std::vector<double>(6, 1.0));
  try {
    t.matmul(a, b);
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
}

TEST_CASE("broadcast add accumulates bias grad over leading dims") {
  Param<double> bias("b", {3});
  bias.value = {0.5, -0.5, 1.0};
  Tape<double> t;
  int x = t.input({2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  int y = t.add(x, t.param(bias));
  CHECK(t.val(y)[0] == doctest::Approx(1.5));
  CHECK(t.val(y)[5] == doctest::Approx(7.0));
  t.backward(t.sum(y));
  for (int j = 0; j < 3; j++) CHECK(bias.grad[j] == doctest::Approx(2.0));  // two rows
}

TEST_CASE("batched matmul with transpose flags matches finite differences") {
  RngStream rng(11);
  Param<double> q("q", {2, 3, 4}), k("k", {2, 3, 4});
  for (auto& v : q.value) v = rng.uniform(-1, 1);
  for (auto& v : k.value) v = rng.uniform(-1, 1);
  auto loss_fn = [&](bool backward) {
    Tape<double> t(backward);
    int qi = backward ? t.param(q) : t.input(q.shape, q.value);
    int ki = backward ? t.param(k) : t.input(k.shape, k.value);
    int s = t.matmul(qi, ki, false, true);    // [2,3,3]
    int o = t.matmul(s, ki);                  // [2,3,4]
    int l = t.sum(t.mul(o, o));
    double v = t.val(l)[0];
    if (backward) t.backward(l);
    return v;
  };
  loss_fn(true);
  double step = 1e-6;
  for (Param<double>* p : {&q, &k}) {
    for (size_t j = 0; j < p->value.size(); j += 5) {
      double keep = p->value[j];
      p->value[j] = keep + step;
      double lp = loss_fn(false);
      p->value[j] = keep - step;
      double lm = loss_fn(false);
      p->value[j] = keep;
      double fd = (lp - lm) / (2 * step);
      CHECK(gradcheck::rel_err(p->grad[j], fd) < 1e-4);
    }
    std::fill(p->grad.begin(), p->grad.end(), 0.0);
  }
}

TEST_CASE("random networks match central finite differences") {
  auto st = gradcheck::run_gradcheck(40, 123);
  CHECK(st.failures == 0);
  CHECK(st.nets == 40);
  CHECK(st.max_rel < 1e-4);
}

TEST_CASE("adam first step moves by about lr against the gradient sign") {
  Param<double> p("w", {3});
  p.value = {1.0, -2.0, 0.5};
  p.grad = {0.3, -0.7, 2.0};
  double lr = 3e-4;
  Adam<double> opt({&p}, lr);
  opt.step();
  CHECK(p.value[0] == doctest::Approx(1.0 - lr).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-2.0 + lr).epsilon(1e-6));
  CHECK(p.value[2] == doctest::Approx(0.5 - lr).epsilon(1e-6));
  CHECK(p.grad[0] == 0.0);  // consumed
}

TEST_CASE("adam two steps match a hand-rolled reference") {
  Param<double> p("w", {1});
  p.value = {0.2};
  double lr = 1e-2, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Adam<double> opt({&p}, lr, b1, b2, eps);
  double w = 0.2, m = 0, v = 0;
  std::vector<double> grads = {0.4, -0.1};
  for (int t = 1; t <= 2; t++) {
    double g = grads[t - 1];
    p.grad[0] = g;
    opt.step();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mhat = m / (1 - std::pow(b1, t));
    double vhat = v / (1 - std::pow(b2, t));
    w -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p.value[0] == doctest::Approx(w).epsilon(1e-14));
  }
}

TEST_CASE("adam rejects non-finite gradients naming the block") {
  Param<double> p("blockname", {1});
  p.grad[0] = std::nan("");
  Adam<double> opt({&p}, 1e-3);
  try {
    opt.step();
    CHECK(false);
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("blockname") != std::string::npos);
  }
}

TEST_CASE("training loop is bit-deterministic under a fixed seed") {
  auto run = [](uint64_t seed) {
    RngStream init(seed), data(derive_seed(seed, 1));
    Mlp<float> net("n", 4, {16, 16}, 2, init);
    Adam<float> opt(net.params(), 1e-3);
    Tape<float> tape;
    for (int step = 0; step < 30; step++) {
      std::vector<float> x(8 * 4), y(8 * 2);
      for (auto& v : x) v = float(data.uniform(-1, 1));
      for (auto& v : y) v = float(data.uniform(-1, 1));
      int xi = tape.input({8, 4}, x);
      int out = net.forward(tape, xi);
      int loss = tape.scale(tape.squared_error_sum(out, tape.input({8, 2}, y)), 1.0 / 8);
      tape.backward(loss);
      opt.step();
    }
    std::vector<float> all;
    for (Param<float>* p : net.params()) all.insert(all.end(), p->value.begin(), p->value.end());
    return all;
  };
  auto a = run(7), b = run(7);
  REQUIRE(a.size() == b.size());
  CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_SUITE_END();
