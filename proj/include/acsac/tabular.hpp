#pragma once
// Small deterministic MDPs for the exact operator lab. Terminal states are
// absorbing with reward 0 for every action.
#include "acsac/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace acsac {

struct TabularMDP {
  int S = 0, A = 0;
  double gamma = 0.99;
  std::vector<int> nxt;        // S*A
  std::vector<double> rew;     // S*A
  std::vector<uint8_t> term;   // S

  TabularMDP() = default;
  TabularMDP(int s, int a, double g) : S(s), A(a), gamma(g) {
    nxt.assign(size_t(S) * A, 0);
    rew.assign(size_t(S) * A, 0.0);
    term.assign(size_t(S), 0);
  }

  int step(int s, int a) const { return nxt[size_t(s) * A + a]; }
  double r(int s, int a) const { return rew[size_t(s) * A + a]; }

  // Rewrite terminal rows as absorbing self-loops with zero reward.
  void enforce_absorbing() {
    for (int s = 0; s < S; s++) {
      if (!term[s]) continue;
      for (int a = 0; a < A; a++) {
        nxt[size_t(s) * A + a] = s;
        rew[size_t(s) * A + a] = 0.0;
      }
    }
  }

  void validate() const {
    for (int s = 0; s < S; s++)
      for (int a = 0; a < A; a++) {
        int n = step(s, a);
        if (n < 0 || n >= S) throw std::runtime_error("tabular mdp: bad transition");
        if (term[s] && (n != s || r(s, a) != 0.0))
          throw std::runtime_error("tabular mdp: terminal state not absorbing with reward 0");
      }
  }

  // k-step chain to an absorbing goal; reward -1 everywhere before the goal.
  // Action 0 advances, all other actions stay put.
  static TabularMDP chain(int k, double g) {
    TabularMDP m(k + 1, 2, g);
    for (int s = 0; s < k; s++) {
      m.nxt[size_t(s) * 2 + 0] = s + 1;
      m.rew[size_t(s) * 2 + 0] = -1.0;
      m.nxt[size_t(s) * 2 + 1] = s;
      m.rew[size_t(s) * 2 + 1] = -1.0;
    }
    m.term[k] = 1;
    m.enforce_absorbing();
    m.validate();
    return m;
  }

  static TabularMDP random(int S, int A, double g, RngStream& rng, double term_prob = 0.15) {
    TabularMDP m(S, A, g);
    for (int s = 0; s < S; s++) {
      m.term[s] = rng.uniform() < term_prob ? 1 : 0;
      for (int a = 0; a < A; a++) {
        m.nxt[size_t(s) * A + a] = rng.uniform_int(S);
        m.rew[size_t(s) * A + a] = rng.uniform(-1.0, 1.0);
      }
    }
    m.term[0] = 0;  // keep at least one regular state
    m.enforce_absorbing();
    m.validate();
    return m;
  }
};

}  // namespace acsac
