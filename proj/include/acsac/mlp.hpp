#pragma once
// Plain relu MLP on the tape; used for the flow velocity field and as a
// generic probe network in tests.
#include "acsac/rng.hpp"
#include "acsac/tensor.hpp"

#include <string>
#include <vector>

namespace acsac {

template <typename S>
struct Mlp {
  int in_dim = 0, out_dim = 0;
  std::vector<Param<S>> weights, biases;  // layer i: [d_i, d_{i+1}], [d_{i+1}]

  Mlp() = default;
  Mlp(const std::string& prefix, int in, const std::vector<int>& hidden, int out, RngStream& rng) {
    in_dim = in;
    out_dim = out;
    std::vector<int> dims;
    dims.push_back(in);
    for (int h : hidden) dims.push_back(h);
    dims.push_back(out);
    for (size_t l = 0; l + 1 < dims.size(); l++) {
      weights.emplace_back(prefix + ".w" + std::to_string(l), Shape{dims[l], dims[l + 1]});
      biases.emplace_back(prefix + ".b" + std::to_string(l), Shape{dims[l + 1]});
      bool last = (l + 2 == dims.size());
      // He init for relu layers, small final layer so initial outputs sit near 0
      double sd = last ? 0.01 : std::sqrt(2.0 / double(dims[l]));
      for (S& w : weights.back().value) w = S(sd * rng.gaussian());
    }
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> ps;
    for (size_t l = 0; l < weights.size(); l++) {
      ps.push_back(&weights[l]);
      ps.push_back(&biases[l]);
    }
    return ps;
  }

  // x: [B, in_dim] -> [B, out_dim]
  int forward(Tape<S>& t, int x, bool frozen = false) {
    int h = x;
    for (size_t l = 0; l < weights.size(); l++) {
      h = t.add(t.matmul(h, t.leaf(weights[l], frozen)), t.leaf(biases[l], frozen));
      if (l + 1 < weights.size()) h = t.relu(h);
    }
    return h;
  }
};

}  // namespace acsac
