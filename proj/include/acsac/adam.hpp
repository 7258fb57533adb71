#pragma once
// Adam with bias correction over a fixed list of parameter blocks. The
// moment estimates live in named Param blocks so checkpoints can persist
// them; a resumed run then continues exactly like an uninterrupted one.
#include "acsac/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace acsac {

template <typename S>
class Adam {
 public:
  Adam() = default;
  Adam(std::string name, std::vector<Param<S>*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Param<S>* p : params_) {
      m_.emplace_back(name + ".m." + p->name, p->shape);
      v_.emplace_back(name + ".v." + p->name, p->shape);
    }
  }
  Adam(std::vector<Param<S>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : Adam("opt", std::move(params), lr, beta1, beta2, eps) {}

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }

  // Moment blocks in (all m, then all v) order, for checkpointing.
  void append_state_blocks(std::vector<Param<S>*>& out) {
    for (Param<S>& p : m_) out.push_back(&p);
    for (Param<S>& p : v_) out.push_back(&p);
  }

  // One update from the accumulated grads; grads are zeroed afterwards.
  void step() {
    t_++;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t k = 0; k < params_.size(); k++) {
      Param<S>& p = *params_[k];
      S* m = m_[k].value.data();
      S* v = v_[k].value.data();
      S* g = p.grad.data();
      S* w = p.value.data();
      for (size_t i = 0; i < p.value.size(); i++) {
        if (!std::isfinite(double(g[i])))
          throw std::runtime_error("adam: non-finite gradient in block '" + p.name + "'");
        m[i] = S(beta1_) * m[i] + S(1.0 - beta1_) * g[i];
        v[i] = S(beta2_) * v[i] + S(1.0 - beta2_) * g[i] * g[i];
        double mhat = double(m[i]) / bc1;
        double vhat = double(v[i]) / bc2;
        w[i] -= S(lr_ * mhat / (std::sqrt(vhat) + eps_));
        g[i] = S(0);
      }
    }
  }

  void zero_grad() {
    for (Param<S>* p : params_) std::fill(p->grad.begin(), p->grad.end(), S(0));
  }

 private:
  std::vector<Param<S>*> params_;
  double lr_ = 3e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  int64_t t_ = 0;
  std::vector<Param<S>> m_, v_;
};

}  // namespace acsac
