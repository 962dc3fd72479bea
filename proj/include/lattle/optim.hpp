#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lattle/errors.hpp"
#include "lattle/tensor.hpp"

namespace lattle {

// AdamW with decoupled weight decay and bias correction. Frozen parameters
// are skipped entirely: their data stays bit-identical and no moment state
// is advanced for them.
template <class S>
class AdamW {
 public:
  struct Config {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  AdamW(std::vector<Tensor<S>> params, Config cfg) : params_(std::move(params)), cfg_(cfg) {
    if (!(cfg_.lr >= 0) || !(cfg_.eps > 0) || cfg_.beta1 < 0 || cfg_.beta1 >= 1 ||
        cfg_.beta2 < 0 || cfg_.beta2 >= 1 || cfg_.weight_decay < 0)
      throw ConfigError("adamw: invalid hyperparameters");
    state_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      state_[i].m.assign(params_[i].numel(), S(0));
      state_[i].v.assign(params_[i].numel(), S(0));
    }
  }

  void set_lr(double lr) {
    if (!(lr >= 0)) throw ConfigError("adamw: negative learning rate");
    cfg_.lr = lr;
  }
  double lr() const { return cfg_.lr; }
  std::int64_t step_count() const { return t_; }
  const std::vector<Tensor<S>>& params() const { return params_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor<S>& p = params_[i];
      if (p.frozen()) continue;
      if (!p.has_grad())
        throw TrainingError("adamw: parameter '" +
                            (p.name().empty() ? "#" + std::to_string(i) : p.name()) +
                            "' has no gradient");
      S* w = p.data();
      const S* g = p.grad();
      S* m = state_[i].m.data();
      S* v = state_[i].v.data();
      const std::size_t n = p.numel();
      for (std::size_t j = 0; j < n; ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
        const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
        m[j] = static_cast<S>(mj);
        v[j] = static_cast<S>(vj);
        const double mhat = mj / bc1;
        const double vhat = vj / bc2;
        const double upd = mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[j];
        w[j] = static_cast<S>(w[j] - cfg_.lr * upd);
      }
    }
  }

  // Clears gradients on every tracked parameter, frozen ones included.
  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  struct State {
    std::vector<S> m, v;
  };
  std::vector<Tensor<S>> params_;
  std::vector<State> state_;
  Config cfg_;
  std::int64_t t_ = 0;
};

}  // namespace lattle
