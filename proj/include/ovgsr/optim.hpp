#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ovgsr/errors.hpp"
#include "ovgsr/tape.hpp"

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
//   x <- x - lr (m_hat / (sqrt(v_hat) + eps) + wd * x)
// Decay multiplies the raw value, never the adaptive update, so a
// zero-gradient parameter shrinks by exactly lr*wd*x per step.
namespace ovgsr {

struct AdamWOptions {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Parameter<T>*> params, const AdamWOptions& opt)
      : params_(std::move(params)), opt_(opt) {
    if (opt_.lr <= 0) throw InvalidConfig("adamw: lr must be > 0");
    if (opt_.beta1 < 0 || opt_.beta1 >= 1)
      throw InvalidConfig("adamw: beta1 must be in [0, 1)");
    if (opt_.beta2 < 0 || opt_.beta2 >= 1)
      throw InvalidConfig("adamw: beta2 must be in [0, 1)");
    if (opt_.weight_decay < 0)
      throw InvalidConfig("adamw: weight decay must be >= 0");
    if (opt_.eps <= 0) throw InvalidConfig("adamw: eps must be > 0");
  }

  void zero_grad() {
    for (auto* p : params_) p->zero_grad();
  }

  void step() {
    ++t_;
    const T b1 = static_cast<T>(opt_.beta1);
    const T b2 = static_cast<T>(opt_.beta2);
    const T bc1 = T(1) - static_cast<T>(std::pow(opt_.beta1, t_));
    const T bc2 = T(1) - static_cast<T>(std::pow(opt_.beta2, t_));
    const T lr = static_cast<T>(opt_.lr);
    const T wd = static_cast<T>(opt_.weight_decay);
    const T eps = static_cast<T>(opt_.eps);
    for (auto* p : params_) {
      if (!p->adam_m.defined()) {
        p->adam_m = Tensor<T>(p->value.shape());
        p->adam_v = Tensor<T>(p->value.shape());
      }
      T* x = p->value.data();
      const T* g = p->grad.data();
      T* m = p->adam_m.data();
      T* v = p->adam_v.data();
      const std::int64_t n = p->value.numel();
      for (std::int64_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        x[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * x[i]);
      }
    }
  }

  std::int64_t steps_taken() const { return t_; }
  const AdamWOptions& options() const { return opt_; }

 private:
  std::vector<Parameter<T>*> params_;
  AdamWOptions opt_;
  std::int64_t t_ = 0;
};

}  // namespace ovgsr
