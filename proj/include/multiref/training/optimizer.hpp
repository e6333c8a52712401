#pragma once

#include <cmath>
#include <iostream>

#include "multiref/ad/graph.hpp"

namespace multiref {

/// Adam with elementwise gradient clipping. Non-finite gradients skip the
/// step (with a warning) instead of corrupting the parameters.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(ad::ParameterStore& params, double clip_lo = -1.0,
                         double clip_hi = 1.0)
      : params_(&params), clip_lo_(clip_lo), clip_hi_(clip_hi) {}

  /// Returns false when the step was skipped because of non-finite gradients.
  bool step(double lr, std::ostream* warnings = nullptr) {
    for (const auto& p : *params_)
      if (!p->grad.allFinite()) {
        if (warnings)
          *warnings << "warning: non-finite gradient in " << p->name
                    << ", skipping step\n";
        params_->zero_grad();
        return false;
      }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, double(t_));
    double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (const auto& p : *params_) {
      ad::Matrix g = p->grad.cwiseMax(clip_lo_).cwiseMin(clip_hi_);
      p->adam_m = beta1_ * p->adam_m + (1.0 - beta1_) * g;
      p->adam_v = beta2_ * p->adam_v + (1.0 - beta2_) * g.cwiseProduct(g);
      ad::Matrix m_hat = p->adam_m / bc1;
      ad::Matrix v_hat = p->adam_v / bc2;
      p->value -= lr * m_hat.cwiseQuotient(
                           (v_hat.cwiseSqrt().array() + eps_).matrix());
      p->grad.setZero();
    }
    return true;
  }

  int64_t t() const { return t_; }
  void set_t(int64_t t) { t_ = t; }

 private:
  ad::ParameterStore* params_;
  double clip_lo_;
  double clip_hi_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  int64_t t_ = 0;
};

/// Plateau-style decay: after `patience` consecutive validations without an
/// improvement of at least `min_improvement`, the learning rate is scaled by
/// `decay_rate` and the counter resets. Signals stop once lr < stop_lr.
class LrSchedule {
 public:
  LrSchedule(double initial_lr, double decay_rate, int patience, double stop_lr,
             double min_improvement = 1e-4)
      : lr_(initial_lr),
        decay_rate_(decay_rate),
        patience_(patience),
        stop_lr_(stop_lr),
        min_improvement_(min_improvement) {
    if (decay_rate <= 0.0 || decay_rate >= 1.0)
      throw ConfigError("decay rate must be in (0, 1)");
    if (stop_lr >= initial_lr) throw ConfigError("stop_lr must be below initial_lr");
  }

  struct Update {
    double lr;
    bool stop;
    bool decayed;
  };

  /// Call once per validation pass.
  Update update(double validation_loss) {
    bool decayed = false;
    if (validation_loss < best_ - min_improvement_) {
      best_ = validation_loss;
      bad_count_ = 0;
    } else {
      ++bad_count_;
      if (bad_count_ > patience_) {
        lr_ *= decay_rate_;
        bad_count_ = 0;
        decayed = true;
      }
    }
    return {lr_, lr_ < stop_lr_, decayed};
  }

  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  double lr_;
  double decay_rate_;
  int patience_;
  double stop_lr_;
  double min_improvement_;
  double best_ = std::numeric_limits<double>::infinity();
  int bad_count_ = 0;
};

}  // namespace multiref
