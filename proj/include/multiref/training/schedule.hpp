#pragma once

#include <json.hpp>

#include "multiref/common.hpp"

namespace multiref {

/// Optimization settings mirroring the reference training recipe. Epoch and
/// step caps normally come from epoch_budget for the chosen data setting.
struct TrainSchedule {
  double initial_lr = 0.001;
  double clip_lo = -1.0;
  double clip_hi = 1.0;
  double decay_rate = 0.75;
  int decay_patience = 3;
  double stop_lr = 1e-7;
  int batch_size = 30;
  int64_t kl_anneal_steps = 40000;
  int max_epochs = 100;
  int64_t max_steps = std::numeric_limits<int64_t>::max();
  double bow_weight = 1.0;
  double min_improvement = 1e-4;

  void validate() const {
    if (initial_lr <= 0.0) throw ConfigError("initial_lr must be positive");
    if (decay_rate <= 0.0 || decay_rate >= 1.0)
      throw ConfigError("decay_rate must be in (0, 1)");
    if (stop_lr >= initial_lr) throw ConfigError("stop_lr must be below initial_lr");
    if (batch_size <= 0) throw ConfigError("batch_size must be positive");
    if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
    if (decay_patience < 0) throw ConfigError("decay_patience must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainSchedule& s) {
  j = {{"initial_lr", s.initial_lr},
       {"clip_lo", s.clip_lo},
       {"clip_hi", s.clip_hi},
       {"decay_rate", s.decay_rate},
       {"decay_patience", s.decay_patience},
       {"stop_lr", s.stop_lr},
       {"batch_size", s.batch_size},
       {"kl_anneal_steps", s.kl_anneal_steps},
       {"max_epochs", s.max_epochs},
       {"max_steps", s.max_steps},
       {"bow_weight", s.bow_weight},
       {"min_improvement", s.min_improvement}};
}

inline void from_json(const nlohmann::json& j, TrainSchedule& s) {
  s.initial_lr = j.value("initial_lr", s.initial_lr);
  s.clip_lo = j.value("clip_lo", s.clip_lo);
  s.clip_hi = j.value("clip_hi", s.clip_hi);
  s.decay_rate = j.value("decay_rate", s.decay_rate);
  s.decay_patience = j.value("decay_patience", s.decay_patience);
  s.stop_lr = j.value("stop_lr", s.stop_lr);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.kl_anneal_steps = j.value("kl_anneal_steps", s.kl_anneal_steps);
  s.max_epochs = j.value("max_epochs", s.max_epochs);
  s.max_steps = j.value("max_steps", s.max_steps);
  s.bow_weight = j.value("bow_weight", s.bow_weight);
  s.min_improvement = j.value("min_improvement", s.min_improvement);
}

}  // namespace multiref
