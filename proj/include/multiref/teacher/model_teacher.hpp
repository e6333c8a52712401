#pragma once

#include <memory>
#include <string>

#include "multiref/models/model.hpp"
#include "multiref/teacher/teacher.hpp"

namespace multiref {

/// Wraps a trained student-architecture model as a teacher. Deterministic:
/// variational checkpoints condition on the prior plug-in mean.
class ModelTeacher : public Teacher {
 public:
  explicit ModelTeacher(std::shared_ptr<const DialogueModel> model,
                        std::string label = "model")
      : model_(std::move(model)), label_(std::move(label)) {
    if (!model_) throw ConfigError("model teacher needs a model");
  }

  std::string id() const override { return label_; }
  const Vocabulary& vocab() const override { return model_->vocab(); }

  VectorXd next_token_dist(const ContextWindow& context,
                           const std::vector<int>& prefix) const override {
    return model_->next_token_probs(context, prefix);
  }

 private:
  std::shared_ptr<const DialogueModel> model_;
  std::string label_;
};

}  // namespace multiref
