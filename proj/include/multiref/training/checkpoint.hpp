#pragma once

#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "multiref/models/model.hpp"

namespace multiref {

/// Self-describing checkpoint: model config, vocabulary hash, parameter
/// tensors by name, Adam state, and the global step counter.
inline nlohmann::json checkpoint_to_json(const DialogueModel& model, int64_t step,
                                         int64_t adam_t) {
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : model.params()) {
    auto flatten = [](const ad::Matrix& m) {
      std::vector<double> v(size_t(m.size()));
      Eigen::Map<ad::Matrix>(v.data(), m.rows(), m.cols()) = m;
      return v;
    };
    params[p->name] = {{"rows", p->value.rows()},
                       {"cols", p->value.cols()},
                       {"value", flatten(p->value)},
                       {"adam_m", flatten(p->adam_m)},
                       {"adam_v", flatten(p->adam_v)}};
  }
  return {{"format", "multiref-checkpoint-v1"},
          {"config", model.config()},
          {"vocab_hash", model.vocab().hash()},
          {"step", step},
          {"adam_t", adam_t},
          {"params", params}};
}

struct CheckpointState {
  int64_t step = 0;
  int64_t adam_t = 0;
};

/// Loads tensors into an existing model; shapes and names must match.
inline CheckpointState load_checkpoint_into(DialogueModel& model,
                                            const nlohmann::json& ckpt) {
  if (ckpt.value("format", std::string()) != "multiref-checkpoint-v1")
    throw DataError("unrecognized checkpoint format");
  if (ckpt.at("vocab_hash").get<std::string>() != model.vocab().hash())
    throw ConfigError("checkpoint vocabulary hash does not match the loaded vocabulary");
  const auto& params = ckpt.at("params");
  size_t seen = 0;
  for (const auto& p : model.params()) {
    if (!params.contains(p->name))
      throw DataError("checkpoint is missing parameter " + p->name);
    const auto& rec = params.at(p->name);
    long rows = rec.at("rows").get<long>();
    long cols = rec.at("cols").get<long>();
    if (rows != p->value.rows() || cols != p->value.cols())
      throw DataError("checkpoint shape mismatch for " + p->name);
    auto unflatten = [&](const nlohmann::json& arr, ad::Matrix& dst) {
      auto v = arr.get<std::vector<double>>();
      if (long(v.size()) != rows * cols)
        throw DataError("checkpoint size mismatch for " + p->name);
      dst = Eigen::Map<const ad::Matrix>(v.data(), rows, cols);
    };
    unflatten(rec.at("value"), p->value);
    unflatten(rec.at("adam_m"), p->adam_m);
    unflatten(rec.at("adam_v"), p->adam_v);
    ++seen;
  }
  if (seen != params.size())
    throw DataError("checkpoint carries unknown parameters");
  return {ckpt.at("step").get<int64_t>(), ckpt.at("adam_t").get<int64_t>()};
}

/// Reconstructs a model (architecture from the stored config) and loads the
/// tensors. The vocabulary must be the one the checkpoint was trained with.
inline std::pair<std::unique_ptr<DialogueModel>, CheckpointState>
model_from_checkpoint(const nlohmann::json& ckpt, Vocabulary vocab) {
  ModelConfig config = ckpt.at("config").get<ModelConfig>();
  auto model = std::make_unique<DialogueModel>(config, std::move(vocab), 0);
  CheckpointState state = load_checkpoint_into(*model, ckpt);
  return {std::move(model), state};
}

inline void write_checkpoint_file(const std::string& path, const nlohmann::json& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << ckpt.dump();
}

inline nlohmann::json read_checkpoint_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed checkpoint " + path + ": " + e.what());
  }
}

}  // namespace multiref
