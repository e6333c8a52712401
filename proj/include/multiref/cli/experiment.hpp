#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "multiref/corpus/corpus.hpp"
#include "multiref/models/config.hpp"
#include "multiref/training/fit.hpp"
#include "multiref/training/schedule.hpp"

namespace multiref {

struct TeacherSpec {
  std::string name = "scripted";  // "scripted" | "model"
  std::string script_path;
  std::string checkpoint_path;
};

struct DataSpec {
  int n_refs = 5;
  bool include_gt = false;
  double top_p = 0.95;
  int hyp_max_len = 40;
};

struct EvalSpec {
  std::string embedding_file;  // empty -> <out>/data/embeddings.txt
  int embedding_dim = 50;
  bool use_embeddings = true;
  bool per_variable = false;
};

/// Declarative experiment description. CLI flags override file values; the
/// manifest records the effective configuration and seed of every command.
struct ExperimentConfig {
  std::string raw_corpus;
  CorpusOptions corpus;
  TeacherSpec teacher;
  DataSpec data;
  ModelConfig model;
  TrainSchedule schedule;
  bool use_epoch_budget = true;
  EvalSpec eval;
  TrainMode mode = TrainMode::kGroundTruth;
  std::string out_dir = "experiment";
  uint64_t seed = 1;

  std::filesystem::path out() const { return out_dir; }
  std::filesystem::path data_dir() const { return out() / "data"; }
  std::filesystem::path hyps_dir() const { return out() / "hyps"; }
  std::filesystem::path ckpt_dir() const { return out() / "ckpt"; }
  std::filesystem::path reports_dir() const { return out() / "reports"; }
  std::filesystem::path manifest_path() const { return out() / "manifest"; }

  std::filesystem::path split_path(const std::string& split) const {
    return data_dir() / (split + ".jsonl");
  }
  std::filesystem::path vocab_path() const { return data_dir() / "vocab.tsv"; }
  std::filesystem::path embeddings_path() const {
    return eval.embedding_file.empty()
               ? data_dir() / "embeddings.txt"
               : std::filesystem::path(eval.embedding_file);
  }
  std::filesystem::path multiref_path() const { return hyps_dir() / "multiref.jsonl"; }
  std::filesystem::path best_ckpt_path() const { return ckpt_dir() / "best.json"; }
  std::filesystem::path last_ckpt_path() const { return ckpt_dir() / "last.json"; }
  std::filesystem::path train_log_path() const { return ckpt_dir() / "train_log.jsonl"; }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = {{"seed", c.seed},
       {"out_dir", c.out_dir},
       {"mode", to_string(c.mode)},
       {"corpus",
        {{"raw_path", c.raw_corpus},
         {"max_context_utterances", c.corpus.max_context_utterances},
         {"max_utterance_len", c.corpus.max_utterance_len},
         {"min_count", c.corpus.min_count},
         {"split_ratios", c.corpus.split_ratios}}},
       {"teacher",
        {{"name", c.teacher.name},
         {"script_path", c.teacher.script_path},
         {"checkpoint_path", c.teacher.checkpoint_path}}},
       {"data",
        {{"n_refs", c.data.n_refs},
         {"include_gt", c.data.include_gt},
         {"top_p", c.data.top_p},
         {"hyp_max_len", c.data.hyp_max_len}}},
       {"model", c.model},
       {"schedule", c.schedule},
       {"use_epoch_budget", c.use_epoch_budget},
       {"eval",
        {{"embedding_file", c.eval.embedding_file},
         {"embedding_dim", c.eval.embedding_dim},
         {"use_embeddings", c.eval.use_embeddings},
         {"per_variable", c.eval.per_variable}}}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (j.contains("mode")) c.mode = parse_train_mode(j["mode"].get<std::string>());
  if (j.contains("corpus")) {
    const auto& k = j["corpus"];
    c.raw_corpus = k.value("raw_path", c.raw_corpus);
    c.corpus.max_context_utterances =
        k.value("max_context_utterances", c.corpus.max_context_utterances);
    c.corpus.max_utterance_len =
        k.value("max_utterance_len", c.corpus.max_utterance_len);
    c.corpus.min_count = k.value("min_count", c.corpus.min_count);
    if (k.contains("split_ratios"))
      c.corpus.split_ratios = k["split_ratios"].get<std::array<double, 3>>();
  }
  if (j.contains("teacher")) {
    const auto& k = j["teacher"];
    c.teacher.name = k.value("name", c.teacher.name);
    c.teacher.script_path = k.value("script_path", c.teacher.script_path);
    c.teacher.checkpoint_path = k.value("checkpoint_path", c.teacher.checkpoint_path);
  }
  if (j.contains("data")) {
    const auto& k = j["data"];
    c.data.n_refs = k.value("n_refs", c.data.n_refs);
    c.data.include_gt = k.value("include_gt", c.data.include_gt);
    c.data.top_p = k.value("top_p", c.data.top_p);
    c.data.hyp_max_len = k.value("hyp_max_len", c.data.hyp_max_len);
  }
  if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
  if (j.contains("schedule")) c.schedule = j["schedule"].get<TrainSchedule>();
  c.use_epoch_budget = j.value("use_epoch_budget", c.use_epoch_budget);
  if (j.contains("eval")) {
    const auto& k = j["eval"];
    c.eval.embedding_file = k.value("embedding_file", c.eval.embedding_file);
    c.eval.embedding_dim = k.value("embedding_dim", c.eval.embedding_dim);
    c.eval.use_embeddings = k.value("use_embeddings", c.eval.use_embeddings);
    c.eval.per_variable = k.value("per_variable", c.eval.per_variable);
  }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed config " + path + ": " + e.what());
  }
  try {
    return j.get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid config " + path + ": " + e.what());
  }
}

// ------------------------------------------------------------- manifest I/O

inline nlohmann::json read_manifest(const ExperimentConfig& config) {
  std::ifstream in(config.manifest_path());
  if (!in) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception&) {
    return nlohmann::json::object();
  }
}

/// Merges one command's section into the manifest. Keys are sorted on dump,
/// so reruns with the same inputs are byte-identical.
inline void update_manifest(const ExperimentConfig& config, const std::string& section,
                            nlohmann::json payload) {
  nlohmann::json manifest = read_manifest(config);
  manifest["config"] = config;
  manifest["seed"] = config.seed;
  manifest[section] = std::move(payload);
  std::filesystem::create_directories(config.out());
  std::ofstream out(config.manifest_path(), std::ios::binary);
  if (!out) throw DataError("cannot write manifest");
  out << manifest.dump(2) << '\n';
}

}  // namespace multiref
