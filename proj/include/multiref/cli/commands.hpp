#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "multiref/cli/experiment.hpp"
#include "multiref/eval/report.hpp"
#include "multiref/teacher/model_teacher.hpp"
#include "multiref/teacher/teacher.hpp"
#include "multiref/training/checkpoint.hpp"
#include "multiref/training/fit.hpp"

namespace multiref {

namespace fs = std::filesystem;

// ----------------------------------------------------------- teacher loading

inline ScriptedTeacher::Rule scripted_rule_from_json(const nlohmann::json& j) {
  ScriptedTeacher::Rule rule;
  rule.trigger = j.value("trigger", std::string());
  for (const auto& c : j.at("continuations")) {
    ScriptedTeacher::Continuation cont;
    cont.tokens = default_tokenizer(c.at("text").get<std::string>());
    cont.weight = c.value("weight", 1.0);
    rule.continuations.push_back(std::move(cont));
  }
  return rule;
}

inline std::vector<ScriptedTeacher::Rule> load_script_rules(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("teacher script not found: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed teacher script " + path + ": " + e.what());
  }
  std::vector<ScriptedTeacher::Rule> rules;
  for (const auto& r : j.at("rules")) rules.push_back(scripted_rule_from_json(r));
  return rules;
}

inline std::unique_ptr<Teacher> make_teacher(const ExperimentConfig& config,
                                             const Vocabulary& vocab) {
  if (config.teacher.name == "scripted") {
    if (config.teacher.script_path.empty())
      throw ConfigError("scripted teacher needs teacher.script_path");
    return std::make_unique<ScriptedTeacher>(
        load_script_rules(config.teacher.script_path), vocab);
  }
  if (config.teacher.name == "model") {
    if (config.teacher.checkpoint_path.empty())
      throw ConfigError("model teacher needs teacher.checkpoint_path");
    if (!fs::exists(config.teacher.checkpoint_path))
      throw ConfigError("teacher checkpoint not found: " +
                        config.teacher.checkpoint_path);
    auto [model, state] = model_from_checkpoint(
        read_checkpoint_file(config.teacher.checkpoint_path), vocab);
    (void)state;
    return std::make_unique<ModelTeacher>(
        std::shared_ptr<const DialogueModel>(std::move(model)),
        "model:" + config.teacher.checkpoint_path);
  }
  throw ConfigError("unknown teacher: " + config.teacher.name +
                    " (expected \"scripted\" or \"model\")");
}

// --------------------------------------------------------------- preprocess

/// normalize -> dedup -> split -> vocab (+ a desk-scale embedding table),
/// with a manifest of counts.
inline void cmd_preprocess(const ExperimentConfig& config) {
  if (config.raw_corpus.empty())
    throw ConfigError("corpus.raw_path is not set");
  LoadResult loaded = load_raw_corpus_file(config.raw_corpus);
  if (!loaded.issues.empty()) {
    for (const auto& issue : loaded.issues)
      std::cerr << config.raw_corpus << ":" << issue.line_number << ": "
                << issue.message << "\n";
    throw DataError(std::to_string(loaded.issues.size()) +
                    " malformed corpus record(s)");
  }
  if (loaded.sessions.empty()) throw DataError("empty corpus: no usable sessions");

  auto deduped = deduplicate_sessions(loaded.sessions);
  auto splits = split_sessions(deduped, config.corpus.split_ratios, config.seed);

  const int H = config.corpus.max_context_utterances;
  const int L = config.corpus.max_utterance_len;
  auto train_pairs = build_pairs(splits.train, H, L);
  auto valid_pairs = build_pairs(splits.valid, H, L);
  auto test_pairs = build_pairs(splits.test, H, L);
  Vocabulary vocab = build_vocab(train_pairs, config.corpus.min_count);

  fs::create_directories(config.data_dir());
  write_sessions_file(config.split_path("train").string(), splits.train);
  write_sessions_file(config.split_path("valid").string(), splits.valid);
  write_sessions_file(config.split_path("test").string(), splits.test);
  write_vocab_file(config.vocab_path().string(), vocab);

  auto table = train_embedding_table(train_pairs, config.eval.embedding_dim,
                                     combine_seed(config.seed, 0xe3b));
  table.save((config.data_dir() / "embeddings.txt").string());

  update_manifest(config, "preprocess",
                  {{"sessions_raw", loaded.sessions.size()},
                   {"sessions_dedup", deduped.size()},
                   {"dropped_empty_utterances", loaded.dropped_empty_utterances},
                   {"dropped_short_sessions", loaded.dropped_short_sessions},
                   {"train_sessions", splits.train.size()},
                   {"valid_sessions", splits.valid.size()},
                   {"test_sessions", splits.test.size()},
                   {"train_pairs", train_pairs.size()},
                   {"valid_pairs", valid_pairs.size()},
                   {"test_pairs", test_pairs.size()},
                   {"vocab_size", vocab.size()}});
}

// ----------------------------------------------------------------- gen-hyps

inline void cmd_gen_hypotheses(const ExperimentConfig& config) {
  if (!fs::exists(config.split_path("train")) || !fs::exists(config.vocab_path()))
    throw DataError("preprocess outputs not found under " +
                    config.data_dir().string() + " (run preprocess first)");
  Vocabulary vocab = read_vocab_file(config.vocab_path().string());
  auto sessions = read_sessions_file(config.split_path("train").string());
  auto pairs = build_pairs(sessions, config.corpus.max_context_utterances,
                           config.corpus.max_utterance_len);
  auto teacher = make_teacher(config, vocab);

  MultiRefBuildOptions opts;
  opts.n_hypotheses = config.data.n_refs;
  opts.include_ground_truth = config.data.include_gt;
  opts.sampling.top_p = config.data.top_p;
  opts.sampling.max_len = config.data.hyp_max_len;

  MultiRefBuildStats stats;
  auto dataset = build_multiref_dataset(pairs, *teacher, opts, config.seed, &stats,
                                        &std::cerr);
  fs::create_directories(config.hyps_dir());
  write_multiref_file(config.multiref_path().string(), dataset);

  size_t hypothesis_rows = 0;
  for (const auto& ex : dataset)
    for (const auto& r : ex.references)
      if (r.source == RefSource::kHypothesis) ++hypothesis_rows;

  update_manifest(config, "gen_hyps",
                  {{"n_refs", config.data.n_refs},
                   {"include_gt", config.data.include_gt},
                   {"top_p", config.data.top_p},
                   {"max_len", config.data.hyp_max_len},
                   {"teacher", teacher->id()},
                   {"seed", config.seed},
                   {"examples", stats.examples},
                   {"skipped", stats.skipped},
                   {"hypothesis_rows", hypothesis_rows}});
}

// -------------------------------------------------------------------- train

namespace detail {

inline std::vector<TrainInstance> training_instances(const ExperimentConfig& config,
                                                     const Vocabulary& vocab) {
  (void)vocab;
  const int H = config.corpus.max_context_utterances;
  const int L = config.corpus.max_utterance_len;
  switch (config.mode) {
    case TrainMode::kGroundTruth:
    case TrainMode::kTokenKd: {
      auto sessions = read_sessions_file(config.split_path("train").string());
      return instances_from_pairs(build_pairs(sessions, H, L));
    }
    case TrainMode::kHypotheses: {
      auto examples = read_multiref_file(config.multiref_path().string());
      return instances_from_multiref(examples, RefSource::kHypothesis);
    }
    case TrainMode::kMixed: {
      auto examples = read_multiref_file(config.multiref_path().string());
      bool has_gt = false;
      for (const auto& ex : examples)
        for (const auto& r : ex.references)
          if (r.source == RefSource::kGroundTruth) has_gt = true;
      auto instances = instances_from_multiref(examples);
      if (!has_gt) {
        // hypotheses-only file: merge the corpus ground truth per pair
        auto sessions = read_sessions_file(config.split_path("train").string());
        auto pairs = build_pairs(sessions, H, L);
        std::map<std::string, const ContextResponsePair*> by_id;
        for (const auto& p : pairs) by_id[p.pair_id] = &p;
        for (const auto& ex : examples) {
          auto it = by_id.find(ex.pair_id);
          if (it != by_id.end())
            instances.push_back({it->second->context, it->second->response});
        }
      }
      return instances;
    }
  }
  throw ConfigError("unknown training mode");
}

inline EpochBudget budget_for_mode(const ExperimentConfig& config) {
  switch (config.mode) {
    case TrainMode::kGroundTruth:
    case TrainMode::kTokenKd:
      return epoch_budget(1, false);
    case TrainMode::kHypotheses:
      return epoch_budget(config.data.n_refs, false);
    case TrainMode::kMixed:
      return epoch_budget(config.data.n_refs, true);
  }
  throw ConfigError("unknown training mode");
}

}  // namespace detail

inline void cmd_train(const ExperimentConfig& config,
                      const std::string& resume_path = "") {
  if (!fs::exists(config.vocab_path()))
    throw DataError("vocabulary not found (run preprocess first)");
  Vocabulary vocab = read_vocab_file(config.vocab_path().string());
  if (config.model.vocab_size != 0 && config.model.vocab_size != vocab.size())
    throw ConfigError("model.vocab_size (" + std::to_string(config.model.vocab_size) +
                      ") does not match the vocabulary (" +
                      std::to_string(vocab.size()) + ")");

  auto train = detail::training_instances(config, vocab);
  std::vector<TrainInstance> valid;
  if (fs::exists(config.split_path("valid"))) {
    auto sessions = read_sessions_file(config.split_path("valid").string());
    valid = instances_from_pairs(build_pairs(sessions,
                                             config.corpus.max_context_utterances,
                                             config.corpus.max_utterance_len));
  }

  TrainSchedule schedule = config.schedule;
  if (config.use_epoch_budget) {
    EpochBudget budget = detail::budget_for_mode(config);
    schedule.max_epochs = budget.max_epochs;
    // the budget counts instances processed; the step counter counts
    // optimizer steps, so convert via the batch size
    schedule.max_steps =
        int64_t(std::ceil(budget.max_steps / double(schedule.batch_size)));
  }

  DialogueModel model(config.model, vocab, combine_seed(config.seed, 0x30de1));
  FitOptions opts;
  opts.mode = config.mode;
  opts.warnings = &std::cerr;

  std::unique_ptr<Teacher> teacher;
  if (config.mode == TrainMode::kTokenKd) {
    teacher = make_teacher(config, vocab);
    opts.teacher = teacher.get();
  }
  if (!resume_path.empty()) {
    if (!fs::exists(resume_path))
      throw DataError("resume checkpoint not found: " + resume_path);
    opts.resume = load_checkpoint_into(model, read_checkpoint_file(resume_path));
  }

  fs::create_directories(config.ckpt_dir());
  std::ofstream log_out(config.train_log_path(), std::ios::binary);
  opts.on_validation = [&](const TrainLogEntry& e) {
    log_out << to_json_entry(e).dump() << '\n';
  };

  FitResult result = fit(model, train, valid, schedule, config.seed, opts);

  nlohmann::json best = result.best_checkpoint;
  best["seed"] = config.seed;
  write_checkpoint_file(config.best_ckpt_path().string(), best);
  nlohmann::json last = checkpoint_to_json(model, result.final_step,
                                           result.final_adam_t);
  last["seed"] = config.seed;
  write_checkpoint_file(config.last_ckpt_path().string(), last);

  update_manifest(config, "train",
                  {{"mode", to_string(config.mode)},
                   {"n_refs", config.data.n_refs},
                   {"include_gt", config.data.include_gt},
                   {"train_instances", train.size()},
                   {"valid_instances", valid.size()},
                   {"max_epochs", schedule.max_epochs},
                   {"epochs_run", result.epochs_run},
                   {"final_step", result.final_step},
                   {"best_val", result.best_val},
                   {"early_stopped", result.early_stopped},
                   {"seed", config.seed}});
}

// ----------------------------------------------------------------- evaluate

namespace detail {

inline std::pair<std::unique_ptr<DialogueModel>, Vocabulary> load_model(
    const ExperimentConfig& config, const std::string& ckpt_path) {
  std::string path = ckpt_path.empty() ? config.best_ckpt_path().string() : ckpt_path;
  if (!fs::exists(path)) throw DataError("checkpoint not found: " + path);
  if (!fs::exists(config.vocab_path()))
    throw DataError("vocabulary not found (run preprocess first)");
  Vocabulary vocab = read_vocab_file(config.vocab_path().string());
  auto [model, state] = model_from_checkpoint(read_checkpoint_file(path), vocab);
  (void)state;
  return {std::move(model), std::move(vocab)};
}

inline std::vector<ContextResponsePair> test_pairs(const ExperimentConfig& config) {
  if (!fs::exists(config.split_path("test")))
    throw DataError("test split not found (run preprocess first)");
  auto sessions = read_sessions_file(config.split_path("test").string());
  return build_pairs(sessions, config.corpus.max_context_utterances,
                     config.corpus.max_utterance_len);
}

inline std::optional<WordEmbeddingTable> load_embeddings(
    const ExperimentConfig& config) {
  if (!config.eval.use_embeddings) return std::nullopt;
  auto path = config.embeddings_path();
  if (!fs::exists(path))
    throw ConfigError("embedding table not found: " + path.string() +
                      " (set eval.embedding_file or disable eval.use_embeddings)");
  return WordEmbeddingTable::load(path.string());
}

inline void write_report_files(const ExperimentConfig& config,
                               const std::string& stem, const MetricReport& report) {
  fs::create_directories(config.reports_dir());
  nlohmann::json j = to_json(report);
  j["seed"] = config.seed;
  std::ofstream json_out(config.reports_dir() / (stem + ".json"), std::ios::binary);
  json_out << j.dump(2) << '\n';
  std::ofstream txt_out(config.reports_dir() / (stem + ".txt"), std::ios::binary);
  txt_out << format_report_table(report);
}

}  // namespace detail

inline void cmd_evaluate(const ExperimentConfig& config,
                         const std::string& ckpt_path = "",
                         bool per_variable = false) {
  auto [model, vocab] = detail::load_model(config, ckpt_path);
  auto pairs = detail::test_pairs(config);
  auto table = detail::load_embeddings(config);

  EvalOptions opts;
  opts.per_variable = per_variable || config.eval.per_variable;
  opts.seed = config.seed;
  MetricReport report =
      evaluate_model(*model, pairs, table ? &*table : nullptr, opts);
  detail::write_report_files(config, "metrics", report);

  update_manifest(config, "evaluate",
                  {{"checkpoint",
                    ckpt_path.empty() ? config.best_ckpt_path().string() : ckpt_path},
                   {"test_pairs", pairs.size()},
                   {"per_variable", opts.per_variable},
                   {"seed", config.seed}});
}

inline void cmd_analyze_latents(const ExperimentConfig& config,
                                const std::string& ckpt_path = "") {
  auto [model, vocab] = detail::load_model(config, ckpt_path);
  if (!model->config().prior.multi_component() || model->latent_count() < 2)
    throw ConfigError("latent analysis needs a variational checkpoint with K > 1");
  auto pairs = detail::test_pairs(config);
  auto table = detail::load_embeddings(config);

  EvalOptions opts;
  opts.per_variable = true;
  opts.seed = config.seed;
  MetricReport report =
      evaluate_model(*model, pairs, table ? &*table : nullptr, opts);
  detail::write_report_files(config, "latents", report);

  update_manifest(config, "analyze_latents",
                  {{"checkpoint",
                    ckpt_path.empty() ? config.best_ckpt_path().string() : ckpt_path},
                   {"K", model->latent_count()},
                   {"test_pairs", pairs.size()},
                   {"seed", config.seed}});
}

}  // namespace multiref
