#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "multiref/common.hpp"
#include "multiref/corpus/types.hpp"
#include "multiref/teacher/multiref_data.hpp"

namespace multiref {

using Eigen::VectorXd;

/// Any autoregressive generator exposed as a next-token distribution over a
/// declared vocabulary. Implementations must be safe for concurrent
/// read-only queries.
class Teacher {
 public:
  virtual ~Teacher() = default;
  virtual std::string id() const = 0;
  virtual const Vocabulary& vocab() const = 0;
  /// Distribution over the next token given the dialogue context and the
  /// response prefix (ids in the teacher's vocabulary). Must be non-negative
  /// and sum to 1 +- 1e-6.
  virtual VectorXd next_token_dist(const ContextWindow& context,
                                   const std::vector<int>& prefix) const = 0;
};

inline void check_distribution(const VectorXd& dist) {
  if (dist.size() == 0 || dist.minCoeff() < -1e-12 ||
      std::abs(dist.sum() - 1.0) > 1e-6)
    throw DataError("teacher produced an invalid probability distribution");
}

/// Top-p truncation: keeps the smallest prefix of tokens, in descending
/// probability order (ties broken by ascending token id), whose cumulative
/// mass reaches p, zeroes the rest, and renormalizes.
inline VectorXd nucleus_filter(const VectorXd& dist, double p) {
  if (p <= 0.0 || p > 1.0) throw ConfigError("nucleus p must be in (0, 1]");
  check_distribution(dist);
  std::vector<int> order(size_t(dist.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist[a] > dist[b]; });
  VectorXd out = VectorXd::Zero(dist.size());
  double kept = 0.0;
  for (int idx : order) {
    out[idx] = dist[idx];
    kept += dist[idx];
    if (kept >= p - 1e-12) break;
  }
  return out / kept;
}

struct SampleOptions {
  double top_p = 0.95;
  int max_len = 40;
};

/// Ancestral sampling through the nucleus filter until EOS or max_len.
/// Deterministic given the RNG state. May return an empty utterance if the
/// first draw is EOS; dataset builders treat that as a failed attempt.
inline Utterance sample_response(const Teacher& teacher, const ContextWindow& context,
                                 const SampleOptions& opts, Rng& rng, Floor floor) {
  Utterance out;
  out.floor = floor;
  std::vector<int> prefix;
  for (int step = 0; step < opts.max_len; ++step) {
    VectorXd dist = teacher.next_token_dist(context, prefix);
    check_distribution(dist);
    VectorXd filtered = nucleus_filter(dist, opts.top_p);
    int tok = rng.categorical(filtered);
    if (tok == Vocabulary::kEos) break;
    prefix.push_back(tok);
    out.tokens.push_back(teacher.vocab().token_of(tok));
  }
  return out;
}

inline Utterance sample_response(const Teacher& teacher, const ContextWindow& context,
                                 double p, int max_len, uint64_t seed, Floor floor) {
  Rng rng(combine_seed(seed, 0x5a3b));
  return sample_response(teacher, context, SampleOptions{p, max_len}, rng, floor);
}

struct MultiRefBuildOptions {
  int n_hypotheses = 5;
  bool include_ground_truth = false;
  SampleOptions sampling;
  int empty_retry_limit = 8;
};

struct MultiRefBuildStats {
  size_t examples = 0;
  size_t skipped = 0;
};

/// One MultiRefExample per pair: N independently sampled hypotheses
/// (duplicates kept), optionally plus the ground truth, uniformly weighted.
/// Each pair owns a seed stream derived from (seed, pair_id), so generation
/// order does not affect the output. Teacher failures skip the pair with a
/// logged warning.
inline std::vector<MultiRefExample> build_multiref_dataset(
    const std::vector<ContextResponsePair>& pairs, const Teacher& teacher,
    const MultiRefBuildOptions& opts, uint64_t seed,
    MultiRefBuildStats* stats = nullptr, std::ostream* warnings = nullptr) {
  if (opts.n_hypotheses < 1) throw ConfigError("need at least one hypothesis");
  std::vector<MultiRefExample> dataset;
  dataset.reserve(pairs.size());
  for (const auto& pair : pairs) {
    Rng rng(combine_seed(seed, fnv1a(pair.pair_id)));
    MultiRefExample ex;
    ex.pair_id = pair.pair_id;
    ex.context = pair.context;
    bool failed = false;
    try {
      for (int i = 0; i < opts.n_hypotheses && !failed; ++i) {
        Utterance hyp;
        int attempts = 0;
        do {
          hyp = sample_response(teacher, pair.context, opts.sampling, rng,
                                pair.response.floor);
        } while (hyp.tokens.empty() && ++attempts < opts.empty_retry_limit);
        if (hyp.tokens.empty()) {
          failed = true;
          break;
        }
        ex.references.push_back(Reference{hyp, 0.0, RefSource::kHypothesis});
      }
    } catch (const std::exception& e) {
      failed = true;
      if (warnings) *warnings << "warning: teacher failed on pair " << pair.pair_id
                              << ": " << e.what() << "\n";
    }
    if (failed) {
      if (stats) ++stats->skipped;
      if (warnings) *warnings << "warning: skipping pair " << pair.pair_id << "\n";
      continue;
    }
    if (opts.include_ground_truth)
      ex.references.push_back(Reference{pair.response, 0.0, RefSource::kGroundTruth});
    double w = 1.0 / double(ex.references.size());
    for (auto& r : ex.references) r.weight = w;
    dataset.push_back(std::move(ex));
    if (stats) ++stats->examples;
  }
  return dataset;
}

/// Per-position teacher distributions for token-level distillation. Requires
/// the student and teacher vocabularies to match exactly. Position l's
/// vector conditions on context and reference[:l]; with the EOS included in
/// the reference, a length-L reference yields exactly L vectors.
inline std::vector<VectorXd> token_distill_targets(const Teacher& teacher,
                                                   const Vocabulary& student_vocab,
                                                   const ContextWindow& context,
                                                   const std::vector<int>& reference_ids) {
  if (!(teacher.vocab() == student_vocab))
    throw ConfigError("token-level KD requires the student vocabulary to equal "
                      "the teacher vocabulary");
  std::vector<VectorXd> targets;
  targets.reserve(reference_ids.size());
  std::vector<int> prefix;
  for (int id : reference_ids) {
    VectorXd dist = teacher.next_token_dist(context, prefix);
    check_distribution(dist);
    targets.push_back(std::move(dist));
    prefix.push_back(id);
  }
  return targets;
}

// ------------------------------------------------------------ epoch budget

struct EpochBudget {
  int max_epochs = 0;
  double max_steps = 0;  // training instances processed, as reported
};

/// Epoch/step budgets per data setting. Table rows are reproduced exactly;
/// settings outside the table use the constant-token-budget scaling
/// epochs ~= 200 / N (the table wins wherever they disagree). Step counts
/// are instances processed: epochs * references-per-pair * 59305 pairs.
inline EpochBudget epoch_budget(int n_refs, bool include_gt) {
  if (n_refs < 1) throw ConfigError("reference count must be >= 1");
  struct Row {
    int n;
    bool gt;
    int epochs;
    double steps;
  };
  static constexpr Row kTable[] = {
      {1, false, 100, 5.93e6},  {1, true, 50, 5.93e6},  {5, false, 20, 5.93e6},
      {5, true, 20, 7.12e6},    {20, false, 10, 11.86e6}, {20, true, 10, 12.45e6},
      {100, false, 2, 11.86e6}, {100, true, 2, 11.98e6},
  };
  for (const auto& row : kTable)
    if (row.n == n_refs && row.gt == include_gt) return {row.epochs, row.steps};
  int epochs = std::max(1, int(std::lround(200.0 / double(n_refs))));
  double per_pair = double(n_refs + (include_gt ? 1 : 0));
  return {epochs, double(epochs) * per_pair * 59305.0};
}

// --------------------------------------------------------- scripted teacher

/// Rule-driven generator for synthetic experiments: the first rule whose
/// trigger token occurs in the context supplies a weighted set of
/// continuations; next-token mass is proportional to the total weight of
/// continuations consistent with the prefix. A prefix that exhausts (or
/// escapes) every continuation maps to EOS.
class ScriptedTeacher : public Teacher {
 public:
  struct Continuation {
    std::vector<std::string> tokens;
    double weight = 1.0;
  };
  struct Rule {
    std::string trigger;  // empty matches every context
    std::vector<Continuation> continuations;
  };

  ScriptedTeacher(std::vector<Rule> rules, Vocabulary vocab)
      : vocab_(std::move(vocab)) {
    if (rules.empty()) throw ConfigError("scripted teacher needs at least one rule");
    for (auto& rule : rules) {
      CompiledRule compiled;
      compiled.trigger = rule.trigger;
      double total = 0.0;
      for (auto& cont : rule.continuations) {
        if (cont.tokens.empty())
          throw ConfigError("scripted continuation must be non-empty");
        if (cont.weight <= 0.0)
          throw ConfigError("scripted continuation weight must be positive");
        total += cont.weight;
        compiled.sequences.push_back(vocab_.encode(cont.tokens));
        compiled.weights.push_back(cont.weight);
      }
      if (compiled.sequences.empty())
        throw ConfigError("scripted rule has no continuations");
      for (auto& w : compiled.weights) w /= total;
      rules_.push_back(std::move(compiled));
    }
  }

  std::string id() const override { return "scripted"; }
  const Vocabulary& vocab() const override { return vocab_; }

  VectorXd next_token_dist(const ContextWindow& context,
                           const std::vector<int>& prefix) const override {
    const CompiledRule& rule = match(context);
    VectorXd dist = VectorXd::Zero(vocab_.size());
    double total = 0.0;
    for (size_t c = 0; c < rule.sequences.size(); ++c) {
      const auto& seq = rule.sequences[c];
      if (seq.size() < prefix.size()) continue;
      if (!std::equal(prefix.begin(), prefix.end(), seq.begin())) continue;
      int next = prefix.size() == seq.size() ? Vocabulary::kEos
                                             : seq[prefix.size()];
      dist[next] += rule.weights[c];
      total += rule.weights[c];
    }
    if (total <= 0.0) {
      dist.setZero();
      dist[Vocabulary::kEos] = 1.0;
      return dist;
    }
    return dist / total;
  }

  /// The rule distribution over whole continuations for a context (tests
  /// and oracles use this to compute exact expectations).
  std::vector<std::pair<std::vector<int>, double>> continuation_distribution(
      const ContextWindow& context) const {
    const CompiledRule& rule = match(context);
    std::vector<std::pair<std::vector<int>, double>> out;
    for (size_t c = 0; c < rule.sequences.size(); ++c)
      out.emplace_back(rule.sequences[c], rule.weights[c]);
    return out;
  }

 private:
  struct CompiledRule {
    std::string trigger;
    std::vector<std::vector<int>> sequences;
    std::vector<double> weights;
  };

  const CompiledRule& match(const ContextWindow& context) const {
    for (const auto& rule : rules_) {
      if (rule.trigger.empty()) return rule;
      for (const auto& utt : context)
        for (const auto& tok : utt.tokens)
          if (tok == rule.trigger) return rule;
    }
    throw DataError("no scripted rule matches the context");
  }

  Vocabulary vocab_;
  std::vector<CompiledRule> rules_;
};

}  // namespace multiref
