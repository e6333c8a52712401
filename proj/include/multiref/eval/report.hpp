#pragma once

#include <functional>
#include <iomanip>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "multiref/eval/metrics.hpp"

namespace multiref {

/// Hook for an external response scorer (a learned evaluator). Absent by
/// default; when absent the report's "reval" fields stay null.
using ExternalScorer =
    std::function<double(const ContextWindow&, const Utterance&)>;

struct PerVariableRow {
  int k = 0;
  double avg_pi = 0.0;
  double perplexity = 0.0;
  double bleu2 = 0.0;
  double emb_extrema = 0.0;
  double emb_average = 0.0;
  double emb_greedy = 0.0;
  int64_t distinct_1 = 0;
  int64_t distinct_2 = 0;
  std::optional<double> reval;
};

struct MetricReport {
  double perplexity = 0.0;
  double bleu2 = 0.0;  // x100
  double emb_extrema = 0.0;
  double emb_average = 0.0;
  double emb_greedy = 0.0;
  int64_t distinct_1 = 0;
  int64_t distinct_2 = 0;
  std::optional<double> reval;
  std::vector<PerVariableRow> per_variable;
};

struct EvalOptions {
  bool per_variable = false;
  ExternalScorer scorer;  // optional
  uint64_t seed = 1;
};

namespace detail {

struct CorpusScores {
  double bleu2 = 0.0;
  double emb_ext = 0.0;
  double emb_avg = 0.0;
  double emb_grd = 0.0;
  int64_t distinct_1 = 0;
  int64_t distinct_2 = 0;
  std::optional<double> reval;
};

inline CorpusScores score_hypotheses(
    const std::vector<ContextResponsePair>& pairs,
    const std::vector<Utterance>& hypotheses, const WordEmbeddingTable* table,
    const ExternalScorer& scorer) {
  CorpusScores s;
  std::vector<std::vector<std::string>> hyp_tokens;
  double reval_acc = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& hyp = hypotheses[i].tokens;
    const auto& ref = pairs[i].response.tokens;
    hyp_tokens.push_back(hyp);
    s.bleu2 += bleu2(hyp, ref);
    if (table) {
      s.emb_ext += embedding_similarity(hyp, ref, *table, SimilarityMode::kExtrema).value;
      s.emb_avg += embedding_similarity(hyp, ref, *table, SimilarityMode::kAverage).value;
      s.emb_grd += embedding_similarity(hyp, ref, *table, SimilarityMode::kGreedy).value;
    }
    if (scorer) reval_acc += scorer(pairs[i].context, hypotheses[i]);
  }
  double n = double(pairs.size());
  s.bleu2 /= n;
  s.emb_ext = 100.0 * s.emb_ext / n;
  s.emb_avg = 100.0 * s.emb_avg / n;
  s.emb_grd = 100.0 * s.emb_grd / n;
  s.distinct_1 = distinct_n(hyp_tokens, 1);
  s.distinct_2 = distinct_n(hyp_tokens, 2);
  if (scorer) s.reval = reval_acc / n;
  return s;
}

}  // namespace detail

inline std::vector<PerVariableRow> per_variable_report(
    const DialogueModel& model, const std::vector<ContextResponsePair>& pairs,
    const WordEmbeddingTable* table, const EvalOptions& opts);

/// Full automated-metric sweep: greedy decoding per pair (seeded per pair id),
/// perplexity via the prior plug-in, BLEU-2, the three embedding
/// similarities (x100), and distinct-n counts. per_variable adds one row per
/// latent variable, decoding with pi forced one-hot and perplexity computed
/// with z forced to that component's mean.
inline MetricReport evaluate_model(const DialogueModel& model,
                                   const std::vector<ContextResponsePair>& pairs,
                                   const WordEmbeddingTable* table,
                                   const EvalOptions& opts = {}) {
  if (pairs.empty()) throw DataError("evaluation over an empty dataset");
  MetricReport report;
  report.perplexity = perplexity(model, pairs);

  std::vector<Utterance> hyps;
  hyps.reserve(pairs.size());
  for (const auto& pair : pairs)
    hyps.push_back(model.generate(pair.context, GenMode::kGreedy,
                                  combine_seed(opts.seed, fnv1a(pair.pair_id))));
  auto scores = detail::score_hypotheses(pairs, hyps, table, opts.scorer);
  report.bleu2 = scores.bleu2;
  report.emb_extrema = scores.emb_ext;
  report.emb_average = scores.emb_avg;
  report.emb_greedy = scores.emb_grd;
  report.distinct_1 = scores.distinct_1;
  report.distinct_2 = scores.distinct_2;
  report.reval = scores.reval;

  if (opts.per_variable) {
    if (!model.config().prior.multi_component())
      throw ConfigError("per-variable analysis needs a GMM or LGM prior");
    report.per_variable = per_variable_report(model, pairs, table, opts);
  }
  return report;
}

/// One row per latent variable k, mirroring the per-variable analysis table.
inline std::vector<PerVariableRow> per_variable_report(
    const DialogueModel& model, const std::vector<ContextResponsePair>& pairs,
    const WordEmbeddingTable* table, const EvalOptions& opts) {
  if (!model.config().prior.multi_component())
    throw ConfigError("per-variable analysis needs a GMM or LGM prior");
  if (pairs.empty()) throw DataError("per-variable analysis over an empty dataset");
  VectorXd avg_pi = avg_selection_prob(model, pairs);
  std::vector<PerVariableRow> rows;
  for (int k = 0; k < model.latent_count(); ++k) {
    PerVariableRow row;
    row.k = k;
    row.avg_pi = avg_pi[k];
    std::vector<Utterance> hyps;
    hyps.reserve(pairs.size());
    for (const auto& pair : pairs)
      hyps.push_back(model.generate_with_variable(
          pair.context, k, combine_seed(opts.seed, fnv1a(pair.pair_id) ^ uint64_t(k))));
    auto scores = detail::score_hypotheses(pairs, hyps, table, opts.scorer);
    row.bleu2 = scores.bleu2;
    row.emb_extrema = scores.emb_ext;
    row.emb_average = scores.emb_avg;
    row.emb_greedy = scores.emb_grd;
    row.distinct_1 = scores.distinct_1;
    row.distinct_2 = scores.distinct_2;
    row.reval = scores.reval;
    row.perplexity = perplexity_with_latent(
        model, pairs, [&](const ContextWindow& ctx) {
          return model.prior_values(ctx).components[size_t(k)].mean;
        });
    rows.push_back(row);
  }
  return rows;
}

// ----------------------------------------------------------- serialization

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j = {{"perplexity", r.perplexity},
                      {"bleu2", r.bleu2},
                      {"embedding",
                       {{"extrema", r.emb_extrema},
                        {"average", r.emb_average},
                        {"greedy", r.emb_greedy}}},
                      {"distinct_1", r.distinct_1},
                      {"distinct_2", r.distinct_2},
                      {"reval", r.reval ? nlohmann::json(*r.reval) : nlohmann::json()}};
  if (!r.per_variable.empty()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.per_variable) {
      rows.push_back({{"k", row.k},
                      {"avg_pi", row.avg_pi},
                      {"perplexity", row.perplexity},
                      {"bleu2", row.bleu2},
                      {"embedding",
                       {{"extrema", row.emb_extrema},
                        {"average", row.emb_average},
                        {"greedy", row.emb_greedy}}},
                      {"distinct_1", row.distinct_1},
                      {"distinct_2", row.distinct_2},
                      {"reval", row.reval ? nlohmann::json(*row.reval) : nlohmann::json()}});
    }
    j["per_variable"] = rows;
  }
  return j;
}

inline std::string format_report_table(const MetricReport& r) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "metric        value\n";
  out << "perplexity    " << r.perplexity << "\n";
  out << "bleu-2        " << r.bleu2 << "\n";
  out << "emb-extrema   " << r.emb_extrema << "\n";
  out << "emb-average   " << r.emb_average << "\n";
  out << "emb-greedy    " << r.emb_greedy << "\n";
  out << "dist-1        " << r.distinct_1 << "\n";
  out << "dist-2        " << r.distinct_2 << "\n";
  out << "reval         " << (r.reval ? std::to_string(*r.reval) : "-") << "\n";
  if (!r.per_variable.empty()) {
    out << "\n   k    avg_pi       ppl    bleu-2       ext       avg       grd"
           "    dist-1    dist-2     reval\n";
    for (const auto& row : r.per_variable) {
      out << std::setw(4) << row.k << std::setw(10) << row.avg_pi << std::setw(10)
          << row.perplexity << std::setw(10) << row.bleu2 << std::setw(10)
          << row.emb_extrema << std::setw(10) << row.emb_average << std::setw(10)
          << row.emb_greedy << std::setw(10) << row.distinct_1 << std::setw(10)
          << row.distinct_2 << std::setw(10)
          << (row.reval ? std::to_string(*row.reval) : "-") << "\n";
    }
  }
  return out.str();
}

}  // namespace multiref
