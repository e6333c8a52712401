#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "multiref/eval/embedding.hpp"
#include "multiref/models/model.hpp"
#include "multiref/training/losses.hpp"

namespace multiref {

// ------------------------------------------------------------------ BLEU-2

namespace detail {

inline std::map<std::vector<std::string>, int> ngram_counts(
    const std::vector<std::string>& tokens, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (int(tokens.size()) < n) return counts;
  for (size_t i = 0; i + size_t(n) <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + long(i),
                                      tokens.begin() + long(i) + n)];
  return counts;
}

/// Modified n-gram precision with add-epsilon smoothing on zero counts.
/// A hypothesis with no n-grams scores 1 when the reference has none either
/// (vacuous match) and epsilon otherwise.
inline double modified_precision(const std::vector<std::string>& hyp,
                                 const std::vector<std::string>& ref, int n,
                                 double eps) {
  auto hyp_counts = ngram_counts(hyp, n);
  auto ref_counts = ngram_counts(ref, n);
  int64_t total = 0, matched = 0;
  for (const auto& [gram, count] : hyp_counts) {
    total += count;
    auto it = ref_counts.find(gram);
    if (it != ref_counts.end()) matched += std::min(count, it->second);
  }
  if (total == 0) return ref_counts.empty() ? 1.0 : eps;
  return matched > 0 ? double(matched) / double(total) : eps / double(total);
}

}  // namespace detail

/// Sentence BLEU-2 in [0, 100]: geometric mean of modified 1- and 2-gram
/// precisions with brevity penalty; epsilon (1e-9) smoothing on zero counts.
inline double bleu2(const std::vector<std::string>& hypothesis,
                    const std::vector<std::string>& reference,
                    double eps = 1e-9) {
  if (hypothesis.empty()) return 0.0;
  double p1 = detail::modified_precision(hypothesis, reference, 1, eps);
  double p2 = detail::modified_precision(hypothesis, reference, 2, eps);
  double bp = hypothesis.size() >= reference.size()
                  ? 1.0
                  : std::exp(1.0 - double(reference.size()) / double(hypothesis.size()));
  return 100.0 * bp * std::sqrt(p1 * p2);
}

/// Corpus score: average of sentence scores.
inline double bleu2_corpus(const std::vector<std::vector<std::string>>& hypotheses,
                           const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.size() != references.size())
    throw ConfigError("hypothesis/reference count mismatch");
  if (hypotheses.empty()) return 0.0;
  double total = 0.0;
  for (size_t i = 0; i < hypotheses.size(); ++i)
    total += bleu2(hypotheses[i], references[i]);
  return total / double(hypotheses.size());
}

// ---------------------------------------------------- embedding similarity

enum class SimilarityMode { kExtrema, kAverage, kGreedy };

struct SimilarityScore {
  double value = 0.0;
  bool flagged = false;  // a side had no in-vocabulary tokens
};

namespace detail {

inline double cosine(const VectorXd& a, const VectorXd& b) {
  double denom = std::max(a.norm() * b.norm(), 1e-12);
  return a.dot(b) / denom;
}

inline std::vector<const VectorXd*> lookup_all(const std::vector<std::string>& tokens,
                                               const WordEmbeddingTable& table) {
  std::vector<const VectorXd*> vecs;
  for (const auto& t : tokens)
    if (const VectorXd* v = table.find(t)) vecs.push_back(v);
  return vecs;
}

}  // namespace detail

/// Sentence-level similarity in [-1, 1]. OOV tokens are skipped; if either
/// side loses every token the score is 0 with the flag set.
inline SimilarityScore embedding_similarity(const std::vector<std::string>& hypothesis,
                                            const std::vector<std::string>& reference,
                                            const WordEmbeddingTable& table,
                                            SimilarityMode mode) {
  auto hv = detail::lookup_all(hypothesis, table);
  auto rv = detail::lookup_all(reference, table);
  if (hv.empty() || rv.empty()) return {0.0, true};

  switch (mode) {
    case SimilarityMode::kAverage: {
      VectorXd h = VectorXd::Zero(table.dim());
      VectorXd r = VectorXd::Zero(table.dim());
      for (const auto* v : hv) h += *v;
      for (const auto* v : rv) r += *v;
      return {detail::cosine(h / double(hv.size()), r / double(rv.size())), false};
    }
    case SimilarityMode::kExtrema: {
      // per dimension, the value with the largest magnitude across tokens
      auto extrema = [&](const std::vector<const VectorXd*>& vecs) {
        VectorXd e = *vecs[0];
        for (size_t i = 1; i < vecs.size(); ++i)
          for (int d = 0; d < e.size(); ++d)
            if (std::abs((*vecs[i])[d]) > std::abs(e[d])) e[d] = (*vecs[i])[d];
        return e;
      };
      return {detail::cosine(extrema(hv), extrema(rv)), false};
    }
    case SimilarityMode::kGreedy: {
      auto direction = [&](const std::vector<const VectorXd*>& from,
                           const std::vector<const VectorXd*>& to) {
        double acc = 0.0;
        for (const auto* f : from) {
          double best = -1.0;
          for (const auto* t : to) best = std::max(best, detail::cosine(*f, *t));
          acc += best;
        }
        return acc / double(from.size());
      };
      return {0.5 * (direction(hv, rv) + direction(rv, hv)), false};
    }
  }
  return {0.0, true};
}

// ------------------------------------------------------------- distinct-n

/// Number of distinct n-grams across the whole hypothesis set.
inline int64_t distinct_n(const std::vector<std::vector<std::string>>& hypotheses,
                          int n) {
  if (n < 1) throw ConfigError("distinct-n needs n >= 1");
  std::set<std::vector<std::string>> grams;
  for (const auto& hyp : hypotheses) {
    if (int(hyp.size()) < n) continue;
    for (size_t i = 0; i + size_t(n) <= hyp.size(); ++i)
      grams.insert(std::vector<std::string>(hyp.begin() + long(i),
                                            hyp.begin() + long(i) + n));
  }
  return int64_t(grams.size());
}

// ------------------------------------------------------------- perplexity

/// exp(total NLL / total token count), tokens counted including EOS. Shares
/// the sequence_logprob path with the training-side loss reporting, so the
/// two agree bit-for-bit. Variational models plug in the prior mean.
inline double perplexity(const DialogueModel& model,
                         const std::vector<ContextResponsePair>& pairs) {
  if (pairs.empty()) throw DataError("perplexity over an empty dataset");
  double total_nll = 0.0;
  int64_t total_tokens = 0;
  for (const auto& pair : pairs) {
    total_nll += nll_loss(model, pair.context, pair.response);
    total_tokens += int64_t(pair.response.tokens.size()) + 1;
  }
  return std::exp(total_nll / double(total_tokens));
}

/// Perplexity with an explicit latent per context (per-variable analyses
/// force z to a single component's mean).
inline double perplexity_with_latent(
    const DialogueModel& model, const std::vector<ContextResponsePair>& pairs,
    const std::function<VectorXd(const ContextWindow&)>& latent_fn) {
  if (pairs.empty()) throw DataError("perplexity over an empty dataset");
  double total_nll = 0.0;
  int64_t total_tokens = 0;
  for (const auto& pair : pairs) {
    total_nll -= model.sequence_logprob_with_latent(pair.context, pair.response,
                                                    latent_fn(pair.context));
    total_tokens += int64_t(pair.response.tokens.size()) + 1;
  }
  return std::exp(total_nll / double(total_tokens));
}

// ------------------------------------------------- latent variable analysis

/// Mean prior component weights over the dataset; a probability vector.
inline VectorXd avg_selection_prob(const DialogueModel& model,
                                   const std::vector<ContextResponsePair>& pairs) {
  if (!model.variational())
    throw ConfigError("selection probabilities require a latent prior");
  if (pairs.empty()) throw DataError("selection probabilities over an empty dataset");
  VectorXd acc = VectorXd::Zero(model.latent_count());
  for (const auto& pair : pairs) acc += model.prior_values(pair.context).pi;
  return acc / double(pairs.size());
}

}  // namespace multiref
