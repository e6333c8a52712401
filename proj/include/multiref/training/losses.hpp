#pragma once

#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "multiref/ad/graph.hpp"
#include "multiref/models/latent.hpp"
#include "multiref/models/model.hpp"
#include "multiref/teacher/multiref_data.hpp"

namespace multiref {

// ------------------------------------------------------------------ NLL

/// Negative summed log-likelihood of one reference under teacher forcing.
inline Var nll_loss_traced(Graph& g, const DialogueModel& model,
                           const DialogueModel::Encoding& enc, std::optional<Var> z,
                           const Utterance& response, Rng* dropout_rng = nullptr) {
  return ad::neg(model.sequence_logprob_traced(g, enc, z, response, dropout_rng));
}

/// Evaluation-path NLL (summed over tokens including EOS).
inline double nll_loss(const DialogueModel& model, const ContextWindow& ctx,
                       const Utterance& response) {
  return -model.sequence_logprob(ctx, response);
}

inline double nll_loss_per_token(const DialogueModel& model, const ContextWindow& ctx,
                                 const Utterance& response) {
  return nll_loss(model, ctx, response) / double(response.tokens.size() + 1);
}

// ------------------------------------------------------------- multi-ref

/// Weighted sum of per-reference NLLs. With uniform weights this is the
/// multi-reference objective; N=1 reduces to nll_loss bit-for-bit.
inline Var multi_ref_loss_traced(Graph& g, const DialogueModel& model,
                                 const MultiRefExample& example,
                                 std::optional<Var> z = {},
                                 Rng* dropout_rng = nullptr) {
  if (example.references.empty()) throw DataError("example has no references");
  DialogueModel::Encoding enc = model.encode_context(g, example.context, dropout_rng);
  std::vector<Var> terms;
  terms.reserve(example.references.size());
  for (const auto& ref : example.references)
    terms.push_back(ad::scale(
        nll_loss_traced(g, model, enc, z, ref.utterance, dropout_rng), ref.weight));
  return ad::add_n(terms);
}

inline double multi_ref_loss(const DialogueModel& model, const MultiRefExample& example) {
  if (example.references.empty()) throw DataError("example has no references");
  double total = 0.0;
  for (const auto& ref : example.references)
    total += ref.weight * nll_loss(model, example.context, ref.utterance);
  return total;
}

// ---------------------------------------------------------- Gaussian KL

/// KL(q || p) for diagonal Gaussians:
///   sum_d [ log(sigma_p/sigma_q) + (sigma_q^2 + (mu_q - mu_p)^2) / (2 sigma_p^2) - 1/2 ]
inline double gaussian_kl(const GaussianParams& q, const GaussianParams& p) {
  if (q.dim() != p.dim()) throw ConfigError("KL dimension mismatch");
  double kl = 0.0;
  for (int d = 0; d < q.dim(); ++d) {
    double vq = q.stddev[d] * q.stddev[d];
    double vp = p.stddev[d] * p.stddev[d];
    double diff = q.mean[d] - p.mean[d];
    kl += std::log(p.stddev[d] / q.stddev[d]) + (vq + diff * diff) / (2.0 * vp) - 0.5;
  }
  return kl;
}

inline Var gaussian_kl_traced(Var mean_q, Var stddev_q, Var mean_p, Var stddev_p) {
  Var log_ratio = ad::sub(ad::log(stddev_p), ad::log(stddev_q));
  Var num = ad::add(ad::square(stddev_q), ad::square(ad::sub(mean_q, mean_p)));
  Var den = ad::scale(ad::square(stddev_p), 2.0);
  return ad::sum(ad::add(log_ratio, ad::add_scalar(ad::cdiv(num, den), -0.5)));
}

inline Var gaussian_kl_traced(const DialogueModel::TracedGaussian& q,
                              const DialogueModel::TracedGaussian& p) {
  return gaussian_kl_traced(q.mean, q.stddev, p.mean, p.stddev);
}

/// log N(z; mu, diag(sigma^2)), in-tape.
inline Var gaussian_log_density_traced(Var z, Var mean, Var stddev) {
  int d = z.rows();
  Var quad = ad::sum(ad::square(ad::cdiv(ad::sub(z, mean), stddev)));
  Var log_det = ad::sum(ad::log(stddev));
  return ad::add_scalar(ad::neg(ad::add(log_det, ad::scale(quad, 0.5))),
                        -0.5 * double(d) * std::log(2.0 * std::numbers::pi));
}

inline double gaussian_log_density(const VectorXd& z, const GaussianParams& p) {
  double quad = ((z - p.mean).array() / p.stddev.array()).square().sum();
  double log_det = p.stddev.array().log().sum();
  return -log_det - 0.5 * quad -
         0.5 * double(z.size()) * std::log(2.0 * std::numbers::pi);
}

// ------------------------------------------------------------- prior KL

/// KL(q || prior) for the configured family.
///  - unimodal: closed form against the single component;
///  - LGM: closed form against the aggregated Gaussian (the LGM prior is
///    Gaussian in law), deterministic;
///  - GMM: Monte Carlo E_q[log q(z) - log p(z)] with mc_samples draws,
///    log p via log-sum-exp over components.
inline double prior_kl(const GaussianParams& q,
                       const std::vector<GaussianParams>& components,
                       const VectorXd& pi, const PriorSpec& spec,
                       int mc_samples = 16, Rng* rng = nullptr) {
  switch (spec.family) {
    case PriorFamily::kUnimodal:
      return gaussian_kl(q, components.at(0));
    case PriorFamily::kLgm:
      return gaussian_kl(q, lgm_aggregate(components, pi));
    case PriorFamily::kGmm: {
      if (rng == nullptr) throw ConfigError("GMM prior KL needs an RNG");
      check_components(components, pi);
      double acc = 0.0;
      VectorXd noise(q.dim());
      for (int m = 0; m < mc_samples; ++m) {
        // antithetic pairs (+noise, -noise) cut the estimator variance
        if (m % 2 == 0)
          for (int i = 0; i < q.dim(); ++i) noise[i] = rng->normal();
        else
          noise = -noise;
        VectorXd z = sample_gaussian(q, noise);
        double log_q = gaussian_log_density(z, q);
        double max_term = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(components.size());
        for (size_t k = 0; k < components.size(); ++k) {
          terms[k] = std::log(std::max(pi[long(k)], 1e-300)) +
                     gaussian_log_density(z, components[k]);
          max_term = std::max(max_term, terms[k]);
        }
        double lse = 0.0;
        for (double t : terms) lse += std::exp(t - max_term);
        acc += log_q - (max_term + std::log(lse));
      }
      return acc / double(mc_samples);
    }
    case PriorFamily::kNone:
      break;
  }
  throw ConfigError("prior KL requires a latent prior");
}

inline Var prior_kl_traced(Graph& g, const DialogueModel::TracedGaussian& q,
                           const DialogueModel::TracedPrior& prior,
                           const PriorSpec& spec, int mc_samples = 16,
                           Rng* rng = nullptr) {
  switch (spec.family) {
    case PriorFamily::kUnimodal:
      return gaussian_kl_traced(q, prior.components.at(0));
    case PriorFamily::kLgm:
      return gaussian_kl_traced(q, DialogueModel::lgm_aggregate_traced(g, prior));
    case PriorFamily::kGmm: {
      if (rng == nullptr) throw ConfigError("GMM prior KL needs an RNG");
      Var log_pi = ad::log_softmax(prior.logits);
      std::vector<Var> estimates;
      const int d = q.mean.rows();
      VectorXd noise(d);
      for (int m = 0; m < mc_samples; ++m) {
        if (m % 2 == 0)
          for (int i = 0; i < d; ++i) noise[i] = rng->normal();
        else
          noise = -noise;
        Var z = DialogueModel::sample_gaussian_traced(g, q, noise);
        Var log_q = gaussian_log_density_traced(z, q.mean, q.stddev);
        std::vector<Var> comp_terms;
        for (size_t k = 0; k < prior.components.size(); ++k)
          comp_terms.push_back(
              ad::add(ad::pick(log_pi, int(k)),
                      gaussian_log_density_traced(z, prior.components[k].mean,
                                                  prior.components[k].stddev)));
        Var log_p = ad::logsumexp(ad::concat_rows(comp_terms));
        estimates.push_back(ad::sub(log_q, log_p));
      }
      return ad::scale(ad::add_n(estimates), 1.0 / double(mc_samples));
    }
    case PriorFamily::kNone:
      break;
  }
  throw ConfigError("prior KL requires a latent prior");
}

// -------------------------------------------------------------- annealing

/// Linear ramp from 0 to 1 over the first anneal_steps training steps.
inline double kl_anneal_weight(int64_t step, int64_t anneal_steps = 40000) {
  if (step < 0) throw ConfigError("negative step");
  if (anneal_steps <= 0) return 1.0;
  return std::min(double(step) / double(anneal_steps), 1.0);
}

// ------------------------------------------------------------------- BoW

/// A single distribution over the vocabulary predicted from (z, c) must
/// explain every (non-pad) response token; summed NLL.
inline Var bow_loss_traced(Graph& g, const DialogueModel& model, Var z, Var c,
                           const Utterance& response) {
  if (response.tokens.empty()) throw DataError("bag-of-words loss over empty response");
  Var log_probs = ad::log_softmax(model.bow_logits(g, z, c));
  std::vector<Var> picks;
  picks.reserve(response.tokens.size());
  for (const auto& tok : response.tokens)
    picks.push_back(ad::pick(log_probs, model.vocab().id_of(tok)));
  return ad::neg(ad::sum(ad::concat_rows(picks)));
}

// -------------------------------------------------------------- token KD

/// Soft-target cross-entropy summed over positions:
///   sum_l H(teacher_l, student_l) = -sum_l sum_v teacher[l][v] log student[l][v]
inline Var token_kd_loss_traced(const std::vector<Var>& student_log_dists,
                                const std::vector<VectorXd>& teacher_dists) {
  if (student_log_dists.size() != teacher_dists.size())
    throw ConfigError("token KD length mismatch: student " +
                      std::to_string(student_log_dists.size()) + ", teacher " +
                      std::to_string(teacher_dists.size()));
  if (student_log_dists.empty()) throw DataError("token KD over empty sequence");
  std::vector<Var> terms;
  terms.reserve(teacher_dists.size());
  for (size_t l = 0; l < teacher_dists.size(); ++l) {
    if (student_log_dists[l].rows() != int(teacher_dists[l].size()))
      throw ConfigError("token KD vocabulary size mismatch at position " +
                        std::to_string(l));
    terms.push_back(ad::neg(ad::dot_const(student_log_dists[l], teacher_dists[l])));
  }
  return ad::add_n(terms);
}

inline double token_kd_loss(const std::vector<VectorXd>& student_dists,
                            const std::vector<VectorXd>& teacher_dists) {
  if (student_dists.size() != teacher_dists.size())
    throw ConfigError("token KD length mismatch");
  double total = 0.0;
  for (size_t l = 0; l < student_dists.size(); ++l) {
    if (student_dists[l].size() != teacher_dists[l].size())
      throw ConfigError("token KD vocabulary size mismatch");
    for (int v = 0; v < int(student_dists[l].size()); ++v)
      if (teacher_dists[l][v] > 0.0)
        total -= teacher_dists[l][v] * std::log(std::max(student_dists[l][v], 1e-300));
  }
  return total;
}

}  // namespace multiref
