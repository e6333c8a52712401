#pragma once

#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "multiref/models/model.hpp"
#include "multiref/teacher/teacher.hpp"
#include "multiref/training/checkpoint.hpp"
#include "multiref/training/losses.hpp"
#include "multiref/training/optimizer.hpp"
#include "multiref/training/schedule.hpp"

namespace multiref {

enum class TrainMode { kGroundTruth, kHypotheses, kMixed, kTokenKd };

inline std::string to_string(TrainMode m) {
  switch (m) {
    case TrainMode::kGroundTruth: return "gt";
    case TrainMode::kHypotheses: return "hyp";
    case TrainMode::kMixed: return "mixed";
    case TrainMode::kTokenKd: return "token-kd";
  }
  return "gt";
}

inline TrainMode parse_train_mode(const std::string& s) {
  if (s == "gt") return TrainMode::kGroundTruth;
  if (s == "hyp") return TrainMode::kHypotheses;
  if (s == "mixed") return TrainMode::kMixed;
  if (s == "token-kd") return TrainMode::kTokenKd;
  throw ConfigError("unknown training mode: " + s);
}

/// One (context, reference) training instance. Uniform reference weights are
/// realized by replication: every reference of a MultiRefExample becomes its
/// own instance, so the per-epoch expected gradient equals the weighted
/// multi-reference loss gradient.
struct TrainInstance {
  ContextWindow context;
  Utterance response;
};

inline std::vector<TrainInstance> instances_from_pairs(
    const std::vector<ContextResponsePair>& pairs) {
  std::vector<TrainInstance> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back({p.context, p.response});
  return out;
}

inline std::vector<TrainInstance> instances_from_multiref(
    const std::vector<MultiRefExample>& examples,
    std::optional<RefSource> only = {}) {
  std::vector<TrainInstance> out;
  for (const auto& ex : examples)
    for (const auto& ref : ex.references)
      if (!only || ref.source == *only) out.push_back({ex.context, ref.utterance});
  return out;
}

struct LossBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;
  double bow = 0.0;
  double anneal_weight = 0.0;
  double total = 0.0;
};

struct TrainLogEntry {
  int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossBreakdown train;
  double val_total = 0.0;
};

inline nlohmann::json to_json_entry(const TrainLogEntry& e) {
  return {{"step", e.step},         {"epoch", e.epoch},
          {"lr", e.lr},             {"recon", e.train.reconstruction},
          {"kl", e.train.kl},       {"bow", e.train.bow},
          {"anneal", e.train.anneal_weight}, {"total", e.train.total},
          {"val_total", e.val_total}};
}

struct FitOptions {
  TrainMode mode = TrainMode::kGroundTruth;
  const Teacher* teacher = nullptr;  // required for token-kd
  int gmm_kl_samples = 16;
  std::ostream* warnings = nullptr;
  std::function<void(const TrainLogEntry&)> on_validation;
  CheckpointState resume;  // continue counters from a loaded checkpoint
};

struct FitResult {
  std::vector<TrainLogEntry> log;
  nlohmann::json best_checkpoint;
  double best_val = std::numeric_limits<double>::infinity();
  int64_t final_step = 0;
  int64_t final_adam_t = 0;
  int epochs_run = 0;
  bool early_stopped = false;
};

namespace detail {

struct InstanceLoss {
  Var total;
  double reconstruction = 0.0;
  double kl = 0.0;
  double bow = 0.0;
};

/// Loss for one instance. Variational models optimize the negated lower
/// bound (reconstruction + annealed KL) plus the bag-of-words term; plain
/// models the NLL; token-KD the soft cross-entropy against teacher targets.
inline InstanceLoss instance_loss(Graph& g, const DialogueModel& model,
                                  const TrainInstance& inst, const FitOptions& opts,
                                  const TrainSchedule& schedule, double anneal,
                                  Rng* dropout_rng, Rng& noise_rng) {
  InstanceLoss out;
  auto enc = model.encode_context(g, inst.context, dropout_rng);
  if (model.variational()) {
    Var resp_enc = model.encode_utterance(g, inst.response, dropout_rng);
    auto q = model.posterior_params(g, enc.c, resp_enc);
    VectorXd noise(model.config().latent_dim);
    for (int i = 0; i < noise.size(); ++i) noise[i] = noise_rng.normal();
    Var z = DialogueModel::sample_gaussian_traced(g, q, noise);
    Var recon = nll_loss_traced(g, model, enc, z, inst.response, dropout_rng);
    auto prior = model.prior_params(g, enc.c);
    Var kl = prior_kl_traced(g, q, prior, model.config().prior, opts.gmm_kl_samples,
                             &noise_rng);
    Var bow = bow_loss_traced(g, model, z, enc.c, inst.response);
    out.total = ad::add(recon, ad::add(ad::scale(kl, anneal),
                                       ad::scale(bow, schedule.bow_weight)));
    out.reconstruction = recon.scalar();
    out.kl = kl.scalar();
    out.bow = bow.scalar();
    return out;
  }
  if (opts.mode == TrainMode::kTokenKd) {
    if (opts.teacher == nullptr)
      throw ConfigError("token-kd training requires a teacher");
    auto targets = model.target_ids(inst.response);
    auto teacher_dists = token_distill_targets(*opts.teacher, model.vocab(),
                                               inst.context, targets);
    auto student = model.decode_teacher_forcing(g, enc, std::nullopt, targets,
                                                dropout_rng);
    out.total = token_kd_loss_traced(student, teacher_dists);
    out.reconstruction = out.total.scalar();
    return out;
  }
  out.total = nll_loss_traced(g, model, enc, std::nullopt, inst.response, dropout_rng);
  out.reconstruction = out.total.scalar();
  return out;
}

/// Deterministic validation loss: dropout off; variational models use the
/// posterior mean and full KL weight.
inline double validation_loss(const DialogueModel& model,
                              const std::vector<TrainInstance>& valid,
                              const FitOptions& opts, const TrainSchedule& schedule,
                              Rng& rng) {
  if (valid.empty()) return 0.0;
  double total = 0.0;
  for (const auto& inst : valid) {
    Graph g;
    auto enc = model.encode_context(g, inst.context);
    if (model.variational()) {
      Var resp_enc = model.encode_utterance(g, inst.response);
      auto q = model.posterior_params(g, enc.c, resp_enc);
      Var recon = nll_loss_traced(g, model, enc, q.mean, inst.response);
      auto prior = model.prior_params(g, enc.c);
      Var kl = prior_kl_traced(g, q, prior, model.config().prior,
                               opts.gmm_kl_samples, &rng);
      Var bow = bow_loss_traced(g, model, q.mean, enc.c, inst.response);
      total += recon.scalar() + kl.scalar() + schedule.bow_weight * bow.scalar();
    } else {
      total +=
          ad::neg(model.sequence_logprob_traced(g, enc, std::nullopt, inst.response))
              .scalar();
    }
  }
  return total / double(valid.size());
}

}  // namespace detail

/// The training loop: per-epoch seeded shuffling, minibatch Adam steps with
/// elementwise clipping, KL annealing by global step, per-epoch validation
/// driving learning-rate decay / early stopping, and best-by-validation
/// checkpointing. Deterministic given (model init, data, schedule, seed).
inline FitResult fit(DialogueModel& model, const std::vector<TrainInstance>& train,
                     const std::vector<TrainInstance>& valid,
                     const TrainSchedule& schedule, uint64_t seed,
                     FitOptions opts = {}) {
  if (train.empty()) throw DataError("training dataset is empty");
  schedule.validate();
  if (opts.mode == TrainMode::kTokenKd) {
    if (opts.teacher == nullptr)
      throw ConfigError("token-kd training requires a teacher");
    if (!(opts.teacher->vocab() == model.vocab()))
      throw ConfigError("token-kd requires matching student/teacher vocabularies");
    if (model.variational())
      throw ConfigError("token-kd mode is defined for plain (non-variational) models");
  }

  AdamOptimizer optim(model.params(), schedule.clip_lo, schedule.clip_hi);
  optim.set_t(opts.resume.adam_t);
  LrSchedule lr_schedule(schedule.initial_lr, schedule.decay_rate,
                         schedule.decay_patience, schedule.stop_lr,
                         schedule.min_improvement);
  Rng train_rng(combine_seed(seed, 0x7261));

  FitResult result;
  int64_t step = opts.resume.step;
  bool stop = false;

  for (int epoch = 0; epoch < schedule.max_epochs && !stop; ++epoch) {
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(combine_seed(seed, 0x5481 + uint64_t(epoch)));
    shuffle_rng.shuffle(order);

    LossBreakdown epoch_mean;
    size_t counted = 0;

    for (size_t at = 0; at < order.size() && !stop; at += size_t(schedule.batch_size)) {
      size_t end = std::min(order.size(), at + size_t(schedule.batch_size));
      double anneal = kl_anneal_weight(step, schedule.kl_anneal_steps);
      Graph g;
      std::vector<Var> losses;
      for (size_t i = at; i < end; ++i) {
        Rng dropout_rng(train_rng.next_u64());
        Rng* drop = model.config().dropout > 0.0 ? &dropout_rng : nullptr;
        auto inst = detail::instance_loss(g, model, train[order[i]], opts, schedule,
                                          anneal, drop, train_rng);
        losses.push_back(inst.total);
        epoch_mean.reconstruction += inst.reconstruction;
        epoch_mean.kl += inst.kl;
        epoch_mean.bow += inst.bow;
        ++counted;
      }
      Var batch_loss = ad::scale(ad::add_n(losses), 1.0 / double(losses.size()));
      epoch_mean.total += batch_loss.scalar() * double(losses.size());
      g.backward(batch_loss);
      if (optim.step(lr_schedule.lr(), opts.warnings)) ++step;
      if (step >= schedule.max_steps) stop = true;
    }

    if (counted > 0) {
      epoch_mean.reconstruction /= double(counted);
      epoch_mean.kl /= double(counted);
      epoch_mean.bow /= double(counted);
      epoch_mean.total /= double(counted);
      epoch_mean.anneal_weight = kl_anneal_weight(step, schedule.kl_anneal_steps);
    }

    Rng val_rng(combine_seed(seed, 0x7a11 + uint64_t(epoch)));
    double val_total = detail::validation_loss(model, valid, opts, schedule, val_rng);

    TrainLogEntry entry;
    entry.step = step;
    entry.epoch = epoch;
    entry.lr = lr_schedule.lr();
    entry.train = epoch_mean;
    entry.val_total = val_total;
    result.log.push_back(entry);
    if (opts.on_validation) opts.on_validation(entry);

    if (valid.empty() || val_total < result.best_val) {
      result.best_val = valid.empty() ? epoch_mean.total : val_total;
      result.best_checkpoint = checkpoint_to_json(model, step, optim.t());
    }
    auto update = lr_schedule.update(valid.empty() ? epoch_mean.total : val_total);
    if (update.stop) {
      result.early_stopped = true;
      stop = true;
    }
    result.epochs_run = epoch + 1;
  }

  result.final_step = step;
  result.final_adam_t = optim.t();
  if (result.best_checkpoint.is_null())
    result.best_checkpoint = checkpoint_to_json(model, step, optim.t());
  return result;
}

}  // namespace multiref
