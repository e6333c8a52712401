#pragma once

#include <optional>
#include <string>
#include <vector>

#include "multiref/ad/graph.hpp"
#include "multiref/corpus/types.hpp"
#include "multiref/models/config.hpp"
#include "multiref/models/latent.hpp"
#include "multiref/nn/layers.hpp"

namespace multiref {

using ad::Graph;
using ad::Matrix;
using ad::Var;

enum class GenMode { kGreedy, kSample };

inline Floor flip_floor(Floor f) { return f == Floor::A ? Floor::B : Floor::A; }

/// Hierarchical encoder-decoder with optional latent machinery:
///  - bidirectional GRU over each utterance's word embeddings,
///  - unidirectional GRU over utterance vectors + floor embeddings,
///  - K feedforward prior heads (unimodal / GMM / LGM families),
///  - unimodal Gaussian recognition (posterior) head,
///  - attentional GRU decoder conditioned on (c, z).
/// With prior family "none" this reduces to a plain HRED: no latent
/// parameters are created and the decoder ignores any provided z.
class DialogueModel {
 public:
  struct Encoding {
    Var c;
    std::vector<Var> annotations;  // per-utterance dialogue-level states
  };

  struct TracedGaussian {
    Var mean;
    Var stddev;
  };

  struct TracedPrior {
    std::vector<TracedGaussian> components;
    Var logits;  // unnormalized weight logits, K x 1
    Var pi;      // softmax(logits)
  };

  struct PriorValues {
    std::vector<GaussianParams> components;
    VectorXd pi;
  };

  DialogueModel(ModelConfig config, Vocabulary vocab, uint64_t init_seed)
      : config_(std::move(config)), vocab_(std::move(vocab)) {
    config_.vocab_size = vocab_.size();
    config_.validate();
    Rng rng(combine_seed(init_seed, 0xd1a106));
    const int H = config_.hidden_size;
    const int D = config_.latent_dim;
    const int V = config_.vocab_size;
    const bool var = config_.prior.variational();

    word_emb_ = nn::Embedding::create(params_, "embed.word", H, V, rng);
    floor_emb_ = nn::Embedding::create(params_, "embed.floor",
                                       config_.floor_embedding_dim, 2, rng);
    utt_enc_ = nn::BiGru::create(params_, "enc.utt", H, H, config_.num_layers, rng);
    dial_enc_ = nn::GruStack::create(params_, "enc.dial",
                                     2 * H + config_.floor_embedding_dim, H,
                                     config_.num_layers, rng);
    attention_ = nn::Attention::create(params_, "att", H, H, H, rng);

    int dec_in = H + H + (var ? D : 0);  // word emb + attention context + z
    decoder_ = nn::GruStack::create(params_, "dec", dec_in, H, config_.num_layers, rng);
    for (int l = 0; l < config_.num_layers; ++l)
      dec_init_.push_back(nn::Linear::create(params_, "dec.init.l" + std::to_string(l),
                                             H + (var ? D : 0), H, rng));
    out_ = nn::Linear::create(params_, "dec.out", H, V, rng);

    if (var) {
      for (int k = 0; k < config_.prior.K; ++k) {
        auto head = nn::Mlp::create(params_, "prior.k" + std::to_string(k), H, D,
                                    2 * D + 1, rng);
        // Mixture weights start uniform: the logit row begins at zero.
        head.out.w->value.row(2 * D).setZero();
        prior_heads_.push_back(head);
      }
      posterior_head_ = nn::Mlp::create(params_, "posterior", 3 * H, D, 2 * D, rng);
      bow_head_ = nn::Mlp::create(params_, "bow", D + H, H, V, rng);
    }
  }

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  ad::ParameterStore& params() { return params_; }
  const ad::ParameterStore& params() const { return params_; }
  bool variational() const { return config_.prior.variational(); }
  int latent_count() const { return config_.prior.K; }

  // ---------------------------------------------------------------- encoder

  Encoding encode_context(Graph& g, const ContextWindow& ctx,
                          Rng* dropout_rng = nullptr) const {
    if (ctx.empty()) throw DataError("cannot encode an empty context");
    std::vector<Var> dial_h = dial_enc_.initial_state(g);
    Encoding enc;
    Var last;
    for (const auto& utt : ctx) {
      Var utt_vec = encode_utterance(g, utt, dropout_rng);
      Var floor = floor_emb_(g, utt.floor == Floor::A ? 0 : 1);
      Var step_in = ad::concat_rows({utt_vec, floor});
      last = dial_enc_.step(g, step_in, dial_h);
      enc.annotations.push_back(last);
    }
    enc.c = last;
    return enc;
  }

  /// Utterance-level encoding, shared by the context encoder and the
  /// recognition (posterior) path.
  Var encode_utterance(Graph& g, const Utterance& utt, Rng* dropout_rng = nullptr) const {
    std::vector<Var> xs;
    xs.reserve(utt.tokens.size());
    for (const auto& tok : utt.tokens) {
      Var e = word_emb_(g, vocab_.id_of(tok));
      xs.push_back(nn::dropout(g, e, dropout_rate(dropout_rng), dropout_rng));
    }
    if (xs.empty()) throw DataError("cannot encode an empty utterance");
    return utt_enc_.encode(g, xs);
  }

  // ------------------------------------------------------------------ prior

  TracedPrior prior_params(Graph& g, Var c) const {
    require_variational();
    TracedPrior prior;
    const int D = config_.latent_dim;
    std::vector<Var> logit_list;
    for (const auto& head : prior_heads_) {
      Var raw = head(g, c);
      TracedGaussian comp;
      comp.mean = ad::slice_rows(raw, 0, D);
      comp.stddev = positive_stddev(ad::slice_rows(raw, D, D));
      prior.components.push_back(comp);
      logit_list.push_back(ad::slice_rows(raw, 2 * D, 1));
    }
    prior.logits = ad::concat_rows(logit_list);
    prior.pi = ad::softmax(prior.logits);
    return prior;
  }

  TracedGaussian posterior_params(Graph& g, Var c, Var response_encoding) const {
    require_variational();
    const int D = config_.latent_dim;
    Var raw = posterior_head_(g, ad::concat_rows({c, response_encoding}));
    TracedGaussian q;
    q.mean = ad::slice_rows(raw, 0, D);
    q.stddev = positive_stddev(ad::slice_rows(raw, D, D));
    return q;
  }

  /// z = mean + stddev .* noise, in-tape.
  static Var sample_gaussian_traced(Graph& g, const TracedGaussian& p,
                                    const VectorXd& noise) {
    return ad::add(p.mean, ad::cmul(p.stddev, g.constant(noise)));
  }

  /// z = sum_k pi_k (mean_k + stddev_k .* noise_k): differentiable in all of
  /// (mean, stddev, pi).
  static Var sample_lgm_traced(Graph& g, const TracedPrior& prior,
                               const std::vector<VectorXd>& noises) {
    if (noises.size() != prior.components.size())
      throw ConfigError("need one noise vector per component");
    std::vector<Var> terms;
    for (size_t k = 0; k < prior.components.size(); ++k) {
      Var zk = sample_gaussian_traced(g, prior.components[k], noises[k]);
      terms.push_back(ad::scale_by(zk, ad::pick(prior.pi, int(k))));
    }
    return ad::add_n(terms);
  }

  /// Closed-form law of the LGM draw, in-tape.
  static TracedGaussian lgm_aggregate_traced(Graph& g, const TracedPrior& prior) {
    std::vector<Var> means, vars;
    for (size_t k = 0; k < prior.components.size(); ++k) {
      Var pik = ad::pick(prior.pi, int(k));
      means.push_back(ad::scale_by(prior.components[k].mean, pik));
      vars.push_back(ad::scale_by(ad::square(prior.components[k].stddev),
                                  ad::square(pik)));
    }
    TracedGaussian agg;
    agg.mean = ad::add_n(means);
    // sqrt via exp(0.5 log x); variance is positive by construction
    agg.stddev = ad::exp(ad::scale(ad::log(ad::add_n(vars)), 0.5));
    return agg;
  }

  /// Prior draw during traced training. GMM uses a hard categorical draw
  /// (gradients only through the selected component) unless the config
  /// enables the temperature-relaxed path.
  Var sample_prior_traced(Graph& g, const TracedPrior& prior, Rng& rng) const {
    const int D = config_.latent_dim;
    switch (config_.prior.family) {
      case PriorFamily::kUnimodal:
        return sample_gaussian_traced(g, prior.components[0], normal_vec(rng, D));
      case PriorFamily::kLgm: {
        std::vector<VectorXd> noises;
        for (int k = 0; k < latent_count(); ++k) noises.push_back(normal_vec(rng, D));
        return sample_lgm_traced(g, prior, noises);
      }
      case PriorFamily::kGmm: {
        if (config_.gmm_relax_temperature > 0.0) {
          // Gumbel-softmax relaxation of the component draw.
          Matrix gumbel(latent_count(), 1);
          for (int k = 0; k < latent_count(); ++k)
            gumbel(k, 0) = -std::log(-std::log(1.0 - rng.uniform()));
          Var noisy = ad::scale(ad::add(prior.logits, g.constant(gumbel)),
                                1.0 / config_.gmm_relax_temperature);
          Var w = ad::softmax(noisy);
          std::vector<Var> terms;
          for (int k = 0; k < latent_count(); ++k) {
            Var zk = sample_gaussian_traced(g, prior.components[size_t(k)],
                                            normal_vec(rng, D));
            terms.push_back(ad::scale_by(zk, ad::pick(w, k)));
          }
          return ad::add_n(terms);
        }
        VectorXd pi = prior.pi.value().col(0);
        int k = rng.categorical(pi);
        return sample_gaussian_traced(g, prior.components[size_t(k)],
                                      normal_vec(rng, D));
      }
      case PriorFamily::kNone:
        break;
    }
    throw ConfigError("model has no latent prior");
  }

  // ---------------------------------------------------------------- decoder

  struct DecoderState {
    std::vector<Var> h;
    std::vector<Var> annotations;
    std::vector<Var> att_keys;
    std::optional<Var> z;
  };

  DecoderState decoder_start(Graph& g, const Encoding& enc,
                             std::optional<Var> z) const {
    DecoderState st;
    if (!variational()) z.reset();  // HRED ignores latent inputs
    if (variational() && !z)
      throw ConfigError("variational decoder needs a latent sample");
    Var init_in = z ? ad::concat_rows({enc.c, *z}) : enc.c;
    for (const auto& proj : dec_init_) st.h.push_back(ad::tanh(proj(g, init_in)));
    st.annotations = enc.annotations;
    st.att_keys = attention_.precompute_keys(g, enc.annotations);
    st.z = z;
    return st;
  }

  /// One decoder step; returns the log-probability vector over the vocabulary.
  Var decode_step(Graph& g, DecoderState& st, int prev_token,
                  Rng* dropout_rng = nullptr) const {
    Var e = word_emb_(g, prev_token);
    e = nn::dropout(g, e, dropout_rate(dropout_rng), dropout_rng);
    Var att_ctx = attention_.context(g, st.h.back(), st.annotations, st.att_keys);
    std::vector<Var> parts{e};
    if (st.z) parts.push_back(*st.z);
    parts.push_back(att_ctx);
    Var top = decoder_.step(g, ad::concat_rows(parts), st.h);
    return ad::log_softmax(out_(g, top));
  }

  /// Teacher forcing over target ids (which include the trailing EOS);
  /// returns exactly targets.size() log-probability vectors.
  std::vector<Var> decode_teacher_forcing(Graph& g, const Encoding& enc,
                                          std::optional<Var> z,
                                          const std::vector<int>& targets,
                                          Rng* dropout_rng = nullptr) const {
    DecoderState st = decoder_start(g, enc, z);
    std::vector<Var> dists;
    dists.reserve(targets.size());
    int prev = Vocabulary::kBos;
    for (int t : targets) {
      dists.push_back(decode_step(g, st, prev, dropout_rng));
      prev = t;
    }
    return dists;
  }

  std::vector<int> target_ids(const Utterance& response) const {
    std::vector<int> ids = vocab_.encode(response.tokens);
    ids.push_back(Vocabulary::kEos);
    return ids;
  }

  /// Summed log P(Y|X) under teacher forcing. For variational models the
  /// provided z conditions the decoder; HRED ignores it.
  Var sequence_logprob_traced(Graph& g, const Encoding& enc, std::optional<Var> z,
                              const Utterance& response,
                              Rng* dropout_rng = nullptr) const {
    auto targets = target_ids(response);
    auto dists = decode_teacher_forcing(g, enc, z, targets, dropout_rng);
    std::vector<Var> picks;
    picks.reserve(targets.size());
    for (size_t i = 0; i < targets.size(); ++i)
      picks.push_back(ad::pick(dists[i], targets[i]));
    return ad::sum(ad::concat_rows(picks));
  }

  /// Evaluation-path log-probability: deterministic, dropout off; variational
  /// models plug in the prior mean (LGM: aggregate mean; GMM: pi-weighted
  /// component mean).
  double sequence_logprob(const ContextWindow& ctx, const Utterance& response) const {
    Graph g;
    Encoding enc = encode_context(g, ctx);
    std::optional<Var> z;
    if (variational())
      z = g.constant(plugin_mean_z(prior_values_from(g, enc.c)));
    return sequence_logprob_traced(g, enc, z, response).scalar();
  }

  /// One decoder-step distribution given a response prefix: the plain form
  /// of decode_step. Deterministic; variational models use the prior
  /// plug-in mean.
  VectorXd next_token_probs(const ContextWindow& ctx,
                            const std::vector<int>& prefix) const {
    Graph g;
    Encoding enc = encode_context(g, ctx);
    std::optional<Var> z;
    if (variational())
      z = g.constant(plugin_mean_z(prior_values_from(g, enc.c)));
    DecoderState st = decoder_start(g, enc, z);
    int prev = Vocabulary::kBos;
    for (int id : prefix) {
      decode_step(g, st, prev);
      prev = id;
    }
    Var logp = decode_step(g, st, prev);
    return logp.value().col(0).array().exp().matrix();
  }

  // -------------------------------------------------------- plain eval path

  PriorValues prior_values(const ContextWindow& ctx) const {
    Graph g;
    Encoding enc = encode_context(g, ctx);
    return prior_values_from(g, enc.c);
  }

  PriorValues prior_values_from(Graph& g, Var c) const {
    TracedPrior traced = prior_params(g, c);
    PriorValues values;
    for (const auto& comp : traced.components)
      values.components.push_back(
          GaussianParams{comp.mean.value().col(0), comp.stddev.value().col(0)});
    values.pi = traced.pi.value().col(0);
    return values;
  }

  /// Deterministic latent plug-in used for perplexity-style evaluation.
  VectorXd plugin_mean_z(const PriorValues& prior) const {
    switch (config_.prior.family) {
      case PriorFamily::kUnimodal:
        return prior.components[0].mean;
      case PriorFamily::kLgm:
        return lgm_aggregate(prior.components, prior.pi).mean;
      case PriorFamily::kGmm:
        return gmm_moments(prior.components, prior.pi).mean;
      case PriorFamily::kNone:
        break;
    }
    throw ConfigError("model has no latent prior");
  }

  /// Draws a latent from the prior; forced_k pins pi to one-hot at k first.
  LatentState draw_prior_latent(const PriorValues& prior, Rng& rng,
                                std::optional<int> forced_k = {}) const {
    PriorValues p = prior;
    if (forced_k) {
      if (*forced_k < 0 || *forced_k >= int(p.components.size()))
        throw ConfigError("forced component index out of range");
      p.pi = VectorXd::Zero(p.pi.size());
      p.pi[*forced_k] = 1.0;
    }
    switch (config_.prior.family) {
      case PriorFamily::kUnimodal: {
        VectorXd noise = normal_vec(rng, config_.latent_dim);
        LatentState state;
        state.z = sample_gaussian(p.components[0], noise);
        state.components = p.components;
        state.weights = VectorXd::Ones(1);
        return state;
      }
      case PriorFamily::kGmm:
        return sample_gmm(p.components, p.pi, rng);
      case PriorFamily::kLgm:
        return sample_lgm(p.components, p.pi, rng);
      case PriorFamily::kNone:
        break;
    }
    throw ConfigError("model has no latent prior");
  }

  // ------------------------------------------------------------- generation

  Utterance generate(const ContextWindow& ctx, GenMode mode, uint64_t seed) const {
    return generate_impl(ctx, mode, seed, std::nullopt, std::nullopt);
  }

  /// Decoding with the k-th latent variable only: pi is forced one-hot at k.
  Utterance generate_with_variable(const ContextWindow& ctx, int k, uint64_t seed,
                                   GenMode mode = GenMode::kGreedy) const {
    require_variational();
    if (!config_.prior.multi_component())
      throw ConfigError("per-variable decoding needs a GMM or LGM prior");
    if (k < 0 || k >= latent_count())
      throw ConfigError("latent variable index " + std::to_string(k) +
                        " out of range (K=" + std::to_string(latent_count()) + ")");
    return generate_impl(ctx, mode, seed, k, std::nullopt);
  }

  /// Decoding with an explicit latent (used by per-variable perplexity).
  Utterance generate_with_latent(const ContextWindow& ctx, const VectorXd& z,
                                 GenMode mode, uint64_t seed) const {
    return generate_impl(ctx, mode, seed, std::nullopt, z);
  }

  double sequence_logprob_with_latent(const ContextWindow& ctx,
                                      const Utterance& response,
                                      const VectorXd& z) const {
    Graph g;
    Encoding enc = encode_context(g, ctx);
    std::optional<Var> zv;
    if (variational()) zv = g.constant(z);
    return sequence_logprob_traced(g, enc, zv, response).scalar();
  }

  // ------------------------------------------------------------ latent loss

  /// Bag-of-words logits from (z, c).
  Var bow_logits(Graph& g, Var z, Var c) const {
    require_variational();
    return bow_head_(g, ad::concat_rows({z, c}));
  }

 private:
  Var positive_stddev(Var raw) const {
    // softplus keeps stddev positive; the floor avoids degenerate variances
    return ad::add_scalar(ad::softplus(raw), 1e-5);
  }

  void require_variational() const {
    if (!variational())
      throw ConfigError("operation requires a latent prior (family != none)");
  }

  double dropout_rate(Rng* rng) const { return rng ? config_.dropout : 0.0; }

  static VectorXd normal_vec(Rng& rng, int dim) {
    VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    return v;
  }

  Utterance generate_impl(const ContextWindow& ctx, GenMode mode, uint64_t seed,
                          std::optional<int> forced_k,
                          std::optional<VectorXd> fixed_z) const {
    if (ctx.empty()) throw DataError("cannot generate from an empty context");
    Rng rng(combine_seed(seed, 0x9e0e));
    Graph g;
    Encoding enc = encode_context(g, ctx);
    std::optional<Var> z;
    if (variational()) {
      if (fixed_z) {
        z = g.constant(*fixed_z);
      } else {
        PriorValues prior = prior_values_from(g, enc.c);
        z = g.constant(draw_prior_latent(prior, rng, forced_k).z);
      }
    }
    DecoderState st = decoder_start(g, enc, z);
    Utterance out;
    out.floor = flip_floor(ctx.back().floor);
    int prev = Vocabulary::kBos;
    for (int step = 0; step < config_.max_decode_len; ++step) {
      Var logp = decode_step(g, st, prev);
      VectorXd probs = logp.value().col(0).array().exp().matrix();
      int next;
      if (mode == GenMode::kGreedy) {
        Eigen::Index arg;
        probs.maxCoeff(&arg);
        next = int(arg);
      } else {
        next = rng.categorical(probs);
      }
      if (next == Vocabulary::kEos) break;
      out.tokens.push_back(vocab_.token_of(next));
      prev = next;
    }
    return out;
  }

  ModelConfig config_;
  Vocabulary vocab_;
  ad::ParameterStore params_;

  nn::Embedding word_emb_;
  nn::Embedding floor_emb_;
  nn::BiGru utt_enc_;
  nn::GruStack dial_enc_;
  nn::Attention attention_;
  nn::GruStack decoder_;
  std::vector<nn::Linear> dec_init_;
  nn::Linear out_;
  std::vector<nn::Mlp> prior_heads_;
  nn::Mlp posterior_head_;
  nn::Mlp bow_head_;
};

}  // namespace multiref
