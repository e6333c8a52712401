#pragma once

#include <string>

#include <json.hpp>

#include "multiref/common.hpp"

namespace multiref {

enum class PriorFamily { kNone, kUnimodal, kGmm, kLgm };

inline std::string to_string(PriorFamily f) {
  switch (f) {
    case PriorFamily::kNone: return "none";
    case PriorFamily::kUnimodal: return "unimodal";
    case PriorFamily::kGmm: return "gmm";
    case PriorFamily::kLgm: return "lgm";
  }
  return "none";
}

inline PriorFamily parse_prior_family(const std::string& s) {
  if (s == "none") return PriorFamily::kNone;
  if (s == "unimodal") return PriorFamily::kUnimodal;
  if (s == "gmm") return PriorFamily::kGmm;
  if (s == "lgm") return PriorFamily::kLgm;
  throw ConfigError("unknown prior family: " + s);
}

struct PriorSpec {
  PriorFamily family = PriorFamily::kNone;
  int K = 1;

  bool variational() const { return family != PriorFamily::kNone; }
  bool multi_component() const {
    return family == PriorFamily::kGmm || family == PriorFamily::kLgm;
  }
};

struct ModelConfig {
  int hidden_size = 500;
  int num_layers = 1;
  int latent_dim = 200;
  int floor_embedding_dim = 30;
  PriorSpec prior;
  int vocab_size = 0;
  double dropout = 0.2;
  int max_decode_len = 40;
  /// > 0 enables a Gumbel-softmax relaxation of the GMM component draw
  /// during training; 0 keeps the hard categorical draw.
  double gmm_relax_temperature = 0.0;

  void validate() const {
    if (hidden_size <= 0 || num_layers <= 0 || latent_dim <= 0 ||
        floor_embedding_dim <= 0 || max_decode_len <= 0)
      throw ConfigError("all model dimensions must be positive");
    if (vocab_size <= 0) throw ConfigError("vocab_size must be set");
    if (prior.K < 1) throw ConfigError("prior component count K must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
  }

  /// Baseline preset per the 1-layer/500-unit configuration.
  static ModelConfig base() { return ModelConfig{}; }
  /// 2 layers, 1000 hidden units.
  static ModelConfig large() {
    ModelConfig c;
    c.hidden_size = 1000;
    c.num_layers = 2;
    return c;
  }
  /// 2 layers, 2000 hidden units.
  static ModelConfig xlarge() {
    ModelConfig c;
    c.hidden_size = 2000;
    c.num_layers = 2;
    return c;
  }
};

inline void to_json(nlohmann::json& j, const PriorSpec& p) {
  j = {{"family", to_string(p.family)}, {"K", p.K}};
}

inline void from_json(const nlohmann::json& j, PriorSpec& p) {
  p.family = parse_prior_family(j.value("family", std::string("none")));
  p.K = j.value("K", 1);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"hidden_size", c.hidden_size},
       {"num_layers", c.num_layers},
       {"latent_dim", c.latent_dim},
       {"floor_embedding_dim", c.floor_embedding_dim},
       {"prior", c.prior},
       {"vocab_size", c.vocab_size},
       {"dropout", c.dropout},
       {"max_decode_len", c.max_decode_len},
       {"gmm_relax_temperature", c.gmm_relax_temperature}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.hidden_size = j.value("hidden_size", c.hidden_size);
  c.num_layers = j.value("num_layers", c.num_layers);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.floor_embedding_dim = j.value("floor_embedding_dim", c.floor_embedding_dim);
  if (j.contains("prior")) c.prior = j["prior"].get<PriorSpec>();
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.dropout = j.value("dropout", c.dropout);
  c.max_decode_len = j.value("max_decode_len", c.max_decode_len);
  c.gmm_relax_temperature = j.value("gmm_relax_temperature", c.gmm_relax_temperature);
}

}  // namespace multiref
