#pragma once

#include <string>
#include <vector>

#include "multiref/ad/graph.hpp"
#include "multiref/common.hpp"

namespace multiref::nn {

using ad::Graph;
using ad::Matrix;
using ad::Parameter;
using ad::ParameterStore;
using ad::Var;

/// Uniform init in [-r, r]; recurrent (GRU) weights use r = 0.08, biases
/// start at zero.
inline void init_uniform(Parameter& p, Rng& rng, double r = 0.08) {
  for (int j = 0; j < p.value.cols(); ++j)
    for (int i = 0; i < p.value.rows(); ++i) p.value(i, j) = rng.uniform(-r, r);
}

/// Glorot-uniform for dense projections and embeddings.
inline void init_glorot(Parameter& p, Rng& rng) {
  double r = std::sqrt(6.0 / double(p.value.rows() + p.value.cols()));
  init_uniform(p, rng, r);
}

struct Linear {
  Parameter* w = nullptr;
  Parameter* b = nullptr;

  static Linear create(ParameterStore& params, const std::string& name, int in,
                       int out, Rng& rng) {
    Linear l;
    l.w = &params.create(name + ".w", out, in);
    l.b = &params.create(name + ".b", out, 1);
    init_glorot(*l.w, rng);
    return l;
  }

  Var operator()(Graph& g, Var x) const {
    return add(matmul(g.leaf(*w), x), g.leaf(*b));
  }
};

/// One tanh hidden layer followed by a linear map; the feedforward block used
/// by prior/posterior/bow heads.
struct Mlp {
  Linear hidden;
  Linear out;

  static Mlp create(ParameterStore& params, const std::string& name, int in,
                    int hidden_dim, int out_dim, Rng& rng) {
    Mlp m;
    m.hidden = Linear::create(params, name + ".hidden", in, hidden_dim, rng);
    m.out = Linear::create(params, name + ".out", hidden_dim, out_dim, rng);
    return m;
  }

  Var operator()(Graph& g, Var x) const { return out(g, ad::tanh(hidden(g, x))); }
};

struct Embedding {
  Parameter* table = nullptr;  // dim x vocab

  static Embedding create(ParameterStore& params, const std::string& name, int dim,
                          int vocab, Rng& rng) {
    Embedding e;
    e.table = &params.create(name, dim, vocab);
    init_glorot(*e.table, rng);
    return e;
  }

  Var operator()(Graph& g, int token_id) const {
    return ad::pick_col(g.leaf(*table), token_id);
  }
};

struct GruCell {
  Parameter *w_r, *u_r, *b_r;
  Parameter *w_u, *u_u, *b_u;
  Parameter *w_n, *u_n, *b_n;
  int hidden_dim = 0;

  static GruCell create(ParameterStore& params, const std::string& name, int in,
                        int hidden, Rng& rng) {
    GruCell c;
    c.hidden_dim = hidden;
    auto mk = [&](const std::string& suffix, int rows, int cols) {
      Parameter& p = params.create(name + "." + suffix, rows, cols);
      if (cols > 1) init_uniform(p, rng);
      return &p;
    };
    c.w_r = mk("w_r", hidden, in);
    c.u_r = mk("u_r", hidden, hidden);
    c.b_r = mk("b_r", hidden, 1);
    c.w_u = mk("w_u", hidden, in);
    c.u_u = mk("u_u", hidden, hidden);
    c.b_u = mk("b_u", hidden, 1);
    c.w_n = mk("w_n", hidden, in);
    c.u_n = mk("u_n", hidden, hidden);
    c.b_n = mk("b_n", hidden, 1);
    return c;
  }

  Var step(Graph& g, Var x, Var h) const {
    Var r = ad::sigmoid(add(add(matmul(g.leaf(*w_r), x), matmul(g.leaf(*u_r), h)),
                            g.leaf(*b_r)));
    Var u = ad::sigmoid(add(add(matmul(g.leaf(*w_u), x), matmul(g.leaf(*u_u), h)),
                            g.leaf(*b_u)));
    Var n = ad::tanh(add(add(matmul(g.leaf(*w_n), x),
                             matmul(g.leaf(*u_n), ad::cmul(r, h))),
                         g.leaf(*b_n)));
    // h' = n + u * (h - n)
    return add(n, ad::cmul(u, sub(h, n)));
  }

  Var initial_state(Graph& g) const {
    return g.constant(Matrix::Zero(hidden_dim, 1));
  }
};

/// Stack of GRU layers; layer i feeds layer i+1.
struct GruStack {
  std::vector<GruCell> layers;

  static GruStack create(ParameterStore& params, const std::string& name, int in,
                         int hidden, int num_layers, Rng& rng) {
    GruStack s;
    for (int l = 0; l < num_layers; ++l)
      s.layers.push_back(GruCell::create(params, name + ".l" + std::to_string(l),
                                         l == 0 ? in : hidden, hidden, rng));
    return s;
  }

  std::vector<Var> initial_state(Graph& g) const {
    std::vector<Var> h;
    h.reserve(layers.size());
    for (const auto& l : layers) h.push_back(l.initial_state(g));
    return h;
  }

  /// Advances all layers one step; returns the top layer's output.
  Var step(Graph& g, Var x, std::vector<Var>& h) const {
    Var in = x;
    for (size_t l = 0; l < layers.size(); ++l) {
      h[l] = layers[l].step(g, in, h[l]);
      in = h[l];
    }
    return in;
  }

  /// Runs the stack over a sequence; returns per-step top-layer outputs.
  std::vector<Var> run(Graph& g, const std::vector<Var>& xs) const {
    std::vector<Var> h = initial_state(g);
    std::vector<Var> outs;
    outs.reserve(xs.size());
    for (const auto& x : xs) outs.push_back(step(g, x, h));
    return outs;
  }
};

/// Bidirectional GRU returning the concatenated final states of both
/// directions (a 2*hidden summary vector).
struct BiGru {
  GruStack fwd;
  GruStack bwd;

  static BiGru create(ParameterStore& params, const std::string& name, int in,
                      int hidden, int num_layers, Rng& rng) {
    BiGru b;
    b.fwd = GruStack::create(params, name + ".fwd", in, hidden, num_layers, rng);
    b.bwd = GruStack::create(params, name + ".bwd", in, hidden, num_layers, rng);
    return b;
  }

  Var encode(Graph& g, const std::vector<Var>& xs) const {
    if (xs.empty()) throw ConfigError("BiGru over empty sequence");
    auto f = fwd.run(g, xs);
    std::vector<Var> rev(xs.rbegin(), xs.rend());
    auto r = bwd.run(g, rev);
    return ad::concat_rows({f.back(), r.back()});
  }
};

/// Additive attention over a fixed annotation set.
struct Attention {
  Linear query;   // hidden -> att
  Linear key;     // annotation -> att
  Parameter* v = nullptr;

  static Attention create(ParameterStore& params, const std::string& name,
                          int query_dim, int key_dim, int att_dim, Rng& rng) {
    Attention a;
    a.query = Linear::create(params, name + ".query", query_dim, att_dim, rng);
    a.key = Linear::create(params, name + ".key", key_dim, att_dim, rng);
    a.v = &params.create(name + ".v", att_dim, 1);
    init_glorot(*a.v, rng);
    return a;
  }

  /// Returns the attention-weighted sum of annotations for query state h.
  Var context(Graph& g, Var h, const std::vector<Var>& annotations,
              const std::vector<Var>& keys) const {
    Var q = query(g, h);
    std::vector<Var> scores;
    scores.reserve(annotations.size());
    for (const auto& k : keys) {
      Var e = ad::tanh(add(q, k));
      scores.push_back(ad::dot_const(ad::cmul(g.leaf(*v), e),
                                     Matrix::Ones(e.rows(), 1)));
    }
    Var alpha = ad::softmax(ad::concat_rows(scores));
    std::vector<Var> weighted;
    weighted.reserve(annotations.size());
    for (size_t j = 0; j < annotations.size(); ++j)
      weighted.push_back(ad::scale_by(annotations[j], ad::pick(alpha, int(j))));
    return ad::add_n(weighted);
  }

  std::vector<Var> precompute_keys(Graph& g, const std::vector<Var>& annotations) const {
    std::vector<Var> keys;
    keys.reserve(annotations.size());
    for (const auto& a : annotations) keys.push_back(key(g, a));
    return keys;
  }
};

/// Inverted-dropout mask as a constant (identity when rate == 0 or eval mode).
inline Var dropout(Graph& g, Var x, double rate, Rng* rng) {
  if (rate <= 0.0 || rng == nullptr) return x;
  Matrix mask(x.rows(), x.cols());
  double keep = 1.0 - rate;
  for (int j = 0; j < mask.cols(); ++j)
    for (int i = 0; i < mask.rows(); ++i)
      mask(i, j) = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return ad::cmul(x, g.constant(std::move(mask)));
}

}  // namespace multiref::nn
