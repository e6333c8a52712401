#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "multiref/common.hpp"

namespace multiref::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// A trainable tensor. Gradient and Adam moments live alongside the value so
/// checkpoints capture the full optimizer state.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  Matrix adam_m;
  Matrix adam_v;

  void zero_grad() { grad.setZero(); }
};

/// Owns parameters with stable addresses. Iteration is in creation order;
/// serialization is keyed by name.
class ParameterStore {
 public:
  Parameter& create(const std::string& name, int rows, int cols) {
    if (by_name_.count(name)) throw ConfigError("duplicate parameter: " + name);
    auto p = std::make_unique<Parameter>();
    p->name = name;
    p->value = Matrix::Zero(rows, cols);
    p->grad = Matrix::Zero(rows, cols);
    p->adam_m = Matrix::Zero(rows, cols);
    p->adam_v = Matrix::Zero(rows, cols);
    Parameter* raw = p.get();
    owned_.push_back(std::move(p));
    by_name_[name] = raw;
    return *raw;
  }

  Parameter* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  size_t size() const { return owned_.size(); }
  auto begin() { return owned_.begin(); }
  auto end() { return owned_.end(); }
  auto begin() const { return owned_.begin(); }
  auto end() const { return owned_.end(); }

  int64_t num_scalars() const {
    int64_t n = 0;
    for (const auto& p : owned_) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : owned_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Parameter>> owned_;
  std::map<std::string, Parameter*> by_name_;
};

class Graph;

/// Handle into a Graph's tape.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Matrix& value() const;
  int rows() const { return int(value().rows()); }
  int cols() const { return int(value().cols()); }
  double scalar() const { return value()(0, 0); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
/// tape backwards is a valid reverse-topological traversal. Values are dense
/// double matrices; most model code uses single-column matrices.
class Graph {
 public:
  struct Node {
    Matrix value;
    Matrix grad;  // empty until gradient reaches the node
    std::function<void(Graph&)> backward;
    Parameter* param = nullptr;
  };

  Graph() { nodes_.reserve(1024); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const Matrix& value(int id) const { return nodes_[size_t(id)].value; }
  const Matrix& grad(int id) const { return nodes_[size_t(id)].grad; }
  size_t size() const { return nodes_.size(); }

  Var constant(Matrix v) {
    return push(std::move(v), nullptr);
  }

  Var scalar(double v) { return constant(Matrix::Constant(1, 1, v)); }

  Var leaf(Parameter& p) {
    Var out = push(p.value, nullptr);
    nodes_[size_t(out.id)].param = &p;
    return out;
  }

  /// Seeds the (scalar) root with gradient 1 and sweeps the tape. Parameter
  /// gradients accumulate into Parameter::grad.
  void backward(Var root) {
    if (root.graph != this) throw ConfigError("backward on foreign graph");
    Node& r = nodes_[size_t(root.id)];
    if (r.value.size() != 1) throw ConfigError("backward root must be scalar");
    ensure_grad(root.id);
    nodes_[size_t(root.id)].grad(0, 0) += 1.0;
    for (int i = root.id; i >= 0; --i) {
      Node& n = nodes_[size_t(i)];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this);
      if (n.param) n.param->grad += n.grad;
    }
  }

  // -- op construction helpers (used by the free functions below) --

  Var push(Matrix value, std::function<void(Graph&)> backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), std::move(backward), nullptr});
    return Var{this, int(nodes_.size() - 1)};
  }

  void accum(int id, const Matrix& delta) {
    ensure_grad(id);
    nodes_[size_t(id)].grad += delta;
  }

  template <class Expr>
  void accum_expr(int id, const Expr& delta) {
    ensure_grad(id);
    nodes_[size_t(id)].grad += delta;
  }

 private:
  void ensure_grad(int id) {
    Node& n = nodes_[size_t(id)];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }

  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return graph->value(id); }

namespace detail {
inline void check_same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw ConfigError("vars from different graphs");
}
inline void check_same_shape(Var a, Var b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError("shape mismatch: " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                      "x" + std::to_string(b.cols()));
}
}  // namespace detail

inline Var add(Var a, Var b) {
  detail::check_same_graph(a, b);
  detail::check_same_shape(a, b);
  Graph& g = *a.graph;
  return g.push(a.value() + b.value(), [ia = a.id, ib = b.id, io = int(g.size())](Graph& gg) {
    gg.accum(ia, gg.grad(io));
    gg.accum(ib, gg.grad(io));
  });
}

inline Var add_n(const std::vector<Var>& vs) {
  if (vs.empty()) throw ConfigError("add_n of nothing");
  Graph& g = *vs[0].graph;
  Matrix sum = vs[0].value();
  std::vector<int> ids{vs[0].id};
  for (size_t i = 1; i < vs.size(); ++i) {
    detail::check_same_shape(vs[0], vs[i]);
    sum += vs[i].value();
    ids.push_back(vs[i].id);
  }
  return g.push(std::move(sum), [ids, io = int(g.size())](Graph& gg) {
    for (int id : ids) gg.accum(id, gg.grad(io));
  });
}

inline Var sub(Var a, Var b) {
  detail::check_same_graph(a, b);
  detail::check_same_shape(a, b);
  Graph& g = *a.graph;
  return g.push(a.value() - b.value(), [ia = a.id, ib = b.id, io = int(g.size())](Graph& gg) {
    gg.accum(ia, gg.grad(io));
    gg.accum_expr(ib, -gg.grad(io));
  });
}

inline Var neg(Var a) {
  Graph& g = *a.graph;
  return g.push(-a.value(), [ia = a.id, io = int(g.size())](Graph& gg) {
    gg.accum_expr(ia, -gg.grad(io));
  });
}

/// Elementwise product.
inline Var cmul(Var a, Var b) {
  detail::check_same_graph(a, b);
  detail::check_same_shape(a, b);
  Graph& g = *a.graph;
  return g.push(a.value().cwiseProduct(b.value()),
                [ia = a.id, ib = b.id, io = int(g.size())](Graph& gg) {
                  gg.accum_expr(ia, gg.grad(io).cwiseProduct(gg.value(ib)));
                  gg.accum_expr(ib, gg.grad(io).cwiseProduct(gg.value(ia)));
                });
}

/// Elementwise quotient.
inline Var cdiv(Var a, Var b) {
  detail::check_same_graph(a, b);
  detail::check_same_shape(a, b);
  Graph& g = *a.graph;
  return g.push(a.value().cwiseQuotient(b.value()),
                [ia = a.id, ib = b.id, io = int(g.size())](Graph& gg) {
                  gg.accum_expr(ia, gg.grad(io).cwiseQuotient(gg.value(ib)));
                  gg.accum_expr(ib, -gg.grad(io)
                                         .cwiseProduct(gg.value(io))
                                         .cwiseQuotient(gg.value(ib)));
                });
}

inline Var scale(Var a, double c) {
  Graph& g = *a.graph;
  return g.push(a.value() * c, [ia = a.id, c, io = int(g.size())](Graph& gg) {
    gg.accum_expr(ia, gg.grad(io) * c);
  });
}

inline Var add_scalar(Var a, double c) {
  Graph& g = *a.graph;
  return g.push((a.value().array() + c).matrix(),
                [ia = a.id, io = int(g.size())](Graph& gg) {
                  gg.accum(ia, gg.grad(io));
                });
}

inline Var matmul(Var a, Var b) {
  detail::check_same_graph(a, b);
  if (a.cols() != b.rows()) throw ConfigError("matmul inner dimension mismatch");
  Graph& g = *a.graph;
  return g.push(a.value() * b.value(), [ia = a.id, ib = b.id, io = int(g.size())](Graph& gg) {
    gg.accum_expr(ia, gg.grad(io) * gg.value(ib).transpose());
    gg.accum_expr(ib, gg.value(ia).transpose() * gg.grad(io));
  });
}

inline Var tanh(Var a) {
  Graph& g = *a.graph;
  return g.push(a.value().array().tanh().matrix(),
                [ia = a.id, io = int(g.size())](Graph& gg) {
    gg.accum_expr(ia, gg.grad(io).cwiseProduct(
                          (1.0 - gg.value(io).array().square()).matrix()));
  });
}

inline Var sigmoid(Var a) {
  Graph& g = *a.graph;
  Matrix out = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return g.push(std::move(out), [ia = a.id, io = int(g.size())](Graph& gg) {
    const auto& s = gg.value(io).array();
    gg.accum_expr(ia, gg.grad(io).cwiseProduct((s * (1.0 - s)).matrix()));
  });
}

inline Var exp(Var a) {
  Graph& g = *a.graph;
  return g.push(a.value().array().exp().matrix(),
                [ia = a.id, io = int(g.size())](Graph& gg) {
                  gg.accum_expr(ia, gg.grad(io).cwiseProduct(gg.value(io)));
                });
}

inline Var log(Var a) {
  Graph& g = *a.graph;
  return g.push(a.value().array().log().matrix(),
                [ia = a.id, io = int(g.size())](Graph& gg) {
                  gg.accum_expr(ia, gg.grad(io).cwiseQuotient(gg.value(ia)));
                });
}

/// Numerically stable log(1 + exp(x)).
inline Var softplus(Var a) {
  Graph& g = *a.graph;
  Matrix out = a.value().unaryExpr([](double x) {
    return x > 30.0 ? x : std::log1p(std::exp(x));
  });
  return g.push(std::move(out), [ia = a.id, io = int(g.size())](Graph& gg) {
    Matrix s = (1.0 / (1.0 + (-gg.value(ia).array()).exp())).matrix();
    gg.accum_expr(ia, gg.grad(io).cwiseProduct(s));
  });
}

inline Var square(Var a) {
  Graph& g = *a.graph;
  return g.push(a.value().array().square().matrix(),
                [ia = a.id, io = int(g.size())](Graph& gg) {
                  gg.accum_expr(ia, 2.0 * gg.grad(io).cwiseProduct(gg.value(ia)));
                });
}

inline Var sum(Var a) {
  Graph& g = *a.graph;
  return g.push(Matrix::Constant(1, 1, a.value().sum()),
                [ia = a.id, io = int(g.size())](Graph& gg) {
                  double up = gg.grad(io)(0, 0);
                  gg.accum_expr(ia, Matrix::Constant(gg.value(ia).rows(),
                                                     gg.value(ia).cols(), up));
                });
}

/// Scalar inner product with a constant weight matrix.
inline Var dot_const(Var a, Matrix w) {
  if (a.rows() != w.rows() || a.cols() != w.cols())
    throw ConfigError("dot_const shape mismatch");
  Graph& g = *a.graph;
  double v = a.value().cwiseProduct(w).sum();
  return g.push(Matrix::Constant(1, 1, v),
                [ia = a.id, w = std::move(w), io = int(g.size())](Graph& gg) {
                  gg.accum_expr(ia, gg.grad(io)(0, 0) * w);
                });
}

/// Single element as a scalar node.
inline Var pick(Var a, int row, int col = 0) {
  Graph& g = *a.graph;
  return g.push(Matrix::Constant(1, 1, a.value()(row, col)),
                [ia = a.id, row, col, io = int(g.size())](Graph& gg) {
                  Matrix d = Matrix::Zero(gg.value(ia).rows(), gg.value(ia).cols());
                  d(row, col) = gg.grad(io)(0, 0);
                  gg.accum(ia, d);
                });
}

/// Column j as a column vector (embedding lookup against a parameter matrix).
inline Var pick_col(Var a, int col) {
  Graph& g = *a.graph;
  return g.push(a.value().col(col), [ia = a.id, col, io = int(g.size())](Graph& gg) {
    Matrix d = Matrix::Zero(gg.value(ia).rows(), gg.value(ia).cols());
    d.col(col) = gg.grad(io);
    gg.accum(ia, d);
  });
}

inline Var slice_rows(Var a, int start, int len) {
  Graph& g = *a.graph;
  return g.push(a.value().middleRows(start, len),
                [ia = a.id, start, len, io = int(g.size())](Graph& gg) {
                  Matrix d = Matrix::Zero(gg.value(ia).rows(), gg.value(ia).cols());
                  d.middleRows(start, len) = gg.grad(io);
                  gg.accum(ia, d);
                });
}

/// Vertical stack of single-column vars.
inline Var concat_rows(const std::vector<Var>& vs) {
  if (vs.empty()) throw ConfigError("concat_rows of nothing");
  Graph& g = *vs[0].graph;
  int total = 0;
  for (const auto& v : vs) {
    if (v.cols() != 1) throw ConfigError("concat_rows expects column vectors");
    total += v.rows();
  }
  Matrix out(total, 1);
  std::vector<std::pair<int, int>> spans;  // (id, rows)
  int at = 0;
  for (const auto& v : vs) {
    out.middleRows(at, v.rows()) = v.value();
    spans.emplace_back(v.id, v.rows());
    at += v.rows();
  }
  return g.push(std::move(out), [spans, io = int(g.size())](Graph& gg) {
    int at2 = 0;
    for (auto [id, rows] : spans) {
      gg.accum(id, gg.grad(io).middleRows(at2, rows));
      at2 += rows;
    }
  });
}

namespace detail {
inline Matrix stable_softmax(const Matrix& x) {
  double m = x.maxCoeff();
  Matrix e = (x.array() - m).exp();
  return e / e.sum();
}
}  // namespace detail

/// Softmax over a column vector.
inline Var softmax(Var a) {
  if (a.cols() != 1) throw ConfigError("softmax expects a column vector");
  Graph& g = *a.graph;
  return g.push(detail::stable_softmax(a.value()),
                [ia = a.id, io = int(g.size())](Graph& gg) {
                  const Matrix& s = gg.value(io);
                  const Matrix& up = gg.grad(io);
                  double inner = s.cwiseProduct(up).sum();
                  gg.accum_expr(ia, s.cwiseProduct((up.array() - inner).matrix()));
                });
}

/// Log-softmax over a column vector.
inline Var log_softmax(Var a) {
  if (a.cols() != 1) throw ConfigError("log_softmax expects a column vector");
  Graph& g = *a.graph;
  double m = a.value().maxCoeff();
  double lse = m + std::log((a.value().array() - m).exp().sum());
  return g.push((a.value().array() - lse).matrix(),
                [ia = a.id, io = int(g.size())](Graph& gg) {
                  const Matrix& up = gg.grad(io);
                  double total = up.sum();
                  Matrix p = gg.value(io).array().exp().matrix();
                  gg.accum_expr(ia, up - total * p);
                });
}

/// Scalar log-sum-exp of a column vector.
inline Var logsumexp(Var a) {
  if (a.cols() != 1) throw ConfigError("logsumexp expects a column vector");
  Graph& g = *a.graph;
  double m = a.value().maxCoeff();
  double v = m + std::log((a.value().array() - m).exp().sum());
  return g.push(Matrix::Constant(1, 1, v), [ia = a.id, io = int(g.size())](Graph& gg) {
    gg.accum_expr(ia, gg.grad(io)(0, 0) * detail::stable_softmax(gg.value(ia)));
  });
}

/// Elementwise product with a broadcast scalar var.
inline Var scale_by(Var a, Var s) {
  detail::check_same_graph(a, s);
  if (s.value().size() != 1) throw ConfigError("scale_by expects a scalar var");
  Graph& g = *a.graph;
  return g.push(a.value() * s.scalar(),
                [ia = a.id, is = s.id, io = int(g.size())](Graph& gg) {
                  gg.accum_expr(ia, gg.grad(io) * gg.value(is)(0, 0));
                  gg.accum(is, Matrix::Constant(
                                   1, 1, gg.grad(io).cwiseProduct(gg.value(ia)).sum()));
                });
}

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator*(Var a, double c) { return scale(a, c); }
inline Var operator*(double c, Var a) { return scale(a, c); }

}  // namespace multiref::ad
