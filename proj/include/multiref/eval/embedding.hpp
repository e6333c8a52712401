#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "multiref/common.hpp"
#include "multiref/corpus/types.hpp"

namespace multiref {

using Eigen::VectorXd;

/// token -> dense vector table for the embedding-based metrics. All vectors
/// share one dimension; zero-norm vectors are rejected at load time.
/// Out-of-vocabulary tokens are skipped by the metrics.
class WordEmbeddingTable {
 public:
  WordEmbeddingTable() = default;

  void insert(const std::string& token, VectorXd vec) {
    if (dim_ == 0) dim_ = int(vec.size());
    if (int(vec.size()) != dim_)
      throw DataError("embedding dimension mismatch for token " + token);
    if (vec.norm() < 1e-12)
      throw DataError("zero-norm embedding for token " + token);
    table_[token] = std::move(vec);
  }

  const VectorXd* find(const std::string& token) const {
    auto it = table_.find(token);
    return it == table_.end() ? nullptr : &it->second;
  }

  int dim() const { return dim_; }
  size_t size() const { return table_.size(); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write embeddings: " + path);
    out.precision(17);
    for (const auto& [token, vec] : table_) {
      out << token;
      for (int i = 0; i < vec.size(); ++i) out << ' ' << vec[i];
      out << '\n';
    }
  }

  static WordEmbeddingTable load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open embedding file: " + path);
    WordEmbeddingTable table;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      std::istringstream parts(line);
      std::string token;
      parts >> token;
      std::vector<double> values;
      double v;
      while (parts >> v) values.push_back(v);
      if (token.empty() || values.empty())
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": malformed embedding line");
      VectorXd vec = Eigen::Map<VectorXd>(values.data(), long(values.size()));
      table.insert(token, std::move(vec));
    }
    return table;
  }

 private:
  int dim_ = 0;
  std::map<std::string, VectorXd> table_;
};

/// Lightweight distributional embeddings trained from co-occurrence counts:
/// every token accumulates the (seeded, unit-norm) hash vectors of its
/// window-2 neighbors, then rows are normalized. Deterministic given the
/// seed; good enough for desk-scale similarity metrics.
inline WordEmbeddingTable train_embedding_table(
    const std::vector<ContextResponsePair>& pairs, int dim, uint64_t seed,
    int window = 2) {
  auto hash_vec = [&](const std::string& token) {
    Rng rng(combine_seed(seed, fnv1a(token)));
    VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    return VectorXd(v / std::max(v.norm(), 1e-12));
  };

  std::map<std::string, VectorXd> acc;
  auto feed = [&](const std::vector<std::string>& tokens) {
    for (size_t i = 0; i < tokens.size(); ++i) {
      auto& v = acc.try_emplace(tokens[i], VectorXd::Zero(dim)).first->second;
      for (int off = -window; off <= window; ++off) {
        if (off == 0) continue;
        long j = long(i) + off;
        if (j < 0 || j >= long(tokens.size())) continue;
        v += hash_vec(tokens[size_t(j)]);
      }
    }
  };
  for (const auto& pair : pairs) {
    for (const auto& u : pair.context) feed(u.tokens);
    feed(pair.response.tokens);
  }

  WordEmbeddingTable table;
  for (auto& [token, vec] : acc) {
    if (vec.norm() < 1e-12) vec = hash_vec(token);  // isolated token
    table.insert(token, vec / vec.norm());
  }
  return table;
}

}  // namespace multiref
