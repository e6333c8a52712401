#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "multiref/common.hpp"

namespace multiref {

enum class Floor : uint8_t { A, B };

inline char floor_char(Floor f) { return f == Floor::A ? 'A' : 'B'; }

inline Floor parse_floor(const std::string& s) {
  if (s == "A") return Floor::A;
  if (s == "B") return Floor::B;
  throw DataError("invalid floor tag: \"" + s + "\" (expected \"A\" or \"B\")");
}

/// One speaker turn: surface tokens plus the speaker identity.
struct Utterance {
  std::vector<std::string> tokens;
  Floor floor = Floor::A;

  std::string text() const {
    std::ostringstream out;
    for (size_t i = 0; i < tokens.size(); ++i) {
      if (i) out << ' ';
      out << tokens[i];
    }
    return out.str();
  }
};

struct DialogueSession {
  std::string session_id;
  std::vector<Utterance> utterances;
};

/// Up to H utterances of history.
using ContextWindow = std::vector<Utterance>;

struct ContextResponsePair {
  std::string pair_id;
  ContextWindow context;
  Utterance response;
};

/// Token <-> id map with reserved entries for padding, unknowns, and
/// sequence boundaries. Non-reserved ids are assigned by descending count,
/// ties broken lexicographically, so builds are deterministic.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumReserved = 4;

  Vocabulary() {
    tokens_ = {"<pad>", "<unk>", "<s>", "</s>"};
    counts_ = {0, 0, 0, 0};
    for (int i = 0; i < kNumReserved; ++i) ids_[tokens_[i]] = i;
  }

  int add(const std::string& token, int64_t count) {
    auto it = ids_.find(token);
    if (it != ids_.end()) return it->second;
    int id = int(tokens_.size());
    ids_[token] = id;
    tokens_.push_back(token);
    counts_.push_back(count);
    return id;
  }

  int size() const { return int(tokens_.size()); }

  /// Unknown tokens collapse to the unknown id.
  int id_of(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= size()) throw DataError("token id out of range");
    return tokens_[size_t(id)];
  }

  int64_t count_of(int id) const { return counts_[size_t(id)]; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id_of(t));
    return ids;
  }

  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> tokens;
    tokens.reserve(ids.size());
    for (int id : ids) tokens.push_back(token_of(id));
    return tokens;
  }

  std::string serialize() const {
    std::ostringstream out;
    for (int i = 0; i < size(); ++i)
      out << tokens_[size_t(i)] << '\t' << i << '\t' << counts_[size_t(i)] << '\n';
    return out.str();
  }

  static Vocabulary deserialize(const std::string& text) {
    Vocabulary v;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      size_t t1 = line.find('\t');
      size_t t2 = line.find('\t', t1 + 1);
      if (t1 == std::string::npos || t2 == std::string::npos)
        throw DataError("malformed vocabulary line: " + line);
      std::string token = line.substr(0, t1);
      int id = std::stoi(line.substr(t1 + 1, t2 - t1 - 1));
      int64_t count = std::stoll(line.substr(t2 + 1));
      if (id < kNumReserved) {
        if (id >= v.size() || v.tokens_[size_t(id)] != token)
          throw DataError("reserved vocabulary entry mismatch: " + line);
        continue;
      }
      if (id != v.size()) throw DataError("non-contiguous vocabulary id: " + line);
      v.add(token, count);
    }
    return v;
  }

  /// Stable content hash used to bind checkpoints to their vocabulary.
  std::string hash() const {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  (unsigned long long)fnv1a(serialize()));
    return std::string(buf);
  }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::vector<int64_t> counts_;
  std::map<std::string, int> ids_;
};

}  // namespace multiref
