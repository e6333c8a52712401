#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "multiref/common.hpp"
#include "multiref/corpus/normalize.hpp"
#include "multiref/corpus/types.hpp"

namespace multiref {

/// Hyperparameters for turning raw sessions into model-ready pairs.
struct CorpusOptions {
  int max_context_utterances = 5;  // H
  int max_utterance_len = 40;      // L
  int min_count = 1;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
};

/// Drops a session iff strictly more than 50% of its utterances (by exact
/// normalized string match) already occurred in previously kept sessions.
/// Utterances of dropped sessions do not enter the seen set. Sequential by
/// construction: the seen set threads through the pass.
inline std::vector<DialogueSession> deduplicate_sessions(
    const std::vector<DialogueSession>& sessions) {
  std::vector<DialogueSession> kept;
  std::set<std::string> seen;
  for (const auto& session : sessions) {
    size_t dup = 0;
    for (const auto& utt : session.utterances)
      if (seen.count(utt.text())) ++dup;
    if (2 * dup > session.utterances.size()) continue;
    for (const auto& utt : session.utterances) seen.insert(utt.text());
    kept.push_back(session);
  }
  return kept;
}

struct SplitResult {
  std::vector<DialogueSession> train, valid, test;
};

/// Session-level split. Valid/test sizes are floor-rounded; the remainder
/// goes to train. Deterministic given the seed.
inline SplitResult split_sessions(const std::vector<DialogueSession>& sessions,
                                  std::array<double, 3> ratios, uint64_t seed) {
  double sum = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(sum - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
  if (sessions.size() < 3)
    throw DataError("need at least 3 sessions to split, have " +
                    std::to_string(sessions.size()));
  size_t n = sessions.size();
  size_t n_valid = size_t(std::floor(double(n) * ratios[1]));
  size_t n_test = size_t(std::floor(double(n) * ratios[2]));
  size_t n_train = n - n_valid - n_test;

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);

  SplitResult out;
  for (size_t i = 0; i < n; ++i) {
    const auto& s = sessions[order[i]];
    if (i < n_train)
      out.train.push_back(s);
    else if (i < n_train + n_valid)
      out.valid.push_back(s);
    else
      out.test.push_back(s);
  }
  return out;
}

/// One pair per response position >= 1; the context is the (up to H)
/// utterances immediately preceding it. Utterances are truncated to L tokens
/// before pairing.
inline std::vector<ContextResponsePair> build_pairs(const DialogueSession& session,
                                                    int H = 5, int L = 40) {
  if (session.utterances.size() < 2)
    throw DataError("session " + session.session_id + " has fewer than 2 utterances");
  std::vector<Utterance> utts;
  utts.reserve(session.utterances.size());
  for (const auto& u : session.utterances) utts.push_back(truncate_utterance(u, L));

  std::vector<ContextResponsePair> pairs;
  for (size_t r = 1; r < utts.size(); ++r) {
    ContextResponsePair p;
    size_t lo = r > size_t(H) ? r - size_t(H) : 0;
    p.context.assign(utts.begin() + long(lo), utts.begin() + long(r));
    p.response = utts[r];
    p.pair_id = session.session_id + "#" + std::to_string(r);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline std::vector<ContextResponsePair> build_pairs(
    const std::vector<DialogueSession>& sessions, int H = 5, int L = 40) {
  std::vector<ContextResponsePair> pairs;
  for (const auto& s : sessions) {
    auto p = build_pairs(s, H, L);
    pairs.insert(pairs.end(), p.begin(), p.end());
  }
  return pairs;
}

/// Vocabulary over the training pairs only (contexts and responses). Tokens
/// with count >= min_count are admitted, ordered by count descending then
/// lexicographic.
inline Vocabulary build_vocab(const std::vector<ContextResponsePair>& pairs,
                              int min_count = 1) {
  std::map<std::string, int64_t> counts;
  for (const auto& pair : pairs) {
    for (const auto& u : pair.context)
      for (const auto& t : u.tokens) ++counts[t];
    for (const auto& t : pair.response.tokens) ++counts[t];
  }
  if (counts.empty()) throw DataError("empty corpus: no tokens to build a vocabulary");

  std::vector<std::pair<std::string, int64_t>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocabulary vocab;
  for (const auto& [token, count] : entries)
    if (count >= min_count) vocab.add(token, count);
  return vocab;
}

// ---------------------------------------------------------------------------
// Newline-delimited JSON corpus files:
//   {"session_id": ..., "utterances": [{"floor": "A"|"B", "text": ...}]}
// ---------------------------------------------------------------------------

inline nlohmann::json session_to_json(const DialogueSession& s) {
  nlohmann::json utts = nlohmann::json::array();
  for (const auto& u : s.utterances)
    utts.push_back({{"floor", std::string(1, floor_char(u.floor))}, {"text", u.text()}});
  return {{"session_id", s.session_id}, {"utterances", utts}};
}

struct RecordIssue {
  size_t line_number;
  std::string message;
};

/// Parses a raw corpus file, normalizing text as it goes. Utterances that
/// normalize to nothing are dropped; sessions left with fewer than 2
/// utterances are dropped. Schema violations are reported per record.
struct LoadResult {
  std::vector<DialogueSession> sessions;
  std::vector<RecordIssue> issues;
  size_t dropped_empty_utterances = 0;
  size_t dropped_short_sessions = 0;
};

inline LoadResult load_raw_corpus(std::istream& in,
                                  Tokenizer tokenizer = default_tokenizer) {
  LoadResult result;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      result.issues.push_back({line_no, std::string("invalid JSON: ") + e.what()});
      continue;
    }
    try {
      if (!rec.contains("session_id") || !rec.contains("utterances") ||
          !rec["utterances"].is_array())
        throw DataError("record must have session_id and utterances[]");
      DialogueSession session;
      session.session_id = rec["session_id"].is_string()
                               ? rec["session_id"].get<std::string>()
                               : rec["session_id"].dump();
      for (const auto& u : rec["utterances"]) {
        if (!u.contains("floor") || !u.contains("text"))
          throw DataError("utterance must have floor and text");
        Floor floor = parse_floor(u["floor"].get<std::string>());
        auto norm = normalize_text(u["text"].get<std::string>(), floor, tokenizer);
        if (!norm) {
          ++result.dropped_empty_utterances;
          continue;
        }
        session.utterances.push_back(std::move(*norm));
      }
      if (session.utterances.size() < 2) {
        ++result.dropped_short_sessions;
        continue;
      }
      result.sessions.push_back(std::move(session));
    } catch (const std::exception& e) {
      result.issues.push_back({line_no, e.what()});
    }
  }
  return result;
}

inline LoadResult load_raw_corpus_file(const std::string& path,
                                       Tokenizer tokenizer = default_tokenizer) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  return load_raw_corpus(in, tokenizer);
}

inline void write_sessions(std::ostream& out,
                           const std::vector<DialogueSession>& sessions) {
  for (const auto& s : sessions) out << session_to_json(s).dump() << '\n';
}

inline void write_sessions_file(const std::string& path,
                                const std::vector<DialogueSession>& sessions) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write: " + path);
  write_sessions(out, sessions);
}

/// Reads an already-normalized split file (tokens are whitespace-joined).
inline std::vector<DialogueSession> read_sessions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open split file: " + path);
  std::vector<DialogueSession> sessions;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    DialogueSession s;
    s.session_id = rec.at("session_id").get<std::string>();
    for (const auto& u : rec.at("utterances")) {
      Utterance utt;
      utt.floor = parse_floor(u.at("floor").get<std::string>());
      std::istringstream toks(u.at("text").get<std::string>());
      std::string t;
      while (toks >> t) utt.tokens.push_back(t);
      if (!utt.tokens.empty()) s.utterances.push_back(std::move(utt));
    }
    sessions.push_back(std::move(s));
  }
  return sessions;
}

inline void write_vocab_file(const std::string& path, const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write: " + path);
  out << vocab.serialize();
}

inline Vocabulary read_vocab_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return Vocabulary::deserialize(buf.str());
}

}  // namespace multiref
