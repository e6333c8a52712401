#pragma once

#include <cctype>
#include <optional>
#include <string>
#include <vector>

#include "multiref/corpus/types.hpp"

namespace multiref {

/// Tokenizer contract: raw text in, surface tokens out. The default
/// implementation lowercases, detaches punctuation into standalone tokens,
/// and re-attaches contraction apostrophes so that "i ' m" and "i'm" both
/// tokenize to [i, 'm]. It is idempotent on its own output.
using Tokenizer = std::vector<std::string> (*)(const std::string&);

namespace detail {

inline bool is_punct_char(char c) {
  switch (c) {
    case '.':
    case ',':
    case '!':
    case '?':
    case ';':
    case ':':
    case '"':
    case '(':
    case ')':
      return true;
    default:
      return false;
  }
}

inline bool is_word_char(char c) {
  return !std::isspace(static_cast<unsigned char>(c)) && !is_punct_char(c) &&
         c != '\'';
}

}  // namespace detail

inline std::vector<std::string> default_tokenizer(const std::string& raw) {
  // Pass 1: lowercase + split into word / punctuation / apostrophe pieces.
  std::vector<std::string> pieces;
  size_t i = 0;
  while (i < raw.size()) {
    char c = raw[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (detail::is_punct_char(c)) {
      pieces.emplace_back(1, c);
      ++i;
      continue;
    }
    if (c == '\'') {
      // Apostrophe grabs the letters that follow, forming a clitic token.
      std::string tok(1, '\'');
      ++i;
      while (i < raw.size() && detail::is_word_char(raw[i])) {
        tok.push_back(char(std::tolower(static_cast<unsigned char>(raw[i]))));
        ++i;
      }
      pieces.push_back(tok);
      continue;
    }
    std::string tok;
    while (i < raw.size() && detail::is_word_char(raw[i])) {
      tok.push_back(char(std::tolower(static_cast<unsigned char>(raw[i]))));
      ++i;
    }
    pieces.push_back(tok);
  }
  // Pass 2: a bare apostrophe merges with a following word piece ("' m" -> "'m").
  std::vector<std::string> tokens;
  for (size_t k = 0; k < pieces.size(); ++k) {
    if (pieces[k] == "'" && k + 1 < pieces.size() && pieces[k + 1].size() > 0 &&
        pieces[k + 1][0] != '\'' && !detail::is_punct_char(pieces[k + 1][0])) {
      tokens.push_back("'" + pieces[k + 1]);
      ++k;
    } else {
      tokens.push_back(pieces[k]);
    }
  }
  return tokens;
}

/// Returns nullopt when nothing survives normalization (the caller decides
/// whether that drops the utterance or the record).
inline std::optional<Utterance> normalize_text(const std::string& raw, Floor floor,
                                               Tokenizer tokenizer = default_tokenizer) {
  Utterance u;
  u.floor = floor;
  u.tokens = tokenizer(raw);
  if (u.tokens.empty()) return std::nullopt;
  return u;
}

inline Utterance truncate_utterance(Utterance u, int max_len) {
  if (int(u.tokens.size()) > max_len) u.tokens.resize(size_t(max_len));
  return u;
}

}  // namespace multiref
