#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "multiref/corpus/types.hpp"

namespace multiref {

enum class RefSource { kGroundTruth, kHypothesis };

inline std::string to_string(RefSource s) {
  return s == RefSource::kGroundTruth ? "ground-truth" : "hypothesis";
}

inline RefSource parse_ref_source(const std::string& s) {
  if (s == "ground-truth") return RefSource::kGroundTruth;
  if (s == "hypothesis") return RefSource::kHypothesis;
  throw DataError("unknown reference source: " + s);
}

struct Reference {
  Utterance utterance;
  double weight = 1.0;
  RefSource source = RefSource::kHypothesis;
};

/// One context paired with N uniformly weighted references.
struct MultiRefExample {
  std::string pair_id;
  ContextWindow context;
  std::vector<Reference> references;
};

inline nlohmann::json multiref_to_json(const MultiRefExample& ex) {
  nlohmann::json ctx = nlohmann::json::array();
  for (const auto& u : ex.context)
    ctx.push_back({{"floor", std::string(1, floor_char(u.floor))}, {"text", u.text()}});
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& r : ex.references)
    refs.push_back({{"text", r.utterance.text()},
                    {"weight", r.weight},
                    {"source", to_string(r.source)}});
  return {{"pair_id", ex.pair_id}, {"context", ctx}, {"references", refs}};
}

inline MultiRefExample multiref_from_json(const nlohmann::json& j, Floor response_floor) {
  MultiRefExample ex;
  ex.pair_id = j.at("pair_id").get<std::string>();
  for (const auto& u : j.at("context")) {
    Utterance utt;
    utt.floor = parse_floor(u.at("floor").get<std::string>());
    std::istringstream toks(u.at("text").get<std::string>());
    std::string t;
    while (toks >> t) utt.tokens.push_back(t);
    ex.context.push_back(std::move(utt));
  }
  for (const auto& r : j.at("references")) {
    Reference ref;
    ref.utterance.floor = response_floor;
    std::istringstream toks(r.at("text").get<std::string>());
    std::string t;
    while (toks >> t) ref.utterance.tokens.push_back(t);
    ref.weight = r.at("weight").get<double>();
    ref.source = parse_ref_source(r.at("source").get<std::string>());
    ex.references.push_back(std::move(ref));
  }
  return ex;
}

inline void write_multiref_file(const std::string& path,
                                const std::vector<MultiRefExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write: " + path);
  for (const auto& ex : examples) out << multiref_to_json(ex).dump() << '\n';
}

inline std::vector<MultiRefExample> read_multiref_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open multi-reference file: " + path);
  std::vector<MultiRefExample> examples;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    Floor floor = Floor::B;
    if (!j.at("context").empty()) {
      Floor last = parse_floor(j.at("context").back().at("floor").get<std::string>());
      floor = last == Floor::A ? Floor::B : Floor::A;
    }
    examples.push_back(multiref_from_json(j, floor));
  }
  return examples;
}

}  // namespace multiref
