#pragma once

// Shared fixtures: tiny model configs, scripted teachers, and the synthetic
// one-to-many corpus used by the directional training experiments.

#include <string>
#include <vector>

#include "multiref/corpus/corpus.hpp"
#include "multiref/models/model.hpp"
#include "multiref/teacher/teacher.hpp"
#include "multiref/training/fit.hpp"

namespace fixtures {

using namespace multiref;

inline std::vector<std::string> toks(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string t;
  while (in >> t) out.push_back(t);
  return out;
}

inline Utterance utt(const std::string& text, Floor floor = Floor::A) {
  Utterance u;
  u.tokens = toks(text);
  u.floor = floor;
  return u;
}

inline ContextResponsePair pair_of(const std::string& context,
                                   const std::string& response,
                                   const std::string& id = "p") {
  ContextResponsePair p;
  p.pair_id = id;
  p.context = {utt(context, Floor::A)};
  p.response = utt(response, Floor::B);
  return p;
}

/// Vocabulary covering a list of whitespace-joined sentences.
inline Vocabulary vocab_of(const std::vector<std::string>& sentences) {
  std::map<std::string, int64_t> counts;
  for (const auto& s : sentences)
    for (const auto& t : toks(s)) ++counts[t];
  Vocabulary v;
  std::vector<std::pair<std::string, int64_t>> entries(counts.begin(), counts.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (const auto& [t, c] : entries) v.add(t, c);
  return v;
}

/// Small deterministic model config for unit tests.
inline ModelConfig tiny_config(int vocab_size, PriorFamily family = PriorFamily::kNone,
                               int K = 1) {
  ModelConfig c;
  c.hidden_size = 10;
  c.num_layers = 1;
  c.latent_dim = 4;
  c.floor_embedding_dim = 3;
  c.vocab_size = vocab_size;
  c.dropout = 0.0;
  c.max_decode_len = 12;
  c.prior.family = family;
  c.prior.K = K;
  return c;
}

// ---------------------------------------------------------------------------
// Synthetic one-to-many corpus: `n_topics` template contexts, each with 8
// weighted continuations served by a scripted teacher.
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& topic_words() {
  static const std::vector<std::string> topics = {
      "coffee",  "tea",      "music",   "books",   "soccer",  "tennis",
      "movies",  "cooking",  "hiking",  "dancing", "painting","fishing",
      "chess",   "gardens",  "travel",  "history", "science", "poetry",
      "cycling", "swimming", "skating", "running", "camping", "singing",
      "drawing", "sailing",  "surfing", "skiing",  "yoga",    "boxing",
      "pizza",   "sushi",    "pasta",   "salad",   "soup",    "bread",
      "cheese",  "apples",   "grapes",  "mangoes", "berries", "melons",
      "winter",  "summer",   "autumn",  "spring",  "rivers",  "lakes",
      "forests", "mountains"};
  return topics;
}

inline std::string topic_context(const std::string& topic) {
  return "do you like " + topic + " ?";
}

/// Eight continuations per topic; the first carries the most mass and shares
/// n-grams with several others, so a model that learns the full distribution
/// beats one that memorized a single draw.
inline std::vector<ScriptedTeacher::Continuation> topic_continuations(
    const std::string& topic) {
  return {
      {toks("yes , i really like " + topic + " ."), 0.30},
      {toks("yes , i like " + topic + " very much ."), 0.20},
      {toks("i like " + topic + " a lot ."), 0.12},
      {toks("yes , i do ."), 0.10},
      {toks("no , i do not like " + topic + " ."), 0.08},
      {toks("not really , i prefer something else ."), 0.08},
      {toks("what about you ?"), 0.07},
      {toks("no , not at all ."), 0.05},
  };
}

struct OneToManyWorld {
  Vocabulary vocab;
  std::unique_ptr<ScriptedTeacher> teacher;
  std::vector<ContextResponsePair> train_pairs;  // one GT draw per topic
  std::vector<ContextResponsePair> test_pairs;   // refs drawn from the true dist
};

inline OneToManyWorld make_one_to_many_world(int n_topics = 50,
                                             int test_refs_per_topic = 6,
                                             uint64_t seed = 2024) {
  OneToManyWorld world;
  const auto& topics = topic_words();
  if (n_topics > int(topics.size())) throw ConfigError("not enough topic words");

  std::vector<std::string> sentences;
  std::vector<ScriptedTeacher::Rule> rules;
  for (int i = 0; i < n_topics; ++i) {
    const std::string& topic = topics[size_t(i)];
    sentences.push_back(topic_context(topic));
    ScriptedTeacher::Rule rule;
    rule.trigger = topic;
    rule.continuations = topic_continuations(topic);
    for (const auto& c : rule.continuations) {
      std::string joined;
      for (const auto& t : c.tokens) joined += t + " ";
      sentences.push_back(joined);
    }
    rules.push_back(std::move(rule));
  }
  world.vocab = vocab_of(sentences);
  world.teacher = std::make_unique<ScriptedTeacher>(rules, world.vocab);

  Rng rng(combine_seed(seed, 0x01e0));
  for (int i = 0; i < n_topics; ++i) {
    const std::string& topic = topics[size_t(i)];
    auto conts = topic_continuations(topic);
    VectorXd weights(long(conts.size()));
    for (size_t c = 0; c < conts.size(); ++c) weights[long(c)] = conts[c].weight;

    auto draw_response = [&](Rng& r) {
      int c = r.categorical(weights);
      Utterance u;
      u.tokens = conts[size_t(c)].tokens;
      u.floor = Floor::B;
      return u;
    };

    ContextResponsePair train;
    train.pair_id = "train-" + topic;
    train.context = {utt(topic_context(topic), Floor::A)};
    train.response = draw_response(rng);
    world.train_pairs.push_back(train);

    Rng test_rng(combine_seed(seed, 0x7e57 + uint64_t(i)));
    for (int r = 0; r < test_refs_per_topic; ++r) {
      ContextResponsePair test;
      test.pair_id = "test-" + topic + "-" + std::to_string(r);
      test.context = {utt(topic_context(topic), Floor::A)};
      test.response = draw_response(test_rng);
      world.test_pairs.push_back(test);
    }
  }
  return world;
}

/// 50 distinct (context -> response) pairs for capacity sanity checks: each
/// response leads with its topic word, so the model has to route a 50-way
/// signal from the context through c into the decoder.
inline std::vector<ContextResponsePair> memorization_pairs(int n = 50) {
  const auto& topics = topic_words();
  std::vector<ContextResponsePair> pairs;
  for (int i = 0; i < n; ++i) {
    const std::string& topic = topics[size_t(i % topics.size())];
    ContextResponsePair p;
    p.pair_id = "mem-" + std::to_string(i);
    p.context = {utt("tell me about " + topic, Floor::A)};
    p.response = utt(topic + " is nice .", Floor::B);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

inline Vocabulary memorization_vocab(int n = 50) {
  std::vector<std::string> sentences;
  for (const auto& p : memorization_pairs(n)) {
    sentences.push_back(p.context[0].text());
    sentences.push_back(p.response.text());
  }
  return vocab_of(sentences);
}

/// Desk-scale schedule: budget-free epoch caps, fast KL annealing.
inline TrainSchedule desk_schedule(int max_epochs, int batch_size = 30,
                                   int64_t anneal_steps = 200) {
  TrainSchedule s;
  s.max_epochs = max_epochs;
  s.batch_size = batch_size;
  s.kl_anneal_steps = anneal_steps;
  return s;
}

}  // namespace fixtures
