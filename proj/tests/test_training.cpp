#include <catch2/catch_amalgamated.hpp>

#include "multiref/eval/metrics.hpp"
#include "multiref/training/fit.hpp"
#include "support/fixtures.hpp"

using namespace multiref;
using fixtures::desk_schedule;
using fixtures::tiny_config;
using fixtures::utt;
using fixtures::vocab_of;

namespace {

std::vector<TrainInstance> small_instances() {
  return instances_from_pairs({
      fixtures::pair_of("a b", "c d", "p0"),
      fixtures::pair_of("c", "e", "p1"),
      fixtures::pair_of("d e", "a", "p2"),
      fixtures::pair_of("b", "d c", "p3"),
  });
}

Vocabulary small_vocab() { return vocab_of({"a b c d e"}); }

ad::Matrix snapshot(const DialogueModel& model) {
  int64_t n = model.params().num_scalars();
  ad::Matrix all(n, 1);
  int64_t at = 0;
  for (const auto& p : model.params()) {
    for (int j = 0; j < p->value.cols(); ++j)
      for (int i = 0; i < p->value.rows(); ++i) all(at++, 0) = p->value(i, j);
  }
  return all;
}

}  // namespace

TEST_CASE("two fits with the same seed produce identical parameters") {
  auto vocab = small_vocab();
  auto run = [&](PriorFamily family) {
    DialogueModel model(tiny_config(vocab.size(), family, 2), vocab, 3);
    fit(model, small_instances(), small_instances(), desk_schedule(4, 2), 17);
    return snapshot(model);
  };
  CHECK(run(PriorFamily::kNone) == run(PriorFamily::kNone));
  CHECK(run(PriorFamily::kLgm) == run(PriorFamily::kLgm));
  CHECK(run(PriorFamily::kGmm) == run(PriorFamily::kGmm));
}

TEST_CASE("different seeds shuffle and perturb differently") {
  auto vocab = small_vocab();
  DialogueModel m1(tiny_config(vocab.size()), vocab, 3);
  DialogueModel m2(tiny_config(vocab.size()), vocab, 3);
  fit(m1, small_instances(), {}, desk_schedule(4, 2), 1);
  fit(m2, small_instances(), {}, desk_schedule(4, 2), 2);
  CHECK(snapshot(m1) != snapshot(m2));
}

TEST_CASE("HRED memorizes the 50-pair fixture within 500 steps") {
  // capacity sanity oracle: per-token NLL < 0.1 after 500 optimizer steps
  // (runs in ~20 s)
  auto pairs = fixtures::memorization_pairs(50);
  auto vocab = fixtures::memorization_vocab(50);
  auto config = tiny_config(vocab.size());
  config.hidden_size = 48;
  DialogueModel model(config, vocab, 1);
  auto sched = desk_schedule(250, 25);  // 2 steps/epoch
  sched.initial_lr = 0.005;
  FitResult res = fit(model, instances_from_pairs(pairs), {}, sched, 7);
  CHECK(res.final_step == 500);

  double total_nll = 0.0;
  int64_t tokens = 0;
  for (const auto& p : pairs) {
    total_nll += nll_loss(model, p.context, p.response);
    tokens += int64_t(p.response.tokens.size()) + 1;
  }
  double per_token = total_nll / double(tokens);
  INFO("per-token NLL after 500 steps: " << per_token);
  CHECK(per_token < 0.1);

  // a (near-)perfect-fit model's nll_loss approaches 0 on its best pair
  size_t best = 0;
  double best_nll = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < pairs.size(); ++i) {
    double nll = nll_loss(model, pairs[i].context, pairs[i].response) /
                 double(pairs[i].response.tokens.size() + 1);
    if (nll < best_nll) {
      best_nll = nll;
      best = i;
    }
  }
  CHECK(best_nll < 0.01);

  // and the memorizer reproduces that response greedily (BLEU-2 = 100)
  auto hyp = model.generate(pairs[best].context, GenMode::kGreedy, 0);
  CHECK(bleu2(hyp.tokens, pairs[best].response.tokens) == Catch::Approx(100.0));
}

TEST_CASE("validation log records every epoch with the expected fields") {
  auto vocab = small_vocab();
  DialogueModel model(tiny_config(vocab.size(), PriorFamily::kUnimodal), vocab, 5);
  std::vector<TrainLogEntry> seen;
  FitOptions opts;
  opts.on_validation = [&](const TrainLogEntry& e) { seen.push_back(e); };
  auto sched = desk_schedule(3, 2, /*anneal=*/4);
  FitResult res = fit(model, small_instances(), small_instances(), sched, 9, opts);

  REQUIRE(res.log.size() == 3);
  REQUIRE(seen.size() == 3);
  for (const auto& e : res.log) {
    CHECK(e.lr > 0.0);
    CHECK(std::isfinite(e.val_total));
    CHECK(std::isfinite(e.train.total));
    CHECK(e.train.kl >= 0.0);
    nlohmann::json j = to_json_entry(e);
    for (const char* key :
         {"step", "epoch", "lr", "recon", "kl", "bow", "anneal", "total", "val_total"})
      CHECK(j.contains(key));
  }
  // anneal weight ramps with the global step
  CHECK(res.log.front().train.anneal_weight <= res.log.back().train.anneal_weight);
}

TEST_CASE("fit honors max_steps and empty datasets fail loudly") {
  auto vocab = small_vocab();
  DialogueModel model(tiny_config(vocab.size()), vocab, 5);
  auto sched = desk_schedule(100, 2);
  sched.max_steps = 3;
  FitResult res = fit(model, small_instances(), {}, sched, 1);
  CHECK(res.final_step == 3);

  CHECK_THROWS_AS(fit(model, {}, {}, sched, 1), DataError);
}

TEST_CASE("early stopping fires once the learning rate decays away") {
  auto vocab = small_vocab();
  DialogueModel model(tiny_config(vocab.size()), vocab, 5);
  auto sched = desk_schedule(500, 4);
  sched.initial_lr = 1e-4;
  sched.stop_lr = 9e-5;      // one decay suffices
  sched.min_improvement = 1e9;  // nothing ever counts as an improvement
  sched.decay_patience = 1;
  FitResult res = fit(model, small_instances(), small_instances(), sched, 1);
  CHECK(res.early_stopped);
  CHECK(res.epochs_run < 500);
}

TEST_CASE("resume continues the step counter from a checkpoint") {
  auto vocab = small_vocab();
  DialogueModel model(tiny_config(vocab.size()), vocab, 5);
  FitResult first = fit(model, small_instances(), {}, desk_schedule(2, 2), 11);
  CHECK(first.final_step == 4);

  FitOptions opts;
  opts.resume = {first.final_step, first.final_adam_t};
  FitResult second = fit(model, small_instances(), {}, desk_schedule(2, 2), 11, opts);
  CHECK(second.final_step == 8);
  REQUIRE_FALSE(second.log.empty());
  CHECK(second.log.front().step > first.final_step);
}

TEST_CASE("token-kd training requires a matching plain student") {
  auto vocab = small_vocab();
  DialogueModel vhred(tiny_config(vocab.size(), PriorFamily::kUnimodal), vocab, 5);
  FitOptions opts;
  opts.mode = TrainMode::kTokenKd;
  ScriptedTeacher::Rule rule;
  rule.trigger = "";
  rule.continuations = {{fixtures::toks("c d"), 1.0}};
  ScriptedTeacher teacher({rule}, vocab);
  opts.teacher = &teacher;
  CHECK_THROWS_AS(fit(vhred, small_instances(), {}, desk_schedule(1, 2), 1, opts),
                  ConfigError);

  ScriptedTeacher other({rule}, vocab_of({"c d x"}));
  DialogueModel hred(tiny_config(vocab.size()), vocab, 5);
  opts.teacher = &other;
  CHECK_THROWS_AS(fit(hred, small_instances(), {}, desk_schedule(1, 2), 1, opts),
                  ConfigError);

  opts.teacher = nullptr;
  CHECK_THROWS_AS(fit(hred, small_instances(), {}, desk_schedule(1, 2), 1, opts),
                  ConfigError);
}

TEST_CASE("token-kd training pulls the student toward the teacher") {
  auto vocab = small_vocab();
  ScriptedTeacher::Rule rule;
  rule.trigger = "";
  rule.continuations = {{fixtures::toks("c d"), 0.6}, {fixtures::toks("e"), 0.4}};
  ScriptedTeacher teacher({rule}, vocab);

  DialogueModel model(tiny_config(vocab.size()), vocab, 5);
  ContextWindow ctx = {utt("a b", Floor::A)};

  auto kd_eval = [&]() {
    auto targets = model.target_ids(utt("c d"));
    auto t = token_distill_targets(teacher, vocab, ctx, targets);
    Graph g;
    auto enc = model.encode_context(g, ctx);
    auto s = model.decode_teacher_forcing(g, enc, std::nullopt, targets);
    return token_kd_loss_traced(s, t).scalar();
  };
  double before = kd_eval();

  FitOptions opts;
  opts.mode = TrainMode::kTokenKd;
  opts.teacher = &teacher;
  std::vector<TrainInstance> data = {{ctx, utt("c d", Floor::B)},
                                     {ctx, utt("e", Floor::B)}};
  auto sched = desk_schedule(60, 2);
  sched.initial_lr = 0.01;
  fit(model, data, {}, sched, 3, opts);
  double after = kd_eval();
  CHECK(after < before);
}

TEST_CASE("decoder gradients with zero KL and BoW weight match pure reconstruction") {
  auto vocab = small_vocab();
  auto config = tiny_config(vocab.size(), PriorFamily::kLgm, 2);
  DialogueModel model(config, vocab, 21);
  ContextWindow ctx = {utt("a b", Floor::A)};
  Utterance resp = utt("c d", Floor::B);
  VectorXd noise(config.latent_dim);
  Rng rng(5);
  for (int i = 0; i < noise.size(); ++i) noise[i] = rng.normal();

  auto decoder_grads = [&](bool with_extras) {
    model.params().zero_grad();
    Graph g;
    auto enc = model.encode_context(g, ctx);
    auto q = model.posterior_params(g, enc.c, model.encode_utterance(g, resp));
    Var z = DialogueModel::sample_gaussian_traced(g, q, noise);
    Var loss = nll_loss_traced(g, model, enc, z, resp);
    if (with_extras) {
      auto prior = model.prior_params(g, enc.c);
      Var kl = prior_kl_traced(g, q, prior, config.prior);
      Var bow = bow_loss_traced(g, model, z, enc.c, resp);
      loss = ad::add(loss, ad::add(ad::scale(kl, 0.0), ad::scale(bow, 0.0)));
    }
    g.backward(loss);
    std::vector<ad::Matrix> grads;
    for (const auto& p : model.params())
      if (p->name.rfind("dec", 0) == 0) grads.push_back(p->grad);
    return grads;
  };

  auto plain = decoder_grads(false);
  auto weighted = decoder_grads(true);
  REQUIRE(plain.size() == weighted.size());
  for (size_t i = 0; i < plain.size(); ++i)
    CHECK((plain[i] - weighted[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a trained LGM model decodes differently per latent variable") {
  // small one-to-many corpus; after training, distinct variables should
  // produce at least two distinct greedy decodes on a fixture context
  auto world = fixtures::make_one_to_many_world(8, 2, 77);
  auto config = tiny_config(world.vocab.size(), PriorFamily::kLgm, 3);
  config.hidden_size = 24;
  config.latent_dim = 6;
  DialogueModel model(config, world.vocab, 5);

  MultiRefBuildOptions build;
  build.n_hypotheses = 5;
  auto data = build_multiref_dataset(world.train_pairs, *world.teacher, build, 13);
  auto instances = instances_from_multiref(data);

  auto sched = desk_schedule(60, 10, /*anneal=*/100);
  sched.initial_lr = 0.005;
  fit(model, instances, {}, sched, 29);

  std::set<std::string> outputs;
  for (int k = 0; k < 3; ++k) {
    auto out = model.generate_with_variable(world.train_pairs[0].context, k, 3);
    outputs.insert(out.text());
  }
  CHECK(outputs.size() >= 2);
}
