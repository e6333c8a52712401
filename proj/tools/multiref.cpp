// Command-line front end for the multi-referenced dialogue training pipeline:
//   preprocess -> gen-hyps -> train -> evaluate / analyze-latents
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 runtime failure.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "multiref/cli/commands.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "experiment config file (JSON)")
      ->required();
  cmd->add_option("--seed", flags.seed, "override the config seed");
  cmd->add_option("--out", flags.out, "override the output directory");
}

multiref::ExperimentConfig resolve(const CommonFlags& flags) {
  auto config = multiref::load_experiment_config(flags.config_path);
  if (flags.seed) config.seed = *flags.seed;
  if (flags.out) config.out_dir = *flags.out;
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-referenced training for open-domain dialogue generation"};
  app.require_subcommand(1);

  CommonFlags pre_flags, gen_flags, train_flags, eval_flags, lat_flags;

  auto* pre = app.add_subcommand("preprocess",
                                 "normalize, dedup, split, and build the vocabulary");
  add_common(pre, pre_flags);

  auto* gen = app.add_subcommand("gen-hyps",
                                 "sample teacher hypotheses into a multi-reference dataset");
  add_common(gen, gen_flags);
  std::optional<std::string> teacher_name;
  std::optional<int> gen_n_refs;
  gen->add_option("--teacher", teacher_name, "teacher to use (scripted|model)");
  gen->add_option("--n-refs", gen_n_refs, "hypotheses per context");

  auto* train = app.add_subcommand("train", "train a model on the prepared data");
  add_common(train, train_flags);
  std::optional<std::string> mode, prior, schedule_path, resume_path;
  std::optional<int> n_refs, K;
  train->add_option("--mode", mode, "training mode: gt|hyp|mixed|token-kd");
  train->add_option("--n-refs", n_refs, "references per context (epoch budget)");
  train->add_option("--prior", prior, "latent prior: none|unimodal|gmm|lgm");
  train->add_option("--K", K, "latent component count");
  train->add_option("--schedule", schedule_path, "schedule overrides (JSON file)");
  train->add_option("--resume", resume_path, "checkpoint to resume from");

  auto* eval = app.add_subcommand("evaluate", "run the automated metric suite");
  add_common(eval, eval_flags);
  std::optional<std::string> eval_ckpt;
  bool per_variable = false;
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate (default: best)");
  eval->add_flag("--per-variable", per_variable, "add per-latent-variable rows");

  auto* lat = app.add_subcommand("analyze-latents",
                                 "per-variable analysis of a GMM/LGM checkpoint");
  add_common(lat, lat_flags);
  std::optional<std::string> lat_ckpt;
  lat->add_option("--checkpoint", lat_ckpt, "checkpoint to analyze (default: best)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed()) {
      multiref::cmd_preprocess(resolve(pre_flags));
    } else if (gen->parsed()) {
      auto config = resolve(gen_flags);
      if (teacher_name) config.teacher.name = *teacher_name;
      if (gen_n_refs) config.data.n_refs = *gen_n_refs;
      multiref::cmd_gen_hypotheses(config);
    } else if (train->parsed()) {
      auto config = resolve(train_flags);
      if (mode) config.mode = multiref::parse_train_mode(*mode);
      if (n_refs) config.data.n_refs = *n_refs;
      if (prior) config.model.prior.family = multiref::parse_prior_family(*prior);
      if (K) config.model.prior.K = *K;
      if (schedule_path) {
        std::ifstream in(*schedule_path);
        if (!in) throw multiref::ConfigError("cannot open schedule: " + *schedule_path);
        nlohmann::json j = nlohmann::json::parse(in);
        multiref::from_json(j, config.schedule);
        config.use_epoch_budget = j.value("use_epoch_budget", false);
      }
      multiref::cmd_train(config, resume_path.value_or(""));
    } else if (eval->parsed()) {
      multiref::cmd_evaluate(resolve(eval_flags), eval_ckpt.value_or(""), per_variable);
    } else if (lat->parsed()) {
      multiref::cmd_analyze_latents(resolve(lat_flags), lat_ckpt.value_or(""));
    }
  } catch (const multiref::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const multiref::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
