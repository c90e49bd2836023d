#include <CLI11.hpp>

#include <iostream>

#include "formlink/cli/commands.hpp"

using namespace formlink;

namespace {

struct Common {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string data;
};

/// Config file plus command-line overrides; --mode and --seed win over the file.
RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  std::vector<std::string> errs;
  if (!c.mode.empty()) {
    if (auto m = mode_from_name(c.mode)) cfg.train.mode = *m;
    else errs.push_back("--mode must be grouping_only, linking_only or joint, got '" + c.mode + "'");
  }
  if (c.seed) cfg.set_seed(*c.seed);
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (!c.data.empty()) cfg.data_root = c.data;
  if (!errs.empty()) throw ConfigError(errs.front());
  return cfg;
}

int with_config(const Common& c, const std::function<int(const RunConfig&)>& f) {
  try {
    return f(resolve(c));
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"formlink: word grouping and key-value linking for form pages"};
  app.require_subcommand(1);
  int code = kExitOk;

  Common synth_opts;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset in FUNSD layout");
  synth->add_option("--config", synth_opts.config, "run config file")->check(CLI::ExistingFile);
  synth->add_option("--seed", synth_opts.seed, "override the config seed");
  synth->add_option("--out", synth_opts.out, "dataset root to write")->required();
  synth->callback([&] {
    code = with_config(synth_opts, [&](const RunConfig& cfg) { return cmd_synth(cfg, cfg.output_dir, std::cout, std::cerr); });
  });

  Common train_opts;
  std::string resume;
  auto* train_cmd = app.add_subcommand("train", "train a model; writes model.ckpt, history.csv and config.ini");
  train_cmd->add_option("--config", train_opts.config, "run config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--mode", train_opts.mode, "grouping_only | linking_only | joint");
  train_cmd->add_option("--seed", train_opts.seed, "override the config seed");
  train_cmd->add_option("--out", train_opts.out, "output directory (overrides output.dir)");
  train_cmd->add_option("--data", train_opts.data, "dataset root (overrides data.root)");
  train_cmd->add_option("--resume", resume, "continue from a checkpoint");
  train_cmd->callback([&] {
    code = with_config(train_opts, [&](const RunConfig& cfg) {
      TrainOptions o;
      if (!resume.empty()) o.resume = resume;
      return cmd_train(cfg, o, std::cout, std::cerr);
    });
  });

  Common eval_opts;
  EvalOptions eval;
  std::string eval_ckpt, split = "test";
  auto* eval_cmd = app.add_subcommand("eval", "report grouping accuracy, mAP, mRank and Hit@k");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
  eval_cmd->add_option("--config", eval_opts.config, "run config; its dimensions must match the checkpoint")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_opts.data, "dataset root (overrides data.root)");
  eval_cmd->add_option("--split", split, "train | test")->check(CLI::IsMember({"train", "test"}));
  eval_cmd->add_flag("--gold-segmentation", eval.gold_segmentation, "link over gold entities instead of decoded spans");
  eval_cmd->add_option("--out", eval_opts.out, "directory for the JSON report");
  eval_cmd->callback([&] {
    code = with_config(eval_opts, [&](const RunConfig& cfg) {
      eval.checkpoint = eval_ckpt;
      if (!eval_opts.config.empty()) eval.config = cfg;
      if (!cfg.data_root.empty()) eval.data_root = cfg.data_root;
      if (!cfg.output_dir.empty()) eval.out_dir = cfg.output_dir;
      eval.split = split == "train" ? Split::train : Split::test;
      return cmd_eval(eval, std::cout, std::cerr);
    });
  });

  PredictOptions pred;
  std::string pred_ckpt, pred_out;
  std::vector<std::string> inputs;
  auto* predict = app.add_subcommand("predict", "tag, group and rank links for input pages");
  predict->add_option("--checkpoint", pred_ckpt, "trained checkpoint")->required();
  predict->add_option("--out", pred_out, "directory for predictions.json (stdout otherwise)");
  predict->add_option("inputs", inputs, "page files or directories (FUNSD annotations or {\"words\": [...]})")
      ->required();
  predict->callback([&] {
    pred.checkpoint = pred_ckpt;
    for (const auto& i : inputs) pred.inputs.emplace_back(i);
    if (!pred_out.empty()) pred.out_dir = pred_out;
    code = cmd_predict(pred, std::cout, std::cerr);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  return code;
}
