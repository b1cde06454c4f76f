// SPDX-License-Identifier: Apache-2.0
// mmwcs: experiment driver. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include "mmwcs/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  long long seed = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "override a config key, e.g. --set train.epochs=50");
  cmd->add_option("-o,--output-dir", c.output_dir, "output directory (overrides the config)");
  cmd->add_option("--seed", c.seed, "experiment seed (overrides the config)")->check(CLI::NonNegativeNumber);
}

mmwcs::ExperimentConfig resolve(const Common& c) {
  mmwcs::Json j = mmwcs::load_config_json(c.config_path);
  for (const auto& o : c.overrides) mmwcs::apply_override(j, o);
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  if (c.seed >= 0) j["seed"] = static_cast<std::uint64_t>(c.seed);
  try {
    return mmwcs::parse_config(j);
  } catch (const mmwcs::ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw mmwcs::ConfigError(std::string("invalid config: ") + e.what());
  }
}

std::string or_default(const std::string& given, const mmwcs::ExperimentConfig& cfg, const char* name) {
  return given.empty() ? mmwcs::out_path(cfg, name) : given;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel estimation and beam selection from beamformed measurements"};
  app.require_subcommand(1);

  Common common;
  std::string dataset, dictionary, checkpoint, report_out = "report.csv";
  std::vector<std::string> runs;

  auto* gen = app.add_subcommand("generate", "simulate UEs and write the dataset");
  add_common(gen, common);

  auto* learn = app.add_subcommand("learn-dict", "learn a dictionary from the training split");
  add_common(learn, common);
  learn->add_option("--dataset", dataset, "dataset file (default: <output-dir>/dataset.mmwt)");

  auto* train = app.add_subcommand("train", "train DLISTA and write the best checkpoint");
  add_common(train, common);
  train->add_option("--dataset", dataset, "dataset file (default: <output-dir>/dataset.mmwt)");
  train->add_option("--dictionary", dictionary, "initial dictionary (default: <output-dir>/dictionary.mmwt)");

  auto* eval = app.add_subcommand("eval", "evaluate estimators and beam selection on the test split");
  add_common(eval, common);
  eval->add_option("--dataset", dataset, "dataset file (default: <output-dir>/dataset.mmwt)");
  eval->add_option("--dictionary", dictionary, "learned dictionary for ISTA (default: the angular grid)");
  eval->add_option("--checkpoint", checkpoint, "DLISTA checkpoint, required when eval.estimators has dlista");

  auto* report = app.add_subcommand("report", "merge CDF files of finished runs into one table");
  report->add_option("runs", runs, "run directories")->required()->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    mmwcs::CommandResult res;
    if (*report) {
      res = mmwcs::cmd_report(runs, report_out, std::cout);
    } else {
      const mmwcs::ExperimentConfig cfg = resolve(common);
      if (*gen) {
        res = mmwcs::cmd_generate(cfg);
      } else if (*learn) {
        res = mmwcs::cmd_learn_dict(cfg, or_default(dataset, cfg, "dataset.mmwt"));
      } else if (*train) {
        res = mmwcs::cmd_train(cfg, or_default(dataset, cfg, "dataset.mmwt"),
                               or_default(dictionary, cfg, "dictionary.mmwt"));
      } else if (*eval) {
        res = mmwcs::cmd_eval(cfg, or_default(dataset, cfg, "dataset.mmwt"), dictionary, checkpoint);
      }
    }
    std::cout << res.summary << '\n';
    for (const auto& f : res.files) std::cout << "  " << f << '\n';
    return 0;
  } catch (const mmwcs::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
