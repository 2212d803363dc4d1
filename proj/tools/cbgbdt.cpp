#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cbgbdt/cli.hpp"

namespace {

// Turns leftover `--a.b value` / `--a.b=value` arguments into overrides.
std::vector<cbgbdt::Override> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<cbgbdt::Override> out;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0 || arg.size() < 3) throw cbgbdt::ConfigError("unexpected argument '" + arg + "'");
    const std::string body = arg.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else {
      if (i + 1 >= extras.size()) throw cbgbdt::ConfigError("override '" + arg + "' needs a value");
      out.emplace_back(body, extras[++i]);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gradient boosting with class-balanced losses"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_extras();

  std::vector<std::string> configs;
  std::string seed, threads, out;
  app.add_option("--config", configs, "JSON config file (repeatable; later files override earlier ones)");
  app.add_option("--seed", seed, "Global seed");
  app.add_option("--threads", threads, "Worker threads");
  app.add_option("--out", out, "Output directory");

  auto* train = app.add_subcommand("train", "Fit one model with fixed parameters");
  auto* sweep = app.add_subcommand("sweep", "Search and evaluate every (dataset, profile, loss) cell");
  train->allow_extras();
  sweep->allow_extras();

  auto* predict = app.add_subcommand("predict", "Write class probabilities for a data file");
  std::string model_path, data_path, pred_path, format = "csv";
  predict->add_option("--model", model_path, "Model JSON")->required();
  predict->add_option("--data", data_path, "Input data")->required();
  predict->add_option("--output", pred_path, "Output CSV")->required();
  predict->add_option("--format", format, "Input format: csv or libsvm");

  auto* report = app.add_subcommand("report", "BMP/CMP improvement report from summary CSVs");
  std::vector<std::string> summaries;
  report->add_option("summaries", summaries, "Summary CSV files")->required();

  auto* gencheck = app.add_subcommand("gencheck", "Check loss gradients and reduction identities");
  cbgbdt::GencheckOptions gc;
  gencheck->add_option("--draws", gc.draws, "Random draws per (loss, task)");
  gencheck->add_option("--check-seed", gc.seed, "Seed for the random draws");
  gencheck->add_option("--fault-wce-grad", gc.wce_grad_scale)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    auto global_overrides = [&](std::vector<std::string> extras) {
      const auto top = app.remaining();
      extras.insert(extras.begin(), top.begin(), top.end());
      std::vector<cbgbdt::Override> ov = parse_overrides(extras);
      if (!seed.empty()) ov.emplace_back("seed", seed);
      if (!threads.empty()) ov.emplace_back("threads", threads);
      if (!out.empty()) ov.emplace_back("output", "\"" + out + "\"");
      return ov;
    };
    if (*train) {
      cbgbdt::cmd_train(cbgbdt::load_config(configs, global_overrides(train->remaining())), std::cout);
    } else if (*sweep) {
      cbgbdt::cmd_sweep(cbgbdt::load_config(configs, global_overrides(sweep->remaining())), std::cout);
    } else if (!app.remaining().empty()) {
      throw cbgbdt::ConfigError("unexpected argument '" + app.remaining().front() + "'");
    } else if (*predict) {
      cbgbdt::cmd_predict(model_path, data_path, pred_path, format, std::cout);
    } else if (*report) {
      cbgbdt::cmd_report(summaries, out.empty() ? "." : out, std::cout);
    } else if (*gencheck) {
      if (!seed.empty()) gc.seed = std::stoull(seed);
      return cbgbdt::cmd_gencheck(gc, std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cbgbdt::exit_code_for(e);
  }
  return 0;
}
