#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "graphalp/experiment.hpp"
#include "graphalp/log.hpp"

namespace {

std::vector<double> parse_values(const std::string& text) {
  if (text.empty()) throw graphalp::ConfigError("--values needs at least one value");
  std::vector<double> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size()) throw graphalp::ConfigError("bad sweep value \"" + item + "\"");
    values.push_back(v);
  }
  return values;
}

void print_aggregate(const nlohmann::json& aggregate) {
  for (const auto& [name, m] : aggregate.at("metrics").items()) {
    std::cout << name << ": mean " << m.at("mean").get<double>() << ", std " << m.at("std").get<double>() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GraphALP: LLM-assisted oversampling and pseudo-labeling for imbalanced, noisy graphs"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  std::string config_path;
  bool dry = false;
  auto* run = app.add_subcommand("run", "Run every configured seed and aggregate");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_flag("--dry-run", dry, "Validate the config and probe the provider only");

  std::string axis_name, values_text;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run one experiment per value of rho or p");
  sweep_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--axis", axis_name, "rho or p")->required();
  sweep_cmd->add_option("--values", values_text, "Comma separated values")->required();

  std::string out_dir;
  auto* prepare_cmd = app.add_subcommand("prepare", "Write the imbalanced, noisy dataset of each seed");
  prepare_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  prepare_cmd->add_option("--out", out_dir, "Output directory")->required();

  std::string report_dir;
  auto* report_cmd = app.add_subcommand("report", "Re-aggregate the seed directories of a finished run");
  report_cmd->add_option("--dir", report_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  if (verbose) graphalp::log::set_threshold(graphalp::log::Level::kInfo);

  try {
    if (*run) {
      const auto config = graphalp::parse_config(config_path);
      if (dry) {
        graphalp::dry_run(config);
        std::cout << "config ok; provider reachable\n";
        return 0;
      }
      print_aggregate(graphalp::run_experiment(config).aggregate);
    } else if (*sweep_cmd) {
      const auto config = graphalp::parse_config(config_path);
      const auto axis = graphalp::parse_axis(axis_name);
      for (const auto& point : graphalp::sweep(config, axis, parse_values(values_text))) {
        std::cout << axis_name << '=' << point.value << '\n';
        print_aggregate(point.aggregate);
      }
    } else if (*prepare_cmd) {
      graphalp::prepare(graphalp::parse_config(config_path), out_dir);
    } else if (*report_cmd) {
      print_aggregate(graphalp::report_directory(report_dir));
    }
  } catch (const graphalp::ConfigError& e) {
    std::cerr << "graphalp: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "graphalp: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
