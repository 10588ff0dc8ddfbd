#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphalp/finetune.hpp"
#include "graphalp/graph.hpp"
#include "graphalp/llm/provider.hpp"
#include "graphalp/train_config.hpp"

namespace graphalp {

/// Invalid configuration file or value. The message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DatasetConfig {
  std::string path;
  /// "csv" reads `path`; "synthetic" generates a cluster graph from `synthetic`.
  std::string format = "csv";
  ClusterGraphSpec synthetic;
  std::uint64_t synthetic_seed = 0;
};

struct ImbalanceConfig {
  double rho = 0.7;
  std::size_t majority_per_class = 20;
  std::size_t num_minority = 3;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ImbalanceConfig imbalance;
  double noise_p = 0.3;
  llm::ProviderConfig provider;
  TrainConfig train;
  std::string output_dir = "runs";
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const ExperimentConfig& config);

/// Reads a JSON config. Syntax errors report line and column.
ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_text(const std::string& text);

/// The dataset before imbalance and noise are applied.
Graph load_base_graph(const ExperimentConfig& config);
/// Step imbalance followed by label noise, both seeded from `seed`.
Graph prepare_graph(const Graph& base, const ExperimentConfig& config, std::uint64_t seed);

/// Raised when one seed of an experiment fails.
class RunError : public std::runtime_error {
 public:
  RunError(std::uint64_t seed, const std::string& what)
      : std::runtime_error("seed " + std::to_string(seed) + ": " + what), seed_(seed) {}
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

struct SeedRun {
  std::uint64_t seed = 0;
  nlohmann::json report;
  double runtime_seconds = 0.0;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;
  nlohmann::json aggregate;
};

/// Runs every seed, writing `<output_dir>/seed_<s>/` and `<output_dir>/aggregate.json`.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Loads the dataset and probes the provider without training.
void dry_run(const ExperimentConfig& config);

/// {seeds, metrics: {name: {mean, std, values}}} over per-seed reports. std is
/// the population standard deviation.
nlohmann::json aggregate_reports(const std::vector<SeedRun>& runs);

/// Re-aggregates the seed directories found under `dir`.
nlohmann::json report_directory(const std::filesystem::path& dir);

enum class SweepAxis { kRho, kP };
SweepAxis parse_axis(const std::string& name);

struct SweepPoint {
  double value = 0.0;
  nlohmann::json aggregate;
};

/// One experiment per axis value under `<output_dir>/<axis>_<value>/` plus
/// `<output_dir>/sweep_<axis>.csv` with one row per value.
std::vector<SweepPoint> sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<double>& values);

/// Writes the prepared (imbalanced, noisy) dataset of each seed to `<out>/seed_<s>/`.
void prepare(const ExperimentConfig& config, const std::filesystem::path& out);

}  // namespace graphalp
