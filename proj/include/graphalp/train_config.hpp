#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace graphalp {

/// Hyperparameters shared by pre-training and fine-tuning.
struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 5e-4;
  /// Weights of the structural (AE), attribute and GAE-structural reconstruction terms.
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  /// Pseudo-label confidence threshold (strict).
  double tau_conf = 0.9;
  /// Cosine threshold for synthetic/original candidate edges (strict).
  double tau_edge = 0.5;
  double negative_ratio = 1.0;
  double binarize_threshold = 0.25;
  /// Fraction of the largest class count minority classes are raised to; 0 disables oversampling.
  double oversample_scale = 0.8;
  int pseudo_rounds = 1;
  bool rebalance = true;
  bool class_weighting = true;
  std::vector<std::size_t> hidden_dims = {64, 128};
  std::size_t pretrain_epochs = 200;
  std::size_t pretrain_patience = 20;
  std::size_t finetune_epochs = 200;
  std::size_t finetune_patience = 50;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

}  // namespace graphalp
