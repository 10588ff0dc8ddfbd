#include "graphalp/train_config.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace graphalp {
namespace {

void require(bool ok, const std::string& field, const std::string& rule) {
  if (!ok) throw std::invalid_argument(field + " " + rule);
}

bool unit_open_closed(double v) { return v > 0.0 && v <= 1.0; }

}  // namespace

void TrainConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), "train.lr", "must be positive");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), "train.weight_decay", "must be non-negative");
  require(alpha >= 0.0, "train.alpha", "must be non-negative");
  require(beta >= 0.0, "train.beta", "must be non-negative");
  require(gamma >= 0.0, "train.gamma", "must be non-negative");
  require(unit_open_closed(tau_conf), "train.tau_conf", "must lie in (0, 1]");
  require(unit_open_closed(tau_edge), "train.tau_edge", "must lie in (0, 1]");
  require(unit_open_closed(binarize_threshold), "train.binarize_threshold", "must lie in (0, 1]");
  require(negative_ratio >= 0.0, "train.negative_ratio", "must be non-negative");
  require(oversample_scale >= 0.0 && oversample_scale <= 1.0, "train.oversample_scale", "must lie in [0, 1]");
  require(pseudo_rounds >= 0, "train.pseudo_rounds", "must be >= 0");
  require(!hidden_dims.empty(), "train.hidden_dims", "must not be empty");
  for (auto d : hidden_dims) require(d > 0, "train.hidden_dims", "entries must be positive");
  require(pretrain_epochs > 0, "train.pretrain_epochs", "must be positive");
  require(finetune_epochs > 0, "train.finetune_epochs", "must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"alpha", c.alpha},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"tau_conf", c.tau_conf},
          {"tau_edge", c.tau_edge},
          {"negative_ratio", c.negative_ratio},
          {"binarize_threshold", c.binarize_threshold},
          {"oversample_scale", c.oversample_scale},
          {"pseudo_rounds", c.pseudo_rounds},
          {"rebalance", c.rebalance},
          {"class_weighting", c.class_weighting},
          {"hidden_dims", c.hidden_dims},
          {"pretrain_epochs", c.pretrain_epochs},
          {"pretrain_patience", c.pretrain_patience},
          {"finetune_epochs", c.finetune_epochs},
          {"finetune_patience", c.finetune_patience}};
}

}  // namespace graphalp
