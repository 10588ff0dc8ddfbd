#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphalp/graph.hpp"
#include "graphalp/layers.hpp"
#include "graphalp/llm/augment.hpp"
#include "graphalp/metrics.hpp"
#include "graphalp/pretrain.hpp"
#include "graphalp/train_config.hpp"

namespace graphalp {

struct PseudoLabel {
  NodeId node = 0;
  int label = 0;
  double confidence = 0.0;

  friend bool operator==(const PseudoLabel&, const PseudoLabel&) = default;
};

/// Accepted pseudo labels, sorted by node id.
struct PseudoLabelSet {
  std::vector<PseudoLabel> entries;
  int round = 0;
  double threshold = 0.0;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  bool contains(NodeId id) const;
  std::vector<NodeId> ids() const;
  std::vector<int> labels() const;
};

/// GraphSage head producing k logits per node.
struct ClassifierModel {
  GraphSageParams layer;

  static ClassifierModel create(std::size_t in, int num_classes, Rng& rng);
  std::vector<Parameter*> parameters() { return {&layer.weight}; }
};

Tensor classify(Tape& tape, ClassifierModel& model, const Tensor& z, const SharedSparse& adjacency);

/// max(1, N / n_i) per class. A zero count throws unless `allow_absent`,
/// in which case that class gets weight 1 (it contributes no loss terms).
std::vector<double> class_weights(const ClassCounts& counts, std::size_t total, bool allow_absent = false);

/// Adds every node of `candidate_ids` whose largest probability is strictly
/// above `tau_conf` and which is not already in `existing`. `probs` rows align
/// with `candidate_ids`. Returns the merged set with round = existing.round + 1.
PseudoLabelSet select_pseudo_labels(const Matrix& probs, std::span<const NodeId> candidate_ids, double tau_conf,
                                    const PseudoLabelSet& existing);

/// Secondary oversampling over counts that already include pseudo labels.
std::vector<llm::SyntheticNode> rebalance_after_pseudo(const ClassCounts& counts_with_pseudo, double scale,
                                                       llm::Provider& provider, const llm::PromptTemplate& tmpl,
                                                       const Graph& graph, std::vector<std::size_t>& generated_so_far);

/// Weighted CE over ground-truth rows plus weighted CE over pseudo rows.
/// Throws std::invalid_argument when a pseudo node is also in `labeled_ids`.
Tensor finetune_loss(const Tensor& logits, std::span<const NodeId> labeled_ids, std::span<const int> labels,
                     const PseudoLabelSet& pseudo, std::span<const double> weights);

/// L_E + L_recon + L_C. Throws std::invalid_argument on a non-finite component.
Tensor total_loss(const Tensor& edge, const Tensor& recon, const Tensor& classification);

/// Raised when a pipeline stage fails; the message names the stage.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct RoundReport {
  int round = 0;
  std::vector<std::size_t> class_counts;
  std::size_t synthetic_count = 0;
  std::size_t pseudo_count = 0;
  double noise_ratio = 0.0;
  double best_val_macro_f1 = 0.0;
  double total_loss = 0.0;
};

struct PipelineResult {
  std::vector<int> test_predictions;  // aligned with graph.test_mask
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double g_mean = 0.0;
  std::vector<RoundReport> rounds;
  PseudoLabelSet pseudo;
  Matrix logits;      // classifier output of the balanced graph, original rows first
  Matrix embeddings;  // Z of the balanced graph, original rows first
  std::vector<int> embedding_labels;
  std::vector<NodeOrigin> origins;
  std::vector<ScoredEdge> synthetic_edges;
  nlohmann::json report;
};

PipelineResult run_pipeline(const Graph& graph, const TrainConfig& config, llm::Provider& provider,
                            const llm::PromptTemplate& tmpl = {});

}  // namespace graphalp
