#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "graphalp/graph.hpp"
#include "graphalp/layers.hpp"
#include "graphalp/llm/augment.hpp"
#include "graphalp/random.hpp"
#include "graphalp/train_config.hpp"

namespace graphalp {

/// Autoencoder aligning original nodes and LM-embedded synthetic nodes.
///
/// Original rows: encoder -> feature_adapter -> ReLU -> trunk.
/// Synthetic rows: text_adapter -> ReLU -> trunk. The decoder maps latents
/// back to graph features and the edge predictor scores concatenated pairs.
struct AeModel {
  MlpParams encoder;
  MlpParams feature_adapter;
  MlpParams text_adapter;
  MlpParams trunk;
  MlpParams decoder;
  MlpParams edge_predictor;

  static AeModel create(std::size_t num_features, std::size_t text_dim, const std::vector<std::size_t>& hidden,
                        Rng& rng);

  std::size_t latent_dim() const { return trunk.output_dim(); }
  std::size_t text_dim() const { return text_adapter.input_dim(); }
  std::vector<Parameter*> parameters();
};

/// Two stacked GraphSage layers producing Z.
struct GaeModel {
  std::vector<GraphSageParams> layers;

  static GaeModel create(std::size_t num_features, const std::vector<std::size_t>& hidden, Rng& rng);

  std::size_t output_dim() const { return layers.back().output_dim(); }
  std::vector<Parameter*> parameters();
};

struct EdgeSynthesisConfig {
  double tau_edge = 0.5;
  double negative_ratio = 1.0;
  double binarize_threshold = 0.25;
};

struct AeEncoding {
  Tensor h1;  // n x d
  Tensor h2;  // g x d (invalid when g = 0)
  Tensor h;   // (n + g) x d, original rows first
};

AeEncoding ae_encode(Tape& tape, AeModel& model, const Tensor& x, const Tensor* synthetic_embeddings);

/// Latent of LM-space inputs through the synthetic branch.
Tensor ae_encode_text(Tape& tape, AeModel& model, const Tensor& embeddings);

struct AeDecoding {
  Tensor xrecon;  // (n + g) x m
  Tensor a1;      // (n + g) x (n + g)
};

AeDecoding ae_decode(Tape& tape, AeModel& model, const Tensor& h);

/// (synthetic index, original node) with cosine similarity > tau, sorted.
using CandidatePair = std::pair<int, NodeId>;

std::vector<CandidatePair> cosine_candidate_edges(const Matrix& synthetic_latent, const Matrix& original_latent,
                                                  double tau_edge);

/// Symmetrized predictor probability for each pair: mean of both concatenation orders.
Tensor edge_scores(Tape& tape, AeModel& model, const Tensor& h, std::span<const std::pair<int, int>> pairs);

/// Distinct uniform non-edge pairs among the first `num_nodes` nodes.
/// Throws std::invalid_argument when fewer than `count` non-edges exist.
std::vector<std::pair<int, int>> sample_negative_pairs(std::size_t num_nodes, std::span<const Edge> edges,
                                                       std::size_t count, Rng& rng);

struct EdgeLoss {
  Tensor loss;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// BCE of the edge predictor on original edges (target 1) and sampled non-edges (target 0).
EdgeLoss edge_predictor_loss(Tape& tape, AeModel& model, const Tensor& h, std::span<const Edge> positives,
                             std::size_t num_original, double negative_ratio, Rng& rng);

struct ScoredEdge {
  Edge edge;
  double score = 0.0;
};

/// Keeps candidate (g, v) when a1(n + g, v) * a2 > threshold. `a2_scores[i]`
/// belongs to `candidates[i]`; non-candidates have a2 = 0.
std::vector<ScoredEdge> synthesize_edges(const Matrix& a1, std::size_t num_original,
                                         std::span<const CandidatePair> candidates, std::span<const double> a2_scores,
                                         double binarize_threshold);

/// Original graph plus synthetic nodes and synthesized edges.
struct BalancedGraph {
  std::size_t num_original = 0;
  Matrix features;
  std::vector<Edge> edges;
  std::vector<int> labels;
  std::vector<NodeOrigin> origins;
  SharedSparse adjacency;

  std::size_t num_nodes() const { return labels.size(); }
  std::size_t num_synthetic() const { return num_nodes() - num_original; }
  /// Original training nodes followed by every synthetic node.
  std::vector<NodeId> labeled_ids(const Graph& original) const;
  /// Dense 0/1 adjacency restricted to original nodes.
  Matrix original_adjacency() const;
};

BalancedGraph build_balanced_graph(const Graph& graph, std::span<const llm::SyntheticNode> synthetic,
                                   std::span<const ScoredEdge> synthetic_edges, const Matrix& synthetic_features);

Tensor gae_encode(Tape& tape, GaeModel& model, const Tensor& features, const SharedSparse& adjacency);

struct ReconLoss {
  Tensor total;
  double structure = 0.0;     // L_A
  double attributes = 0.0;    // L_X
  double gae_structure = 0.0; // L_Â
};

/// alpha * L_A + beta * L_X + gamma * L_Â, each compared on the original-node block.
/// Null tensors drop their term.
ReconLoss pretrain_losses(Tape& tape, const Tensor* xrecon, const Tensor& x, const Tensor* a1, const Tensor& a,
                          const Tensor* z_decoded, double alpha, double beta, double gamma);

struct PretrainResult {
  BalancedGraph balanced;
  std::vector<CandidatePair> candidates;
  std::vector<ScoredEdge> synthetic_edges;
  std::vector<double> ae_history;
  std::vector<double> gae_history;
  double edge_loss = 0.0;
  double recon_loss = 0.0;
};

/// AE stage (L_E + alpha L_A + beta L_X, plus text-view reconstruction when
/// `original_text_embeddings` is given), edge synthesis, balanced-graph
/// construction, then GAE stage (gamma L_Â).
PretrainResult pretrain(const Graph& graph, std::span<const llm::SyntheticNode> synthetic,
                        const Matrix* original_text_embeddings, AeModel& ae, GaeModel& gae,
                        const TrainConfig& config, Rng& rng);

/// Dense n x n 0/1 adjacency of `edges`.
Matrix dense_adjacency(std::size_t num_nodes, std::span<const Edge> edges);

}  // namespace graphalp
