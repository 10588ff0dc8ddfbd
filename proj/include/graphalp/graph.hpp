#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "graphalp/matrix.hpp"

namespace graphalp {

using NodeId = int;

/// Label value of a node without a class assignment.
inline constexpr int kUnlabeled = -1;

/// Whether a node came from the input graph or from synthetic oversampling.
enum class NodeOrigin { kOriginal, kSynthetic };

/// Undirected edge stored canonically with `u < v`.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Attributed, undirected, unweighted graph with per-node labels and splits.
///
/// `labels` holds the labels the learner observes; after noise injection
/// `clean_labels` keeps the ground truth and `noise_mask` lists the corrupted
/// training nodes. Masks are sorted node-id lists.
struct Graph {
  std::size_t num_nodes = 0;
  Matrix features;
  std::vector<Edge> edges;
  std::vector<int> labels;
  int num_classes = 0;
  std::vector<std::string> class_names;
  std::vector<NodeId> train_mask;
  std::vector<NodeId> val_mask;
  std::vector<NodeId> test_mask;
  std::vector<std::string> texts;
  std::vector<NodeId> noise_mask;
  std::vector<int> clean_labels;

  std::size_t num_features() const { return static_cast<std::size_t>(features.cols()); }
  bool has_texts() const { return !texts.empty(); }

  /// Ground-truth label of a node (observed label when no noise was injected).
  int true_label(NodeId id) const {
    return clean_labels.empty() ? labels[static_cast<std::size_t>(id)]
                                : clean_labels[static_cast<std::size_t>(id)];
  }

  std::string class_name(int c) const;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;

  friend bool operator==(const Graph& a, const Graph& b);
};

/// Neighbor lists (sorted) derived from the canonical edge list.
std::vector<std::vector<NodeId>> adjacency_lists(const Graph& graph);

/// Nodes outside every split; the pool pseudo labels are drawn from.
std::vector<NodeId> unlabeled_pool(const Graph& graph);

/// Per-class count of labeled training nodes.
struct ClassCounts {
  std::vector<std::size_t> counts;

  std::size_t total() const;
  std::size_t num_classes() const { return counts.size(); }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

ClassCounts train_class_counts(const Graph& graph);

/// min over non-empty classes / max class count. Throws when every count is zero.
double imbalance_ratio(const ClassCounts& counts);

struct LoadReport {
  std::size_t edge_rows = 0;
  std::size_t duplicate_edges = 0;
  std::size_t self_loops = 0;
};

/// Reads a dataset directory (`nodes.csv`, `edges.csv`, `labels.csv`,
/// `splits.json`, optional `texts.jsonl`, `classes.txt`, `clean_labels.csv`,
/// `noise.json`). The only supported format id is "csv".
Graph load_dataset(const std::filesystem::path& dir, std::string_view format_id = "csv",
                   LoadReport* report = nullptr);

/// Writes `graph` in the layout `load_dataset` reads.
void save_dataset(const Graph& graph, const std::filesystem::path& dir);

/// Canonicalizes raw edge pairs: drops self-loops, orders endpoints, dedups.
std::vector<Edge> canonical_edges(const std::vector<std::pair<NodeId, NodeId>>& raw,
                                  LoadReport* report = nullptr);

/// Redraws the training split: `majority_per_class` nodes for each class, except
/// `num_minority` randomly chosen classes which get round(rho * majority_per_class).
Graph apply_step_imbalance(const Graph& graph, double rho, std::size_t majority_per_class,
                           std::size_t num_minority, std::uint64_t seed);

/// Flips each training label with probability `p` to a uniformly drawn other class.
Graph inject_uniform_noise(const Graph& graph, double p, std::uint64_t seed);

/// round(rho * base) with halves rounded up.
std::size_t scaled_count(double rho, std::size_t base);

/// Gaussian-cluster benchmark with planted class communities.
struct ClusterGraphSpec {
  std::size_t num_nodes = 300;
  int num_classes = 3;
  std::size_t num_features = 16;
  /// Distance of each class centre from the origin, in units of the per-feature noise.
  double center_norm = 2.0;
  double feature_noise = 1.0;
  double intra_edge_prob = 0.1;
  double inter_edge_prob = 0.01;
  double val_fraction = 0.15;
  double test_fraction = 0.30;
};

Graph make_cluster_graph(const ClusterGraphSpec& spec, std::uint64_t seed);

}  // namespace graphalp
