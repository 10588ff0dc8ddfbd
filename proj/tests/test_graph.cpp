#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "graphalp/graph.hpp"
#include "support/tempdir.hpp"

using namespace graphalp;

namespace {

void write_small_dataset(const TempDir& dir, const std::string& edges) {
  dir.write("nodes.csv", "id,f0,f1\n0,1,0\n1,0,1\n2,1,1\n3,0,0\n");
  dir.write("edges.csv", "src,dst\n" + edges);
  dir.write("labels.csv", "id,class_index\n0,0\n1,1\n2,0\n3,1\n");
  dir.write("splits.json", R"({"train":[0,1],"val":[2],"test":[3]})");
}

Graph flat_graph(std::size_t n, int k) {
  Graph g;
  g.num_nodes = n;
  g.features = Matrix::Zero(static_cast<Eigen::Index>(n), 1);
  g.num_classes = k;
  for (std::size_t i = 0; i < n; ++i) {
    g.labels.push_back(static_cast<int>(i % static_cast<std::size_t>(k)));
    g.train_mask.push_back(static_cast<NodeId>(i));
  }
  return g;
}

std::vector<std::size_t> recount(const Graph& g) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(g.num_classes), 0);
  for (NodeId id : g.train_mask) ++counts[static_cast<std::size_t>(g.labels[id])];
  return counts;
}

}  // namespace

TEST(LoadDataset, ReversedDuplicateRowsStoreOneEdge) {
  TempDir dir;
  write_small_dataset(dir, "0,1\n1,0\n2,3\n");
  LoadReport report;
  const auto g = load_dataset(dir.path(), "csv", &report);
  ASSERT_EQ(g.edges.size(), 2u);
  EXPECT_EQ(g.edges[0], (Edge{0, 1}));
  EXPECT_EQ(report.duplicate_edges, 1u);
  EXPECT_EQ(g.num_classes, 2);
  EXPECT_EQ(g.num_features(), 2u);
}

TEST(LoadDataset, EmptyEdgeFileGivesEdgelessGraph) {
  TempDir dir;
  write_small_dataset(dir, "");
  const auto g = load_dataset(dir.path());
  EXPECT_TRUE(g.edges.empty());
  EXPECT_NO_THROW(g.validate());
  for (const auto& nbrs : adjacency_lists(g)) EXPECT_TRUE(nbrs.empty());
}

TEST(LoadDataset, SelfLoopsAreDroppedAndCounted) {
  TempDir dir;
  write_small_dataset(dir, "1,1\n0,2\n");
  LoadReport report;
  const auto g = load_dataset(dir.path(), "csv", &report);
  EXPECT_EQ(g.edges.size(), 1u);
  EXPECT_EQ(report.self_loops, 1u);
}

TEST(LoadDataset, MissingFileThrows) {
  TempDir dir;
  write_small_dataset(dir, "0,1\n");
  std::filesystem::remove(dir / "splits.json");
  EXPECT_THROW(load_dataset(dir.path()), std::exception);
}

TEST(LoadDataset, RaggedFeatureRowThrows) {
  TempDir dir;
  write_small_dataset(dir, "0,1\n");
  dir.write("nodes.csv", "id,f0,f1\n0,1,0\n1,0\n2,1,1\n3,0,0\n");
  EXPECT_THROW(load_dataset(dir.path()), std::exception);
}

TEST(LoadDataset, LabelOutsideDeclaredClassesThrows) {
  TempDir dir;
  write_small_dataset(dir, "0,1\n");
  dir.write("classes.txt", "a\nb\n");
  dir.write("labels.csv", "id,class_index\n0,0\n1,2\n2,0\n3,1\n");
  EXPECT_THROW(load_dataset(dir.path()), std::exception);
}

TEST(LoadDataset, MaskWithUnknownNodeThrows) {
  TempDir dir;
  write_small_dataset(dir, "0,1\n");
  dir.write("splits.json", R"({"train":[0,9],"val":[2],"test":[3]})");
  EXPECT_THROW(load_dataset(dir.path()), std::exception);
}

TEST(LoadDataset, UnknownFormatThrows) {
  TempDir dir;
  write_small_dataset(dir, "0,1\n");
  EXPECT_THROW(load_dataset(dir.path(), "graphml"), std::exception);
}

TEST(LoadDataset, SaveLoadRoundTripIsExact) {
  TempDir dir;
  ClusterGraphSpec spec;
  spec.num_nodes = 60;
  auto g = inject_uniform_noise(apply_step_imbalance(make_cluster_graph(spec, 3), 0.5, 6, 1, 4), 0.3, 5);
  g.texts.assign(g.num_nodes, "some text, with \"quotes\"");
  save_dataset(g, dir.path());
  EXPECT_EQ(load_dataset(dir.path()), g);
}

TEST(GraphInvariants, NeighborQueryIsSymmetric) {
  const auto g = make_cluster_graph({}, 11);
  const auto adj = adjacency_lists(g);
  for (const auto& e : g.edges) {
    EXPECT_LT(e.u, e.v);
    EXPECT_TRUE(std::binary_search(adj[e.v].begin(), adj[e.v].end(), e.u));
    EXPECT_TRUE(std::binary_search(adj[e.u].begin(), adj[e.u].end(), e.v));
  }
}

TEST(GraphInvariants, OverlappingMasksRejected) {
  auto g = flat_graph(4, 2);
  g.val_mask = {0};
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(StepImbalance, MinorityGetsScaledCount) {
  const auto base = make_cluster_graph({}, 1);
  const auto g = apply_step_imbalance(base, 0.7, 20, 1, 9);
  auto counts = recount(g);
  std::sort(counts.begin(), counts.end());
  EXPECT_EQ(counts, (std::vector<std::size_t>{14, 20, 20}));
  EXPECT_DOUBLE_EQ(imbalance_ratio(train_class_counts(g)), 0.7);
}

TEST(StepImbalance, RhoOneIsBalanced) {
  const auto g = apply_step_imbalance(make_cluster_graph({}, 1), 1.0, 20, 1, 9);
  EXPECT_EQ(recount(g), (std::vector<std::size_t>{20, 20, 20}));
  EXPECT_DOUBLE_EQ(imbalance_ratio(train_class_counts(g)), 1.0);
}

TEST(StepImbalance, RhoPointOneLeavesTwoLabels) {
  const auto g = apply_step_imbalance(make_cluster_graph({}, 2), 0.1, 20, 1, 3);
  const auto counts = recount(g);
  EXPECT_EQ(std::count(counts.begin(), counts.end(), 2u), 1);
  EXPECT_EQ(std::count(counts.begin(), counts.end(), 20u), 2);
  EXPECT_EQ(train_class_counts(g).counts, counts);
}

TEST(StepImbalance, KeepsValTestAndNodeSet) {
  const auto base = make_cluster_graph({}, 5);
  const auto g = apply_step_imbalance(base, 0.5, 10, 2, 8);
  EXPECT_EQ(g.val_mask, base.val_mask);
  EXPECT_EQ(g.test_mask, base.test_mask);
  EXPECT_EQ(g.num_nodes, base.num_nodes);
  EXPECT_EQ(g.edges, base.edges);
  for (NodeId id : g.train_mask) {
    EXPECT_FALSE(std::binary_search(g.val_mask.begin(), g.val_mask.end(), id));
    EXPECT_FALSE(std::binary_search(g.test_mask.begin(), g.test_mask.end(), id));
  }
}

TEST(StepImbalance, SameSeedSameGraph) {
  const auto base = make_cluster_graph({}, 5);
  EXPECT_EQ(apply_step_imbalance(base, 0.7, 20, 1, 42), apply_step_imbalance(base, 0.7, 20, 1, 42));
  EXPECT_NE(apply_step_imbalance(base, 0.7, 20, 1, 42).train_mask,
            apply_step_imbalance(base, 0.7, 20, 1, 43).train_mask);
}

TEST(StepImbalance, TooFewCandidatesThrows) {
  EXPECT_THROW(apply_step_imbalance(make_cluster_graph({}, 5), 0.7, 80, 1, 1), std::invalid_argument);
}

TEST(StepImbalance, RhoOutOfRangeThrows) {
  const auto base = make_cluster_graph({}, 5);
  EXPECT_THROW(apply_step_imbalance(base, 0.0, 20, 1, 1), std::invalid_argument);
  EXPECT_THROW(apply_step_imbalance(base, 1.5, 20, 1, 1), std::invalid_argument);
}

TEST(UniformNoise, ZeroProbabilityChangesNothing) {
  const auto g = flat_graph(50, 3);
  const auto noisy = inject_uniform_noise(g, 0.0, 1);
  EXPECT_EQ(noisy.labels, g.labels);
  EXPECT_TRUE(noisy.noise_mask.empty());
}

TEST(UniformNoise, ProbabilityOneFlipsEveryTrainLabel) {
  const auto g = flat_graph(50, 3);
  const auto noisy = inject_uniform_noise(g, 1.0, 1);
  for (std::size_t i = 0; i < g.num_nodes; ++i) EXPECT_NE(noisy.labels[i], g.labels[i]);
  EXPECT_EQ(noisy.noise_mask.size(), 50u);
}

TEST(UniformNoise, FlipCountWithinBinomialInterval) {
  const auto g = flat_graph(1000, 4);
  const auto noisy = inject_uniform_noise(g, 0.3, 2024);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < g.num_nodes; ++i) flipped += noisy.labels[i] != g.labels[i];
  EXPECT_GE(flipped, 237u);
  EXPECT_LE(flipped, 365u);
  EXPECT_EQ(flipped, noisy.noise_mask.size());
}

TEST(UniformNoise, OnlyTrainLabelsChange) {
  const auto base = apply_step_imbalance(make_cluster_graph({}, 7), 0.7, 20, 1, 7);
  const auto noisy = inject_uniform_noise(base, 0.5, 3);
  std::set<NodeId> train(base.train_mask.begin(), base.train_mask.end());
  std::size_t changed = 0;
  for (std::size_t i = 0; i < base.num_nodes; ++i) {
    if (noisy.labels[i] == base.labels[i]) continue;
    ++changed;
    EXPECT_TRUE(train.contains(static_cast<NodeId>(i)));
    EXPECT_EQ(noisy.clean_labels[i], base.labels[i]);
  }
  EXPECT_EQ(changed, noisy.noise_mask.size());
  EXPECT_EQ(noisy.val_mask, base.val_mask);
}

TEST(UniformNoise, SingleClassWithPositiveProbabilityThrows) {
  EXPECT_THROW(inject_uniform_noise(flat_graph(10, 1), 0.2, 1), std::invalid_argument);
  EXPECT_NO_THROW(inject_uniform_noise(flat_graph(10, 1), 0.0, 1));
}

TEST(UniformNoise, Deterministic) {
  const auto g = flat_graph(200, 5);
  EXPECT_EQ(inject_uniform_noise(g, 0.3, 9), inject_uniform_noise(g, 0.3, 9));
}

TEST(ImbalanceRatio, MinOverMax) {
  EXPECT_NEAR(imbalance_ratio(ClassCounts{{20, 20, 14}}), 0.7, 1e-15);
  EXPECT_DOUBLE_EQ(imbalance_ratio(ClassCounts{{9, 9, 9}}), 1.0);
  EXPECT_DOUBLE_EQ(imbalance_ratio(ClassCounts{{10, 0, 5}}), 0.5);
  EXPECT_THROW(imbalance_ratio(ClassCounts{{0, 0}}), std::invalid_argument);
}

TEST(ScaledCount, RoundsHalfUp) {
  EXPECT_EQ(scaled_count(0.7, 20), 14u);
  EXPECT_EQ(scaled_count(0.5, 5), 3u);
  EXPECT_EQ(scaled_count(0.1, 20), 2u);
  for (int i = 1; i <= 9; ++i) EXPECT_GE(scaled_count(i / 10.0, 20), 2u);
}

TEST(ClusterGraph, ShapeAndSplits) {
  const auto g = make_cluster_graph({}, 4);
  EXPECT_EQ(g.num_nodes, 300u);
  EXPECT_EQ(g.num_classes, 3);
  EXPECT_NO_THROW(g.validate());
  EXPECT_EQ(g.val_mask.size(), 45u);
  EXPECT_EQ(g.test_mask.size(), 90u);
  std::size_t intra = 0;
  for (const auto& e : g.edges) intra += g.labels[e.u] == g.labels[e.v];
  EXPECT_GT(intra, 3 * (g.edges.size() - intra));
}
