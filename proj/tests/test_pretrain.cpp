#include <gtest/gtest.h>

#include <map>
#include <set>

#include "graphalp/llm/augment.hpp"
#include "graphalp/llm/provider.hpp"
#include "graphalp/log.hpp"
#include "graphalp/pretrain.hpp"
#include "support/oracles.hpp"

using namespace graphalp;

namespace {

Graph small_benchmark(std::uint64_t seed, std::size_t n = 90) {
  ClusterGraphSpec spec;
  spec.num_nodes = n;
  spec.num_features = 8;
  spec.intra_edge_prob = 0.2;
  spec.inter_edge_prob = 0.02;
  return apply_step_imbalance(make_cluster_graph(spec, seed), 0.5, 10, 1, seed);
}

std::vector<llm::SyntheticNode> offline_nodes(const Graph& g, double scale) {
  auto provider = llm::OfflineProvider::from_graph(g, 7);
  std::vector<std::size_t> generated(static_cast<std::size_t>(g.num_classes), 0);
  const auto plan = llm::plan_oversampling(train_class_counts(g), scale);
  return llm::synthesize_minority_nodes(*provider, {}, g, plan, generated);
}

}  // namespace

TEST(CandidateEdges, MatchBruteForce) {
  Rng rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = 1 + static_cast<Eigen::Index>(rng.below(5));
    const auto n = 2 + static_cast<Eigen::Index>(rng.below(18));
    Matrix syn = oracle::random_matrix(g, 3, rng);
    Matrix orig = oracle::random_matrix(n, 3, rng);
    orig.row(0).setZero();
    const double tau = rng.uniform(-0.5, 0.9);
    std::set<std::pair<int, int>> got;
    for (const auto& [s, v] : cosine_candidate_edges(syn, orig, tau)) got.emplace(s, v);
    EXPECT_EQ(got, oracle::cosine_pairs(syn, orig, tau)) << "trial " << trial;
  }
}

TEST(CandidateEdges, SortedAndStrictThreshold) {
  Matrix syn(1, 2), orig(2, 2);
  syn << 1, 0;
  orig << 1, 0, 0, 1;
  EXPECT_TRUE(cosine_candidate_edges(syn, orig, 1.0).empty());
  const auto pairs = cosine_candidate_edges(syn, orig, -0.5);
  EXPECT_EQ(pairs, (std::vector<CandidatePair>{{0, 0}, {0, 1}}));
}

TEST(SynthesizeEdges, MatchDenseHadamardOracle) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(14));
    const int g = 1 + static_cast<int>(rng.below(5));
    Matrix a1(n + g, n + g);
    for (Eigen::Index i = 0; i < a1.size(); ++i) a1.data()[i] = rng.uniform();
    std::vector<CandidatePair> cands;
    std::vector<double> scores;
    std::map<std::pair<int, int>, double> a2;
    for (int s = 0; s < g; ++s)
      for (int v = 0; v < n; ++v)
        if (rng.bernoulli(0.5)) {
          cands.emplace_back(s, v);
          scores.push_back(rng.uniform());
          a2[{s, v}] = scores.back();
        }
    const double thr = rng.uniform(0.0, 0.5);
    std::set<std::pair<int, int>> got;
    for (const auto& e : synthesize_edges(a1, static_cast<std::size_t>(n), cands, scores, thr)) {
      got.emplace(e.edge.u, e.edge.v);
      EXPECT_NEAR(e.score, a1(e.edge.v, e.edge.u) * a2.at({e.edge.v - n, e.edge.u}), 1e-15);
    }
    const auto expected = oracle::hadamard_edges(a1, n, a2, thr);
    EXPECT_EQ(got, expected) << "trial " << trial;
    // Every kept edge is a candidate.
    for (const auto& [u, v] : got) EXPECT_TRUE(a2.contains({v - n, u}));
  }
}

TEST(SynthesizeEdges, MismatchedScoresThrow) {
  const Matrix a1 = Matrix::Ones(3, 3);
  const std::vector<CandidatePair> cands{{0, 0}};
  const std::vector<double> scores{0.5, 0.5};
  EXPECT_ANY_THROW(synthesize_edges(a1, 2, cands, scores, 0.1));
}

TEST(EdgeScores, SymmetricInPairOrder) {
  Rng rng(8);
  auto ae = AeModel::create(6, 6, {8, 8}, rng);
  Tape tape;
  const auto h = tape.constant(oracle::random_matrix(5, static_cast<Eigen::Index>(ae.latent_dim()), rng));
  const std::vector<std::pair<int, int>> fwd{{0, 1}, {2, 4}, {3, 0}}, rev{{1, 0}, {4, 2}, {0, 3}};
  const Matrix a = edge_scores(tape, ae, h, fwd).value();
  const Matrix b = edge_scores(tape, ae, h, rev).value();
  EXPECT_TRUE(a.isApprox(b, 1e-14));
  EXPECT_GT(a.minCoeff(), 0.0);
  EXPECT_LT(a.maxCoeff(), 1.0);
}

TEST(EdgeScores, Gradient) {
  Rng rng(9);
  auto ae = AeModel::create(4, 4, {5, 6}, rng);
  Parameter h{"h", oracle::random_matrix(4, static_cast<Eigen::Index>(ae.latent_dim()), rng)};
  const std::vector<std::pair<int, int>> pairs{{0, 1}, {2, 3}, {1, 3}};
  const std::vector<double> targets{1, 0, 1};
  auto params = ae.edge_predictor.parameters();
  params.push_back(&h);
  EXPECT_LT(oracle::gradient_error(params, [&](Tape& t) {
              return ops::binary_cross_entropy(edge_scores(t, ae, t.parameter(h), pairs), targets);
            }), 1e-6);
}

TEST(NegativeSampling, ReturnsDistinctNonEdges) {
  Rng rng(1);
  const std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}};
  const auto pairs = sample_negative_pairs(6, edges, 8, rng);
  ASSERT_EQ(pairs.size(), 8u);
  std::set<std::pair<int, int>> seen;
  for (auto [a, b] : pairs) {
    EXPECT_NE(a, b);
    const Edge e{std::min(a, b), std::max(a, b)};
    EXPECT_EQ(std::find(edges.begin(), edges.end(), e), edges.end());
    EXPECT_TRUE(seen.emplace(e.u, e.v).second);
  }
}

TEST(NegativeSampling, TooDenseThrows) {
  Rng rng(1);
  const std::vector<Edge> edges{{0, 1}, {0, 2}};
  EXPECT_THROW(sample_negative_pairs(3, edges, 2, rng), std::invalid_argument);
}

TEST(ReconLoss, WeightedSumOfUnitTerms) {
  Tape tape;
  const Matrix a = Matrix::Zero(2, 2);
  Matrix a1 = Matrix::Zero(3, 3), zdec = Matrix::Zero(3, 3), xrec = Matrix::Zero(3, 2);
  a1(0, 1) = 1.0;
  zdec(1, 1) = 1.0;
  xrec(1, 0) = 1.0;
  a1(2, 2) = 5.0;  // outside the original block, ignored
  xrec(2, 1) = 5.0;
  const auto ta1 = tape.constant(a1), tz = tape.constant(zdec), tx = tape.constant(xrec);
  const auto loss = pretrain_losses(tape, &tx, tape.constant(Matrix::Zero(2, 2)), &ta1, tape.constant(a), &tz, 2, 3, 4);
  EXPECT_DOUBLE_EQ(loss.total.item(), 9.0);
  EXPECT_DOUBLE_EQ(loss.structure, 1.0);
  EXPECT_DOUBLE_EQ(loss.attributes, 1.0);
  EXPECT_DOUBLE_EQ(loss.gae_structure, 1.0);
  EXPECT_THROW(pretrain_losses(tape, &tx, tape.constant(Matrix::Zero(2, 2)), &ta1, tape.constant(a), &tz, -1, 1, 1),
               std::invalid_argument);
}

TEST(ReconLoss, Gradient) {
  Rng rng(4);
  Parameter x{"x", oracle::random_matrix(4, 3, rng)};
  Parameter h{"h", oracle::random_matrix(4, 2, rng)};
  const Matrix a = dense_adjacency(3, std::vector<Edge>{{0, 1}, {1, 2}});
  const Matrix target = oracle::random_matrix(3, 3, rng);
  EXPECT_LT(oracle::gradient_error({&x, &h}, [&](Tape& t) {
              auto xr = t.parameter(x);
              auto a1 = sigmoid_inner_product(t.parameter(h));
              auto z = sigmoid_inner_product(ops::scale(t.parameter(h), 0.5));
              return pretrain_losses(t, &xr, t.constant(target), &a1, t.constant(a), &z, 1.0, 0.5, 2.0).total;
            }), 1e-6);
}

TEST(BalancedGraph, NoSyntheticNodesIsIdentity) {
  const auto g = small_benchmark(3);
  const auto b = build_balanced_graph(g, {}, {}, Matrix(0, g.features.cols()));
  EXPECT_EQ(b.num_synthetic(), 0u);
  EXPECT_EQ(b.features, g.features);
  EXPECT_EQ(b.edges, g.edges);
  EXPECT_EQ(b.labels, g.labels);
  EXPECT_EQ(b.labeled_ids(g), g.train_mask);
  EXPECT_EQ(b.original_adjacency(), dense_adjacency(g.num_nodes, g.edges));
}

TEST(BalancedGraph, RejectsSyntheticToSyntheticEdge) {
  const auto g = small_benchmark(3);
  const auto nodes = offline_nodes(g, 1.0);
  ASSERT_GE(nodes.size(), 2u);
  const auto n = static_cast<NodeId>(g.num_nodes);
  const std::vector<ScoredEdge> bad{{{n, n + 1}, 0.9}};
  const Matrix feats = Matrix::Zero(static_cast<Eigen::Index>(nodes.size()), g.features.cols());
  EXPECT_THROW(build_balanced_graph(g, nodes, bad, feats), std::invalid_argument);
}

TEST(BalancedGraph, FullScaleEqualizesLabeledCounts) {
  const auto g = small_benchmark(4);
  const auto nodes = offline_nodes(g, 1.0);
  const Matrix feats = Matrix::Zero(static_cast<Eigen::Index>(nodes.size()), g.features.cols());
  const auto b = build_balanced_graph(g, nodes, {}, feats);
  std::vector<std::size_t> counts(static_cast<std::size_t>(g.num_classes), 0);
  for (NodeId id : b.labeled_ids(g)) ++counts[static_cast<std::size_t>(b.labels[id])];
  EXPECT_EQ(counts, std::vector<std::size_t>(counts.size(), 10u));
  EXPECT_DOUBLE_EQ(imbalance_ratio(ClassCounts{counts}), 1.0);
}

TEST(Pretrain, LossesDecreaseAndEdgesAreValid) {
  log::set_threshold(log::Level::kError);
  const auto g = small_benchmark(6);
  const auto nodes = offline_nodes(g, 1.0);
  TrainConfig cfg;
  cfg.pretrain_epochs = 50;
  cfg.pretrain_patience = 50;
  cfg.hidden_dims = {16, 16};
  Rng rng(2);
  auto ae = AeModel::create(g.num_features(), g.num_features(), cfg.hidden_dims, rng);
  auto gae = GaeModel::create(g.num_features(), cfg.hidden_dims, rng);
  const auto result = pretrain(g, nodes, nullptr, ae, gae, cfg, rng);
  ASSERT_EQ(result.ae_history.size(), 50u);
  EXPECT_LT(result.ae_history.back(), result.ae_history.front());
  EXPECT_LT(result.gae_history.back(), result.gae_history.front());
  EXPECT_EQ(result.balanced.num_synthetic(), nodes.size());
  std::set<std::pair<int, int>> cands;
  for (const auto& [s, v] : result.candidates) cands.emplace(s, v);
  for (const auto& e : result.synthetic_edges) {
    EXPECT_TRUE(cands.contains({e.edge.v - static_cast<int>(g.num_nodes), e.edge.u}));
    EXPECT_GT(e.score, cfg.binarize_threshold);
  }
}

TEST(Pretrain, SameSeedSameResult) {
  log::set_threshold(log::Level::kError);
  const auto g = small_benchmark(6);
  const auto nodes = offline_nodes(g, 1.0);
  TrainConfig cfg;
  cfg.pretrain_epochs = 10;
  cfg.hidden_dims = {8, 8};
  auto once = [&] {
    Rng rng(11);
    auto ae = AeModel::create(g.num_features(), g.num_features(), cfg.hidden_dims, rng);
    auto gae = GaeModel::create(g.num_features(), cfg.hidden_dims, rng);
    return pretrain(g, nodes, nullptr, ae, gae, cfg, rng);
  };
  const auto a = once(), b = once();
  EXPECT_EQ(a.ae_history, b.ae_history);
  EXPECT_EQ(a.balanced.features, b.balanced.features);
  EXPECT_EQ(a.balanced.edges, b.balanced.edges);
}
