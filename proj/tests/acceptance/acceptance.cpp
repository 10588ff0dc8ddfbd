// Acceptance suite: prints one PASS/FAIL line per criterion and exits non-zero
// when any criterion fails. Pass criterion numbers as arguments to run a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "graphalp/experiment.hpp"
#include "graphalp/finetune.hpp"
#include "graphalp/layers.hpp"
#include "graphalp/llm/augment.hpp"
#include "graphalp/llm/provider.hpp"
#include "graphalp/log.hpp"
#include "graphalp/metrics.hpp"
#include "graphalp/pretrain.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace graphalp;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Benchmark shared by criteria 4-8: 300-node, 3-class Gaussian cluster graph,
// intra/inter edge probability 0.1/0.01, one minority class, offline provider.

ExperimentConfig benchmark(double rho, double p, const std::filesystem::path& out) {
  ExperimentConfig c;
  c.dataset.format = "synthetic";
  c.dataset.synthetic.center_norm = 1.0;
  c.imbalance.rho = rho;
  c.imbalance.majority_per_class = 20;
  c.imbalance.num_minority = 1;
  c.noise_p = p;
  c.output_dir = out.string();
  c.seeds = {1, 2, 3, 4, 5};
  return c;
}

struct SeedOutcome {
  double macro_f1 = 0.0;
  double round1_noise = 0.0;
  std::size_t pseudo = 0;
};

struct BatchOutcome {
  std::vector<SeedOutcome> seeds;
  double seconds = 0.0;

  double mean_f1() const {
    double s = 0.0;
    for (const auto& o : seeds) s += o.macro_f1;
    return s / static_cast<double>(seeds.size());
  }
  std::vector<double> f1s() const {
    std::vector<double> v;
    for (const auto& o : seeds) v.push_back(o.macro_f1);
    return v;
  }
};

BatchOutcome run_batch(const ExperimentConfig& config) {
  const auto start = Clock::now();
  const auto result = run_experiment(config);
  BatchOutcome out;
  out.seconds = seconds_since(start);
  for (const auto& run : result.runs) {
    SeedOutcome o;
    o.macro_f1 = run.report.at("final").at("macro_f1").get<double>();
    const auto& rounds = run.report.at("rounds");
    if (rounds.size() > 1) o.round1_noise = rounds.at(1).at("noise_ratio").get<double>();
    o.pseudo = rounds.back().at("pseudo_labels").get<std::size_t>();
    out.seeds.push_back(o);
  }
  return out;
}

/// Batches keyed by a label, computed once and shared between criteria.
class BatchCache {
 public:
  explicit BatchCache(const std::filesystem::path& root) : root_(root) {}

  const BatchOutcome& get(const std::string& key, const std::function<ExperimentConfig(std::filesystem::path)>& make) {
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    std::fprintf(stderr, "  running %s ...\n", key.c_str());
    auto outcome = run_batch(make(root_ / key));
    std::fprintf(stderr, "  %s: mean macro-F1 %.4f in %.1f s\n", key.c_str(), outcome.mean_f1(), outcome.seconds);
    return cache_.emplace(key, std::move(outcome)).first->second;
  }

  const BatchOutcome& full(double rho, double p) {
    return get(fmt("full_rho%.1f_p%.1f", rho, p), [=](auto dir) { return benchmark(rho, p, dir); });
  }

 private:
  std::filesystem::path root_;
  std::map<std::string, BatchOutcome> cache_;
};

// ---------------------------------------------------------------------------
// 1. Finite-difference gradients.

Tensor project(Tape& tape, const Tensor& t, Rng& rng) {
  return ops::sum(ops::hadamard(t, tape.constant(oracle::random_matrix(t.rows(), t.cols(), rng))));
}

std::vector<Edge> random_edges(int n, Rng& rng) {
  std::vector<Edge> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.bernoulli(0.35)) edges.push_back({u, v});
  return edges;
}

Verdict gradient_suite() {
  const auto start = Clock::now();
  double worst = 0.0;
  int instances = 0;
  auto record = [&](double err) {
    worst = std::max(worst, err);
    ++instances;
  };
  for (std::uint64_t trial = 0; trial < 4; ++trial) {
    Rng rng(1000 + trial);
    const int n = 3 + static_cast<int>(rng.below(5));
    const int d = 2 + static_cast<int>(rng.below(4));
    const int k = 2 + static_cast<int>(rng.below(3));

    {  // mlp_forward
      auto mlp = MlpParams::create("m", {static_cast<std::size_t>(d), 5, 3}, rng);
      for (auto& l : mlp.layers) l.bias.value = oracle::random_matrix(1, l.bias.value.cols(), rng, 0.1);
      Parameter x{"x", oracle::random_matrix(n, d, rng)};
      auto params = mlp.parameters();
      params.push_back(&x);
      const auto seed = rng.next_u64();
      record(oracle::gradient_error(params, [&](Tape& t) {
        Rng r(seed);
        return project(t, mlp_forward(t, mlp, t.parameter(x)), r);
      }));
    }
    {  // graphsage_forward
      auto layer = GraphSageParams::create("g", static_cast<std::size_t>(d), 4, rng);
      Parameter x{"x", oracle::random_matrix(n, d, rng)};
      const auto adj = mean_adjacency(static_cast<std::size_t>(n), random_edges(n, rng));
      const auto seed = rng.next_u64();
      record(oracle::gradient_error({&layer.weight, &x}, [&](Tape& t) {
        Rng r(seed);
        return project(t, graphsage_forward(t, layer, t.parameter(x), adj), r);
      }));
    }
    {  // frobenius_loss
      Parameter a{"a", oracle::random_matrix(n, d, rng)};
      const Matrix b = oracle::random_matrix(n, d, rng);
      record(oracle::gradient_error({&a}, [&](Tape& t) { return frobenius_loss(t.parameter(a), t.constant(b)); }));
    }
    {  // weighted cross-entropy
      Parameter z{"z", oracle::random_matrix(n, k, rng, 2.0)};
      std::vector<int> rows, labels;
      std::vector<double> w;
      for (int i = 0; i < n; ++i) rows.push_back(i), labels.push_back(static_cast<int>(rng.below(k)));
      for (int c = 0; c < k; ++c) w.push_back(rng.uniform(1.0, 5.0));
      record(oracle::gradient_error({&z}, [&](Tape& t) {
        return ops::weighted_cross_entropy(t.parameter(z), rows, labels, w);
      }));
    }
    {  // binary cross-entropy
      Parameter s{"s", oracle::random_matrix(n, 1, rng)};
      std::vector<double> targets;
      for (int i = 0; i < n; ++i) targets.push_back(rng.bernoulli(0.5) ? 1.0 : 0.0);
      record(oracle::gradient_error({&s}, [&](Tape& t) {
        return ops::binary_cross_entropy(ops::sigmoid(t.parameter(s)), targets);
      }));
    }
    {  // reconstruction loss
      const int g = 1 + static_cast<int>(rng.below(3));
      Parameter h{"h", oracle::random_matrix(n + g, d, rng, 0.5)};
      Parameter xr{"xr", oracle::random_matrix(n + g, d, rng)};
      const Matrix x = oracle::random_matrix(n, d, rng);
      const Matrix a = dense_adjacency(static_cast<std::size_t>(n), random_edges(n, rng));
      record(oracle::gradient_error({&h, &xr}, [&](Tape& t) {
        auto a1 = sigmoid_inner_product(t.parameter(h));
        auto z = sigmoid_inner_product(ops::scale(t.parameter(h), 0.7));
        auto rec = t.parameter(xr);
        return pretrain_losses(t, &rec, t.constant(x), &a1, t.constant(a), &z, 1.0, 0.5, 2.0).total;
      }));
    }
    {  // finetune_loss
      Parameter z{"z", oracle::random_matrix(n + 2, k, rng, 2.0)};
      std::vector<NodeId> labeled;
      std::vector<int> labels;
      for (int i = 0; i < n; ++i) labeled.push_back(i), labels.push_back(static_cast<int>(rng.below(k)));
      PseudoLabelSet pseudo;
      pseudo.entries = {{n, static_cast<int>(rng.below(k)), 0.95}, {n + 1, static_cast<int>(rng.below(k)), 0.97}};
      std::vector<double> w;
      for (int c = 0; c < k; ++c) w.push_back(rng.uniform(1.0, 5.0));
      record(oracle::gradient_error({&z}, [&](Tape& t) {
        return finetune_loss(t.parameter(z), labeled, labels, pseudo, w);
      }));
    }
  }
  const double secs = seconds_since(start);
  return {worst < 1e-4 && instances >= 20 && secs < 30.0,
          fmt("max relative error %.2e over %d instances (limit 1e-4, >= 20); %.2f s (limit 30 s)", worst, instances,
              secs)};
}

// ---------------------------------------------------------------------------
// 2. Brute-force oracle equivalence.

Verdict oracle_suite() {
  const auto start = Clock::now();
  int instances = 0, mismatches = 0;
  double worst_real = 0.0;
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(19));  // 2..20
    const int k = 2 + static_cast<int>(rng.below(4));   // 2..5
    const int g = 1 + static_cast<int>(rng.below(5));
    const int d = 2 + static_cast<int>(rng.below(4));

    // Candidate edges.
    const Matrix syn = oracle::random_matrix(g, d, rng), orig = oracle::random_matrix(n, d, rng);
    const double tau = rng.uniform(0.0, 0.9);
    std::set<std::pair<int, int>> got;
    for (const auto& [s, v] : cosine_candidate_edges(syn, orig, tau)) got.emplace(s, v);
    mismatches += got != oracle::cosine_pairs(syn, orig, tau);

    // Edge synthesis over those candidates.
    Matrix a1(n + g, n + g);
    for (Eigen::Index i = 0; i < a1.size(); ++i) a1.data()[i] = rng.uniform();
    std::vector<CandidatePair> cands(got.begin(), got.end());
    std::vector<double> scores;
    std::map<std::pair<int, int>, double> a2;
    for (const auto& c : cands) {
      scores.push_back(rng.uniform());
      a2[c] = scores.back();
    }
    const double thr = rng.uniform(0.0, 0.6);
    std::set<std::pair<int, int>> edges;
    for (const auto& e : synthesize_edges(a1, static_cast<std::size_t>(n), cands, scores, thr))
      edges.emplace(e.edge.u, e.edge.v);
    mismatches += edges != oracle::hadamard_edges(a1, n, a2, thr);

    // Pseudo labels.
    const Matrix probs = softmax_rows(oracle::random_matrix(n, k, rng, 3.0));
    std::vector<NodeId> ids;
    for (int i = 0; i < n; ++i) ids.push_back(i);
    rng.shuffle(ids);
    PseudoLabelSet existing;
    std::set<int> taken;
    for (NodeId id : ids)
      if (rng.bernoulli(0.15)) taken.insert(id), existing.entries.push_back({id, 0, 1.0});
    std::sort(existing.entries.begin(), existing.entries.end(),
              [](const auto& a, const auto& b) { return a.node < b.node; });
    const double tau_conf = rng.uniform(0.3, 0.95);
    const auto selected = select_pseudo_labels(probs, ids, tau_conf, existing);
    std::map<int, int> fresh;
    for (const auto& e : selected.entries)
      if (!taken.contains(e.node)) fresh[e.node] = e.label;
    mismatches += fresh != oracle::confident_rows(probs, ids, tau_conf, taken);
    mismatches += selected.size() != existing.size() + fresh.size();

    // Metrics.
    std::vector<int> truth, pred;
    for (int i = 0; i < n; ++i) {
      truth.push_back(static_cast<int>(rng.below(k)));
      pred.push_back(rng.bernoulli(0.5) ? truth.back() : static_cast<int>(rng.below(k)));
    }
    const ConfusionMatrix cm(k, truth, pred);
    const auto ref = oracle::metrics_from_pairs(k, truth, pred);
    worst_real = std::max({worst_real, std::abs(accuracy(cm) - ref.accuracy), std::abs(macro_f1(cm) - ref.macro_f1),
                           std::abs(g_mean(cm) - ref.g_mean)});
    ++instances;
  }
  const double secs = seconds_since(start);
  return {mismatches == 0 && worst_real < 1e-9 && secs < 30.0,
          fmt("%d instances (n <= 20, k <= 5): %d set mismatches, max metric error %.1e (limit 1e-9); %.2f s "
              "(limit 30 s)",
              instances, mismatches, worst_real, secs)};
}

// ---------------------------------------------------------------------------
// 3. Balance at scale 1.0.

Verdict balance_property() {
  const auto config = benchmark(0.7, 0.0, "unused");
  const auto graph = prepare_graph(load_base_graph(config), config, 1);
  const auto counts = train_class_counts(graph);
  auto sorted = counts.counts;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::vector<std::size_t>{14, 20, 20}) return {false, "benchmark counts are not a permutation of [20,20,14]"};
  auto provider = llm::OfflineProvider::from_graph(graph, 1);
  std::vector<std::size_t> generated(counts.counts.size(), 0);
  const auto nodes =
      llm::synthesize_minority_nodes(*provider, {}, graph, llm::plan_oversampling(counts, 1.0), generated);
  const Matrix feats = Matrix::Zero(static_cast<Eigen::Index>(nodes.size()), graph.features.cols());
  const auto balanced = build_balanced_graph(graph, nodes, {}, feats);
  std::vector<std::size_t> after(counts.counts.size(), 0);
  for (NodeId id : balanced.labeled_ids(graph)) ++after[static_cast<std::size_t>(balanced.labels[id])];
  const double ratio = imbalance_ratio(ClassCounts{after});
  const bool equal = std::all_of(after.begin(), after.end(), [&](std::size_t c) { return c == after.front(); });
  return {equal && ratio == 1.0,
          fmt("counts [%zu,%zu,%zu] -> [%zu,%zu,%zu], imbalance ratio %.4f", counts.counts[0], counts.counts[1],
              counts.counts[2], after[0], after[1], after[2], ratio)};
}

// ---------------------------------------------------------------------------
// 4. Noise reduction after one pseudo round.

Verdict noise_reduction(BatchCache& cache) {
  const auto& full = cache.full(0.7, 0.3);
  int below = 0;
  std::string values;
  for (const auto& s : full.seeds) {
    below += s.round1_noise < 0.3;
    values += fmt("%s%.3f", values.empty() ? "" : ",", s.round1_noise);
  }
  return {below >= 4 && full.seconds < 180.0,
          fmt("noise over train+pseudo after round 1 [%s]; %d/5 seeds below 0.3 (need 4); %.1f s (limit 180 s)",
              values.c_str(), below, full.seconds)};
}

// ---------------------------------------------------------------------------
// 5. Ablations.

Verdict ablations(BatchCache& cache) {
  const auto& full = cache.full(0.7, 0.3);
  auto variant = [&](const char* name, const std::function<void(TrainConfig&)>& edit) -> const BatchOutcome& {
    return cache.get(name, [&](auto dir) {
      auto c = benchmark(0.7, 0.3, dir);
      edit(c.train);
      return c;
    });
  };
  const auto& nopl = variant("no_pseudo", [](TrainConfig& t) { t.pseudo_rounds = 0; });
  const auto& norb = variant("no_rebalance", [](TrainConfig& t) { t.rebalance = false; });
  const auto& unw = variant("uniform_weights", [](TrainConfig& t) { t.class_weighting = false; });
  const double total = full.seconds + nopl.seconds + norb.seconds + unw.seconds;
  const double f = full.mean_f1();
  const bool pass = f > nopl.mean_f1() && f > norb.mean_f1() && f > unw.mean_f1() && total < 900.0;
  return {pass, fmt("mean macro-F1 full %.4f vs no-pseudo %.4f, no-rebalance %.4f, uniform-weights %.4f; %.1f s "
                    "(limit 900 s)",
                    f, nopl.mean_f1(), norb.mean_f1(), unw.mean_f1(), total)};
}

// ---------------------------------------------------------------------------
// 6. Robustness trends.

Verdict trends(BatchCache& cache) {
  auto sweep_axis = [&](const std::vector<double>& values, bool over_p, std::vector<double>& means,
                        std::vector<double>& xs, std::vector<double>& ys) {
    for (double v : values) {
      const auto& b = over_p ? cache.full(0.7, v) : cache.full(v, 0.3);
      means.push_back(b.mean_f1());
      for (double f1 : b.f1s()) xs.push_back(v), ys.push_back(f1);
    }
  };
  std::vector<double> p_means, p_x, p_y, r_means, r_x, r_y;
  sweep_axis({0.1, 0.3, 0.5}, true, p_means, p_x, p_y);
  sweep_axis({0.3, 0.5, 0.7, 0.9}, false, r_means, r_x, r_y);
  const bool p_mono = std::is_sorted(p_means.rbegin(), p_means.rend());
  const bool r_mono = std::is_sorted(r_means.begin(), r_means.end());
  const double p_rho = oracle::spearman(p_x, p_y), r_rho = oracle::spearman(r_x, r_y);
  return {p_mono && r_mono && p_rho < 0.0 && r_rho > 0.0,
          fmt("p=0.1/0.3/0.5 -> %.4f/%.4f/%.4f (Spearman %.3f, need < 0); rho=0.3/0.5/0.7/0.9 -> "
              "%.4f/%.4f/%.4f/%.4f (Spearman %.3f, need > 0)",
              p_means[0], p_means[1], p_means[2], p_rho, r_means[0], r_means[1], r_means[2], r_means[3], r_rho)};
}

// ---------------------------------------------------------------------------
// 7. Determinism.

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism(const std::filesystem::path& root) {
  const std::vector<std::string> files{"report.json", "embeddings.csv", "synthetic_edges.csv"};
  std::vector<std::string> runs[2];
  for (int r = 0; r < 2; ++r) {
    const auto dir = root / ("determinism_" + std::to_string(r));
    auto c = benchmark(0.7, 0.3, dir);
    c.seeds = {3};
    run_experiment(c);
    for (const auto& f : files) runs[r].push_back(slurp(dir / "seed_3" / f));
  }
  const bool same = !runs[0][0].empty() && runs[0] == runs[1];
  return {same, fmt("report.json, embeddings.csv, synthetic_edges.csv %s across two runs (report %zu bytes)",
                    same ? "byte-identical" : "DIFFER", runs[0][0].size())};
}

// ---------------------------------------------------------------------------
// 8. Scale.

Verdict scale(const std::filesystem::path& root) {
  auto c = benchmark(0.7, 0.3, root / "scale");
  c.dataset.synthetic.num_nodes = 1000;
  c.seeds = {1};
  const auto b = run_batch(c);
  return {b.seconds < 300.0, fmt("1000-node run finished in %.1f s (limit 300 s), macro-F1 %.4f", b.seconds,
                                 b.seeds.front().macro_f1)};
}

}  // namespace

int main(int argc, char** argv) {
  log::set_threshold(log::Level::kError);
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto enabled = [&](int c) { return wanted.empty() || wanted.contains(c); };

  TempDir root("graphalp_acceptance");
  BatchCache cache(root.path());
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, gradient_suite},
      {2, oracle_suite},
      {3, balance_property},
      {4, [&] { return noise_reduction(cache); }},
      {5, [&] { return ablations(cache); }},
      {6, [&] { return trends(cache); }},
      {7, [&] { return determinism(root.path()); }},
      {8, [&] { return scale(root.path()); }},
  };
  int failures = 0;
  for (const auto& [id, check] : criteria) {
    if (!enabled(id)) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("criterion %d: %s  %s\n", id, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
