#include "graphalp/finetune.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "graphalp/log.hpp"

namespace graphalp {
namespace {

struct FinetuneOutcome {
  double best_val_macro_f1 = 0.0;
  double loss = 0.0;
  Matrix logits;  // best validation checkpoint
  Matrix z;
  /// Logits when training stopped; these drive pseudo-label selection.
  Matrix generator_logits;
};

ClassCounts pool_counts(int num_classes, std::span<const int> labels) {
  ClassCounts counts{std::vector<std::size_t>(static_cast<std::size_t>(num_classes), 0)};
  for (int c : labels) ++counts.counts[static_cast<std::size_t>(c)];
  return counts;
}

/// Labels the classifier trains on this round: observed train labels, synthetic labels, pseudo labels.
std::vector<int> live_labels(const Graph& graph, const BalancedGraph& balanced, const PseudoLabelSet& pseudo) {
  std::vector<int> out;
  for (NodeId id : balanced.labeled_ids(graph)) out.push_back(balanced.labels[static_cast<std::size_t>(id)]);
  for (const auto& e : pseudo.entries) out.push_back(e.label);
  return out;
}

double noise_over_train_and_pseudo(const Graph& graph, const PseudoLabelSet& pseudo) {
  std::vector<int> assigned(graph.num_nodes, kUnlabeled);
  std::vector<int> truth(graph.num_nodes, kUnlabeled);
  std::vector<NodeId> ids;
  for (NodeId id : graph.train_mask) {
    assigned[id] = graph.labels[id];
    truth[id] = graph.true_label(id);
    ids.push_back(id);
  }
  for (const auto& e : pseudo.entries) {
    if (graph.true_label(e.node) == kUnlabeled) continue;
    assigned[e.node] = e.label;
    truth[e.node] = graph.true_label(e.node);
    ids.push_back(e.node);
  }
  return ids.empty() ? 0.0 : measured_noise_ratio(assigned, truth, ids);
}

double val_macro_f1(const Graph& graph, const Matrix& logits) {
  std::vector<int> truth, pred;
  const auto argmax = argmax_rows(logits);
  for (NodeId id : graph.val_mask) {
    truth.push_back(graph.true_label(id));
    pred.push_back(argmax[static_cast<std::size_t>(id)]);
  }
  return macro_f1(ConfusionMatrix(graph.num_classes, truth, pred));
}

FinetuneOutcome fine_tune(const Graph& graph, const BalancedGraph& balanced, const PseudoLabelSet& pseudo,
                          ClassifierModel& classifier, GaeModel& gae, const TrainConfig& config) {
  const auto labeled = balanced.labeled_ids(graph);
  std::vector<int> labels;
  labels.reserve(labeled.size());
  for (NodeId id : labeled) labels.push_back(balanced.labels[static_cast<std::size_t>(id)]);

  const auto counts = pool_counts(graph.num_classes, live_labels(graph, balanced, pseudo));
  const auto weights = config.class_weighting
                           ? class_weights(counts, counts.total(), true)
                           : std::vector<double>(static_cast<std::size_t>(graph.num_classes), 1.0);

  auto params = gae.parameters();
  const auto head = classifier.parameters();
  params.insert(params.end(), head.begin(), head.end());
  AdamState adam{config.lr, config.weight_decay};

  FinetuneOutcome best;
  best.best_val_macro_f1 = -1.0;
  std::vector<Matrix> snapshot;
  std::size_t stale = 0;
  for (std::size_t epoch = 0; epoch < config.finetune_epochs; ++epoch) {
    Tape tape;
    const auto z = gae_encode(tape, gae, tape.constant(balanced.features), balanced.adjacency);
    const auto logits = classify(tape, classifier, z, balanced.adjacency);
    const auto loss = finetune_loss(logits, labeled, labels, pseudo, weights);

    const double score = graph.val_mask.empty() ? 0.0 : val_macro_f1(graph, logits.value());
    log::debug("finetune epoch ", epoch, " loss ", loss.item(), " val macro-F1 ", score);
    if (score >= best.best_val_macro_f1 || graph.val_mask.empty()) {
      best.best_val_macro_f1 = score;
      best.loss = loss.item();
      best.logits = logits.value();
      best.z = z.value();
      snapshot.clear();
      for (const auto* p : params) snapshot.push_back(p->value);
      stale = 0;
    } else if (config.finetune_patience > 0 && ++stale >= config.finetune_patience) {
      break;
    }
    zero_grad(params);
    tape.backward(loss);
    adam_step(adam, params);
  }
  {
    Tape tape;
    const auto z = gae_encode(tape, gae, tape.constant(balanced.features), balanced.adjacency);
    best.generator_logits = classify(tape, classifier, z, balanced.adjacency).value();
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snapshot[i];
  return best;
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

}  // namespace

bool PseudoLabelSet::contains(NodeId id) const {
  return std::binary_search(entries.begin(), entries.end(), PseudoLabel{id, 0, 0.0},
                            [](const PseudoLabel& a, const PseudoLabel& b) { return a.node < b.node; });
}

std::vector<NodeId> PseudoLabelSet::ids() const {
  std::vector<NodeId> out;
  for (const auto& e : entries) out.push_back(e.node);
  return out;
}

std::vector<int> PseudoLabelSet::labels() const {
  std::vector<int> out;
  for (const auto& e : entries) out.push_back(e.label);
  return out;
}

ClassifierModel ClassifierModel::create(std::size_t in, int num_classes, Rng& rng) {
  if (num_classes < 1) throw std::invalid_argument("classifier needs at least one class");
  return ClassifierModel{
      GraphSageParams::create("classifier", in, static_cast<std::size_t>(num_classes), rng, Activation::kIdentity)};
}

Tensor classify(Tape& tape, ClassifierModel& model, const Tensor& z, const SharedSparse& adjacency) {
  return graphsage_forward(tape, model.layer, z, adjacency);
}

std::vector<double> class_weights(const ClassCounts& counts, std::size_t total, bool allow_absent) {
  std::vector<double> out;
  out.reserve(counts.counts.size());
  for (std::size_t c = 0; c < counts.counts.size(); ++c) {
    const auto n = counts.counts[c];
    if (n == 0) {
      if (!allow_absent) throw std::invalid_argument("class " + std::to_string(c) + " has no labeled nodes");
      out.push_back(1.0);
      continue;
    }
    out.push_back(std::max(1.0, static_cast<double>(total) / static_cast<double>(n)));
  }
  return out;
}

PseudoLabelSet select_pseudo_labels(const Matrix& probs, std::span<const NodeId> candidate_ids, double tau_conf,
                                    const PseudoLabelSet& existing) {
  if (static_cast<std::size_t>(probs.rows()) != candidate_ids.size()) {
    throw std::invalid_argument("select_pseudo_labels: one probability row per candidate required");
  }
  PseudoLabelSet out = existing;
  out.round = existing.round + 1;
  out.threshold = tau_conf;
  const auto classes = argmax_rows(probs);
  for (std::size_t i = 0; i < candidate_ids.size(); ++i) {
    const double confidence = probs(static_cast<Eigen::Index>(i), classes[i]);
    if (!(confidence > tau_conf) || existing.contains(candidate_ids[i])) continue;
    out.entries.push_back(PseudoLabel{candidate_ids[i], classes[i], confidence});
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) { return a.node < b.node; });
  const auto dup = std::adjacent_find(out.entries.begin(), out.entries.end(),
                                      [](const auto& a, const auto& b) { return a.node == b.node; });
  if (dup != out.entries.end()) throw std::invalid_argument("candidate id " + std::to_string(dup->node) + " repeated");
  return out;
}

std::vector<llm::SyntheticNode> rebalance_after_pseudo(const ClassCounts& counts_with_pseudo, double scale,
                                                       llm::Provider& provider, const llm::PromptTemplate& tmpl,
                                                       const Graph& graph, std::vector<std::size_t>& generated_so_far) {
  const auto plan = llm::plan_oversampling(counts_with_pseudo, scale);
  return llm::synthesize_minority_nodes(provider, tmpl, graph, plan, generated_so_far);
}

Tensor finetune_loss(const Tensor& logits, std::span<const NodeId> labeled_ids, std::span<const int> labels,
                     const PseudoLabelSet& pseudo, std::span<const double> weights) {
  std::vector<NodeId> sorted(labeled_ids.begin(), labeled_ids.end());
  std::sort(sorted.begin(), sorted.end());
  for (const auto& e : pseudo.entries) {
    if (std::binary_search(sorted.begin(), sorted.end(), e.node)) {
      throw std::invalid_argument("node " + std::to_string(e.node) + " is both labeled and pseudo-labeled");
    }
  }
  const auto truth = ops::weighted_cross_entropy(logits, labeled_ids, labels, weights);
  if (pseudo.empty()) return truth;
  const auto ids = pseudo.ids();
  const auto plabels = pseudo.labels();
  return ops::add(truth, ops::weighted_cross_entropy(logits, ids, plabels, weights));
}

Tensor total_loss(const Tensor& edge, const Tensor& recon, const Tensor& classification) {
  for (const auto* t : {&edge, &recon, &classification}) {
    if (!std::isfinite(t->item())) throw std::invalid_argument("total_loss: non-finite component");
  }
  return ops::add(ops::add(edge, recon), classification);
}

PipelineResult run_pipeline(const Graph& graph, const TrainConfig& config, llm::Provider& provider,
                            const llm::PromptTemplate& tmpl) {
  stage("validate", [&] {
    config.validate();
    graph.validate();
    if (graph.num_classes < 1) throw std::invalid_argument("graph has no classes");
  });
  const auto m = graph.num_features();
  Rng init_rng(derive_seed(config.seed, "init"));
  Rng train_rng(derive_seed(config.seed, "train"));
  const bool oversample = config.oversample_scale > 0.0;

  std::vector<std::size_t> generated(static_cast<std::size_t>(graph.num_classes), 0);
  std::vector<llm::SyntheticNode> synthetic;
  if (oversample) {
    synthetic = stage("oversample", [&] {
      const auto plan = llm::plan_oversampling(train_class_counts(graph), config.oversample_scale);
      return llm::synthesize_minority_nodes(provider, tmpl, graph, plan, generated);
    });
  }

  const auto text_dim = synthetic.empty() ? m : synthetic.front().embedding.size();
  AeModel ae = AeModel::create(m, text_dim, config.hidden_dims, init_rng);
  GaeModel gae = GaeModel::create(m, config.hidden_dims, init_rng);
  ClassifierModel classifier = ClassifierModel::create(gae.output_dim(), graph.num_classes, init_rng);

  // Text-view reconstruction target: embeddings of the original node texts, or
  // the features themselves when the embedding space is the feature space.
  std::optional<Matrix> original_text;
  if (!synthetic.empty()) {
    original_text = stage("embed-original", [&]() -> std::optional<Matrix> {
      const bool all_texts = graph.has_texts() && std::none_of(graph.texts.begin(), graph.texts.end(),
                                                               [](const std::string& t) { return t.empty(); });
      if (all_texts) return llm::embed_texts(provider, graph.texts);
      if (text_dim == m) return graph.features;
      return std::nullopt;
    });
  }

  const auto pool = unlabeled_pool(graph);
  PseudoLabelSet pseudo;
  pseudo.threshold = config.tau_conf;
  PipelineResult result;
  FinetuneOutcome outcome;
  PretrainResult pre;

  for (int round = 0; round <= config.pseudo_rounds; ++round) {
    if (round > 0 && config.rebalance && oversample) {
      auto fresh = stage("rebalance", [&] {
        std::vector<int> labels;
        for (NodeId id : graph.train_mask) labels.push_back(graph.labels[id]);
        for (const auto& s : synthetic) labels.push_back(s.label);
        for (const auto& e : pseudo.entries) labels.push_back(e.label);
        return rebalance_after_pseudo(pool_counts(graph.num_classes, labels), config.oversample_scale, provider, tmpl,
                                      graph, generated);
      });
      for (auto& s : fresh) synthetic.push_back(std::move(s));
    }
    if (!synthetic.empty() && synthetic.front().embedding.size() != ae.text_dim()) {
      log::warn("embedding width changed to ", synthetic.front().embedding.size(), "; reinitializing text adapter");
      ae.text_adapter = MlpParams::create("ae.text_adapter", {synthetic.front().embedding.size(), ae.latent_dim()},
                                          init_rng);
    }
    const Matrix* text_view =
        original_text && static_cast<std::size_t>(original_text->cols()) == ae.text_dim() ? &*original_text : nullptr;

    pre = stage("pretrain", [&] { return pretrain(graph, synthetic, text_view, ae, gae, config, train_rng); });
    outcome = stage("finetune", [&] { return fine_tune(graph, pre.balanced, pseudo, classifier, gae, config); });

    RoundReport report;
    report.round = round;
    report.class_counts = pool_counts(graph.num_classes, live_labels(graph, pre.balanced, pseudo)).counts;
    report.synthetic_count = synthetic.size();
    report.pseudo_count = pseudo.size();
    report.noise_ratio = noise_over_train_and_pseudo(graph, pseudo);
    report.best_val_macro_f1 = outcome.best_val_macro_f1;
    {
      Tape tape;
      report.total_loss = total_loss(tape.constant(Matrix::Constant(1, 1, pre.edge_loss)),
                                     tape.constant(Matrix::Constant(1, 1, pre.recon_loss)),
                                     tape.constant(Matrix::Constant(1, 1, outcome.loss)))
                              .item();
    }
    result.rounds.push_back(report);

    if (round < config.pseudo_rounds) {
      pseudo = stage("pseudo-label", [&] {
        Matrix probs(static_cast<Eigen::Index>(pool.size()), graph.num_classes);
        const Matrix all = softmax_rows(outcome.generator_logits);
        for (std::size_t i = 0; i < pool.size(); ++i) probs.row(static_cast<Eigen::Index>(i)) = all.row(pool[i]);
        return select_pseudo_labels(probs, pool, config.tau_conf, pseudo);
      });
    }
  }

  const auto predictions = argmax_rows(outcome.logits);
  std::vector<int> truth;
  for (NodeId id : graph.test_mask) {
    truth.push_back(graph.true_label(id));
    result.test_predictions.push_back(predictions[static_cast<std::size_t>(id)]);
  }
  result.confusion = ConfusionMatrix(graph.num_classes, truth, result.test_predictions);
  if (result.confusion.total() > 0) {
    result.accuracy = accuracy(result.confusion);
    result.macro_f1 = macro_f1(result.confusion);
    result.g_mean = g_mean(result.confusion);
  }
  result.pseudo = pseudo;
  result.logits = outcome.logits;
  result.embeddings = outcome.z;
  result.embedding_labels = pre.balanced.labels;
  result.origins = pre.balanced.origins;
  result.synthetic_edges = pre.synthetic_edges;

  nlohmann::json rounds = nlohmann::json::array();
  for (const auto& r : result.rounds) {
    rounds.push_back({{"round", r.round},
                      {"class_counts", r.class_counts},
                      {"synthetic_nodes", r.synthetic_count},
                      {"pseudo_labels", r.pseudo_count},
                      {"noise_ratio", r.noise_ratio},
                      {"best_val_macro_f1", r.best_val_macro_f1},
                      {"total_loss", r.total_loss}});
  }
  auto config_echo = to_json(config);
  config_echo["seed"] = config.seed;
  result.report = {{"config", config_echo},
                   {"provider", provider.id()},
                   {"rounds", rounds},
                   {"synthetic_edges", result.synthetic_edges.size()},
                   {"final",
                    {{"accuracy", result.accuracy},
                     {"macro_f1", result.macro_f1},
                     {"g_mean", result.g_mean},
                     {"accuracy_pct", format_percent(result.accuracy)},
                     {"macro_f1_pct", format_percent(result.macro_f1)},
                     {"g_mean_pct", format_percent(result.g_mean)},
                     {"confusion", result.confusion.rows()}}}};
  return result;
}

}  // namespace graphalp
