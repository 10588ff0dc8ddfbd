#include "graphalp/pretrain.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "graphalp/log.hpp"

namespace graphalp {
namespace {

std::uint64_t pair_key(int a, int b, std::size_t n) {
  if (a > b) std::swap(a, b);
  return static_cast<std::uint64_t>(a) * n + static_cast<std::uint64_t>(b);
}

Tensor latent_from(Tape& tape, AeModel& model, MlpParams& adapter, const Tensor& input) {
  return mlp_forward(tape, model.trunk, ops::relu(mlp_forward(tape, adapter, input)));
}

/// Tracks a loss history and reports a plateau of `patience` epochs.
class PlateauStop {
 public:
  explicit PlateauStop(std::size_t patience) : patience_(patience) {}

  bool update(double loss) {
    if (!std::isfinite(best_) || loss < best_ - 1e-6 * std::abs(best_)) {
      best_ = loss;
      stale_ = 0;
      return false;
    }
    return patience_ > 0 && ++stale_ >= patience_;
  }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace

AeModel AeModel::create(std::size_t num_features, std::size_t text_dim, const std::vector<std::size_t>& hidden,
                        Rng& rng) {
  if (hidden.empty()) throw std::invalid_argument("autoencoder needs at least one hidden size");
  const auto latent = hidden.back();
  std::vector<std::size_t> enc_dims{num_features};
  enc_dims.insert(enc_dims.end(), hidden.begin(), hidden.end());
  std::vector<std::size_t> dec_dims(hidden.rbegin(), hidden.rend());
  dec_dims.push_back(num_features);
  const std::size_t edge_hidden = hidden.front();

  AeModel model;
  model.encoder = MlpParams::create("ae.encoder", enc_dims, rng);
  model.feature_adapter = MlpParams::create("ae.feature_adapter", {latent, latent}, rng);
  model.text_adapter = MlpParams::create("ae.text_adapter", {text_dim, latent}, rng);
  model.trunk = MlpParams::create("ae.trunk", {latent, latent}, rng);
  model.decoder = MlpParams::create("ae.decoder", dec_dims, rng);
  model.edge_predictor = MlpParams::create("ae.edge_predictor", {2 * latent, edge_hidden, 1}, rng);
  return model;
}

std::vector<Parameter*> AeModel::parameters() {
  std::vector<Parameter*> out;
  for (auto* mlp : {&encoder, &feature_adapter, &text_adapter, &trunk, &decoder, &edge_predictor}) {
    const auto p = mlp->parameters();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

GaeModel GaeModel::create(std::size_t num_features, const std::vector<std::size_t>& hidden, Rng& rng) {
  if (hidden.empty()) throw std::invalid_argument("GAE needs at least one layer");
  GaeModel model;
  std::size_t in = num_features;
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    // Linear output: non-negative Z would keep every sigma(z_i . z_j) at or above 0.5.
    const auto act = l + 1 == hidden.size() ? Activation::kIdentity : Activation::kRelu;
    model.layers.push_back(GraphSageParams::create("gae.sage" + std::to_string(l), in, hidden[l], rng, act));
    in = hidden[l];
  }
  return model;
}

std::vector<Parameter*> GaeModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& layer : layers) out.push_back(&layer.weight);
  return out;
}

AeEncoding ae_encode(Tape& tape, AeModel& model, const Tensor& x, const Tensor* synthetic_embeddings) {
  AeEncoding enc;
  enc.h1 = latent_from(tape, model, model.feature_adapter, mlp_forward(tape, model.encoder, x));
  if (synthetic_embeddings == nullptr || synthetic_embeddings->rows() == 0) {
    enc.h = enc.h1;
    return enc;
  }
  if (static_cast<std::size_t>(synthetic_embeddings->cols()) != model.text_dim()) {
    throw std::invalid_argument("ae_encode: synthetic embeddings have " + std::to_string(synthetic_embeddings->cols()) +
                                " columns, text adapter expects " + std::to_string(model.text_dim()));
  }
  enc.h2 = latent_from(tape, model, model.text_adapter, *synthetic_embeddings);
  enc.h = ops::concat_rows(enc.h1, enc.h2);
  return enc;
}

Tensor ae_encode_text(Tape& tape, AeModel& model, const Tensor& embeddings) {
  return latent_from(tape, model, model.text_adapter, embeddings);
}

AeDecoding ae_decode(Tape& tape, AeModel& model, const Tensor& h) {
  return AeDecoding{mlp_forward(tape, model.decoder, h), sigmoid_inner_product(h)};
}

std::vector<CandidatePair> cosine_candidate_edges(const Matrix& synthetic_latent, const Matrix& original_latent,
                                                  double tau_edge) {
  if (synthetic_latent.rows() > 0 && synthetic_latent.cols() != original_latent.cols()) {
    throw std::invalid_argument("cosine_candidate_edges: latent widths differ");
  }
  const Eigen::VectorXd syn_norm = synthetic_latent.rowwise().norm();
  const Eigen::VectorXd orig_norm = original_latent.rowwise().norm();
  const Matrix dots = synthetic_latent * original_latent.transpose();
  std::vector<CandidatePair> out;
  for (Eigen::Index g = 0; g < dots.rows(); ++g) {
    for (Eigen::Index v = 0; v < dots.cols(); ++v) {
      const double denom = syn_norm(g) * orig_norm(v);
      const double sim = denom > 0 ? dots(g, v) / denom : 0.0;
      if (sim > tau_edge) out.emplace_back(static_cast<int>(g), static_cast<NodeId>(v));
    }
  }
  return out;
}

Tensor edge_scores(Tape& tape, AeModel& model, const Tensor& h, std::span<const std::pair<int, int>> pairs) {
  auto& layers = model.edge_predictor.layers;
  const auto d = h.cols();
  if (layers.front().weight.value.rows() != 2 * d) throw std::invalid_argument("edge_scores: latent width mismatch");
  std::vector<int> first, second;
  first.reserve(pairs.size());
  second.reserve(pairs.size());
  for (auto [i, j] : pairs) {
    first.push_back(i);
    second.push_back(j);
  }
  // The first layer on [h_i || h_j] splits into h_i W_top + h_j W_bottom, so
  // project every node once instead of every concatenated pair.
  const auto w = tape.parameter(layers.front().weight);
  const auto bias = tape.parameter(layers.front().bias);
  const auto top = ops::matmul(h, ops::slice_rows(w, 0, d));
  const auto bottom = ops::matmul(h, ops::slice_rows(w, d, d));
  const auto forward = ops::add(ops::gather_rows(top, first), ops::gather_rows(bottom, second));
  const auto backward = ops::add(ops::gather_rows(top, second), ops::gather_rows(bottom, first));
  Tensor x = apply_activation(ops::add_row(ops::concat_rows(forward, backward), bias), layers.front().activation);
  for (std::size_t l = 1; l < layers.size(); ++l) {
    x = ops::add_row(ops::matmul(x, tape.parameter(layers[l].weight)), tape.parameter(layers[l].bias));
    x = apply_activation(x, layers[l].activation);
  }
  const auto probs = ops::sigmoid(x);
  const auto count = static_cast<Eigen::Index>(pairs.size());
  return ops::scale(ops::add(ops::slice_rows(probs, 0, count), ops::slice_rows(probs, count, count)), 0.5);
}

std::vector<std::pair<int, int>> sample_negative_pairs(std::size_t num_nodes, std::span<const Edge> edges,
                                                       std::size_t count, Rng& rng) {
  std::unordered_set<std::uint64_t> existing;
  existing.reserve(edges.size() * 2);
  std::size_t inside = 0;
  for (const auto& e : edges) {
    if (static_cast<std::size_t>(e.v) < num_nodes) {
      existing.insert(pair_key(e.u, e.v, num_nodes));
      ++inside;
    }
  }
  const std::size_t total_pairs = num_nodes * (num_nodes > 0 ? num_nodes - 1 : 0) / 2;
  if (total_pairs - inside < count) {
    throw std::invalid_argument("graph too dense to sample " + std::to_string(count) + " negative pairs");
  }
  std::vector<std::pair<int, int>> out;
  out.reserve(count);
  while (out.size() < count) {
    const auto a = static_cast<int>(rng.below(num_nodes));
    const auto b = static_cast<int>(rng.below(num_nodes));
    if (a == b || !existing.insert(pair_key(a, b, num_nodes)).second) continue;
    out.emplace_back(a, b);
  }
  return out;
}

EdgeLoss edge_predictor_loss(Tape& tape, AeModel& model, const Tensor& h, std::span<const Edge> positives,
                             std::size_t num_original, double negative_ratio, Rng& rng) {
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> targets;
  for (const auto& e : positives) {
    pairs.emplace_back(e.u, e.v);
    targets.push_back(1.0);
  }
  const auto negatives = static_cast<std::size_t>(std::llround(negative_ratio * static_cast<double>(positives.size())));
  for (auto pair : sample_negative_pairs(num_original, positives, negatives, rng)) {
    pairs.push_back(pair);
    targets.push_back(0.0);
  }
  EdgeLoss out;
  out.positives = positives.size();
  out.negatives = negatives;
  if (pairs.empty()) {
    out.loss = tape.constant(Matrix::Zero(1, 1));
    return out;
  }
  out.loss = ops::binary_cross_entropy(edge_scores(tape, model, h, pairs), targets);
  return out;
}

std::vector<ScoredEdge> synthesize_edges(const Matrix& a1, std::size_t num_original,
                                         std::span<const CandidatePair> candidates, std::span<const double> a2_scores,
                                         double binarize_threshold) {
  if (candidates.size() != a2_scores.size()) throw std::invalid_argument("synthesize_edges: one A2 score per candidate");
  std::vector<ScoredEdge> out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto [g, v] = candidates[i];
    const auto row = static_cast<Eigen::Index>(num_original) + g;
    if (row >= a1.rows() || v >= a1.cols()) throw std::out_of_range("synthesize_edges: candidate outside A1");
    const double product = a1(row, v) * a2_scores[i];
    if (product > binarize_threshold) {
      const auto s = static_cast<NodeId>(row);
      out.push_back(ScoredEdge{Edge{std::min(s, v), std::max(s, v)}, product});
    }
  }
  std::sort(out.begin(), out.end(), [](const ScoredEdge& a, const ScoredEdge& b) { return a.edge < b.edge; });
  return out;
}

std::vector<NodeId> BalancedGraph::labeled_ids(const Graph& original) const {
  std::vector<NodeId> ids = original.train_mask;
  for (std::size_t i = num_original; i < num_nodes(); ++i) ids.push_back(static_cast<NodeId>(i));
  return ids;
}

Matrix BalancedGraph::original_adjacency() const {
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(num_original), static_cast<Eigen::Index>(num_original));
  for (const auto& e : edges) {
    if (static_cast<std::size_t>(e.v) >= num_original) continue;
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

Matrix dense_adjacency(std::size_t num_nodes, std::span<const Edge> edges) {
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(num_nodes), static_cast<Eigen::Index>(num_nodes));
  for (const auto& e : edges) {
    a(e.u, e.v) = 1.0;
    a(e.v, e.u) = 1.0;
  }
  return a;
}

BalancedGraph build_balanced_graph(const Graph& graph, std::span<const llm::SyntheticNode> synthetic,
                                   std::span<const ScoredEdge> synthetic_edges, const Matrix& synthetic_features) {
  const auto n = graph.num_nodes;
  const auto g = synthetic.size();
  if (static_cast<std::size_t>(synthetic_features.rows()) != g ||
      (g > 0 && synthetic_features.cols() != graph.features.cols())) {
    throw std::invalid_argument("synthetic feature block must be g x m");
  }
  BalancedGraph out;
  out.num_original = n;
  out.features.resize(static_cast<Eigen::Index>(n + g), graph.features.cols());
  out.features.topRows(static_cast<Eigen::Index>(n)) = graph.features;
  if (g > 0) out.features.bottomRows(static_cast<Eigen::Index>(g)) = synthetic_features;
  out.labels = graph.labels;
  out.origins.assign(n, NodeOrigin::kOriginal);
  for (const auto& node : synthetic) {
    if (node.label < 0 || node.label >= graph.num_classes) throw std::invalid_argument("synthetic node label out of range");
    out.labels.push_back(node.label);
    out.origins.push_back(NodeOrigin::kSynthetic);
  }
  out.edges = graph.edges;
  std::vector<std::size_t> degree(g, 0);
  for (const auto& se : synthetic_edges) {
    const auto& e = se.edge;
    const bool u_syn = static_cast<std::size_t>(e.u) >= n;
    const bool v_syn = static_cast<std::size_t>(e.v) >= n;
    if (u_syn == v_syn || static_cast<std::size_t>(e.v) >= n + g) {
      throw std::invalid_argument("synthetic edges must join one synthetic and one original node");
    }
    out.edges.push_back(e);
    ++degree[static_cast<std::size_t>(u_syn ? e.u : e.v) - n];
  }
  std::sort(out.edges.begin(), out.edges.end());
  out.edges.erase(std::unique(out.edges.begin(), out.edges.end()), out.edges.end());
  const auto isolated = static_cast<std::size_t>(std::count(degree.begin(), degree.end(), std::size_t{0}));
  if (isolated > 0) log::warn(isolated, " synthetic node(s) received no edges; kept as isolated nodes");
  out.adjacency = mean_adjacency(n + g, out.edges);
  return out;
}

Tensor gae_encode(Tape& tape, GaeModel& model, const Tensor& features, const SharedSparse& adjacency) {
  Tensor z = features;
  for (auto& layer : model.layers) z = graphsage_forward(tape, layer, z, adjacency);
  return z;
}

ReconLoss pretrain_losses(Tape& tape, const Tensor* xrecon, const Tensor& x, const Tensor* a1, const Tensor& a,
                          const Tensor* z_decoded, double alpha, double beta, double gamma) {
  if (alpha < 0 || beta < 0 || gamma < 0) throw std::invalid_argument("reconstruction coefficients must be non-negative");
  const auto n = x.rows();
  if (a.rows() != n || a.cols() != n) throw std::invalid_argument("pretrain_losses: adjacency must be n x n");
  ReconLoss out;
  Tensor total = tape.constant(Matrix::Zero(1, 1));
  if (a1 != nullptr) {
    const auto term = frobenius_loss(ops::top_left(*a1, n, n), a);
    out.structure = term.item();
    total = ops::add(total, ops::scale(term, alpha));
  }
  if (xrecon != nullptr) {
    const auto term = frobenius_loss(ops::slice_rows(*xrecon, 0, n), x);
    out.attributes = term.item();
    total = ops::add(total, ops::scale(term, beta));
  }
  if (z_decoded != nullptr) {
    const auto term = frobenius_loss(ops::top_left(*z_decoded, n, n), a);
    out.gae_structure = term.item();
    total = ops::add(total, ops::scale(term, gamma));
  }
  out.total = total;
  return out;
}

PretrainResult pretrain(const Graph& graph, std::span<const llm::SyntheticNode> synthetic,
                        const Matrix* original_text_embeddings, AeModel& ae, GaeModel& gae,
                        const TrainConfig& config, Rng& rng) {
  const auto n = graph.num_nodes;
  const auto g = synthetic.size();
  Matrix syn_embed;
  if (g > 0) {
    syn_embed.resize(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(synthetic.front().embedding.size()));
    for (std::size_t i = 0; i < g; ++i) {
      if (synthetic[i].embedding.size() != static_cast<std::size_t>(syn_embed.cols())) {
        throw std::invalid_argument("synthetic embeddings differ in length");
      }
      for (Eigen::Index j = 0; j < syn_embed.cols(); ++j) syn_embed(static_cast<Eigen::Index>(i), j) = synthetic[i].embedding[j];
    }
  }
  const Matrix adjacency = dense_adjacency(n, graph.edges);

  PretrainResult result;
  // AE stage.
  {
    const auto params = ae.parameters();
    AdamState adam{config.lr, config.weight_decay};
    PlateauStop stop(config.pretrain_patience);
    for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
      Tape tape;
      const auto x = tape.constant(graph.features);
      const auto a = tape.constant(adjacency);
      const auto e_syn = tape.constant(syn_embed);
      const auto enc = ae_encode(tape, ae, x, g > 0 ? &e_syn : nullptr);
      const auto dec = ae_decode(tape, ae, enc.h);
      auto recon = pretrain_losses(tape, &dec.xrecon, x, &dec.a1, a, nullptr, config.alpha, config.beta, 0.0);
      Tensor loss = recon.total;
      double recon_value = recon.total.item();
      if (!graph.edges.empty()) {
        const auto edge = edge_predictor_loss(tape, ae, enc.h, graph.edges, n, config.negative_ratio, rng);
        loss = ops::add(loss, edge.loss);
        result.edge_loss = edge.loss.item();
      }
      if (original_text_embeddings != nullptr) {
        const auto text_view = ae_encode_text(tape, ae, tape.constant(*original_text_embeddings));
        const auto text_recon = frobenius_loss(mlp_forward(tape, ae.decoder, text_view), x);
        loss = ops::add(loss, ops::scale(text_recon, config.beta));
        recon_value += config.beta * text_recon.item();
      }
      zero_grad(params);
      tape.backward(loss);
      adam_step(adam, params);
      result.ae_history.push_back(recon_value);
      log::debug("ae epoch ", epoch, " recon ", recon_value, " edge ", result.edge_loss);
      if (stop.update(recon_value)) break;
    }
  }

  // Edge synthesis from the trained AE.
  Matrix synthetic_features(static_cast<Eigen::Index>(g), graph.features.cols());
  {
    Tape tape;
    const auto x = tape.constant(graph.features);
    const auto e_syn = tape.constant(syn_embed);
    const auto enc = ae_encode(tape, ae, x, g > 0 ? &e_syn : nullptr);
    const auto dec = ae_decode(tape, ae, enc.h);
    if (g > 0) {
      synthetic_features = dec.xrecon.value().bottomRows(static_cast<Eigen::Index>(g));
      const Matrix& h = enc.h.value();
      result.candidates = cosine_candidate_edges(h.bottomRows(static_cast<Eigen::Index>(g)),
                                                 h.topRows(static_cast<Eigen::Index>(n)), config.tau_edge);
      std::vector<double> a2;
      if (!result.candidates.empty()) {
        std::vector<std::pair<int, int>> pairs;
        pairs.reserve(result.candidates.size());
        for (auto [s, v] : result.candidates) pairs.emplace_back(static_cast<int>(n) + s, v);
        const auto scores = edge_scores(tape, ae, enc.h, pairs).value();
        a2.assign(scores.data(), scores.data() + scores.size());
      }
      result.synthetic_edges =
          synthesize_edges(dec.a1.value(), n, result.candidates, a2, config.binarize_threshold);
    }
  }
  result.balanced = build_balanced_graph(graph, synthetic, result.synthetic_edges, synthetic_features);

  // GAE stage on the balanced graph.
  {
    const auto params = gae.parameters();
    AdamState adam{config.lr, config.weight_decay};
    PlateauStop stop(config.pretrain_patience);
    for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
      Tape tape;
      const auto x = tape.constant(graph.features);
      const auto a = tape.constant(adjacency);
      const auto z = gae_encode(tape, gae, tape.constant(result.balanced.features), result.balanced.adjacency);
      const auto z_dec = sigmoid_inner_product(ops::slice_rows(z, 0, static_cast<Eigen::Index>(n)));
      auto recon = pretrain_losses(tape, nullptr, x, nullptr, a, &z_dec, 0.0, 0.0, config.gamma);
      zero_grad(params);
      tape.backward(recon.total);
      adam_step(adam, params);
      result.gae_history.push_back(recon.total.item());
      log::debug("gae epoch ", epoch, " loss ", recon.total.item());
      if (stop.update(recon.total.item())) break;
    }
  }
  result.recon_loss = (result.ae_history.empty() ? 0.0 : result.ae_history.back()) +
                      (result.gae_history.empty() ? 0.0 : result.gae_history.back());
  return result;
}

}  // namespace graphalp
