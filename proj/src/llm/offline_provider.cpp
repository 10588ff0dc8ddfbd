#include <array>
#include <cmath>
#include <sstream>

#include "graphalp/llm/provider.hpp"
#include "graphalp/random.hpp"

namespace graphalp::llm {
namespace {

constexpr std::array<std::string_view, 6> kOpenings = {
    "A study of", "Revisiting", "Towards robust", "Scalable methods for", "An empirical analysis of",
    "New perspectives on"};
constexpr std::array<std::string_view, 4> kClosings = {
    "We report consistent gains over prior work.", "Experiments confirm the approach on standard benchmarks.",
    "The analysis reveals several open problems.", "Results indicate improved accuracy and efficiency."};

}  // namespace

OfflineProvider::OfflineProvider(Options options) : options_(std::move(options)) {
  if (options_.centroids.rows() != static_cast<Eigen::Index>(options_.class_names.size())) {
    throw std::invalid_argument("offline provider: one centroid per class name required");
  }
  if (options_.jitter.size() != static_cast<std::size_t>(options_.centroids.cols())) {
    throw std::invalid_argument("offline provider: jitter length must match embedding width");
  }
}

std::unique_ptr<OfflineProvider> OfflineProvider::from_graph(const Graph& graph, std::uint64_t seed,
                                                             double jitter_fraction) {
  const auto k = graph.num_classes;
  const auto m = graph.features.cols();
  Options options;
  options.seed = seed;
  for (int c = 0; c < k; ++c) options.class_names.push_back(graph.class_name(c));
  options.centroids = Matrix::Zero(k, m);

  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (NodeId id : graph.train_mask) {
    const int observed = graph.labels[id];
    if (observed != graph.true_label(id)) continue;
    options.centroids.row(observed) += graph.features.row(id);
    counts[observed] += 1.0;
  }
  const RowVector global_mean = graph.features.colwise().mean();
  for (int c = 0; c < k; ++c) {
    if (counts[c] > 0) {
      options.centroids.row(c) /= counts[c];
    } else {
      options.centroids.row(c) = global_mean;
    }
  }
  options.jitter.resize(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) {
    const double var = (graph.features.col(j).array() - global_mean(j)).square().mean();
    options.jitter[j] = jitter_fraction * std::sqrt(var);
  }
  return std::make_unique<OfflineProvider>(std::move(options));
}

std::string OfflineProvider::id() const { return "offline:seed=" + std::to_string(options_.seed); }

std::string OfflineProvider::complete(const ChatRequest& request) {
  count_call();
  if (request.label_text.empty()) throw ProviderError("offline provider: empty label text");
  Rng rng(derive_seed(options_.seed, request.label_text, request.index));
  std::ostringstream text;
  text << '[' << request.label_text << "] #" << request.index << " Title: "
       << kOpenings[rng.below(kOpenings.size())] << ' ' << request.label_text << ". Abstract: This paper studies "
       << request.label_text << " (variant " << rng.below(1000) << "). " << kClosings[rng.below(kClosings.size())];
  return text.str();
}

int OfflineProvider::class_of(const std::string& text) const {
  if (text.empty() || text.front() != '[') return -1;
  const auto close = text.find(']');
  if (close == std::string::npos) return -1;
  const auto label = text.substr(1, close - 1);
  for (std::size_t c = 0; c < options_.class_names.size(); ++c) {
    if (options_.class_names[c] == label) return static_cast<int>(c);
  }
  return -1;
}

std::vector<std::vector<double>> OfflineProvider::embed(std::span<const std::string> texts) {
  count_call();
  const auto d = options_.centroids.cols();
  std::vector<std::vector<double>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const int c = class_of(text);
    Rng rng(derive_seed(options_.seed, text));
    std::vector<double> row(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) {
      const double centre = c >= 0 ? options_.centroids(c, j) : options_.centroids.col(j).mean();
      row[j] = centre + options_.jitter[j] * rng.normal();
    }
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace graphalp::llm
