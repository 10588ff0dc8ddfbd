#include "graphalp/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "graphalp/log.hpp"
#include "graphalp/random.hpp"

namespace graphalp {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    fields.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, const fs::path& file, std::size_t line_no) {
  field = trim(field);
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw std::runtime_error(file.string() + ":" + std::to_string(line_no) + ": cannot parse '" +
                             std::string(field) + "'");
  }
  return value;
}

std::ifstream open_required(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing dataset file: " + path.string());
  return in;
}

/// Reads data rows of a CSV file, skipping the header and blank lines.
template <typename Fn>
void for_each_row(const fs::path& path, Fn&& fn) {
  auto in = open_required(path);
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty()) continue;
    if (header) {
      header = false;
      fn(view, line_no, true);
      continue;
    }
    fn(view, line_no, false);
  }
}

std::vector<NodeId> sorted_ids(std::vector<NodeId> ids) {
  std::sort(ids.begin(), ids.end());
  return ids;
}

void check_sorted_unique(const std::vector<NodeId>& ids, std::string_view name) {
  if (std::adjacent_find(ids.begin(), ids.end(), std::greater_equal<>()) != ids.end()) {
    throw std::invalid_argument(std::string(name) + " must be sorted and free of duplicates");
  }
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

std::string Graph::class_name(int c) const {
  if (c >= 0 && static_cast<std::size_t>(c) < class_names.size()) return class_names[c];
  return "class_" + std::to_string(c);
}

void Graph::validate() const {
  const auto n = num_nodes;
  if (static_cast<std::size_t>(features.rows()) != n) {
    throw std::invalid_argument("feature matrix has " + std::to_string(features.rows()) +
                                " rows for " + std::to_string(n) + " nodes");
  }
  if (labels.size() != n) throw std::invalid_argument("label vector length differs from node count");
  if (num_classes < 1) throw std::invalid_argument("graph needs at least one class");
  for (int label : labels) {
    if (label != kUnlabeled && (label < 0 || label >= num_classes)) {
      throw std::invalid_argument("label " + std::to_string(label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    }
  }
  if (!clean_labels.empty() && clean_labels.size() != n) {
    throw std::invalid_argument("clean label vector length differs from node count");
  }
  if (!texts.empty() && texts.size() != n) throw std::invalid_argument("texts length differs from node count");

  std::vector<char> seen(n, 0);
  const std::pair<const std::vector<NodeId>*, const char*> masks[] = {
      {&train_mask, "train_mask"}, {&val_mask, "val_mask"}, {&test_mask, "test_mask"}};
  for (const auto& [mask, name] : masks) {
    check_sorted_unique(*mask, name);
    for (NodeId id : *mask) {
      if (id < 0 || static_cast<std::size_t>(id) >= n) {
        throw std::invalid_argument(std::string(name) + " references unknown node " + std::to_string(id));
      }
      if (seen[id]) throw std::invalid_argument("node " + std::to_string(id) + " appears in two masks");
      seen[id] = 1;
      if (labels[id] == kUnlabeled) {
        throw std::invalid_argument(std::string(name) + " node " + std::to_string(id) + " has no label");
      }
    }
  }
  check_sorted_unique(noise_mask, "noise_mask");
  for (NodeId id : noise_mask) {
    if (!std::binary_search(train_mask.begin(), train_mask.end(), id)) {
      throw std::invalid_argument("noise_mask node " + std::to_string(id) + " is not a training node");
    }
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto& e = edges[i];
    if (e.u < 0 || e.v < 0 || static_cast<std::size_t>(e.v) >= n || static_cast<std::size_t>(e.u) >= n) {
      throw std::invalid_argument("edge endpoint outside node range");
    }
    if (e.u >= e.v) throw std::invalid_argument("edges must be stored with u < v (no self-loops)");
    if (i > 0 && !(edges[i - 1] < e)) throw std::invalid_argument("edge list must be sorted and unique");
  }
}

bool operator==(const Graph& a, const Graph& b) {
  return a.num_nodes == b.num_nodes && a.features.rows() == b.features.rows() &&
         a.features.cols() == b.features.cols() && a.features == b.features && a.edges == b.edges &&
         a.labels == b.labels && a.num_classes == b.num_classes && a.class_names == b.class_names &&
         a.train_mask == b.train_mask && a.val_mask == b.val_mask && a.test_mask == b.test_mask &&
         a.texts == b.texts && a.noise_mask == b.noise_mask && a.clean_labels == b.clean_labels;
}

std::vector<std::vector<NodeId>> adjacency_lists(const Graph& graph) {
  std::vector<std::vector<NodeId>> adj(graph.num_nodes);
  for (const auto& e : graph.edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto& list : adj) std::sort(list.begin(), list.end());
  return adj;
}

std::vector<NodeId> unlabeled_pool(const Graph& graph) {
  std::vector<char> used(graph.num_nodes, 0);
  for (const auto* mask : {&graph.train_mask, &graph.val_mask, &graph.test_mask}) {
    for (NodeId id : *mask) used[id] = 1;
  }
  std::vector<NodeId> pool;
  for (std::size_t i = 0; i < graph.num_nodes; ++i) {
    if (!used[i]) pool.push_back(static_cast<NodeId>(i));
  }
  return pool;
}

std::size_t ClassCounts::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ClassCounts train_class_counts(const Graph& graph) {
  ClassCounts out{std::vector<std::size_t>(static_cast<std::size_t>(graph.num_classes), 0)};
  for (NodeId id : graph.train_mask) ++out.counts[static_cast<std::size_t>(graph.labels[id])];
  return out;
}

double imbalance_ratio(const ClassCounts& counts) {
  std::size_t lo = std::numeric_limits<std::size_t>::max();
  std::size_t hi = 0;
  for (auto c : counts.counts) {
    if (c == 0) continue;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  if (hi == 0) throw std::invalid_argument("imbalance ratio undefined: all class counts are zero");
  return static_cast<double>(lo) / static_cast<double>(hi);
}

std::vector<Edge> canonical_edges(const std::vector<std::pair<NodeId, NodeId>>& raw, LoadReport* report) {
  std::vector<Edge> edges;
  edges.reserve(raw.size());
  std::size_t loops = 0;
  for (auto [a, b] : raw) {
    if (a == b) {
      ++loops;
      continue;
    }
    edges.push_back(a < b ? Edge{a, b} : Edge{b, a});
  }
  std::sort(edges.begin(), edges.end());
  const auto before = edges.size();
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  if (report != nullptr) {
    report->edge_rows = raw.size();
    report->self_loops = loops;
    report->duplicate_edges = before - edges.size();
  }
  if (loops > 0) log::warn("dropped ", loops, " self-loop edge row(s)");
  return edges;
}

Graph load_dataset(const fs::path& dir, std::string_view format_id, LoadReport* report) {
  if (format_id != "csv") throw std::invalid_argument("unsupported dataset format '" + std::string(format_id) + "'");

  Graph g;
  // nodes.csv
  std::vector<std::pair<NodeId, std::vector<double>>> rows;
  std::size_t num_features = 0;
  const auto nodes_path = dir / "nodes.csv";
  for_each_row(nodes_path, [&](std::string_view line, std::size_t line_no, bool header) {
    const auto fields = split_csv(line);
    if (header) {
      if (fields.empty() || trim(fields[0]) != "id") {
        throw std::runtime_error(nodes_path.string() + ": header must start with 'id'");
      }
      num_features = fields.size() - 1;
      return;
    }
    if (fields.size() != num_features + 1) {
      throw std::runtime_error(nodes_path.string() + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(num_features) + " features, found " +
                               std::to_string(fields.size() - 1));
    }
    std::vector<double> values(num_features);
    for (std::size_t j = 0; j < num_features; ++j) values[j] = parse_number<double>(fields[j + 1], nodes_path, line_no);
    rows.emplace_back(parse_number<NodeId>(fields[0], nodes_path, line_no), std::move(values));
  });
  g.num_nodes = rows.size();
  g.features = Matrix::Zero(static_cast<Eigen::Index>(g.num_nodes), static_cast<Eigen::Index>(num_features));
  std::vector<char> present(g.num_nodes, 0);
  for (auto& [id, values] : rows) {
    if (id < 0 || static_cast<std::size_t>(id) >= g.num_nodes || present[id]) {
      throw std::runtime_error(nodes_path.string() + ": node ids must be a permutation of 0..n-1 (bad id " +
                               std::to_string(id) + ")");
    }
    present[id] = 1;
    for (std::size_t j = 0; j < num_features; ++j) g.features(id, static_cast<Eigen::Index>(j)) = values[j];
  }

  // classes.txt (optional) fixes k and names.
  if (std::ifstream in(dir / "classes.txt"); in) {
    std::string name;
    while (std::getline(in, name)) {
      const auto t = trim(name);
      if (!t.empty()) g.class_names.emplace_back(t);
    }
  }

  auto read_labels = [&](const fs::path& path, std::vector<int>& out) {
    out.assign(g.num_nodes, kUnlabeled);
    int max_label = -1;
    for_each_row(path, [&](std::string_view line, std::size_t line_no, bool header) {
      if (header) return;
      const auto fields = split_csv(line);
      if (fields.size() != 2) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": expected id,class_index");
      const auto id = parse_number<NodeId>(fields[0], path, line_no);
      const auto label = parse_number<int>(fields[1], path, line_no);
      if (id < 0 || static_cast<std::size_t>(id) >= g.num_nodes) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": unknown node id " + std::to_string(id));
      }
      if (label < 0) throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": negative class index");
      if (!g.class_names.empty() && static_cast<std::size_t>(label) >= g.class_names.size()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": class index " +
                                 std::to_string(label) + " >= k=" + std::to_string(g.class_names.size()));
      }
      out[id] = label;
      max_label = std::max(max_label, label);
    });
    return max_label;
  };
  const int max_label = read_labels(dir / "labels.csv", g.labels);
  g.num_classes = g.class_names.empty() ? max_label + 1 : static_cast<int>(g.class_names.size());
  if (g.num_classes < 1) throw std::runtime_error("labels.csv contains no labels");

  // edges.csv
  std::vector<std::pair<NodeId, NodeId>> raw;
  const auto edges_path = dir / "edges.csv";
  for_each_row(edges_path, [&](std::string_view line, std::size_t line_no, bool header) {
    if (header) return;
    const auto fields = split_csv(line);
    if (fields.size() != 2) throw std::runtime_error(edges_path.string() + ":" + std::to_string(line_no) + ": expected src,dst");
    const auto a = parse_number<NodeId>(fields[0], edges_path, line_no);
    const auto b = parse_number<NodeId>(fields[1], edges_path, line_no);
    if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= g.num_nodes || static_cast<std::size_t>(b) >= g.num_nodes) {
      throw std::runtime_error(edges_path.string() + ":" + std::to_string(line_no) + ": edge references unknown node");
    }
    raw.emplace_back(a, b);
  });
  g.edges = canonical_edges(raw, report);

  // splits.json
  {
    auto in = open_required(dir / "splits.json");
    json splits;
    try {
      splits = json::parse(in);
    } catch (const json::parse_error& e) {
      throw std::runtime_error((dir / "splits.json").string() + ": " + e.what());
    }
    auto read_mask = [&](const char* key) {
      std::vector<NodeId> ids;
      if (splits.contains(key)) ids = splits.at(key).get<std::vector<NodeId>>();
      for (NodeId id : ids) {
        if (id < 0 || static_cast<std::size_t>(id) >= g.num_nodes) {
          throw std::runtime_error(std::string("splits.json: ") + key + " references unknown node id " + std::to_string(id));
        }
      }
      return sorted_ids(std::move(ids));
    };
    g.train_mask = read_mask("train");
    g.val_mask = read_mask("val");
    g.test_mask = read_mask("test");
  }

  if (std::ifstream in(dir / "texts.jsonl"); in) {
    g.texts.assign(g.num_nodes, std::string{});
    std::string line;
    while (std::getline(in, line)) {
      if (trim(line).empty()) continue;
      const auto record = json::parse(line);
      const auto id = record.at("id").get<NodeId>();
      if (id < 0 || static_cast<std::size_t>(id) >= g.num_nodes) throw std::runtime_error("texts.jsonl: unknown node id");
      g.texts[id] = record.at("text").get<std::string>();
    }
  }
  if (fs::exists(dir / "clean_labels.csv")) read_labels(dir / "clean_labels.csv", g.clean_labels);
  if (std::ifstream in(dir / "noise.json"); in) {
    g.noise_mask = sorted_ids(json::parse(in).at("noise_mask").get<std::vector<NodeId>>());
  }

  g.validate();
  return g;
}

void save_dataset(const Graph& graph, const fs::path& dir) {
  graph.validate();
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    return out;
  };
  {
    auto out = open("nodes.csv");
    out << "id";
    for (std::size_t j = 0; j < graph.num_features(); ++j) out << ",f" << j;
    out << '\n';
    for (std::size_t i = 0; i < graph.num_nodes; ++i) {
      out << i;
      for (Eigen::Index j = 0; j < graph.features.cols(); ++j) out << ',' << format_double(graph.features(i, j));
      out << '\n';
    }
  }
  {
    auto out = open("edges.csv");
    out << "src,dst\n";
    for (const auto& e : graph.edges) out << e.u << ',' << e.v << '\n';
  }
  auto write_labels = [&](const char* name, const std::vector<int>& labels) {
    auto out = open(name);
    out << "id,class_index\n";
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != kUnlabeled) out << i << ',' << labels[i] << '\n';
    }
  };
  write_labels("labels.csv", graph.labels);
  if (!graph.clean_labels.empty()) write_labels("clean_labels.csv", graph.clean_labels);
  {
    auto out = open("classes.txt");
    for (int c = 0; c < graph.num_classes; ++c) out << graph.class_name(c) << '\n';
  }
  {
    auto out = open("splits.json");
    out << json{{"train", graph.train_mask}, {"val", graph.val_mask}, {"test", graph.test_mask}}.dump() << '\n';
  }
  if (!graph.noise_mask.empty() || !graph.clean_labels.empty()) {
    auto out = open("noise.json");
    out << json{{"noise_mask", graph.noise_mask}}.dump() << '\n';
  }
  if (graph.has_texts()) {
    auto out = open("texts.jsonl");
    for (std::size_t i = 0; i < graph.num_nodes; ++i) out << json{{"id", i}, {"text", graph.texts[i]}}.dump() << '\n';
  }
}

std::size_t scaled_count(double rho, std::size_t base) {
  return static_cast<std::size_t>(std::floor(rho * static_cast<double>(base) + 0.5));
}

Graph apply_step_imbalance(const Graph& graph, double rho, std::size_t majority_per_class,
                           std::size_t num_minority, std::uint64_t seed) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in (0, 1]");
  const auto k = static_cast<std::size_t>(graph.num_classes);
  if (num_minority >= k && rho < 1.0) {
    throw std::invalid_argument("num_minority (" + std::to_string(num_minority) + ") must be below the class count (" +
                                std::to_string(k) + ")");
  }
  Rng rng(seed);

  std::vector<char> held_out(graph.num_nodes, 0);
  for (NodeId id : graph.val_mask) held_out[id] = 1;
  for (NodeId id : graph.test_mask) held_out[id] = 1;
  std::vector<std::vector<NodeId>> candidates(k);
  for (std::size_t i = 0; i < graph.num_nodes; ++i) {
    const int label = graph.labels[i];
    if (label != kUnlabeled && !held_out[i]) candidates[static_cast<std::size_t>(label)].push_back(static_cast<NodeId>(i));
  }

  std::vector<std::size_t> classes(k);
  std::iota(classes.begin(), classes.end(), std::size_t{0});
  rng.shuffle(classes);
  std::vector<char> minority(k, 0);
  for (std::size_t i = 0; i < std::min(num_minority, k); ++i) minority[classes[i]] = 1;

  Graph out = graph;
  out.train_mask.clear();
  out.noise_mask.clear();
  for (std::size_t c = 0; c < k; ++c) {
    const std::size_t want = minority[c] ? scaled_count(rho, majority_per_class) : majority_per_class;
    auto& pool = candidates[c];
    if (pool.size() < want) {
      throw std::invalid_argument("class " + std::to_string(c) + " has " + std::to_string(pool.size()) +
                                  " labeled candidates, " + std::to_string(want) + " requested");
    }
    rng.shuffle(pool);
    out.train_mask.insert(out.train_mask.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(want));
  }
  std::sort(out.train_mask.begin(), out.train_mask.end());
  // Training labels are redrawn, so any earlier corruption no longer applies.
  if (!graph.clean_labels.empty()) {
    out.labels = graph.clean_labels;
    out.clean_labels.clear();
  }
  return out;
}

Graph inject_uniform_noise(const Graph& graph, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("noise probability must lie in [0, 1]");
  if (graph.num_classes < 2 && p > 0.0) throw std::invalid_argument("label noise needs at least two classes");
  Graph out = graph;
  if (out.clean_labels.empty()) out.clean_labels = graph.labels;
  Rng rng(seed);
  const auto others = static_cast<std::uint64_t>(graph.num_classes - 1);
  for (NodeId id : graph.train_mask) {
    if (!rng.bernoulli(p)) continue;
    const int original = out.labels[id];
    auto draw = static_cast<int>(rng.below(others));
    if (draw >= original) ++draw;
    out.labels[id] = draw;
  }
  out.noise_mask.clear();
  for (NodeId id : out.train_mask) {
    if (out.labels[id] != out.clean_labels[id]) out.noise_mask.push_back(id);
  }
  return out;
}

Graph make_cluster_graph(const ClusterGraphSpec& spec, std::uint64_t seed) {
  if (spec.num_classes < 1 || spec.num_nodes == 0 || spec.num_features == 0) {
    throw std::invalid_argument("cluster graph needs nodes, classes and features");
  }
  Rng rng(seed);
  const auto k = static_cast<std::size_t>(spec.num_classes);
  const auto n = spec.num_nodes;
  const auto m = static_cast<Eigen::Index>(spec.num_features);

  Matrix centers(static_cast<Eigen::Index>(k), m);
  for (std::size_t c = 0; c < k; ++c) {
    for (Eigen::Index j = 0; j < m; ++j) centers(c, j) = rng.normal();
    const double norm = centers.row(c).norm();
    centers.row(c) *= spec.center_norm / (norm > 0 ? norm : 1.0);
  }

  Graph g;
  g.num_nodes = n;
  g.num_classes = spec.num_classes;
  for (std::size_t c = 0; c < k; ++c) g.class_names.push_back("cluster_" + std::to_string(c));
  g.labels.resize(n);
  g.features.resize(static_cast<Eigen::Index>(n), m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<int>(i % k);
    g.labels[i] = c;
    for (Eigen::Index j = 0; j < m; ++j) g.features(i, j) = centers(c, j) + spec.feature_noise * rng.normal();
  }
  std::vector<std::pair<NodeId, NodeId>> raw;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double prob = g.labels[i] == g.labels[j] ? spec.intra_edge_prob : spec.inter_edge_prob;
      if (rng.bernoulli(prob)) raw.emplace_back(static_cast<NodeId>(i), static_cast<NodeId>(j));
    }
  }
  g.edges = canonical_edges(raw);

  std::vector<std::vector<NodeId>> by_class(k);
  for (std::size_t i = 0; i < n; ++i) by_class[g.labels[i]].push_back(static_cast<NodeId>(i));
  for (auto& members : by_class) {
    rng.shuffle(members);
    const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * members.size()));
    const auto n_test = static_cast<std::size_t>(std::floor(spec.test_fraction * members.size()));
    g.val_mask.insert(g.val_mask.end(), members.begin(), members.begin() + n_val);
    g.test_mask.insert(g.test_mask.end(), members.begin() + n_val, members.begin() + n_val + n_test);
    g.train_mask.insert(g.train_mask.end(), members.begin() + n_val + n_test, members.end());
  }
  for (auto* mask : {&g.train_mask, &g.val_mask, &g.test_mask}) std::sort(mask->begin(), mask->end());
  g.validate();
  return g;
}

}  // namespace graphalp
