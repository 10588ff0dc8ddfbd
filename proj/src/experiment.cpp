#include "graphalp/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "graphalp/llm/augment.hpp"
#include "graphalp/log.hpp"
#include "graphalp/metrics.hpp"

namespace graphalp {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// Strict reader over one JSON object: typed fields, unknown keys rejected.
class Section {
 public:
  /// In-memory documents hold signed integers; parsed text holds unsigned ones.
  static bool non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  }

  Section(const json& node, std::string prefix) : node_(node), prefix_(std::move(prefix)) {
    if (!node_.is_object()) throw ConfigError(where() + " must be a JSON object");
  }

  void read(const char* key, double& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number()) throw ConfigError(field(key) + " must be a number");
      out = v->get<double>();
    }
  }
  void read(const char* key, std::size_t& out) {
    if (const auto* v = take(key)) {
      if (!non_negative_integer(*v)) throw ConfigError(field(key) + " must be a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void read(const char* key, int& out) {
    if (const auto* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(field(key) + " must be an integer");
      out = v->get<int>();
    }
  }
  void read(const char* key, bool& out) {
    if (const auto* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(field(key) + " must be true or false");
      out = v->get<bool>();
    }
  }
  void read(const char* key, std::string& out) {
    if (const auto* v = take(key)) {
      if (!v->is_string()) throw ConfigError(field(key) + " must be a string");
      out = v->get<std::string>();
    }
  }
  void read(const char* key, std::vector<std::size_t>& out) {
    if (const auto* v = take(key)) {
      if (!v->is_array()) throw ConfigError(field(key) + " must be an array of non-negative integers");
      out.clear();
      for (const auto& item : *v) {
        if (!non_negative_integer(item)) throw ConfigError(field(key) + " must be an array of non-negative integers");
        out.push_back(item.get<std::size_t>());
      }
    }
  }

  /// Nested object, or nullptr when absent.
  const json* child(const char* key) { return take(key); }
  std::string field(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key " + field(key));
    }
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    const auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }
  std::string where() const { return prefix_.empty() ? "config" : prefix_; }

  const json& node_;
  std::string prefix_;
  std::set<std::string> seen_;
};

void read_train(Section& s, TrainConfig& t) {
  s.read("lr", t.lr);
  s.read("weight_decay", t.weight_decay);
  s.read("alpha", t.alpha);
  s.read("beta", t.beta);
  s.read("gamma", t.gamma);
  s.read("tau_conf", t.tau_conf);
  s.read("tau_edge", t.tau_edge);
  s.read("negative_ratio", t.negative_ratio);
  s.read("binarize_threshold", t.binarize_threshold);
  s.read("oversample_scale", t.oversample_scale);
  s.read("pseudo_rounds", t.pseudo_rounds);
  s.read("rebalance", t.rebalance);
  s.read("class_weighting", t.class_weighting);
  s.read("hidden_dims", t.hidden_dims);
  s.read("pretrain_epochs", t.pretrain_epochs);
  s.read("pretrain_patience", t.pretrain_patience);
  s.read("finetune_epochs", t.finetune_epochs);
  s.read("finetune_patience", t.finetune_patience);
  s.finish();
}

void read_cluster(Section& s, ClusterGraphSpec& c, std::uint64_t& seed) {
  s.read("num_nodes", c.num_nodes);
  s.read("num_classes", c.num_classes);
  s.read("num_features", c.num_features);
  s.read("center_norm", c.center_norm);
  s.read("feature_noise", c.feature_noise);
  s.read("intra_edge_prob", c.intra_edge_prob);
  s.read("inter_edge_prob", c.inter_edge_prob);
  s.read("val_fraction", c.val_fraction);
  s.read("test_fraction", c.test_fraction);
  std::size_t seed_value = seed;
  s.read("seed", seed_value);
  seed = seed_value;
  s.finish();
}

std::string shortest(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in);
}

void write_synthetic_edges(const fs::path& path, const std::vector<ScoredEdge>& edges) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "src,dst,score\n";
  for (const auto& e : edges) out << e.edge.u << ',' << e.edge.v << ',' << e.score << '\n';
}

template <typename Fn>
auto in_stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

SeedRun run_seed(const ExperimentConfig& config, const Graph& base, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const Graph graph = in_stage("prepare", [&] { return prepare_graph(base, config, seed); });
  auto provider = in_stage("provider", [&] { return llm::make_provider(config.provider, graph, seed); });
  TrainConfig train = config.train;
  train.seed = seed;
  auto result = run_pipeline(graph, train, *provider);

  const fs::path dir = fs::path(config.output_dir) / ("seed_" + std::to_string(seed));
  in_stage("write", [&] {
    fs::create_directories(dir);
    ExperimentConfig effective = config;
    effective.seeds = {seed};
    result.report["seed"] = seed;
    result.report["experiment"] = {{"rho", config.imbalance.rho},
                                   {"majority_per_class", config.imbalance.majority_per_class},
                                   {"num_minority", config.imbalance.num_minority},
                                   {"noise_p", config.noise_p},
                                   {"injected_noise", graph.noise_mask.size()},
                                   {"train_counts", train_class_counts(graph).counts}};
    write_json(dir / "report.json", result.report);
    write_json(dir / "effective_config.json", to_json(effective));
    export_embeddings(result.embeddings, result.embedding_labels, result.origins, dir / "embeddings.csv");
    write_synthetic_edges(dir / "synthetic_edges.csv", result.synthetic_edges);
  });
  SeedRun run;
  run.seed = seed;
  run.report = result.report;
  run.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(dir / "timing.json", {{"runtime_seconds", run.runtime_seconds}});
  return run;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.format != "csv" && dataset.format != "synthetic") {
    throw ConfigError("dataset.format must be \"csv\" or \"synthetic\"");
  }
  if (dataset.format == "csv" && dataset.path.empty()) throw ConfigError("dataset.path is required");
  if (dataset.format == "synthetic") {
    const auto& s = dataset.synthetic;
    if (s.num_nodes == 0) throw ConfigError("dataset.synthetic.num_nodes must be positive");
    if (s.num_classes < 1) throw ConfigError("dataset.synthetic.num_classes must be positive");
    if (s.num_features == 0) throw ConfigError("dataset.synthetic.num_features must be positive");
    for (auto [name, v] : {std::pair{"intra_edge_prob", s.intra_edge_prob}, std::pair{"inter_edge_prob", s.inter_edge_prob},
                           std::pair{"val_fraction", s.val_fraction}, std::pair{"test_fraction", s.test_fraction}}) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string("dataset.synthetic.") + name + " must lie in [0, 1]");
    }
  }
  if (!(imbalance.rho > 0.0 && imbalance.rho <= 1.0)) throw ConfigError("imbalance.rho must lie in (0, 1]");
  if (imbalance.majority_per_class == 0) throw ConfigError("imbalance.majority_per_class must be positive");
  if (!(noise_p >= 0.0 && noise_p <= 1.0)) throw ConfigError("noise.p must lie in [0, 1]");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
  try {
    provider.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("provider: ") + e.what());
  }
  try {
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  Section root(doc, "");
  if (const auto* d = root.child("dataset")) {
    Section s(*d, "dataset");
    s.read("path", c.dataset.path);
    s.read("format", c.dataset.format);
    if (const auto* syn = s.child("synthetic")) {
      Section ss(*syn, "dataset.synthetic");
      read_cluster(ss, c.dataset.synthetic, c.dataset.synthetic_seed);
    }
    s.finish();
  }
  if (const auto* d = root.child("imbalance")) {
    Section s(*d, "imbalance");
    s.read("rho", c.imbalance.rho);
    s.read("majority_per_class", c.imbalance.majority_per_class);
    s.read("num_minority", c.imbalance.num_minority);
    s.finish();
  }
  if (const auto* d = root.child("noise")) {
    Section s(*d, "noise");
    s.read("p", c.noise_p);
    s.finish();
  }
  if (const auto* d = root.child("provider")) {
    Section s(*d, "provider");
    std::string kind = "offline";
    s.read("kind", kind);
    if (kind == "offline") {
      c.provider.kind = llm::ProviderConfig::Kind::kOffline;
    } else if (kind == "remote") {
      c.provider.kind = llm::ProviderConfig::Kind::kRemote;
    } else {
      throw ConfigError("provider.kind must be \"offline\" or \"remote\"");
    }
    s.read("url", c.provider.base_url);
    s.read("chat_model", c.provider.chat_model);
    s.read("embed_model", c.provider.embed_model);
    s.read("temperature", c.provider.temperature);
    s.read("key_env", c.provider.key_env);
    s.read("max_parallel", c.provider.max_parallel);
    s.read("retries", c.provider.retry.attempts);
    std::size_t backoff = static_cast<std::size_t>(c.provider.retry.initial_backoff.count());
    s.read("backoff_ms", backoff);
    c.provider.retry.initial_backoff = std::chrono::milliseconds(backoff);
    std::size_t timeout = static_cast<std::size_t>(c.provider.timeout.count());
    s.read("timeout_s", timeout);
    c.provider.timeout = std::chrono::seconds(timeout);
    s.read("cache", c.provider.cache_path);
    s.finish();
  }
  if (const auto* d = root.child("train")) {
    Section s(*d, "train");
    read_train(s, c.train);
  }
  if (const auto* d = root.child("output")) {
    Section s(*d, "output");
    s.read("dir", c.output_dir);
    s.finish();
  }
  if (const auto* d = root.child("seeds")) {
    if (!d->is_array()) throw ConfigError("seeds must be an array of non-negative integers");
    c.seeds.clear();
    for (const auto& item : *d) {
      if (!Section::non_negative_integer(item)) throw ConfigError("seeds must be an array of non-negative integers");
      c.seeds.push_back(item.get<std::uint64_t>());
    }
  }
  root.finish();
  c.validate();
  return c;
}

json to_json(const ExperimentConfig& c) {
  const auto& s = c.dataset.synthetic;
  return {{"dataset",
           {{"path", c.dataset.path},
            {"format", c.dataset.format},
            {"synthetic",
             {{"num_nodes", s.num_nodes},
              {"num_classes", s.num_classes},
              {"num_features", s.num_features},
              {"center_norm", s.center_norm},
              {"feature_noise", s.feature_noise},
              {"intra_edge_prob", s.intra_edge_prob},
              {"inter_edge_prob", s.inter_edge_prob},
              {"val_fraction", s.val_fraction},
              {"test_fraction", s.test_fraction},
              {"seed", c.dataset.synthetic_seed}}}}},
          {"imbalance",
           {{"rho", c.imbalance.rho},
            {"majority_per_class", c.imbalance.majority_per_class},
            {"num_minority", c.imbalance.num_minority}}},
          {"noise", {{"p", c.noise_p}}},
          {"provider",
           {{"kind", c.provider.kind == llm::ProviderConfig::Kind::kOffline ? "offline" : "remote"},
            {"url", c.provider.base_url},
            {"chat_model", c.provider.chat_model},
            {"embed_model", c.provider.embed_model},
            {"temperature", c.provider.temperature},
            {"key_env", c.provider.key_env},
            {"max_parallel", c.provider.max_parallel},
            {"retries", c.provider.retry.attempts},
            {"backoff_ms", c.provider.retry.initial_backoff.count()},
            {"timeout_s", c.provider.timeout.count()},
            {"cache", c.provider.cache_path}}},
          {"train", to_json(c.train)},
          {"output", {{"dir", c.output_dir}}},
          {"seeds", c.seeds}};
}

ExperimentConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, column = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw ConfigError("config parse error at line " + std::to_string(line) + ", column " + std::to_string(column) +
                      ": " + e.what());
  }
  return config_from_json(doc);
}

ExperimentConfig parse_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

Graph load_base_graph(const ExperimentConfig& config) {
  if (config.dataset.format == "synthetic") {
    return make_cluster_graph(config.dataset.synthetic, config.dataset.synthetic_seed);
  }
  return load_dataset(config.dataset.path, config.dataset.format);
}

Graph prepare_graph(const Graph& base, const ExperimentConfig& config, std::uint64_t seed) {
  const auto imbalanced = apply_step_imbalance(base, config.imbalance.rho, config.imbalance.majority_per_class,
                                               config.imbalance.num_minority, derive_seed(seed, "imbalance"));
  return inject_uniform_noise(imbalanced, config.noise_p, derive_seed(seed, "noise"));
}

json aggregate_reports(const std::vector<SeedRun>& runs) {
  if (runs.empty()) throw std::invalid_argument("no runs to aggregate");
  std::vector<std::uint64_t> seeds;
  for (const auto& r : runs) seeds.push_back(r.seed);
  json metrics = json::object();
  auto add = [&](const std::string& name, auto&& extract) {
    std::vector<double> values;
    for (const auto& r : runs) values.push_back(extract(r.report));
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    metrics[name] = {{"mean", mean}, {"std", std::sqrt(var)}, {"values", values}};
  };
  add("accuracy", [](const json& r) { return r.at("final").at("accuracy").get<double>(); });
  add("macro_f1", [](const json& r) { return r.at("final").at("macro_f1").get<double>(); });
  add("g_mean", [](const json& r) { return r.at("final").at("g_mean").get<double>(); });
  add("noise_ratio", [](const json& r) { return r.at("rounds").back().at("noise_ratio").get<double>(); });
  add("pseudo_labels", [](const json& r) { return r.at("rounds").back().at("pseudo_labels").get<double>(); });
  return {{"seeds", seeds}, {"metrics", metrics}};
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Graph base = [&] {
    try {
      return load_base_graph(config);
    } catch (const std::exception& e) {
      throw PipelineError("load", e.what());
    }
  }();
  ExperimentResult result;
  for (auto seed : config.seeds) {
    log::info("running seed ", seed);
    try {
      result.runs.push_back(run_seed(config, base, seed));
    } catch (const std::exception& e) {
      throw RunError(seed, e.what());
    }
  }
  result.aggregate = aggregate_reports(result.runs);
  write_json(fs::path(config.output_dir) / "aggregate.json", result.aggregate);
  return result;
}

void dry_run(const ExperimentConfig& config) {
  config.validate();
  const Graph base = load_base_graph(config);
  for (auto seed : config.seeds) (void)prepare_graph(base, config, seed);
  auto provider = llm::make_provider(config.provider, prepare_graph(base, config, config.seeds.front()),
                                     config.seeds.front());
  provider->probe();
}

json report_directory(const fs::path& dir) {
  std::vector<SeedRun> runs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (!entry.is_directory() || !name.starts_with("seed_") || !fs::exists(entry.path() / "report.json")) continue;
    SeedRun run;
    run.report = read_json(entry.path() / "report.json");
    run.seed = run.report.at("seed").get<std::uint64_t>();
    runs.push_back(std::move(run));
  }
  if (runs.empty()) throw std::runtime_error("no seed_*/report.json under " + dir.string());
  std::sort(runs.begin(), runs.end(), [](const SeedRun& a, const SeedRun& b) { return a.seed < b.seed; });
  auto aggregate = aggregate_reports(runs);
  write_json(dir / "aggregate.json", aggregate);
  return aggregate;
}

SweepAxis parse_axis(const std::string& name) {
  if (name == "rho") return SweepAxis::kRho;
  if (name == "p") return SweepAxis::kP;
  throw ConfigError("sweep axis must be \"rho\" or \"p\", got \"" + name + "\"");
}

std::vector<SweepPoint> sweep(const ExperimentConfig& config, SweepAxis axis, const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  const std::string axis_name = axis == SweepAxis::kRho ? "rho" : "p";
  std::vector<ExperimentConfig> configs;
  for (double v : values) {
    ExperimentConfig c = config;
    (axis == SweepAxis::kRho ? c.imbalance.rho : c.noise_p) = v;
    c.output_dir = (fs::path(config.output_dir) / (axis_name + "_" + shortest(v))).string();
    c.validate();
    configs.push_back(std::move(c));
  }
  std::vector<SweepPoint> points;
  for (std::size_t i = 0; i < values.size(); ++i) {
    points.push_back(SweepPoint{values[i], run_experiment(configs[i]).aggregate});
  }
  fs::create_directories(config.output_dir);
  std::ofstream csv(fs::path(config.output_dir) / ("sweep_" + axis_name + ".csv"));
  if (!csv) throw std::runtime_error("cannot write sweep CSV under " + config.output_dir);
  csv.precision(17);
  csv << axis_name;
  const std::vector<std::string> names = {"accuracy", "macro_f1", "g_mean", "noise_ratio"};
  for (const auto& n : names) csv << ',' << n << "_mean," << n << "_std";
  csv << '\n';
  for (const auto& p : points) {
    csv << shortest(p.value);
    for (const auto& n : names) {
      const auto& m = p.aggregate.at("metrics").at(n);
      csv << ',' << m.at("mean").get<double>() << ',' << m.at("std").get<double>();
    }
    csv << '\n';
  }
  return points;
}

void prepare(const ExperimentConfig& config, const fs::path& out) {
  config.validate();
  const Graph base = load_base_graph(config);
  for (auto seed : config.seeds) {
    save_dataset(prepare_graph(base, config, seed), out / ("seed_" + std::to_string(seed)));
  }
}

}  // namespace graphalp
