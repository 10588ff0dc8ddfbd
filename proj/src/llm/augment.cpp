#include "graphalp/llm/augment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <regex>

#include "graphalp/log.hpp"

namespace graphalp::llm {
namespace {

using nlohmann::json;

constexpr char kSep = '\x1f';

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string cache_slot(const std::string& kind, const std::string& key) { return kind + kSep + key; }

}  // namespace

std::string build_prompt(const PromptTemplate& tmpl, std::string_view label_text) {
  if (label_text.empty()) throw std::invalid_argument("prompt label text is empty");
  static const std::regex placeholder(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
  for (auto it = std::sregex_iterator(tmpl.user.begin(), tmpl.user.end(), placeholder); it != std::sregex_iterator();
       ++it) {
    const auto name = (*it)[1].str();
    if (name != "label" && name != "domain") {
      throw std::invalid_argument("unresolved prompt placeholder {" + name + "}");
    }
  }
  std::string out = tmpl.user;
  replace_all(out, "{domain}", tmpl.domain);
  replace_all(out, "{label}", label_text);
  return out;
}

ResponseCache::ResponseCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto record = json::parse(line);
      entries_[cache_slot(record.at("kind").get<std::string>(), record.at("key").get<std::string>())] =
          std::move(record.at("payload"));
    } catch (const json::exception& e) {
      log::warn("ignoring corrupt cache line ", line_no, " in ", path_.string(), ": ", e.what());
    }
  }
}

std::optional<json> ResponseCache::lookup(const std::string& kind, const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(cache_slot(kind, key));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const std::string& kind, const std::string& key, const json& payload) {
  std::unique_lock lock(mutex_);
  const auto slot = cache_slot(kind, key);
  if (entries_.contains(slot)) return;
  entries_[slot] = payload;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to cache " + path_.string());
  out << json{{"key", key}, {"kind", kind}, {"payload", payload}}.dump() << '\n';
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::string chat_cache_key(const Provider& provider, const ChatRequest& request) {
  return provider.id() + kSep + provider.chat_model() + kSep + request.system + kSep + request.prompt + kSep +
         std::to_string(request.index);
}

std::string embed_cache_key(const Provider& provider, const std::string& text) {
  return provider.id() + kSep + provider.embed_model() + kSep + text;
}

CachingProvider::CachingProvider(std::unique_ptr<Provider> inner, std::shared_ptr<ResponseCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {
  if (!inner_ || !cache_) throw std::invalid_argument("caching provider needs a provider and a cache");
}

std::string CachingProvider::complete(const ChatRequest& request) {
  const auto key = chat_cache_key(*inner_, request);
  if (auto hit = cache_->lookup("chat", key)) return hit->get<std::string>();
  auto text = inner_->complete(request);
  cache_->store("chat", key, text);
  return text;
}

std::vector<std::vector<double>> CachingProvider::embed(std::span<const std::string> texts) {
  std::vector<std::vector<double>> out(texts.size());
  std::vector<std::string> misses;
  std::vector<std::size_t> miss_slots;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (auto hit = cache_->lookup("embed", embed_cache_key(*inner_, texts[i]))) {
      out[i] = hit->get<std::vector<double>>();
      continue;
    }
    if (std::find(misses.begin(), misses.end(), texts[i]) == misses.end()) misses.push_back(texts[i]);
    miss_slots.push_back(i);
  }
  if (!misses.empty()) {
    const auto rows = inner_->embed(misses);
    if (rows.size() != misses.size()) throw ProviderError("provider returned the wrong number of embeddings");
    for (std::size_t i = 0; i < misses.size(); ++i) cache_->store("embed", embed_cache_key(*inner_, misses[i]), rows[i]);
    for (auto slot : miss_slots) {
      const auto pos = std::find(misses.begin(), misses.end(), texts[slot]) - misses.begin();
      out[slot] = rows[static_cast<std::size_t>(pos)];
    }
  }
  return out;
}

std::vector<std::string> generate_minority_texts(Provider& provider, const PromptTemplate& tmpl,
                                                 std::string_view class_label_text, std::size_t count,
                                                 std::size_t first_index) {
  std::vector<std::string> texts(count);
  if (count == 0) return texts;
  const auto prompt = build_prompt(tmpl, class_label_text);
  auto request_for = [&](std::size_t i) {
    return ChatRequest{tmpl.system, prompt, std::string(class_label_text), first_index + i};
  };
  const auto parallel = static_cast<std::size_t>(std::max(1, provider.max_parallel()));
  if (parallel == 1) {
    for (std::size_t i = 0; i < count; ++i) texts[i] = provider.complete(request_for(i));
  } else {
    for (std::size_t begin = 0; begin < count; begin += parallel) {
      const auto end = std::min(count, begin + parallel);
      std::vector<std::future<std::string>> wave;
      for (std::size_t i = begin; i < end; ++i) {
        wave.push_back(std::async(std::launch::async, [&provider, request = request_for(i)] {
          return provider.complete(request);
        }));
      }
      for (std::size_t i = begin; i < end; ++i) texts[i] = wave[i - begin].get();
    }
  }
  for (const auto& text : texts) {
    if (text.empty()) throw ProviderError("empty completion for label '" + std::string(class_label_text) + "'");
  }
  return texts;
}

Matrix embed_texts(Provider& provider, std::span<const std::string> texts) {
  if (texts.empty()) throw std::invalid_argument("embed_texts: no texts to embed");
  for (const auto& text : texts) {
    if (text.empty()) throw std::invalid_argument("embed_texts: empty text");
  }
  const auto rows = provider.embed(texts);
  if (rows.size() != texts.size()) throw ProviderError("provider returned the wrong number of embeddings");
  const auto d = rows.front().size();
  if (d == 0) throw ProviderError("provider returned an empty embedding");
  Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != d) {
      throw ProviderError("inconsistent embedding lengths in batch (" + std::to_string(rows[i].size()) + " vs " +
                          std::to_string(d) + ")");
    }
    for (std::size_t j = 0; j < d; ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return out;
}

std::vector<std::size_t> plan_oversampling(const ClassCounts& counts, double scale) {
  if (!(scale > 0.0 && scale <= 1.0)) throw std::invalid_argument("oversampling scale must lie in (0, 1]");
  const auto max_count = counts.counts.empty() ? 0 : *std::max_element(counts.counts.begin(), counts.counts.end());
  if (max_count == 0) throw std::invalid_argument("cannot plan oversampling: all class counts are zero");
  const auto target = scaled_count(scale, max_count);
  std::vector<std::size_t> plan(counts.counts.size(), 0);
  for (std::size_t c = 0; c < plan.size(); ++c) {
    plan[c] = target > counts.counts[c] ? target - counts.counts[c] : 0;
  }
  return plan;
}

std::vector<SyntheticNode> synthesize_minority_nodes(Provider& provider, const PromptTemplate& tmpl,
                                                     const Graph& graph, std::span<const std::size_t> plan,
                                                     std::vector<std::size_t>& generated_so_far) {
  if (plan.size() != static_cast<std::size_t>(graph.num_classes)) {
    throw std::invalid_argument("oversampling plan length differs from class count");
  }
  generated_so_far.resize(plan.size(), 0);
  std::vector<SyntheticNode> nodes;
  std::vector<std::string> texts;
  for (std::size_t c = 0; c < plan.size(); ++c) {
    if (plan[c] == 0) continue;
    const auto label_text = graph.class_name(static_cast<int>(c));
    const auto prompt = build_prompt(tmpl, label_text);
    auto generated = generate_minority_texts(provider, tmpl, label_text, plan[c], generated_so_far[c]);
    for (std::size_t i = 0; i < generated.size(); ++i) {
      SyntheticNode node;
      node.label = static_cast<int>(c);
      node.text = generated[i];
      node.provider_id = provider.id();
      node.cache_key = chat_cache_key(provider, ChatRequest{tmpl.system, prompt, label_text, generated_so_far[c] + i});
      nodes.push_back(std::move(node));
      texts.push_back(generated[i]);
    }
    generated_so_far[c] += plan[c];
  }
  if (texts.empty()) return nodes;
  const Matrix embeddings = embed_texts(provider, texts);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto row = embeddings.row(static_cast<Eigen::Index>(i));
    nodes[i].embedding.assign(row.data(), row.data() + row.size());
  }
  return nodes;
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& config, const Graph& graph, std::uint64_t seed) {
  config.validate();
  std::unique_ptr<Provider> provider;
  if (config.kind == ProviderConfig::Kind::kOffline) {
    provider = OfflineProvider::from_graph(graph, seed);
  } else {
    provider = std::make_unique<RemoteProvider>(config);
  }
  if (config.cache_path.empty()) return provider;
  return std::make_unique<CachingProvider>(std::move(provider), std::make_shared<ResponseCache>(config.cache_path));
}

}  // namespace graphalp::llm
