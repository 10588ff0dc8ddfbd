#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "graphalp/graph.hpp"
#include "graphalp/llm/provider.hpp"
#include "graphalp/matrix.hpp"

namespace graphalp::llm {

/// Prompt with `{label}` and `{domain}` placeholders.
struct PromptTemplate {
  std::string system = "You are an expert academic writer.";
  std::string user =
      "Write the title and abstract of a {domain} research paper whose topic belongs to the category "
      "\"{label}\". Answer in the form:\nTitle: <title>\nAbstract: <abstract>";
  std::string domain = "computer science";
};

/// Substitutes placeholders; throws std::invalid_argument on an empty label or
/// an unresolved `{...}` placeholder.
std::string build_prompt(const PromptTemplate& tmpl, std::string_view label_text);

/// LLM-generated minority node before insertion into the graph.
struct SyntheticNode {
  int label = 0;
  std::string text;
  std::vector<double> embedding;
  std::string provider_id;
  std::string cache_key;
};

/// Append-only JSONL store of provider results: one {key, kind, payload} per line.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);

  std::optional<nlohmann::json> lookup(const std::string& kind, const std::string& key) const;
  void store(const std::string& kind, const std::string& key, const nlohmann::json& payload);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, nlohmann::json> entries_;
};

/// Serves repeated requests from a ResponseCache and forwards misses.
class CachingProvider final : public Provider {
 public:
  CachingProvider(std::unique_ptr<Provider> inner, std::shared_ptr<ResponseCache> cache);

  std::string id() const override { return inner_->id(); }
  std::string chat_model() const override { return inner_->chat_model(); }
  std::string embed_model() const override { return inner_->embed_model(); }
  std::string complete(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;
  int max_parallel() const override { return inner_->max_parallel(); }
  void probe() override { inner_->probe(); }

  Provider& inner() { return *inner_; }

 private:
  std::unique_ptr<Provider> inner_;
  std::shared_ptr<ResponseCache> cache_;
};

std::string chat_cache_key(const Provider& provider, const ChatRequest& request);
std::string embed_cache_key(const Provider& provider, const std::string& text);

/// Generates `count` texts of one class; request indices start at `first_index`.
/// Results are in index order regardless of completion order.
std::vector<std::string> generate_minority_texts(Provider& provider, const PromptTemplate& tmpl,
                                                 std::string_view class_label_text, std::size_t count,
                                                 std::size_t first_index = 0);

/// count x d_lm matrix, one row per text in order.
Matrix embed_texts(Provider& provider, std::span<const std::string> texts);

/// Per-class generation counts raising every class to round(scale * max count).
std::vector<std::size_t> plan_oversampling(const ClassCounts& counts, double scale);

/// Executes a plan: generates and embeds `plan[c]` nodes of class c. Request
/// indices continue from `generated_so_far[c]`, which is advanced.
std::vector<SyntheticNode> synthesize_minority_nodes(Provider& provider, const PromptTemplate& tmpl,
                                                     const Graph& graph, std::span<const std::size_t> plan,
                                                     std::vector<std::size_t>& generated_so_far);

}  // namespace graphalp::llm
