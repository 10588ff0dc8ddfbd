#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "graphalp/graph.hpp"
#include "graphalp/matrix.hpp"

namespace graphalp::llm {

/// Failure talking to a text or embedding provider.
class ProviderError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
};

struct ProviderConfig {
  enum class Kind { kOffline, kRemote };

  Kind kind = Kind::kOffline;
  std::string base_url;
  std::string chat_model = "deepseek-chat";
  std::string embed_model = "jina-embeddings-v3";
  double temperature = 0.8;
  /// Name of the environment variable holding the bearer token.
  std::string key_env;
  int max_parallel = 4;
  RetryPolicy retry;
  std::chrono::seconds timeout{60};
  /// JSONL cache file; empty disables caching.
  std::string cache_path;

  void validate() const;
};

/// One chat-completion request. `index` distinguishes repeated samples of
/// the same prompt.
struct ChatRequest {
  std::string system;
  std::string prompt;
  std::string label_text;
  std::size_t index = 0;
};

/// Source of generated node texts and their embeddings.
class Provider {
 public:
  virtual ~Provider() = default;

  /// Stable identity used in cache keys and provenance.
  virtual std::string id() const = 0;
  virtual std::string chat_model() const = 0;
  virtual std::string embed_model() const = 0;
  virtual std::string complete(const ChatRequest& request) = 0;
  /// One embedding per text, in order.
  virtual std::vector<std::vector<double>> embed(std::span<const std::string> texts) = 0;
  virtual int max_parallel() const { return 1; }
  /// Throws ProviderError when the provider cannot be used.
  virtual void probe() {}

  /// Number of completion/embedding calls that reached the backend.
  std::size_t call_count() const { return calls_.load(); }

 protected:
  void count_call() { ++calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

/// Deterministic offline stand-in for an LLM + embedding model.
///
/// Texts are class-templated strings tagged with their class; embeddings live
/// in the graph's feature space: the class centroid plus seeded Gaussian jitter.
class OfflineProvider final : public Provider {
 public:
  struct Options {
    std::vector<std::string> class_names;
    /// k x d centroids of the embedding space.
    Matrix centroids;
    /// Per-dimension jitter standard deviation (length d).
    std::vector<double> jitter;
    std::uint64_t seed = 0;
  };

  explicit OfflineProvider(Options options);

  /// Centroids of clean-labeled training nodes; jitter = `jitter_fraction` x feature std.
  static std::unique_ptr<OfflineProvider> from_graph(const Graph& graph, std::uint64_t seed,
                                                     double jitter_fraction = 0.05);

  std::string id() const override;
  std::string chat_model() const override { return "offline-template"; }
  std::string embed_model() const override { return "offline-centroid"; }
  std::string complete(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;

  const Options& options() const { return options_; }
  /// Class encoded in a generated text, or -1.
  int class_of(const std::string& text) const;

 private:
  Options options_;
};

/// OpenAI-compatible HTTP provider (chat completions + embeddings).
class RemoteProvider final : public Provider {
 public:
  explicit RemoteProvider(ProviderConfig config);

  std::string id() const override;
  std::string chat_model() const override { return config_.chat_model; }
  std::string embed_model() const override { return config_.embed_model; }
  std::string complete(const ChatRequest& request) override;
  std::vector<std::vector<double>> embed(std::span<const std::string> texts) override;
  int max_parallel() const override { return config_.max_parallel; }
  void probe() override;

 private:
  struct Response {
    int status = 0;
    std::string body;
  };
  Response post_with_retry(const std::string& path, const std::string& body);
  std::string api_key() const;

  ProviderConfig config_;
  std::string origin_;
  std::string path_prefix_;
};

/// Builds the provider described by `config`; the offline kind derives its
/// geometry from `graph`.
std::unique_ptr<Provider> make_provider(const ProviderConfig& config, const Graph& graph, std::uint64_t seed);

}  // namespace graphalp::llm
