#include "graphalp/llm/provider.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "graphalp/log.hpp"

namespace graphalp::llm {
namespace {

using nlohmann::json;

bool retryable(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

void ProviderConfig::validate() const {
  if (kind == Kind::kRemote) {
    if (base_url.empty()) throw std::invalid_argument("remote provider needs a base URL");
    if (key_env.empty()) throw std::invalid_argument("remote provider needs an API key environment variable name");
  }
  if (max_parallel < 1) throw std::invalid_argument("max_parallel must be at least 1");
  if (retry.attempts < 1) throw std::invalid_argument("retry attempts must be at least 1");
  if (!(temperature >= 0.0 && temperature <= 2.0)) throw std::invalid_argument("temperature must lie in [0, 2]");
}

RemoteProvider::RemoteProvider(ProviderConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto scheme = config_.base_url.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("base URL needs a scheme: " + config_.base_url);
  const auto slash = config_.base_url.find('/', scheme + 3);
  origin_ = config_.base_url.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? std::string{} : config_.base_url.substr(slash);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string RemoteProvider::id() const { return "remote:" + config_.base_url; }

std::string RemoteProvider::api_key() const {
  const char* value = std::getenv(config_.key_env.c_str());
  if (value == nullptr || *value == '\0') {
    throw ProviderError("environment variable " + config_.key_env + " holding the API key is not set");
  }
  return value;
}

RemoteProvider::Response RemoteProvider::post_with_retry(const std::string& path, const std::string& body) {
  const httplib::Headers headers = {{"Authorization", "Bearer " + api_key()}};
  auto backoff = config_.retry.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= config_.retry.attempts; ++attempt) {
    httplib::Client client(origin_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    count_call();
    auto result = client.Post(path_prefix_ + path, headers, body, "application/json");
    if (result && result->status == 200) return {result->status, result->body};
    if (result) {
      last_error = "HTTP " + std::to_string(result->status) + ": " + result->body.substr(0, 200);
      if (!retryable(result->status)) break;
    } else {
      last_error = httplib::to_string(result.error());
    }
    if (attempt < config_.retry.attempts) {
      log::warn("provider request to ", path, " failed (", last_error, "); retry ", attempt, " in ", backoff.count(),
                " ms");
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw ProviderError("request to " + origin_ + path_prefix_ + path + " failed: " + last_error);
}

std::string RemoteProvider::complete(const ChatRequest& request) {
  json messages = json::array();
  if (!request.system.empty()) messages.push_back({{"role", "system"}, {"content", request.system}});
  messages.push_back({{"role", "user"}, {"content", request.prompt}});
  const json body = {{"model", config_.chat_model}, {"messages", messages}, {"temperature", config_.temperature}};
  const auto response = post_with_retry("/chat/completions", body.dump());
  std::string content;
  try {
    const auto parsed = json::parse(response.body);
    content = parsed.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed chat completion response: ") + e.what());
  }
  if (content.empty()) throw ProviderError("empty completion for label '" + request.label_text + "'");
  return content;
}

std::vector<std::vector<double>> RemoteProvider::embed(std::span<const std::string> texts) {
  const json body = {{"model", config_.embed_model}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
  const auto response = post_with_retry("/embeddings", body.dump());
  std::vector<std::vector<double>> out(texts.size());
  try {
    const auto parsed = json::parse(response.body);
    const auto& data = parsed.at("data");
    if (data.size() != texts.size()) {
      throw ProviderError("embedding response has " + std::to_string(data.size()) + " rows for " +
                          std::to_string(texts.size()) + " texts");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto slot = data[i].contains("index") ? data[i].at("index").get<std::size_t>() : i;
      if (slot >= out.size()) throw ProviderError("embedding response index out of range");
      out[slot] = data[i].at("embedding").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed embedding response: ") + e.what());
  }
  return out;
}

void RemoteProvider::probe() {
  (void)api_key();
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  auto result = client.Get(path_prefix_ + "/models", {{"Authorization", "Bearer " + api_key()}});
  if (!result) throw ProviderError("provider at " + config_.base_url + " unreachable: " + httplib::to_string(result.error()));
}

}  // namespace graphalp::llm
