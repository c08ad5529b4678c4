#pragma once

#include <json.hpp>

#include <string>

#include "dacrs/augment.hpp"

namespace dacrs {

/// Connection settings for an OpenAI-style HTTP endpoint.
struct HttpEndpoint {
  std::string base_url;  // e.g. http://localhost:8080/v1
  std::string model;
  std::string api_key;
  int timeout_seconds = 30;

  /// Reads `<prefix>_BASE_URL`, `<prefix>_MODEL`, `<prefix>_API_KEY` and
  /// `<prefix>_TIMEOUT`. Throws ConfigError when the base URL is unset.
  static HttpEndpoint from_env(const std::string& prefix);
};

/// POSTs a JSON body to base_url + path and parses the JSON reply.
/// Throws ProviderError on transport failure, non-2xx status or bad JSON.
nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path,
                         const nlohmann::json& body);

/// Stage-1 rewriter backed by a `/chat/completions` endpoint.
class ChatCompletionProvider : public RewriteProvider {
 public:
  explicit ChatCompletionProvider(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  std::string complete(const std::string& prompt) override;

 private:
  HttpEndpoint endpoint_;
};

}  // namespace dacrs
