#include "dacrs/providers.hpp"

#include <httplib.h>

#include <cstdlib>

#include "dacrs/errors.hpp"

namespace dacrs {

namespace {

std::string env_or(const std::string& name, const std::string& fallback = {}) {
  const char* value = std::getenv(name.c_str());
  return value ? std::string(value) : fallback;
}

}  // namespace

HttpEndpoint HttpEndpoint::from_env(const std::string& prefix) {
  HttpEndpoint ep;
  ep.base_url = env_or(prefix + "_BASE_URL");
  if (ep.base_url.empty()) throw ConfigError(prefix + "_BASE_URL is not set");
  ep.model = env_or(prefix + "_MODEL");
  ep.api_key = env_or(prefix + "_API_KEY");
  if (const auto t = env_or(prefix + "_TIMEOUT"); !t.empty()) ep.timeout_seconds = std::stoi(t);
  return ep;
}

nlohmann::json post_json(const HttpEndpoint& endpoint, const std::string& path,
                         const nlohmann::json& body) {
  const auto scheme_end = endpoint.base_url.find("://");
  const auto host_begin = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_begin = endpoint.base_url.find('/', host_begin);
  const auto origin = endpoint.base_url.substr(0, path_begin);
  auto prefix = path_begin == std::string::npos ? std::string() : endpoint.base_url.substr(path_begin);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client client(origin);
  client.set_connection_timeout(endpoint.timeout_seconds, 0);
  client.set_read_timeout(endpoint.timeout_seconds, 0);
  client.set_write_timeout(endpoint.timeout_seconds, 0);
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  const auto result = client.Post(prefix + path, headers, body.dump(), "application/json");
  if (!result) {
    throw ProviderError("request to " + endpoint.base_url + path +
                        " failed: " + httplib::to_string(result.error()));
  }
  if (result->status < 200 || result->status >= 300) {
    throw ProviderError("request to " + endpoint.base_url + path + " returned HTTP " +
                        std::to_string(result->status));
  }
  try {
    return nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("provider returned invalid JSON: ") + e.what());
  }
}

std::string ChatCompletionProvider::complete(const std::string& prompt) {
  nlohmann::json body = {{"model", endpoint_.model},
                         {"messages", {{{"role", "user"}, {"content", prompt}}}}};
  try {
    const auto reply = post_json(endpoint_, "/chat/completions", body);
    auto text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw ProviderError("provider returned empty completion", prompt_hash(prompt));
    }
    return text;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("unexpected completion schema: ") + e.what(),
                        prompt_hash(prompt));
  } catch (const ProviderError& e) {
    throw ProviderError(e.what(), prompt_hash(prompt));
  }
}

}  // namespace dacrs
