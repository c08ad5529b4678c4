#include "dacrs/encoder.hpp"

#include <cmath>

#include "dacrs/errors.hpp"
#include "dacrs/kg.hpp"
#include "dacrs/rng.hpp"

namespace dacrs {

HashedNgramEncoder::HashedNgramEncoder(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) throw ArgumentError("encoder dimension must be positive");
}

std::string HashedNgramEncoder::id() const {
  return "hashed-ngram-3-5:" + std::to_string(dimension_);
}

std::pair<std::size_t, double> HashedNgramEncoder::bucket(std::string_view ngram) const {
  const auto h = fnv1a64(ngram);
  return {static_cast<std::size_t>(h % dimension_), ((h >> 63) & 1U) ? -1.0 : 1.0};
}

DialogueEmbedding HashedNgramEncoder::encode(std::string_view text) const {
  DialogueEmbedding out{Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(dimension_)), id(),
                        fnv1a64(text)};
  if (text.empty()) return out;
  const auto padded = "\x02" + to_lower_ascii(text) + "\x03";
  for (std::size_t n = 3; n <= 5; ++n) {
    for (std::size_t i = 0; i + n <= padded.size(); ++i) {
      const auto [index, sign] = bucket(std::string_view(padded).substr(i, n));
      out.vector[static_cast<Eigen::Index>(index)] += sign;
    }
  }
  const double norm = out.vector.norm();
  if (norm > 0.0) out.vector /= norm;
  return out;
}

HttpEmbeddingEncoder::HttpEmbeddingEncoder(HttpEndpoint endpoint, std::size_t dimension)
    : endpoint_(std::move(endpoint)), dimension_(dimension) {
  if (dimension_ == 0) dimension_ = static_cast<std::size_t>(fetch("dimension probe").size());
}

Eigen::RowVectorXd HttpEmbeddingEncoder::fetch(std::string_view text) const {
  const nlohmann::json body = {{"model", endpoint_.model}, {"input", std::string(text)}};
  const auto reply = post_json(endpoint_, "/embeddings", body);
  try {
    const auto& values = reply.at("data").at(0).at("embedding");
    Eigen::RowVectorXd v(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) v[static_cast<Eigen::Index>(i)] = values[i].get<double>();
    if (v.size() == 0 || !v.allFinite()) throw ProviderError("provider returned an invalid embedding");
    return v;
  } catch (const nlohmann::json::exception& e) {
    throw ProviderError(std::string("unexpected embedding schema: ") + e.what());
  }
}

DialogueEmbedding HttpEmbeddingEncoder::encode(std::string_view text) const {
  auto v = fetch(text);
  if (static_cast<std::size_t>(v.size()) != dimension_) {
    throw ProviderError("embedding dimension changed from " + std::to_string(dimension_) + " to " +
                        std::to_string(v.size()));
  }
  return {std::move(v), id(), fnv1a64(text)};
}

std::unique_ptr<DialogueEncoder> make_encoder(const std::string& kind, std::size_t dimension) {
  if (kind == "hashed") return std::make_unique<HashedNgramEncoder>(dimension);
  if (kind == "http") {
    return std::make_unique<HttpEmbeddingEncoder>(HttpEndpoint::from_env("DACRS_EMBED"), dimension);
  }
  throw ConfigError("unknown encoder kind '" + kind + "' (expected hashed or http)");
}

}  // namespace dacrs
