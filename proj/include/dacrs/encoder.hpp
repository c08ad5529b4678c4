#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "dacrs/providers.hpp"

namespace dacrs {

struct DialogueEmbedding {
  Eigen::RowVectorXd vector;
  std::string provider_id;
  std::uint64_t text_hash = 0;
};

/// Frozen text encoder. Implementations hold no trainable state.
class DialogueEncoder {
 public:
  virtual ~DialogueEncoder() = default;
  virtual DialogueEmbedding encode(std::string_view text) const = 0;
  virtual std::size_t dimension() const = 0;
  virtual std::string id() const = 0;
};

/// Offline encoder: lowercased text wrapped in boundary markers, every
/// character n-gram (n = 3..5) hashed to a signed bucket, L2-normalized.
/// Empty text encodes to the zero vector.
class HashedNgramEncoder : public DialogueEncoder {
 public:
  explicit HashedNgramEncoder(std::size_t dimension);

  DialogueEmbedding encode(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }
  std::string id() const override;

  /// Bucket index and sign for one n-gram.
  std::pair<std::size_t, double> bucket(std::string_view ngram) const;

 private:
  std::size_t dimension_;
};

/// Encoder backed by an `/embeddings` endpoint. When `dimension` is zero the
/// constructor probes the endpoint once to learn it.
class HttpEmbeddingEncoder : public DialogueEncoder {
 public:
  HttpEmbeddingEncoder(HttpEndpoint endpoint, std::size_t dimension = 0);

  DialogueEmbedding encode(std::string_view text) const override;
  std::size_t dimension() const override { return dimension_; }
  std::string id() const override { return "http:" + endpoint_.model; }

 private:
  Eigen::RowVectorXd fetch(std::string_view text) const;

  HttpEndpoint endpoint_;
  std::size_t dimension_;
};

/// "hashed" builds a HashedNgramEncoder; "http" reads DACRS_EMBED_* from the
/// environment.
std::unique_ptr<DialogueEncoder> make_encoder(const std::string& kind, std::size_t dimension);

}  // namespace dacrs
