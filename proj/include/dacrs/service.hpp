#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "dacrs/inference.hpp"

namespace httplib {
class Server;
}

namespace dacrs {

struct ServiceOptions {
  std::chrono::seconds idle_timeout{30 * 60};
  std::string cors_origin = "*";
  bool exclude_mentioned = true;
  std::size_t default_k = 10;
  std::size_t max_k = 1000;
};

struct Session {
  std::string id;
  std::vector<Utterance> utterances;
  std::vector<EntityId> entities;  // user-mentioned, first-mention order
  std::chrono::steady_clock::time_point created;
  std::chrono::steady_clock::time_point last_active;
  std::mutex mutex;  // serializes requests within the session
};

struct RecommendOutcome {
  RecommendationList recommendations;
  std::vector<EntityId> linked_entities;
};

/// Live recommendation over in-memory sessions. The model is shared
/// read-only; only session state changes between requests.
class RecommendationService {
 public:
  using Clock = std::chrono::steady_clock;

  RecommendationService(const Recommender& recommender, ServiceOptions options = {},
                        std::function<Clock::time_point()> now = Clock::now);

  std::string create_session();

  /// Appends the user turn, links entities, and ranks items over the whole
  /// session. Returns nullopt for an unknown session. Session state is left
  /// untouched if the encoder or model throws.
  std::optional<RecommendOutcome> handle_recommend(const std::string& session_id,
                                                   const std::string& utterance, std::size_t k);

  /// Drops sessions idle longer than the timeout; returns how many.
  std::size_t evict_idle();
  std::size_t session_count() const;
  std::uint64_t checkpoint_hash() const noexcept { return checkpoint_hash_; }

  /// Registers the /api routes on an httplib server.
  void attach(httplib::Server& server);

 private:
  const Recommender& recommender_;
  ServiceOptions options_;
  std::function<Clock::time_point()> now_;
  EntityLinker linker_;
  std::uint64_t checkpoint_hash_;
  mutable std::mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t session_counter_ = 0;
  std::uint64_t session_salt_;
};

/// Splits "host:port"; a bare port binds 127.0.0.1.
std::pair<std::string, int> parse_bind_address(const std::string& address);

}  // namespace dacrs
