#include "dacrs/service.hpp"

#include <httplib.h>
#include <json.hpp>

#include <cstdio>
#include <random>
#include <unordered_set>

namespace dacrs {

using nlohmann::json;

namespace {

json error_body(const std::string& code, const std::string& message, bool retriable) {
  return {{"error", {{"code", code}, {"message", message}, {"retriable", retriable}}}};
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json entity_json(const Kg& kg, EntityId id) {
  const auto& e = kg.entity(id);
  return {{"entity_id", id}, {"name", e.name}, {"is_item", e.is_item}};
}

}  // namespace

RecommendationService::RecommendationService(const Recommender& recommender,
                                             ServiceOptions options,
                                             std::function<Clock::time_point()> now)
    : recommender_(recommender),
      options_(std::move(options)),
      now_(std::move(now)),
      linker_(recommender.kg()),
      checkpoint_hash_(dacrs::checkpoint_hash(recommender.checkpoint())),
      session_salt_(std::random_device{}() ^ (static_cast<std::uint64_t>(std::random_device{}()) << 32)) {}

std::string RecommendationService::create_session() {
  evict_idle();
  auto session = std::make_shared<Session>();
  session->created = session->last_active = now_();
  const std::lock_guard lock(sessions_mutex_);
  do {
    ++session_counter_;
    session->id = hex64(splitmix64(session_salt_ ^ session_counter_)) + hex64(session_counter_);
  } while (sessions_.contains(session->id));
  sessions_.emplace(session->id, session);
  return session->id;
}

std::optional<RecommendOutcome> RecommendationService::handle_recommend(
    const std::string& session_id, const std::string& utterance, std::size_t k) {
  evict_idle();
  std::shared_ptr<Session> session;
  {
    const std::lock_guard lock(sessions_mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    session = it->second;
  }
  const std::lock_guard session_lock(session->mutex);

  RecommendOutcome outcome;
  Utterance turn{Speaker::user, utterance, {}};
  std::unordered_set<EntityId> seen;
  for (const auto& m : linker_.link(utterance)) {
    if (seen.insert(m.entity_id).second) turn.entities.push_back(m.entity_id);
  }
  outcome.linked_entities = turn.entities;

  auto utterances = session->utterances;
  auto entities = session->entities;
  utterances.push_back(turn);
  for (const auto id : turn.entities) {
    if (std::find(entities.begin(), entities.end(), id) == entities.end()) entities.push_back(id);
  }
  outcome.recommendations =
      recommender_.recommend(utterances, entities, k, options_.exclude_mentioned);

  std::string reply = "Recommended:";
  for (std::size_t i = 0; i < outcome.recommendations.ranked.size(); ++i) {
    reply += (i == 0 ? " " : ", ") + recommender_.kg().entity(outcome.recommendations.ranked[i].item).name;
  }
  utterances.push_back({Speaker::recommender, std::move(reply), {}});
  session->utterances = std::move(utterances);
  session->entities = std::move(entities);
  session->last_active = now_();
  return outcome;
}

std::size_t RecommendationService::evict_idle() {
  const auto cutoff = now_() - options_.idle_timeout;
  const std::lock_guard lock(sessions_mutex_);
  return std::erase_if(sessions_, [&](const auto& entry) {
    // A session busy with a request is never evicted mid-flight.
    std::unique_lock session_lock(entry.second->mutex, std::try_to_lock);
    return session_lock.owns_lock() && entry.second->last_active < cutoff;
  });
}

std::size_t RecommendationService::session_count() const {
  const std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

void RecommendationService::attach(httplib::Server& server) {
  const auto send = [this](httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_header("Access-Control-Allow-Origin", options_.cors_origin);
    res.set_content(body.dump(), "application/json");
  };

  server.Options(R"(/api/.*)", [this](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", options_.cors_origin);
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });

  server.Post("/api/session", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, 201, {{"session_id", create_session()}});
  });

  server.Post("/api/recommend", [this, send](const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send(res, 400, error_body("bad_request", "body is not valid JSON", false));
    }
    if (!body.is_object() || !body.contains("session_id") || !body["session_id"].is_string() ||
        !body.contains("utterance") || !body["utterance"].is_string()) {
      return send(res, 400,
                  error_body("bad_request", "session_id and utterance strings are required", false));
    }
    std::size_t k = options_.default_k;
    if (body.contains("k")) {
      if (!body["k"].is_number_integer() || body["k"].get<long long>() < 1) {
        return send(res, 400, error_body("bad_request", "k must be a positive integer", false));
      }
      k = std::min<std::size_t>(body["k"].get<std::size_t>(), options_.max_k);
    }
    try {
      const auto outcome = handle_recommend(body["session_id"].get<std::string>(),
                                            body["utterance"].get<std::string>(), k);
      if (!outcome) return send(res, 404, error_body("unknown_session", "session not found", false));
      json recs = json::array();
      for (std::size_t i = 0; i < outcome->recommendations.ranked.size(); ++i) {
        const auto& r = outcome->recommendations.ranked[i];
        recs.push_back({{"item_id", r.item},
                        {"name", recommender_.kg().entity(r.item).name},
                        {"score", r.score},
                        {"rank", i + 1}});
      }
      json linked = json::array();
      for (const auto id : outcome->linked_entities) linked.push_back(entity_json(recommender_.kg(), id));
      send(res, 200, {{"recommendations", recs}, {"linked_entities", linked}});
    } catch (const ProviderError& e) {
      send(res, 502, error_body("provider_error", e.what(), true));
    } catch (const std::exception& e) {
      send(res, 500, error_body("model_error", e.what(), false));
    }
  });

  server.Get("/api/entities", [this, send](const httplib::Request& req, httplib::Response& res) {
    std::size_t limit = 10;
    if (req.has_param("limit")) {
      try {
        limit = std::stoul(req.get_param_value("limit"));
      } catch (const std::exception&) {
        return send(res, 400, error_body("bad_request", "limit must be a non-negative integer", false));
      }
    }
    limit = std::min<std::size_t>(limit, 100);
    json matches = json::array();
    for (const auto id : linker_.search_prefix(req.get_param_value("q"), limit)) {
      matches.push_back(entity_json(recommender_.kg(), id));
    }
    send(res, 200, {{"matches", matches}});
  });

  server.Get("/api/health", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, 200, {{"status", "ok"},
                    {"checkpoint_hash", hex64(checkpoint_hash_)},
                    {"num_entities", recommender_.kg().num_entities()}});
  });

  server.set_error_handler([this, send](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      send(res, res.status, error_body(res.status == 404 ? "not_found" : "error",
                                       httplib::status_message(res.status), false));
    }
  });
  server.set_exception_handler(
      [send](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        send(res, 500, error_body("internal_error", "unhandled server error", false));
      });
}

std::pair<std::string, int> parse_bind_address(const std::string& address) {
  const auto colon = address.rfind(':');
  try {
    if (colon == std::string::npos) return {"127.0.0.1", std::stoi(address)};
    return {address.substr(0, colon), std::stoi(address.substr(colon + 1))};
  } catch (const std::exception&) {
    throw ArgumentError("bad bind address '" + address + "' (expected host:port)");
  }
}

}  // namespace dacrs
