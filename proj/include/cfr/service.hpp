#pragma once

// Session-oriented HTTP interface over an Engine.
//
//   POST /v1/sessions                {"query", "k"?, "demo_target"?}   -> 201
//   POST /v1/sessions/{id}/feedback  {"likes": [...], "dislikes": [...]} -> 200
//   GET  /v1/sessions/{id}                                             -> 200
//   GET  /v1/items/{id}                                                -> 200
//   GET  /v1/health                                                    -> 200
//
// Each session allows exactly one feedback round (RETRIEVED -> UPDATED).

#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "cfr/engine.hpp"

namespace httplib {
class Server;
}

namespace cfr {

struct ServiceConfig {
  RankerParams ranker;
  std::size_t default_k = 10;
  std::chrono::seconds session_ttl{30 * 60};
};

/// HTTP status plus JSON body.
struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;
};

enum class SessionState { retrieved, updated };

class SessionService {
 public:
  using Clock = std::chrono::steady_clock;

  SessionService(std::shared_ptr<const Engine> engine, ServiceConfig cfg);

  ApiResponse create_session(const std::string& request_body);
  ApiResponse submit_feedback(const std::string& session_id, const std::string& request_body);
  ApiResponse get_session(const std::string& session_id);
  ApiResponse get_item(const std::string& item_id) const;
  ApiResponse health() const;

  /// Drops sessions idle longer than the TTL; returns how many.
  std::size_t evict_expired(Clock::time_point now = Clock::now());
  std::size_t session_count() const;

  /// Registers the /v1 routes; optionally serves static files from
  /// `static_dir` at "/".
  void install(httplib::Server& server, const std::string& static_dir = "");

 private:
  struct Session {
    std::mutex mutex;
    std::string id;
    std::string query_text;
    std::vector<float> query_vec;
    std::vector<double> scores;
    std::vector<ItemId> shown;
    Feedback feedback;
    std::vector<double> updated_scores;
    SessionState state = SessionState::retrieved;
    Clock::time_point created_at;
    Clock::time_point last_access;
    std::optional<ItemId> demo_target;
  };

  std::shared_ptr<Session> find(const std::string& id);
  std::string new_session_id();
  nlohmann::ordered_json result_list(std::span<const double> scores, std::size_t k) const;
  nlohmann::ordered_json item_json(ItemId id, double score, std::size_t rank) const;

  std::shared_ptr<const Engine> engine_;
  ServiceConfig cfg_;
  mutable std::mutex sessions_mutex_;
  std::unordered_map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t id_counter_ = 0;
  std::uint64_t id_salt_;
};

}  // namespace cfr
