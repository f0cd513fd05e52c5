#include "cfr/service.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

#include <httplib.h>

#include "cfr/rng.hpp"

namespace cfr {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

ApiResponse error(int status, const std::string& message) {
  ordered_json body;
  body["error"] = message;
  return {status, std::move(body)};
}

std::string_view state_name(SessionState s) { return s == SessionState::retrieved ? "RETRIEVED" : "UPDATED"; }

// Parses a JSON array of non-negative integers; nullopt if malformed.
std::optional<std::vector<ItemId>> id_list(const json& j) {
  if (!j.is_array()) return std::nullopt;
  std::vector<ItemId> out;
  for (const auto& e : j) {
    if (!e.is_number_integer() || e.get<std::int64_t>() < 0 ||
        e.get<std::int64_t>() > static_cast<std::int64_t>(UINT32_MAX)) {
      return std::nullopt;
    }
    out.push_back(static_cast<ItemId>(e.get<std::int64_t>()));
  }
  return out;
}

}  // namespace

SessionService::SessionService(std::shared_ptr<const Engine> engine, ServiceConfig cfg)
    : engine_(std::move(engine)), cfg_(cfg), id_salt_(std::random_device{}()) {
  if (!engine_) throw InvalidArgument("service needs an engine");
  cfg_.ranker.validate();
  if (cfg_.default_k < 1 || cfg_.default_k > engine_->size()) throw InvalidArgument("default k out of range");
}

std::string SessionService::new_session_id() {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(splitmix64(id_salt_ ^ splitmix64(++id_counter_))));
  return buf;
}

std::shared_ptr<SessionService::Session> SessionService::find(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return nullptr;
  return it->second;
}

ordered_json SessionService::item_json(ItemId id, double score, std::size_t rank) const {
  const auto& item = engine_->dataset().items[id];
  ordered_json j;
  j["id"] = id;
  j["text"] = item.text;
  j["image_uri"] = item.image_uri ? json(*item.image_uri) : json(nullptr);
  j["score"] = score;
  j["rank"] = rank;
  return j;
}

ordered_json SessionService::result_list(std::span<const double> scores, std::size_t k) const {
  auto arr = ordered_json::array();
  const auto ids = top_k(scores, k);
  for (std::size_t pos = 0; pos < ids.size(); ++pos) arr.push_back(item_json(ids[pos], scores[ids[pos]], pos + 1));
  return arr;
}

ApiResponse SessionService::create_session(const std::string& request_body) {
  evict_expired();
  json req;
  try {
    req = json::parse(request_body);
  } catch (const json::exception&) {
    return error(400, "request body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("query") || !req["query"].is_string()) {
    return error(400, "field 'query' (string) is required");
  }
  std::size_t k = cfg_.default_k;
  if (req.contains("k") && !req["k"].is_null()) {
    if (!req["k"].is_number_integer()) return error(422, "k must be an integer");
    const auto kk = req["k"].get<std::int64_t>();
    if (kk < 1 || kk > static_cast<std::int64_t>(engine_->size())) {
      return error(422, "k must be between 1 and " + std::to_string(engine_->size()));
    }
    k = static_cast<std::size_t>(kk);
  }
  std::optional<ItemId> demo_target;
  if (req.contains("demo_target") && !req["demo_target"].is_null()) {
    const auto& t = req["demo_target"];
    if (!t.is_number_integer() || t.get<std::int64_t>() < 0 ||
        t.get<std::int64_t>() >= static_cast<std::int64_t>(engine_->size())) {
      return error(422, "demo_target must be a valid item id");
    }
    demo_target = static_cast<ItemId>(t.get<std::int64_t>());
  }

  auto session = std::make_shared<Session>();
  session->query_text = req["query"].get<std::string>();
  try {
    session->query_vec = engine_->encode_text(session->query_text);
  } catch (const InvalidArgument& e) {
    return error(400, e.what());
  }
  session->scores = engine_->scores(session->query_vec);
  session->shown = top_k(session->scores, k);
  session->created_at = session->last_access = Clock::now();
  session->demo_target = demo_target;

  ordered_json body;
  {
    std::lock_guard lock(sessions_mutex_);
    session->id = new_session_id();
    sessions_[session->id] = session;
  }
  body["session_id"] = session->id;
  body["state"] = state_name(session->state);
  body["results"] = result_list(session->scores, k);
  if (demo_target) body["demo_target_rank"] = rank_of(session->scores, *demo_target);
  return {201, std::move(body)};
}

ApiResponse SessionService::submit_feedback(const std::string& session_id, const std::string& request_body) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session");
  std::lock_guard lock(session->mutex);
  session->last_access = Clock::now();
  if (session->state != SessionState::retrieved) {
    return error(409, "feedback was already submitted for this session");
  }

  json req;
  try {
    req = json::parse(request_body);
  } catch (const json::exception&) {
    return error(400, "request body is not valid JSON");
  }
  if (!req.is_object()) return error(422, "body must be an object with 'likes' and 'dislikes'");
  Feedback fb;
  for (auto [key, out] : {std::pair{"likes", &fb.likes}, std::pair{"dislikes", &fb.dislikes}}) {
    if (!req.contains(key) || req[key].is_null()) continue;
    auto ids = id_list(req[key]);
    if (!ids) return error(422, std::string(key) + " must be an array of item ids");
    *out = std::move(*ids);
  }
  if (fb.likes.empty() && fb.dislikes.empty()) return error(422, "likes and dislikes are both empty");
  for (const auto* list : {&fb.likes, &fb.dislikes}) {
    for (std::size_t i = 0; i < list->size(); ++i) {
      const ItemId id = (*list)[i];
      if (std::find(session->shown.begin(), session->shown.end(), id) == session->shown.end()) {
        return error(422, "item " + std::to_string(id) + " was not shown in this session");
      }
      if (std::find(list->begin(), list->begin() + static_cast<std::ptrdiff_t>(i), id) !=
          list->begin() + static_cast<std::ptrdiff_t>(i)) {
        return error(422, "item " + std::to_string(id) + " is listed twice");
      }
    }
  }
  for (ItemId id : fb.likes) {
    if (std::find(fb.dislikes.begin(), fb.dislikes.end(), id) != fb.dislikes.end()) {
      return error(422, "item " + std::to_string(id) + " is both liked and disliked");
    }
  }

  session->updated_scores = apply_feedback(session->scores, fb, cfg_.ranker, *engine_->catalog().unimodal);
  session->feedback = std::move(fb);
  session->state = SessionState::updated;

  ordered_json body;
  body["session_id"] = session->id;
  body["state"] = state_name(session->state);
  body["results"] = result_list(session->updated_scores, session->shown.size());
  if (session->demo_target) {
    body["demo_target_rank_before"] = rank_of(session->scores, *session->demo_target);
    body["demo_target_rank_after"] = rank_of(session->updated_scores, *session->demo_target);
  }
  return {200, std::move(body)};
}

ApiResponse SessionService::get_session(const std::string& session_id) {
  auto session = find(session_id);
  if (!session) return error(404, "unknown session");
  std::lock_guard lock(session->mutex);
  session->last_access = Clock::now();
  const std::size_t k = session->shown.size();

  ordered_json body;
  body["session_id"] = session->id;
  body["query"] = session->query_text;
  body["state"] = state_name(session->state);
  body["k"] = k;
  auto shown = ordered_json::array();
  for (std::size_t pos = 0; pos < k; ++pos) {
    const ItemId id = session->shown[pos];
    shown.push_back(item_json(id, session->scores[id], pos + 1));
  }
  body["shown"] = std::move(shown);
  if (session->state == SessionState::updated) {
    ordered_json fb;
    fb["likes"] = session->feedback.likes;
    fb["dislikes"] = session->feedback.dislikes;
    body["feedback"] = std::move(fb);
    body["results"] = result_list(session->updated_scores, k);
  }
  if (session->demo_target) {
    body["demo_target"] = *session->demo_target;
    body["demo_target_rank_before"] = rank_of(session->scores, *session->demo_target);
    if (session->state == SessionState::updated) {
      body["demo_target_rank_after"] = rank_of(session->updated_scores, *session->demo_target);
    }
  }
  return {200, std::move(body)};
}

ApiResponse SessionService::get_item(const std::string& item_id) const {
  std::size_t pos = 0;
  unsigned long long id = 0;
  try {
    id = std::stoull(item_id, &pos);
  } catch (const std::exception&) {
    return error(404, "unknown item");
  }
  if (pos != item_id.size() || item_id.empty() || item_id[0] == '-' || id >= engine_->size()) {
    return error(404, "unknown item");
  }
  const auto& item = engine_->dataset().items[id];
  ordered_json body;
  body["id"] = item.id;
  body["text"] = item.text;
  body["attributes"] = item.attributes;
  body["image_uri"] = item.image_uri ? json(*item.image_uri) : json(nullptr);
  return {200, std::move(body)};
}

ApiResponse SessionService::health() const {
  ordered_json body;
  body["status"] = "ok";
  body["items"] = engine_->size();
  body["dim"] = engine_->catalog().dim();
  body["sep_enc"] = engine_->stack().sep_enc();
  body["session_count"] = session_count();
  return {200, std::move(body)};
}

std::size_t SessionService::evict_expired(Clock::time_point now) {
  std::lock_guard lock(sessions_mutex_);
  std::size_t dropped = 0;
  for (auto it = sessions_.begin(); it != sessions_.end();) {
    bool expired = false;
    {
      std::lock_guard session_lock(it->second->mutex);
      expired = now - it->second->last_access > cfg_.session_ttl;
    }
    if (expired) {
      it = sessions_.erase(it);
      ++dropped;
    } else {
      ++it;
    }
  }
  return dropped;
}

std::size_t SessionService::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

void SessionService::install(httplib::Server& server, const std::string& static_dir) {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Post("/v1/sessions", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, create_session(req.body));
  });
  server.Post(R"(/v1/sessions/([^/]+)/feedback)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, submit_feedback(req.matches[1], req.body));
  });
  server.Get(R"(/v1/sessions/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_session(req.matches[1]));
  });
  server.Get(R"(/v1/items/([^/]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, get_item(req.matches[1]));
  });
  server.Get("/v1/health", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, health()); });
  server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(ordered_json{{"error", what}}.dump(), "application/json");
  });
  if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
    throw InvalidArgument("static directory does not exist: " + static_dir);
  }
}

}  // namespace cfr
