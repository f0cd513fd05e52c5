#include "cfr/oracle.hpp"

#include <algorithm>
#include <set>

namespace cfr {

std::string_view to_string(OracleMode mode) {
  switch (mode) {
    case OracleMode::preference_embedding:
      return "preference_embedding";
    case OracleMode::attribute_iou:
      return "attribute_iou";
  }
  return "?";
}

OracleMode oracle_mode_from_string(std::string_view s) {
  if (s == "preference_embedding") return OracleMode::preference_embedding;
  if (s == "attribute_iou") return OracleMode::attribute_iou;
  throw InvalidArgument("unknown oracle mode '" + std::string(s) + "'");
}

double attribute_iou(std::span<const std::string> a, std::span<const std::string> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("attribute sets must be non-empty");
  const std::set<std::string_view> sa(a.begin(), a.end());
  const std::set<std::string_view> sb(b.begin(), b.end());
  std::size_t inter = 0;
  for (auto t : sa) inter += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double oracle_similarity(ItemId candidate, ItemId target, OracleMode mode, const Dataset& ds) {
  if (candidate >= ds.size() || target >= ds.size()) throw InvalidArgument("invalid item id");
  if (mode == OracleMode::attribute_iou) {
    return attribute_iou(ds.items[candidate].attributes, ds.items[target].attributes);
  }
  return dot(ds.preference_images.row(candidate), ds.preference_images.row(target));
}

Feedback give_feedback(std::span<const ItemId> candidates, ItemId target, const OracleConfig& cfg,
                       const Dataset& ds) {
  if (candidates.empty()) throw InvalidArgument("candidate pool is empty");
  if (cfg.n_like == 0 || cfg.n_dislike == 0) throw InvalidArgument("n_like and n_dislike must be positive");
  if (cfg.n_like + cfg.n_dislike > candidates.size()) {
    throw InvalidArgument("n_like + n_dislike exceeds candidate pool size");
  }
  if (target >= ds.size()) throw InvalidArgument("invalid target id");

  struct Scored {
    double sim;
    ItemId id;
  };
  std::vector<Scored> scored;
  scored.reserve(candidates.size());
  for (ItemId c : candidates) scored.push_back({oracle_similarity(c, target, cfg.mode, ds), c});
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.id < b.id; });
  if (std::adjacent_find(scored.begin(), scored.end(),
                         [](const Scored& a, const Scored& b) { return a.id == b.id; }) != scored.end()) {
    throw InvalidArgument("candidate pool contains duplicates");
  }
  auto by_sim = [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.id < b.id;
  };
  std::sort(scored.begin(), scored.end(), by_sim);

  Feedback fb;
  for (std::size_t i = 0; i < cfg.n_like; ++i) fb.likes.push_back(scored[i].id);
  // Least similar first. Among equal similarities the lower id wins here
  // as well, so walk the tail in blocks of equal similarity.
  std::vector<Scored> tail(scored.begin() + static_cast<std::ptrdiff_t>(cfg.n_like), scored.end());
  std::stable_sort(tail.begin(), tail.end(), [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim < b.sim;
    return a.id < b.id;
  });
  for (std::size_t i = 0; i < cfg.n_dislike; ++i) fb.dislikes.push_back(tail[i].id);
  return fb;
}

}  // namespace cfr
