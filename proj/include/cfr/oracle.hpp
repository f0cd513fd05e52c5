#pragma once

// Simulated feedback agent. Judges candidates by their similarity to the
// hidden target, either in the preference embedding space (never the
// retrieval space) or by attribute intersection-over-union.

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfr/embedding_store.hpp"
#include "cfr/ranker.hpp"

namespace cfr {

enum class OracleMode { preference_embedding, attribute_iou };

std::string_view to_string(OracleMode mode);
OracleMode oracle_mode_from_string(std::string_view s);

struct OracleConfig {
  std::size_t n_like = 1;
  std::size_t n_dislike = 1;
  OracleMode mode = OracleMode::preference_embedding;

  bool operator==(const OracleConfig&) const = default;
};

/// |a ∩ b| / |a ∪ b| over distinct tokens. Throws on an empty set.
double attribute_iou(std::span<const std::string> a, std::span<const std::string> b);

/// Oracle similarity of one candidate to the target under cfg.mode.
double oracle_similarity(ItemId candidate, ItemId target, OracleMode mode, const Dataset& ds);

/// likes: the n_like candidates most similar to target; dislikes: the
/// n_dislike least similar. Ties go to the lower id in both directions
/// (ascending id within equal similarity), so the result does not depend on
/// candidate order.
Feedback give_feedback(std::span<const ItemId> candidates, ItemId target, const OracleConfig& cfg,
                       const Dataset& ds);

}  // namespace cfr
