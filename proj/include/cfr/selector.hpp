#pragma once

#include <span>
#include <vector>

#include "cfr/embedding_store.hpp"

namespace cfr {

struct SelectorConfig {
  std::size_t k = 10;             // candidate pool size
  double lambda_diversity = 0.0;  // penalty on similarity to earlier picks

  bool operator==(const SelectorConfig&) const = default;
};

/// Picks the candidate pool shown to the feedback agent.
///
/// With lambda_diversity == 0 this is top_k(scores, k). Otherwise items are
/// picked greedily: the first pick is the plain argmax, and each later pick
/// maximizes
///
///     scores[i] - lambda_diversity * mean_{j in picked} S(v_i, v_j)
///
/// over items not yet picked, ties to the lower id. `images` supplies the
/// v_i (unit rows). Items listed in `exclude` are never picked.
std::vector<ItemId> select_candidates(std::span<const double> scores, const EmbeddingMatrix& images,
                                      const SelectorConfig& cfg, std::span<const ItemId> exclude = {});

}  // namespace cfr
