#pragma once

// Similarity and ranking math: cosine similarity, image-to-group mean
// similarity, text-only and feedback-weighted scores, and exact ranking
// with deterministic tie-breaks.

#include <cstddef>
#include <span>
#include <vector>

#include "cfr/encoder.hpp"
#include "cfr/error.hpp"

namespace cfr {

struct RankerParams {
  double lambda_p = 1.0;  // weight on similarity to liked items
  double lambda_n = 0.5;  // weight on similarity to disliked items

  void validate() const;
  bool operator==(const RankerParams&) const = default;
};

struct Feedback {
  std::vector<ItemId> likes;
  std::vector<ItemId> dislikes;

  bool operator==(const Feedback&) const = default;
};

/// rank[i] is the 1-based position of item i; order lists ids best-first.
struct Ranking {
  std::vector<std::size_t> rank;
  std::vector<ItemId> order;
};

/// Cosine similarity. Throws InvalidArgument on a zero vector or size
/// mismatch.
double similarity(std::span<const float> u, std::span<const float> v);

/// Plain dot product with f64 accumulation; equals cosine for unit rows.
double dot(std::span<const float> u, std::span<const float> v);

/// Mean similarity of v to every member of group. Throws on empty group.
double group_similarity(std::span<const float> v, std::span<const std::span<const float>> group);

/// score[i] = S(v_i, v_q) over the cross-modal catalog rows.
std::vector<double> score_no_feedback(std::span<const float> query, const EncodedCatalog& catalog);

/// score[i] = S(v_i, v_q) + lambda_p S(v_i, likes) - lambda_n S(v_i, dislikes).
/// Feedback terms use the unimodal catalog rows; an empty list contributes 0.
std::vector<double> score_with_feedback(std::span<const float> query, const Feedback& feedback,
                                        const RankerParams& params, const EncodedCatalog& catalog);

/// Adds the feedback terms to an existing text-only score array.
std::vector<double> apply_feedback(std::span<const double> base_scores, const Feedback& feedback,
                                   const RankerParams& params, const EmbeddingMatrix& unimodal);

/// Throws on an id outside the catalog or a like/dislike overlap.
void validate_feedback(const Feedback& feedback, std::size_t n);

/// Descending score, ties broken by ascending id.
Ranking rank(std::span<const double> scores);

/// First k entries of rank(scores).order.
std::vector<ItemId> top_k(std::span<const double> scores, std::size_t k);

/// 1-based rank of one item, same ordering contract as rank() without a
/// full sort.
std::size_t rank_of(std::span<const double> scores, ItemId item);

}  // namespace cfr
