#include "cfr/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cfr {

namespace {

// Strict weak order used everywhere items are ranked.
struct BetterFirst {
  std::span<const double> scores;
  bool operator()(ItemId a, ItemId b) const {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  }
};

void check_scores(std::span<const double> scores) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw InvalidArgument("non-finite score at item " + std::to_string(i));
  }
}

void add_group_term(std::vector<double>& scores, std::span<const ItemId> group, double weight,
                    const EmbeddingMatrix& rows) {
  if (group.empty() || weight == 0.0) return;
  // Mean over group members; summing member similarities then dividing
  // keeps one rounding path for every item.
  const double inv = 1.0 / static_cast<double>(group.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double s = 0.0;
    for (ItemId g : group) s += dot(rows.row(i), rows.row(g));
    scores[i] += weight * (s * inv);
  }
}

}  // namespace

void RankerParams::validate() const {
  if (!std::isfinite(lambda_p) || !std::isfinite(lambda_n) || lambda_p < 0.0 || lambda_n < 0.0) {
    throw InvalidArgument("lambda_p and lambda_n must be finite and non-negative");
  }
}

double dot(std::span<const float> u, std::span<const float> v) {
  if (u.size() != v.size()) throw InvalidArgument("dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) s += static_cast<double>(u[k]) * v[k];
  return s;
}

double similarity(std::span<const float> u, std::span<const float> v) {
  const double uu = dot(u, u);
  const double vv = dot(v, v);
  if (uu == 0.0 || vv == 0.0) throw InvalidArgument("zero-norm vector");
  const double c = dot(u, v) / std::sqrt(uu * vv);
  return std::clamp(c, -1.0, 1.0);
}

double group_similarity(std::span<const float> v, std::span<const std::span<const float>> group) {
  if (group.empty()) throw InvalidArgument("empty group");
  double s = 0.0;
  for (auto g : group) s += similarity(v, g);
  return s / static_cast<double>(group.size());
}

std::vector<double> score_no_feedback(std::span<const float> query, const EncodedCatalog& catalog) {
  const auto& rows = *catalog.crossmodal;
  if (query.size() != rows.dim()) throw InvalidArgument("dimension mismatch between query and catalog");
  const double qn = std::sqrt(dot(query, query));
  if (qn == 0.0) throw InvalidArgument("zero-norm vector");
  // Catalog rows are unit-norm; unit queries skip the division so the
  // score is the raw f64 dot product.
  const double inv = std::abs(qn - 1.0) <= 1e-6 ? 1.0 : 1.0 / qn;
  std::vector<double> scores(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) scores[i] = dot(rows.row(i), query) * inv;
  return scores;
}

void validate_feedback(const Feedback& feedback, std::size_t n) {
  for (const auto* list : {&feedback.likes, &feedback.dislikes}) {
    for (ItemId id : *list) {
      if (id >= n) throw InvalidArgument("invalid item id " + std::to_string(id));
    }
  }
  for (ItemId id : feedback.likes) {
    if (std::find(feedback.dislikes.begin(), feedback.dislikes.end(), id) != feedback.dislikes.end()) {
      throw InvalidArgument("item " + std::to_string(id) + " is both liked and disliked");
    }
  }
}

std::vector<double> apply_feedback(std::span<const double> base_scores, const Feedback& feedback,
                                   const RankerParams& params, const EmbeddingMatrix& unimodal) {
  params.validate();
  if (base_scores.size() != unimodal.size()) throw InvalidArgument("score array does not match catalog");
  validate_feedback(feedback, unimodal.size());
  std::vector<double> scores(base_scores.begin(), base_scores.end());
  add_group_term(scores, feedback.likes, params.lambda_p, unimodal);
  add_group_term(scores, feedback.dislikes, -params.lambda_n, unimodal);
  return scores;
}

std::vector<double> score_with_feedback(std::span<const float> query, const Feedback& feedback,
                                        const RankerParams& params, const EncodedCatalog& catalog) {
  const auto base = score_no_feedback(query, catalog);
  return apply_feedback(base, feedback, params, *catalog.unimodal);
}

Ranking rank(std::span<const double> scores) {
  check_scores(scores);
  Ranking r;
  r.order.resize(scores.size());
  std::iota(r.order.begin(), r.order.end(), ItemId{0});
  std::sort(r.order.begin(), r.order.end(), BetterFirst{scores});
  r.rank.resize(scores.size());
  for (std::size_t pos = 0; pos < r.order.size(); ++pos) r.rank[r.order[pos]] = pos + 1;
  return r;
}

std::vector<ItemId> top_k(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size()) throw InvalidArgument("k out of range");
  check_scores(scores);
  std::vector<ItemId> ids(scores.size());
  std::iota(ids.begin(), ids.end(), ItemId{0});
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), BetterFirst{scores});
  ids.resize(k);
  return ids;
}

std::size_t rank_of(std::span<const double> scores, ItemId item) {
  if (item >= scores.size()) throw InvalidArgument("invalid item id " + std::to_string(item));
  check_scores(scores);
  const BetterFirst better{scores};
  std::size_t ahead = 0;
  for (ItemId i = 0; i < scores.size(); ++i) {
    if (better(i, item)) ++ahead;
  }
  return ahead + 1;
}

}  // namespace cfr
