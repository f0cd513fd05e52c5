#include "cfr/selector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cfr/ranker.hpp"

namespace cfr {

std::vector<ItemId> select_candidates(std::span<const double> scores, const EmbeddingMatrix& images,
                                      const SelectorConfig& cfg, std::span<const ItemId> exclude) {
  const std::size_t n = scores.size();
  if (images.size() != n) throw InvalidArgument("score array does not match catalog");
  if (!std::isfinite(cfg.lambda_diversity) || cfg.lambda_diversity < 0.0) {
    throw InvalidArgument("lambda_diversity must be finite and non-negative");
  }
  std::vector<bool> taken(n, false);
  std::size_t available = n;
  for (ItemId e : exclude) {
    if (e >= n) throw InvalidArgument("invalid excluded id");
    if (!taken[e]) --available;
    taken[e] = true;
  }
  if (cfg.k < 1 || cfg.k > available) throw InvalidArgument("k out of range");

  if (cfg.lambda_diversity == 0.0 && exclude.empty()) return top_k(scores, cfg.k);
  for (double s : scores) {
    if (!std::isfinite(s)) throw InvalidArgument("non-finite score");
  }

  std::vector<ItemId> picked;
  picked.reserve(cfg.k);
  // Running sum of similarities to every picked item.
  std::vector<double> sim_sum(n, 0.0);
  while (picked.size() < cfg.k) {
    const double inv = picked.empty() ? 0.0 : 1.0 / static_cast<double>(picked.size());
    ItemId best = 0;
    double best_obj = -std::numeric_limits<double>::infinity();
    bool found = false;
    for (ItemId i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double obj = picked.empty() ? scores[i] : scores[i] - cfg.lambda_diversity * (sim_sum[i] * inv);
      if (!found || obj > best_obj) {
        best = i;
        best_obj = obj;
        found = true;
      }
    }
    picked.push_back(best);
    taken[best] = true;
    if (cfg.lambda_diversity != 0.0) {
      const auto row = images.row(best);
      for (ItemId i = 0; i < n; ++i) {
        if (!taken[i]) sim_sum[i] += dot(images.row(i), row);
      }
    }
  }
  return picked;
}

}  // namespace cfr
