#pragma once

// Brute-force reference implementations shared by the unit tests and the
// acceptance binary. Deliberately naive.

#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "cfr/embedding_store.hpp"
#include "cfr/oracle.hpp"
#include "cfr/rng.hpp"

namespace cfr::testing {

inline std::vector<ItemId> stable_sort_oracle(const std::vector<double>& scores) {
  std::vector<ItemId> ids(scores.size());
  std::iota(ids.begin(), ids.end(), ItemId{0});
  std::stable_sort(ids.begin(), ids.end(), [&](ItemId a, ItemId b) { return scores[a] > scores[b]; });
  return ids;
}

inline std::vector<double> random_scores(Rng& rng, std::size_t n, bool coarse = false) {
  std::vector<double> s(n);
  for (auto& x : s) x = coarse ? static_cast<double>(rng.below(8)) : rng.normal();
  return s;
}

inline std::vector<ItemId> random_pool(Rng& rng, std::size_t n_items, std::size_t size) {
  std::vector<ItemId> all(n_items);
  std::iota(all.begin(), all.end(), ItemId{0});
  for (std::size_t i = 0; i < size; ++i) std::swap(all[i], all[i + rng.below(n_items - i)]);
  all.resize(size);
  return all;
}

inline double row_dot(const EmbeddingMatrix& m, std::size_t a, std::size_t b) {
  double d = 0.0;
  for (std::size_t c = 0; c < m.dim(); ++c) d += static_cast<double>(m.row(a)[c]) * m.row(b)[c];
  return d;
}

// For each slot, scan the whole pool for the best unused candidate.
inline Feedback feedback_oracle(const std::vector<ItemId>& pool, ItemId target, const OracleConfig& cfg,
                                const Dataset& ds) {
  std::vector<double> sim(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (cfg.mode == OracleMode::attribute_iou) {
      std::set<std::string> a(ds.items[pool[i]].attributes.begin(), ds.items[pool[i]].attributes.end());
      std::set<std::string> b(ds.items[target].attributes.begin(), ds.items[target].attributes.end());
      std::size_t inter = 0;
      for (const auto& t : a) inter += b.count(t);
      sim[i] = static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
    } else {
      sim[i] = row_dot(ds.preference_images, pool[i], target);
    }
  }
  std::vector<bool> used(pool.size(), false);
  auto pick = [&](bool most) {
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      if (best == pool.size()) {
        best = i;
        continue;
      }
      const bool better = most ? sim[i] > sim[best] : sim[i] < sim[best];
      if (better || (sim[i] == sim[best] && pool[i] < pool[best])) best = i;
    }
    used[best] = true;
    return pool[best];
  };
  Feedback fb;
  for (std::size_t j = 0; j < cfg.n_like; ++j) fb.likes.push_back(pick(true));
  for (std::size_t j = 0; j < cfg.n_dislike; ++j) fb.dislikes.push_back(pick(false));
  return fb;
}

// Recomputes every remaining item's objective from scratch at each step.
inline std::vector<ItemId> greedy_oracle(const std::vector<double>& scores, const EmbeddingMatrix& images,
                                         std::size_t k, double lambda) {
  std::vector<ItemId> picked;
  while (picked.size() < k) {
    ItemId best = 0;
    double best_obj = 0.0;
    bool have = false;
    for (ItemId i = 0; i < scores.size(); ++i) {
      if (std::find(picked.begin(), picked.end(), i) != picked.end()) continue;
      double obj = scores[i];
      if (!picked.empty()) {
        double s = 0.0;
        for (ItemId j : picked) s += row_dot(images, i, j);
        obj -= lambda * (s * (1.0 / static_cast<double>(picked.size())));
      }
      if (!have || obj > best_obj) {
        best = i;
        best_obj = obj;
        have = true;
      }
    }
    picked.push_back(best);
  }
  return picked;
}

inline std::vector<std::size_t> random_ranks(Rng& rng, std::size_t max_len, std::size_t max_rank) {
  std::vector<std::size_t> r(1 + rng.below(max_len));
  for (auto& x : r) x = 1 + rng.below(max_rank);
  return r;
}

}  // namespace cfr::testing
