#include "cfr/metrics.hpp"

#include <algorithm>
#include <vector>

#include "cfr/error.hpp"

namespace cfr {

namespace {

void check_ranks(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw InvalidArgument("rank list is empty");
  for (std::size_t r : ranks) {
    if (r < 1) throw InvalidArgument("ranks are 1-based");
  }
}

}  // namespace

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (k < 1) throw InvalidArgument("K must be at least 1");
  check_ranks(ranks);
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

std::size_t median_rank(std::span<const std::size_t> ranks) {
  check_ranks(ranks);
  std::vector<std::size_t> v(ranks.begin(), ranks.end());
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

double mean_rank(std::span<const std::size_t> ranks) {
  check_ranks(ranks);
  double s = 0.0;
  for (std::size_t r : ranks) s += static_cast<double>(r);
  return s / static_cast<double>(ranks.size());
}

}  // namespace cfr
