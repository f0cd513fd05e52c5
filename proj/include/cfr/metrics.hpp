#pragma once

#include <cstddef>
#include <span>

namespace cfr {

/// Fraction of 1-based ranks with r <= k.
double recall_at_k(std::span<const std::size_t> ranks, std::size_t k);

/// Lower-middle element for even counts, so the median is always a rank.
std::size_t median_rank(std::span<const std::size_t> ranks);

double mean_rank(std::span<const std::size_t> ranks);

}  // namespace cfr
