#pragma once

#include <cstdint>

// Frozen outputs of the default synthetic benchmark (seed 7).
inline constexpr std::uint64_t GOLDEN_DATASET_CHECKSUM = 0xef67f7f254c62e70ULL;
inline constexpr std::uint64_t GOLDEN_REPORT_CHECKSUM = 0x9bb4258e1ca3bdceULL;
