#pragma once

// The three-step benchmark: text-only retrieval, simulated feedback on a
// candidate pool, feedback-weighted re-ranking. Plus the ablation grids and
// their report/table serialization.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfr/engine.hpp"
#include "cfr/oracle.hpp"
#include "cfr/selector.hpp"

namespace cfr {

struct ProtocolParams {
  RankerParams ranker;
  OracleConfig oracle;
  SelectorConfig selector;
  std::vector<std::size_t> recall_ks = {1, 5, 10};
  // Keep the target out of the pool shown to the oracle.
  bool exclude_target_feedback = false;
  // Worker threads for per-query evaluation; results are merged in query
  // order so the report does not depend on this.
  std::size_t threads = 1;

  void validate() const;
};

struct StageSummary {
  std::map<std::size_t, double> recall_at;
  std::size_t medr = 0;
  double meanr = 0.0;

  static StageSummary of(std::span<const std::size_t> ranks, std::span<const std::size_t> ks);
};

struct QueryResult {
  ItemId qid = 0;
  std::size_t rank_before = 0;
  std::size_t rank_after = 0;
};

struct Report {
  std::string label;
  ProtocolParams params;
  std::uint64_t seed = 0;
  StageSummary baseline;
  StageSummary feedback;
  std::vector<QueryResult> per_query;
  double wall_time_s = 0.0;

  std::vector<std::size_t> ranks_before() const;
  std::vector<std::size_t> ranks_after() const;

  nlohmann::ordered_json to_json(bool include_wall_time = true) const;
  /// FNV-1a of the JSON dump without wall time.
  std::uint64_t checksum() const;
};

/// Everything one query goes through; exposed for tests and the CLI.
struct QueryTrace {
  ItemId target = 0;
  std::vector<double> baseline_scores;
  std::vector<ItemId> candidates;
  Feedback feedback;
  std::vector<double> feedback_scores;
  std::size_t rank_before = 0;
  std::size_t rank_after = 0;
};

QueryTrace run_query(const Engine& engine, ItemId target, const ProtocolParams& params);

/// Runs every query in `queries`. Deterministic: the seed is echoed into the
/// report and no step draws randomness.
Report run_protocol(const Engine& engine, std::span<const ItemId> queries, const ProtocolParams& params,
                    std::uint64_t seed);

enum class GridKind { lambda, n_feedback, diversity };

GridKind grid_kind_from_string(std::string_view s);

struct GridPoint {
  std::string label;
  ProtocolParams params;
};

/// Parameter rows of the positive/negative, feedback-count and diversity
/// ablations, each derived from `base`.
std::vector<GridPoint> make_grid(GridKind kind, const ProtocolParams& base);

std::vector<Report> run_ablation(const Engine& engine, std::span<const ItemId> queries,
                                 std::span<const GridPoint> grid, std::uint64_t seed);

/// Aligned plain-text comparison table: grid parameters, then R@10, MedR,
/// MeanR after feedback.
std::string format_table(GridKind kind, std::span<const Report> reports);

/// Baseline vs feedback summary for one report.
std::string format_summary(const Report& report);

}  // namespace cfr
