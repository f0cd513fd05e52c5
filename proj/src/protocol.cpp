#include "cfr/protocol.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <thread>

#include "cfr/metrics.hpp"
#include "cfr/rng.hpp"

namespace cfr {

void ProtocolParams::validate() const {
  ranker.validate();
  if (recall_ks.empty()) throw InvalidArgument("recall_ks must not be empty");
  if (!std::is_sorted(recall_ks.begin(), recall_ks.end()) || recall_ks.front() < 1) {
    throw InvalidArgument("recall_ks must be ascending and >= 1");
  }
  if (oracle.n_like + oracle.n_dislike > selector.k) {
    throw InvalidArgument("n_like + n_dislike exceeds the candidate pool size k");
  }
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
}

StageSummary StageSummary::of(std::span<const std::size_t> ranks, std::span<const std::size_t> ks) {
  StageSummary s;
  for (std::size_t k : ks) s.recall_at[k] = recall_at_k(ranks, k);
  s.medr = median_rank(ranks);
  s.meanr = mean_rank(ranks);
  return s;
}

std::vector<std::size_t> Report::ranks_before() const {
  std::vector<std::size_t> r;
  r.reserve(per_query.size());
  for (const auto& q : per_query) r.push_back(q.rank_before);
  return r;
}

std::vector<std::size_t> Report::ranks_after() const {
  std::vector<std::size_t> r;
  r.reserve(per_query.size());
  for (const auto& q : per_query) r.push_back(q.rank_after);
  return r;
}

namespace {

nlohmann::ordered_json summary_json(const StageSummary& s) {
  nlohmann::ordered_json r_at = nlohmann::ordered_json::object();
  for (const auto& [k, v] : s.recall_at) r_at[std::to_string(k)] = v;
  nlohmann::ordered_json j;
  j["r_at"] = std::move(r_at);
  j["medr"] = s.medr;
  j["meanr"] = s.meanr;
  return j;
}

nlohmann::ordered_json params_json(const ProtocolParams& p) {
  nlohmann::ordered_json j;
  j["lambda_p"] = p.ranker.lambda_p;
  j["lambda_n"] = p.ranker.lambda_n;
  j["n_like"] = p.oracle.n_like;
  j["n_dislike"] = p.oracle.n_dislike;
  j["oracle_mode"] = std::string(to_string(p.oracle.mode));
  j["k"] = p.selector.k;
  j["lambda_diversity"] = p.selector.lambda_diversity;
  j["recall_ks"] = p.recall_ks;
  j["exclude_target_feedback"] = p.exclude_target_feedback;
  return j;
}

}  // namespace

nlohmann::ordered_json Report::to_json(bool include_wall_time) const {
  nlohmann::ordered_json j;
  if (!label.empty()) j["label"] = label;
  j["params"] = params_json(params);
  j["seed"] = seed;
  j["baseline"] = summary_json(baseline);
  j["feedback"] = summary_json(feedback);
  nlohmann::ordered_json pq = nlohmann::ordered_json::array();
  for (const auto& q : per_query) {
    nlohmann::ordered_json e;
    e["qid"] = q.qid;
    e["rank_before"] = q.rank_before;
    e["rank_after"] = q.rank_after;
    pq.push_back(std::move(e));
  }
  j["per_query"] = std::move(pq);
  if (include_wall_time) j["wall_time_s"] = wall_time_s;
  return j;
}

std::uint64_t Report::checksum() const { return fnv1a64(to_json(false).dump()); }

QueryTrace run_query(const Engine& engine, ItemId target, const ProtocolParams& params) {
  QueryTrace t;
  t.target = target;
  const auto query = engine.query_for(target);
  t.baseline_scores = engine.scores(query);
  t.rank_before = rank_of(t.baseline_scores, target);

  const ItemId excluded[] = {target};
  t.candidates = select_candidates(t.baseline_scores, *engine.catalog().crossmodal, params.selector,
                                   params.exclude_target_feedback ? std::span<const ItemId>(excluded)
                                                                  : std::span<const ItemId>());
  t.feedback = give_feedback(t.candidates, target, params.oracle, engine.dataset());
  t.feedback_scores = apply_feedback(t.baseline_scores, t.feedback, params.ranker, *engine.catalog().unimodal);
  t.rank_after = rank_of(t.feedback_scores, target);
  return t;
}

Report run_protocol(const Engine& engine, std::span<const ItemId> queries, const ProtocolParams& params,
                    std::uint64_t seed) {
  params.validate();
  if (queries.empty()) throw InvalidArgument("query split is empty");
  const auto start = std::chrono::steady_clock::now();

  Report report;
  report.params = params;
  report.seed = seed;
  report.per_query.resize(queries.size());

  auto work = [&](std::size_t begin, std::size_t step) {
    for (std::size_t i = begin; i < queries.size(); i += step) {
      const auto t = run_query(engine, queries[i], params);
      report.per_query[i] = {queries[i], t.rank_before, t.rank_after};
    }
  };
  const std::size_t threads = std::min(params.threads, queries.size());
  if (threads <= 1) {
    work(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
          try {
            work(w, threads);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  const auto before = report.ranks_before();
  const auto after = report.ranks_after();
  report.baseline = StageSummary::of(before, params.recall_ks);
  report.feedback = StageSummary::of(after, params.recall_ks);
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

GridKind grid_kind_from_string(std::string_view s) {
  if (s == "lambda") return GridKind::lambda;
  if (s == "nfeedback" || s == "n_feedback") return GridKind::n_feedback;
  if (s == "diversity") return GridKind::diversity;
  throw InvalidArgument("unknown grid '" + std::string(s) + "' (expected lambda, nfeedback or diversity)");
}

std::vector<GridPoint> make_grid(GridKind kind, const ProtocolParams& base) {
  std::vector<GridPoint> grid;
  char buf[64];
  switch (kind) {
    case GridKind::lambda: {
      const std::pair<double, double> rows[] = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 0.1}, {1.0, 0.5}};
      for (auto [lp, ln] : rows) {
        GridPoint g{{}, base};
        g.params.ranker = {lp, ln};
        std::snprintf(buf, sizeof(buf), "lambda_p=%.1f lambda_n=%.1f", lp, ln);
        g.label = buf;
        grid.push_back(std::move(g));
      }
      break;
    }
    case GridKind::n_feedback: {
      const std::pair<std::size_t, std::size_t> rows[] = {{1, 1}, {2, 2}, {3, 3}, {4, 4},
                                                          {5, 5}, {5, 1}, {1, 5}};
      for (auto [nl, nd] : rows) {
        GridPoint g{{}, base};
        g.params.oracle.n_like = nl;
        g.params.oracle.n_dislike = nd;
        std::snprintf(buf, sizeof(buf), "n_like=%zu n_dislike=%zu", nl, nd);
        g.label = buf;
        grid.push_back(std::move(g));
      }
      break;
    }
    case GridKind::diversity: {
      for (double ld : {0.0, 0.2, 0.4, 0.6, 0.8, 1.0}) {
        GridPoint g{{}, base};
        g.params.selector.lambda_diversity = ld;
        std::snprintf(buf, sizeof(buf), "lambda_diversity=%.1f", ld);
        g.label = buf;
        grid.push_back(std::move(g));
      }
      break;
    }
  }
  return grid;
}

std::vector<Report> run_ablation(const Engine& engine, std::span<const ItemId> queries,
                                 std::span<const GridPoint> grid, std::uint64_t seed) {
  std::vector<Report> reports;
  reports.reserve(grid.size());
  for (const auto& point : grid) {
    auto r = run_protocol(engine, queries, point.params, seed);
    r.label = point.label;
    reports.push_back(std::move(r));
  }
  return reports;
}

namespace {

std::string row_string(const std::vector<std::string>& cells, const std::vector<std::size_t>& widths) {
  std::string line;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (c > 0) line += "  ";
    line += std::string(widths[c] - cells[c].size(), ' ') + cells[c];
  }
  return line;
}

std::string fmt(const char* spec, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

}  // namespace

std::string format_table(GridKind kind, std::span<const Report> reports) {
  std::vector<std::string> header;
  switch (kind) {
    case GridKind::lambda:
      header = {"lambda_p", "lambda_n"};
      break;
    case GridKind::n_feedback:
      header = {"n_like", "n_dislike"};
      break;
    case GridKind::diversity:
      header = {"lambda_diversity"};
      break;
  }
  header.insert(header.end(), {"R@10", "MedR", "MeanR"});

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    std::vector<std::string> cells;
    switch (kind) {
      case GridKind::lambda:
        cells = {fmt("%.1f", r.params.ranker.lambda_p), fmt("%.1f", r.params.ranker.lambda_n)};
        break;
      case GridKind::n_feedback:
        cells = {std::to_string(r.params.oracle.n_like), std::to_string(r.params.oracle.n_dislike)};
        break;
      case GridKind::diversity:
        cells = {fmt("%.1f", r.params.selector.lambda_diversity)};
        break;
    }
    const auto after = r.ranks_after();
    cells.push_back(fmt("%.1f", 100.0 * recall_at_k(after, 10)));
    cells.push_back(std::to_string(r.feedback.medr));
    cells.push_back(fmt("%.1f", r.feedback.meanr));
    rows.push_back(std::move(cells));
  }

  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = header[c].size();
    for (const auto& row : rows) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  out << row_string(header, widths) << '\n';
  std::size_t total = 0;
  for (auto w : widths) total += w;
  out << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
  for (const auto& row : rows) out << row_string(row, widths) << '\n';
  return out.str();
}

std::string format_summary(const Report& report) {
  std::vector<std::string> header = {"stage"};
  for (const auto& [k, _] : report.baseline.recall_at) header.push_back("R@" + std::to_string(k));
  header.insert(header.end(), {"MedR", "MeanR"});
  std::vector<std::vector<std::string>> rows;
  for (const auto* stage : {&report.baseline, &report.feedback}) {
    std::vector<std::string> cells = {stage == &report.baseline ? "baseline" : "feedback"};
    for (const auto& [k, v] : stage->recall_at) cells.push_back(fmt("%.1f", 100.0 * v));
    cells.push_back(std::to_string(stage->medr));
    cells.push_back(fmt("%.1f", stage->meanr));
    rows.push_back(std::move(cells));
  }
  std::vector<std::size_t> widths(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    widths[c] = header[c].size();
    for (const auto& row : rows) widths[c] = std::max(widths[c], row[c].size());
  }
  std::ostringstream out;
  out << row_string(header, widths) << '\n';
  for (const auto& row : rows) out << row_string(row, widths) << '\n';
  return out.str();
}

}  // namespace cfr
