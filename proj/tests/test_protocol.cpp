#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "cfr/metrics.hpp"
#include "cfr/protocol.hpp"
#include "golden.hpp"
#include "support.hpp"

using namespace cfr;

namespace {

std::shared_ptr<const Dataset> default_dataset() {
  static const auto ds = std::make_shared<const Dataset>(generate_synthetic(SynthConfig{}));
  return ds;
}

std::shared_ptr<const Dataset> small_dataset() {
  static const auto ds = std::make_shared<const Dataset>(generate_synthetic(cfr::testing::small_config(3)));
  return ds;
}

}  // namespace

TEST_SUITE("protocol") {
  TEST_CASE("zero lambdas: stage two equals stage one") {
    const auto ds = small_dataset();
    const Engine engine(ds, EncoderStack::identity(ds->retrieval_images.dim()));
    ProtocolParams p;
    p.ranker = {0.0, 0.0};
    const auto r = run_protocol(engine, ds->splits.test, p, 1);
    CHECK(r.ranks_before() == r.ranks_after());
    const auto j = r.to_json();
    CHECK(j["feedback"] == j["baseline"]);
  }

  TEST_CASE("perfect embeddings put every target first before and after feedback") {
    SynthConfig cfg = cfr::testing::small_config(4);
    cfg.n_attributes = 32;
    cfg.attrs_per_item = 5;
    cfg.text_attrs = 5;
    cfg.noise_sigma = 0.0;
    const auto ds = std::make_shared<const Dataset>(generate_synthetic(cfg));
    std::set<std::set<std::string>> sets;
    for (const auto& item : ds->items) sets.emplace(item.attributes.begin(), item.attributes.end());
    REQUIRE(sets.size() == ds->size());
    const Engine engine(ds, EncoderStack::identity(cfg.dim));
    const auto r = run_protocol(engine, ds->splits.test, ProtocolParams{}, 0);
    for (const auto& q : r.per_query) {
      CHECK(q.rank_before == 1);
      CHECK(q.rank_after == 1);
    }
    CHECK(r.baseline.meanr == 1.0);
  }

  TEST_CASE("aggregates are recomputable from the per-query ranks") {
    const auto ds = small_dataset();
    const Engine engine(ds, EncoderStack::identity(ds->retrieval_images.dim()));
    const auto r = run_protocol(engine, ds->splits.test, ProtocolParams{}, 0);
    const auto after = r.ranks_after();
    for (auto k : {1u, 5u, 10u}) CHECK(r.feedback.recall_at.at(k) == recall_at_k(after, k));
    CHECK(r.feedback.medr == median_rank(after));
    CHECK(r.feedback.meanr == mean_rank(after));
    for (std::size_t i = 0; i < r.per_query.size(); ++i) CHECK(r.per_query[i].qid == ds->splits.test[i]);
  }

  TEST_CASE("run_query matches a hand-assembled pipeline") {
    const auto ds = small_dataset();
    const Engine engine(ds, EncoderStack::identity(ds->retrieval_images.dim()));
    const ItemId target = ds->splits.test[3];
    ProtocolParams p;
    const auto t = run_query(engine, target, p);
    const auto q = encode_query(ds->items[target].text, ds->vocab);
    const auto base = score_no_feedback(q, engine.catalog());
    CHECK(t.baseline_scores == base);
    CHECK(t.candidates == top_k(base, 10));
    const auto fb = give_feedback(t.candidates, target, p.oracle, *ds);
    CHECK(t.feedback == fb);
    const auto updated = score_with_feedback(q, fb, p.ranker, engine.catalog());
    CHECK(t.rank_after == rank(updated).rank[target]);
    CHECK(t.rank_before == rank(base).rank[target]);
  }

  TEST_CASE("excluding the target keeps it out of the pool") {
    const auto ds = small_dataset();
    const Engine engine(ds, EncoderStack::identity(ds->retrieval_images.dim()));
    ProtocolParams p;
    p.exclude_target_feedback = true;
    for (ItemId target : ds->splits.test) {
      const auto t = run_query(engine, target, p);
      REQUIRE(std::find(t.candidates.begin(), t.candidates.end(), target) == t.candidates.end());
      REQUIRE(t.candidates.size() == 10);
    }
  }

  TEST_CASE("report is independent of thread count") {
    const auto ds = small_dataset();
    const Engine engine(ds, EncoderStack::identity(ds->retrieval_images.dim()));
    ProtocolParams p;
    const auto one = run_protocol(engine, ds->splits.test, p, 9);
    p.threads = 3;
    const auto three = run_protocol(engine, ds->splits.test, p, 9);
    CHECK(one.to_json(false) == three.to_json(false));
    CHECK(one.checksum() == three.checksum());
  }

  TEST_CASE("default benchmark report checksum is pinned") {
    const auto ds = default_dataset();
    const Engine engine(ds, EncoderStack::identity(64));
    const auto r = run_protocol(engine, ds->splits.test, ProtocolParams{}, 7);
    CHECK(r.per_query.size() == 200);
    CHECK(r.checksum() == GOLDEN_REPORT_CHECKSUM);
    CHECK(run_protocol(engine, ds->splits.test, ProtocolParams{}, 7).checksum() == r.checksum());
  }

  TEST_CASE("report JSON layout") {
    const auto ds = small_dataset();
    const Engine engine(ds, EncoderStack::identity(ds->retrieval_images.dim()));
    const auto r = run_protocol(engine, ds->splits.test, ProtocolParams{}, 5);
    const auto j = r.to_json();
    std::vector<std::string> keys;
    for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
    CHECK(keys == std::vector<std::string>{"params", "seed", "baseline", "feedback", "per_query", "wall_time_s"});
    CHECK(j["seed"] == 5);
    CHECK(j["baseline"].contains("r_at"));
    CHECK(j["baseline"]["r_at"].contains("10"));
    CHECK(j["per_query"][0].contains("qid"));
    CHECK_FALSE(r.to_json(false).contains("wall_time_s"));
  }

  TEST_CASE("invalid parameters") {
    const auto ds = small_dataset();
    const Engine engine(ds, EncoderStack::identity(ds->retrieval_images.dim()));
    ProtocolParams p;
    CHECK_THROWS_AS(run_protocol(engine, std::vector<ItemId>{}, p, 0), InvalidArgument);
    p.oracle = {6, 5};
    CHECK_THROWS_AS(run_protocol(engine, ds->splits.test, p, 0), InvalidArgument);
    p = {};
    p.recall_ks = {10, 5};
    CHECK_THROWS_AS(run_protocol(engine, ds->splits.test, p, 0), InvalidArgument);
    p = {};
    p.threads = 0;
    CHECK_THROWS_AS(run_protocol(engine, ds->splits.test, p, 0), InvalidArgument);
    CHECK_THROWS_AS(grid_kind_from_string("everything"), InvalidArgument);
  }
}

TEST_SUITE("ablation grids") {
  TEST_CASE("positive/negative weights") {
    const auto g = make_grid(GridKind::lambda, {});
    std::vector<std::pair<double, double>> rows;
    for (const auto& p : g) rows.emplace_back(p.params.ranker.lambda_p, p.params.ranker.lambda_n);
    CHECK(rows == std::vector<std::pair<double, double>>{{0.0, 0.0}, {1.0, 0.0}, {0.0, 0.1}, {1.0, 0.5}});
  }

  TEST_CASE("feedback counts") {
    const auto g = make_grid(GridKind::n_feedback, {});
    std::vector<std::pair<std::size_t, std::size_t>> rows;
    for (const auto& p : g) rows.emplace_back(p.params.oracle.n_like, p.params.oracle.n_dislike);
    CHECK(rows == std::vector<std::pair<std::size_t, std::size_t>>{
                      {1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}, {5, 1}, {1, 5}});
  }

  TEST_CASE("diversity weights") {
    const auto g = make_grid(GridKind::diversity, {});
    std::vector<double> rows;
    for (const auto& p : g) rows.push_back(p.params.selector.lambda_diversity);
    CHECK(rows == std::vector<double>{0.0, 0.2, 0.4, 0.6, 0.8, 1.0});
  }

  TEST_CASE("grid points keep the other base parameters") {
    ProtocolParams base;
    base.selector.k = 12;
    base.exclude_target_feedback = true;
    for (auto kind : {GridKind::lambda, GridKind::n_feedback, GridKind::diversity}) {
      for (const auto& p : make_grid(kind, base)) {
        CHECK(p.params.selector.k == 12);
        CHECK(p.params.exclude_target_feedback);
      }
    }
  }

  TEST_CASE("table has one line per grid point") {
    const auto ds = small_dataset();
    const Engine engine(ds, EncoderStack::identity(ds->retrieval_images.dim()));
    const auto grid = make_grid(GridKind::lambda, {});
    const auto reports = run_ablation(engine, ds->splits.test, grid, 0);
    REQUIRE(reports.size() == 4);
    CHECK(reports[2].label == "lambda_p=0.0 lambda_n=0.1");
    const auto table = format_table(GridKind::lambda, reports);
    CHECK(std::count(table.begin(), table.end(), '\n') == 6);
    CHECK(table.find("lambda_p  lambda_n  R@10  MedR  MeanR") != std::string::npos);
  }
}
