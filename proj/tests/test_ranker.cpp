#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cfr/encoder.hpp"
#include "cfr/ranker.hpp"
#include "reference.hpp"
#include "support.hpp"

using namespace cfr;
using cfr::testing::random_scores;
using cfr::testing::stable_sort_oracle;

namespace {

EncodedCatalog catalog_of(const EmbeddingMatrix& m) { return encode_catalog(m, EncoderStack::identity(m.dim())); }

}  // namespace

TEST_SUITE("similarity") {
  TEST_CASE("hand cases") {
    const std::vector<float> e0{1, 0}, e1{0, 1};
    const float r = static_cast<float>(1.0 / std::sqrt(2.0));
    const std::vector<float> diag{r, r};
    CHECK(similarity(e0, e0) == doctest::Approx(1.0));
    CHECK(similarity(e0, e1) == 0.0);
    CHECK(similarity(diag, e0) == doctest::Approx(0.70711).epsilon(1e-5));
    CHECK(similarity(std::vector<float>{2, 0}, std::vector<float>{5, 5}) == doctest::Approx(0.70711).epsilon(1e-5));
  }

  TEST_CASE("zero vector and dimension mismatch throw") {
    CHECK_THROWS_AS(similarity(std::vector<float>{0, 0}, std::vector<float>{1, 0}), InvalidArgument);
    CHECK_THROWS_AS(similarity(std::vector<float>{1, 0}, std::vector<float>{1, 0, 0}), InvalidArgument);
  }

  TEST_CASE("group similarity") {
    const std::vector<float> v{1, 0}, a{1, 0}, b{0, 1};
    const std::vector<std::span<const float>> one{a};
    const std::vector<std::span<const float>> two{a, b};
    CHECK(group_similarity(v, one) == similarity(v, a));
    CHECK(group_similarity(v, two) == doctest::Approx(0.5));
    CHECK_THROWS_AS(group_similarity(v, std::span<const std::span<const float>>{}), InvalidArgument);
  }

  TEST_CASE("group similarity is the mean of pairwise similarities and stays in [-1, 1]") {
    Rng rng(21);
    for (int trial = 0; trial < 200; ++trial) {
      const auto v = cfr::testing::random_unit(rng, 12);
      std::vector<std::vector<float>> members;
      for (int j = 0; j < 5; ++j) members.push_back(cfr::testing::random_unit(rng, 12));
      std::vector<std::span<const float>> group(members.begin(), members.end());
      double expect = 0.0;
      for (const auto& m : members) {
        double d = 0.0, nv = 0.0, nm = 0.0;
        for (int k = 0; k < 12; ++k) {
          d += static_cast<double>(v[k]) * m[k];
          nv += static_cast<double>(v[k]) * v[k];
          nm += static_cast<double>(m[k]) * m[k];
        }
        expect += d / std::sqrt(nv * nm) / 5.0;
      }
      const double got = group_similarity(v, group);
      CHECK(got == doctest::Approx(expect).epsilon(1e-12));
      CHECK(got >= -1.0);
      CHECK(got <= 1.0);
    }
  }
}

TEST_SUITE("scores") {
  TEST_CASE("query equal to an item row scores 1 and is maximal") {
    Rng rng(5);
    const auto m = cfr::testing::random_matrix(rng, 40, 8);
    const auto cat = catalog_of(m);
    const auto q = std::vector<float>(m.row(17).begin(), m.row(17).end());
    const auto s = score_no_feedback(q, cat);
    CHECK(s[17] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(top_k(s, 1).front() == 17);
  }

  TEST_CASE("three hand-built items") {
    const EmbeddingMatrix m(2, {1, 0, 0, 1, 0.6f, 0.8f});
    const auto s = score_no_feedback(std::vector<float>{0, 2}, catalog_of(m));
    CHECK(s[0] == 0.0);
    CHECK(s[1] == doctest::Approx(1.0));
    CHECK(s[2] == doctest::Approx(0.8));
  }

  TEST_CASE("identical items tie and rank by id") {
    const EmbeddingMatrix m(2, {0.6f, 0.8f, 0.6f, 0.8f, 0.6f, 0.8f, 0.6f, 0.8f});
    const auto s = score_no_feedback(std::vector<float>{1, 0}, catalog_of(m));
    CHECK(std::all_of(s.begin(), s.end(), [&](double x) { return x == s[0]; }));
    CHECK(rank(s).order == std::vector<ItemId>{0, 1, 2, 3});
  }

  TEST_CASE("zero lambdas reproduce the text-only scores exactly") {
    Rng rng(6);
    const auto m = cfr::testing::random_matrix(rng, 60, 8);
    const auto cat = catalog_of(m);
    const auto q = cfr::testing::random_unit(rng, 8);
    const auto base = score_no_feedback(q, cat);
    const auto fb = score_with_feedback(q, {{1, 2, 3}, {4, 5}}, {0.0, 0.0}, cat);
    CHECK(fb == base);
    CHECK(rank(fb).order == rank(base).order);
  }

  TEST_CASE("liking the target adds exactly its self-similarity") {
    Rng rng(8);
    const auto m = cfr::testing::random_matrix(rng, 60, 8);
    const auto cat = catalog_of(m);
    const auto q = cfr::testing::random_unit(rng, 8);
    const auto base = score_no_feedback(q, cat);
    const auto fb = score_with_feedback(q, {{9}, {}}, {1.0, 0.0}, cat);
    CHECK(fb[9] - base[9] == doctest::Approx(1.0).epsilon(1e-7));
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(fb[i] - base[i] <= fb[9] - base[9] + 1e-12);
  }

  TEST_CASE("ten-item fixture matches a term-by-term recomputation") {
    Rng rng(9);
    const auto m = cfr::testing::random_matrix(rng, 10, 6);
    const auto cat = catalog_of(m);
    const auto q = cfr::testing::random_unit(rng, 6);
    const Feedback f{{2, 7}, {0, 4, 5}};
    const RankerParams p{1.0, 0.5};
    const auto got = score_with_feedback(q, f, p, cat);
    for (std::size_t i = 0; i < 10; ++i) {
      double sq = 0.0, sl = 0.0, sd = 0.0;
      for (std::size_t k = 0; k < 6; ++k) sq += static_cast<double>(m.row(i)[k]) * q[k];
      for (ItemId g : f.likes) {
        double d = 0.0;
        for (std::size_t k = 0; k < 6; ++k) d += static_cast<double>(m.row(i)[k]) * m.row(g)[k];
        sl += d / 2.0;
      }
      for (ItemId g : f.dislikes) {
        double d = 0.0;
        for (std::size_t k = 0; k < 6; ++k) d += static_cast<double>(m.row(i)[k]) * m.row(g)[k];
        sd += d / 3.0;
      }
      CHECK(got[i] == doctest::Approx(sq + 1.0 * sl - 0.5 * sd).epsilon(1e-12));
    }
  }

  TEST_CASE("feedback uses the unimodal rows under a separate image adapter") {
    Rng rng(10);
    const auto m = cfr::testing::random_matrix(rng, 12, 4);
    auto stack = EncoderStack::identity(4, true);
    // Swap the first two coordinates for image-to-image similarity only.
    stack.image_unimodal_sep->weight = {0, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
    const auto cat = encode_catalog(m, stack);
    CHECK(cat.unimodal != cat.crossmodal);
    const auto q = cfr::testing::random_unit(rng, 4);
    const auto got = score_with_feedback(q, {{3}, {}}, {1.0, 0.0}, cat);
    const auto base = score_no_feedback(q, cat);
    for (std::size_t i = 0; i < 12; ++i) {
      CHECK(got[i] - base[i] == doctest::Approx(dot(cat.unimodal->row(i), cat.unimodal->row(3))).epsilon(1e-12));
    }
  }

  TEST_CASE("invalid feedback and parameters") {
    Rng rng(11);
    const auto m = cfr::testing::random_matrix(rng, 5, 3);
    const auto cat = catalog_of(m);
    const auto q = cfr::testing::random_unit(rng, 3);
    CHECK_THROWS_AS(score_with_feedback(q, {{1}, {1}}, {}, cat), InvalidArgument);
    CHECK_THROWS_AS(score_with_feedback(q, {{5}, {}}, {}, cat), InvalidArgument);
    CHECK_THROWS_AS(score_with_feedback(q, {{1}, {}}, {-1.0, 0.0}, cat), InvalidArgument);
    CHECK_THROWS_AS(score_with_feedback(q, {{1}, {}}, {NAN, 0.0}, cat), InvalidArgument);
  }
}

TEST_SUITE("rank") {
  TEST_CASE("hand sort") {
    const std::vector<double> s{0.1, 0.9, 0.5};
    const auto r = rank(s);
    CHECK(r.order == std::vector<ItemId>{1, 2, 0});
    CHECK(r.rank == std::vector<std::size_t>{3, 1, 2});
  }

  TEST_CASE("all-equal scores order by id") {
    const std::vector<double> s(7, 0.25);
    const auto r = rank(s);
    CHECK(r.order == std::vector<ItemId>{0, 1, 2, 3, 4, 5, 6});
  }

  TEST_CASE("non-finite scores are rejected") {
    CHECK_THROWS_AS(rank(std::vector<double>{0.1, NAN}), InvalidArgument);
    CHECK_THROWS_AS(top_k(std::vector<double>{0.1, INFINITY}, 1), InvalidArgument);
  }

  TEST_CASE("random arrays match the stable sort oracle and rank is a permutation") {
    Rng rng(12);
    for (int trial = 0; trial < 500; ++trial) {
      const std::size_t n = 1 + rng.below(500);
      const auto s = random_scores(rng, n, trial % 2 == 0);
      const auto r = rank(s);
      REQUIRE(r.order == stable_sort_oracle(s));
      std::vector<std::size_t> sorted = r.rank;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < n; ++i) REQUIRE(sorted[i] == i + 1);
      for (std::size_t pos = 0; pos < n; ++pos) REQUIRE(r.rank[r.order[pos]] == pos + 1);
    }
  }

  TEST_CASE("shift and positive scale leave the ranking unchanged") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng.below(200);
      // Small integers keep the transformed values exact.
      const auto s = random_scores(rng, n, true);
      const auto base = rank(s).order;
      for (double c : {0.5, 1.25, 3.0}) {
        std::vector<double> scaled(s), shifted(s);
        for (auto& x : scaled) x *= c;
        for (auto& x : shifted) x += c - 7.0;
        CHECK(rank(scaled).order == base);
        CHECK(rank(shifted).order == base);
      }
    }
  }

  TEST_CASE("top_k agrees with the rank prefix, and rank_of with rank") {
    Rng rng(14);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng.below(100);
      const auto s = random_scores(rng, n, trial % 2 == 0);
      const auto r = rank(s);
      const std::size_t k = 1 + rng.below(n);
      const auto top = top_k(s, k);
      REQUIRE(std::equal(top.begin(), top.end(), r.order.begin()));
      const auto item = static_cast<ItemId>(rng.below(n));
      REQUIRE(rank_of(s, item) == r.rank[item]);
    }
  }

  TEST_CASE("top_k edge cases") {
    const std::vector<double> s{0.3, 0.7, 0.7, 0.1};
    CHECK(top_k(s, 4) == rank(s).order);
    CHECK(top_k(s, 1) == std::vector<ItemId>{1});
    CHECK_THROWS_AS(top_k(s, 0), InvalidArgument);
    CHECK_THROWS_AS(top_k(s, 5), InvalidArgument);
    CHECK_THROWS_AS(rank_of(s, 4), InvalidArgument);
  }
}
