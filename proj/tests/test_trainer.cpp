#include <doctest.h>

#include <cmath>

#include "cfr/engine.hpp"
#include "cfr/trainer.hpp"
#include "fd_oracle.hpp"
#include "support.hpp"

using namespace cfr;

namespace {

std::shared_ptr<const Dataset> toy_dataset(std::size_t n_train) {
  auto ds = generate_synthetic(cfr::testing::small_config(2));
  ds.splits.train.resize(n_train);
  return std::make_shared<const Dataset>(std::move(ds));
}

}  // namespace

TEST_SUITE("total_loss") {
  TEST_CASE("gradients match central differences for both loss kinds") {
    for (auto kind : {LossKind::ranking, LossKind::contrastive}) {
      CAPTURE(to_string(kind));
      const auto [worst, redrawn] = cfr::testing::fd_sweep(kind, 25, 3);
      CHECK(worst < 1e-4);
      (void)redrawn;
    }
  }

  TEST_CASE("two evaluations are identical") {
    Rng rng(4);
    const auto inst = cfr::testing::random_instance(rng, LossKind::contrastive);
    const auto a = total_loss(inst.batch, inst.weights, inst.cfg);
    const auto b = total_loss(inst.batch, inst.weights, inst.cfg);
    CHECK(a.loss == b.loss);
    CHECK(a.grad_text == b.grad_text);
    CHECK(a.grad_crossmodal == b.grad_crossmodal);
  }

  TEST_CASE("single example with the margin satisfied has zero loss") {
    TrainingExample ex;
    ex.query = Eigen::Vector3d(0, 0, 1);
    ex.target = Eigen::Vector3d(1, 0, 0);
    ex.likes = {Eigen::Vector3d(1, 0, 0)};
    ex.dislikes = {Eigen::Vector3d(0, 1, 0)};
    AdapterWeights w;
    w.text = w.crossmodal = Eigen::Matrix3d::Identity();
    TrainerConfig cfg;
    const std::vector<TrainingExample> batch{ex};
    const auto r = total_loss(batch, w, cfg);
    CHECK(r.loss == 0.0);
    CHECK(r.grad_crossmodal.isZero(0.0));
  }

  TEST_CASE("hand-computed ranking term") {
    // s_like = 0.4, s_dislike = 0.5 after normalization.
    TrainingExample ex;
    ex.query = Eigen::Vector2d(1, 0);
    ex.target = Eigen::Vector2d(1, 0);
    ex.likes = {Eigen::Vector2d(0.4, std::sqrt(1 - 0.16))};
    ex.dislikes = {Eigen::Vector2d(0.5, std::sqrt(1 - 0.25))};
    AdapterWeights w;
    w.text = w.crossmodal = Eigen::Matrix2d::Identity();
    TrainerConfig cfg;
    cfg.alignment_weight = 0.0;
    const std::vector<TrainingExample> batch{ex};
    CHECK(std::abs(total_loss(batch, w, cfg).loss - 0.3) <= 1e-12);
  }

  TEST_CASE("zero alignment weight leaves the text adapter untouched") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      auto inst = cfr::testing::random_instance(rng, trial % 2 ? LossKind::ranking : LossKind::contrastive);
      inst.cfg.alignment_weight = 0.0;
      const auto r = total_loss(inst.batch, inst.weights, inst.cfg);
      CHECK(r.grad_text.isZero(0.0));
    }
  }

  TEST_CASE("with a separate image adapter the feedback loss does not reach the cross-modal adapter") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      auto inst = cfr::testing::random_instance(rng, trial % 2 ? LossKind::ranking : LossKind::contrastive);
      inst.weights.unimodal = cfr::testing::perturbed_identity(rng, inst.weights.text.rows());
      inst.cfg.alignment_weight = 0.0;
      const auto r = total_loss(inst.batch, inst.weights, inst.cfg);
      CHECK(r.grad_crossmodal.isZero(0.0));
      if (r.feedback_loss > 0.0) CHECK_FALSE(r.grad_unimodal->isZero(0.0));
    }
  }

  TEST_CASE("without a separate adapter the feedback gradient lands on the cross-modal adapter") {
    Rng rng(7);
    auto inst = cfr::testing::random_instance(rng, LossKind::contrastive);
    inst.weights.unimodal.reset();
    inst.cfg.alignment_weight = 0.0;
    const auto r = total_loss(inst.batch, inst.weights, inst.cfg);
    CHECK_FALSE(r.grad_unimodal.has_value());
    CHECK_FALSE(r.grad_crossmodal.isZero(0.0));
  }

  TEST_CASE("non-finite weights signal divergence") {
    Rng rng(8);
    auto inst = cfr::testing::random_instance(rng, LossKind::contrastive);
    inst.weights.text(0, 0) = NAN;
    CHECK_THROWS_AS(total_loss(inst.batch, inst.weights, inst.cfg), TrainingDiverged);
  }

  TEST_CASE("examples without likes are rejected") {
    Rng rng(9);
    auto inst = cfr::testing::random_instance(rng, LossKind::ranking);
    inst.batch[0].likes.clear();
    CHECK_THROWS_AS(total_loss(inst.batch, inst.weights, inst.cfg), InvalidArgument);
  }
}

TEST_SUITE("train") {
  TEST_CASE("zero learning rate returns the input stack bit for bit") {
    const auto ds = toy_dataset(32);
    TrainerConfig cfg;
    cfg.epochs = 2;
    cfg.learning_rate = 0.0;
    Rng rng(10);
    auto stack = EncoderStack::identity(16, true);
    for (auto& w : stack.text.weight) w += 0.01 * rng.normal();
    const auto r = train(ds, cfg, stack);
    CHECK(r.stack == stack);
    CHECK(r.curve.size() == 2);
  }

  TEST_CASE("one epoch on a 32-query split logs a finite loss") {
    const auto ds = toy_dataset(32);
    TrainerConfig cfg;
    cfg.epochs = 1;
    static int calls = 0;
    calls = 0;
    const auto r = train(ds, cfg, EncoderStack::identity(16), [](const EpochLoss&) { ++calls; });
    REQUIRE(r.curve.size() == 1);
    CHECK(r.curve[0].epoch == 1);
    CHECK(std::isfinite(r.curve[0].mean_loss));
    CHECK(calls == 1);
    const auto j = curve_to_json(r.curve);
    CHECK(j.dump() == "[{\"epoch\":1,\"mean_loss\":" + nlohmann::json(r.curve[0].mean_loss).dump() + "}]");
  }

  TEST_CASE("training is deterministic and keeps embeddings unit length") {
    const auto ds = toy_dataset(64);
    TrainerConfig cfg;
    cfg.epochs = 3;
    cfg.loss_kind = LossKind::contrastive;
    cfg.learning_rate = 0.05;
    const auto a = train(ds, cfg, EncoderStack::identity(16, true));
    const auto b = train(ds, cfg, EncoderStack::identity(16, true));
    CHECK(a.stack == b.stack);
    CHECK_FALSE(a.stack.text.is_identity());
    CHECK_FALSE(a.stack.image_unimodal_sep->is_identity());
    const Engine engine(ds, a.stack);
    for (const auto* m : {engine.catalog().crossmodal.get(), engine.catalog().unimodal.get()}) {
      for (std::size_t i = 0; i < m->size(); ++i) {
        double n = 0.0;
        for (float x : m->row(i)) n += static_cast<double>(x) * x;
        REQUIRE(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }

  TEST_CASE("invalid configurations") {
    const auto ds = toy_dataset(8);
    TrainerConfig cfg;
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(train(ds, cfg, EncoderStack::identity(16)), InvalidArgument);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(ds, cfg, EncoderStack::identity(16)), InvalidArgument);
    cfg = {};
    cfg.margin = -0.1;
    CHECK_THROWS_AS(train(ds, cfg, EncoderStack::identity(16)), InvalidArgument);
    CHECK_THROWS_AS(train(toy_dataset(0), TrainerConfig{}, EncoderStack::identity(16)), InvalidArgument);
    CHECK_THROWS_AS(loss_kind_from_string("hinge"), InvalidArgument);
  }

  TEST_CASE("library gradient check passes") {
    for (auto kind : {LossKind::ranking, LossKind::contrastive}) {
      const auto r = gradient_check(kind, 20, 1e-4, 11);
      CHECK(r.trials == 20);
      CHECK(r.passed());
    }
  }
}
