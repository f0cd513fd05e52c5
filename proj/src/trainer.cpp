#include "cfr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cfr/losses.hpp"
#include "cfr/rng.hpp"

namespace cfr {

std::string_view to_string(LossKind kind) {
  return kind == LossKind::ranking ? "ranking" : "contrastive";
}

LossKind loss_kind_from_string(std::string_view s) {
  if (s == "ranking") return LossKind::ranking;
  if (s == "contrastive") return LossKind::contrastive;
  throw InvalidArgument("unknown loss kind '" + std::string(s) + "'");
}

void TrainerConfig::validate() const {
  if (!(margin >= 0.0) || !std::isfinite(margin)) throw InvalidArgument("margin must be >= 0");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw InvalidArgument("temperature must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning_rate must be finite and >= 0");
  }
  if (!(alignment_weight >= 0.0) || !std::isfinite(alignment_weight)) {
    throw InvalidArgument("alignment_weight must be finite and >= 0");
  }
  feedback.validate();
}

namespace {

Eigen::MatrixXd to_matrix(const Adapter& a) {
  Eigen::MatrixXd m(a.dim, a.dim);
  for (std::size_t r = 0; r < a.dim; ++r) {
    for (std::size_t c = 0; c < a.dim; ++c) m(r, c) = a.weight[r * a.dim + c];
  }
  return m;
}

Adapter to_adapter(const Eigen::MatrixXd& m) {
  const auto d = static_cast<std::size_t>(m.rows());
  Adapter a{d, std::vector<double>(d * d)};
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d; ++c) a.weight[r * d + c] = m(r, c);
  }
  return a;
}

// normalize(W x), remembering what the backward pass needs.
struct Adapted {
  Eigen::VectorXd u;
  double norm = 0.0;
};

Adapted adapt(const Eigen::MatrixXd& w, const Eigen::VectorXd& x) {
  const Eigen::VectorXd z = w * x;
  const double n = z.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw TrainingDiverged("adapter produced a zero or non-finite embedding");
  return {z / n, n};
}

// Accumulates dL/dW given dL/du for u = normalize(W x).
void backprop(Eigen::MatrixXd& grad_w, const Adapted& a, const Eigen::VectorXd& x, const Eigen::VectorXd& grad_u) {
  const Eigen::VectorXd grad_z = (grad_u - a.u * a.u.dot(grad_u)) / a.norm;
  grad_w.noalias() += grad_z * x.transpose();
}

double ranking_feedback(std::span<const TrainingExample> batch, const Eigen::MatrixXd& w, double margin,
                        Eigen::MatrixXd& grad) {
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& ex : batch) {
    if (ex.likes.empty()) throw InvalidArgument("training example has no liked item");
    const Adapted t = adapt(w, ex.target);
    std::vector<Adapted> likes, dislikes;
    Eigen::VectorXd like_mean = Eigen::VectorXd::Zero(t.u.size());
    Eigen::VectorXd dislike_mean = Eigen::VectorXd::Zero(t.u.size());
    for (const auto& x : ex.likes) {
      likes.push_back(adapt(w, x));
      like_mean += likes.back().u;
    }
    like_mean /= static_cast<double>(likes.size());
    for (const auto& x : ex.dislikes) {
      dislikes.push_back(adapt(w, x));
      dislike_mean += dislikes.back().u;
    }
    if (!dislikes.empty()) dislike_mean /= static_cast<double>(dislikes.size());

    const double s_like = t.u.dot(like_mean);
    const double s_dislike = dislikes.empty() ? 0.0 : t.u.dot(dislike_mean);
    const double l = ranking_loss(s_like, s_dislike, margin);
    total += l;
    if (l <= 0.0) continue;

    backprop(grad, t, ex.target, inv_b * (dislike_mean - like_mean));
    for (std::size_t i = 0; i < likes.size(); ++i) {
      backprop(grad, likes[i], ex.likes[i], (-inv_b / static_cast<double>(likes.size())) * t.u);
    }
    for (std::size_t i = 0; i < dislikes.size(); ++i) {
      backprop(grad, dislikes[i], ex.dislikes[i], (inv_b / static_cast<double>(dislikes.size())) * t.u);
    }
  }
  return total * inv_b;
}

// Symmetric contrastive loss between normalize(wa * xa_j) and
// normalize(wb * xb_j), with gradients pushed into grad_a / grad_b scaled
// by `weight`. grad_a and grad_b may alias.
double paired_contrastive(const std::vector<const Eigen::VectorXd*>& xa, const Eigen::MatrixXd& wa,
                          Eigen::MatrixXd& grad_a, const std::vector<const Eigen::VectorXd*>& xb,
                          const Eigen::MatrixXd& wb, Eigen::MatrixXd& grad_b, double t, double weight) {
  const auto n = static_cast<Eigen::Index>(xa.size());
  const auto d = wa.rows();
  std::vector<Adapted> ua, ub;
  Eigen::MatrixXd a(n, d), b(n, d);
  for (Eigen::Index j = 0; j < n; ++j) {
    ua.push_back(adapt(wa, *xa[j]));
    ub.push_back(adapt(wb, *xb[j]));
    a.row(j) = ua.back().u.transpose();
    b.row(j) = ub.back().u.transpose();
  }
  const auto r = symmetric_contrastive(a, b, t);
  if (weight != 0.0) {
    for (Eigen::Index j = 0; j < n; ++j) {
      backprop(grad_a, ua[j], *xa[j], weight * r.grad_a.row(j).transpose());
      backprop(grad_b, ub[j], *xb[j], weight * r.grad_b.row(j).transpose());
    }
  }
  return r.loss;
}

std::vector<double> hinge_arguments(std::span<const TrainingExample> batch, const Eigen::MatrixXd& w,
                                    double margin) {
  std::vector<double> out;
  for (const auto& ex : batch) {
    const auto t = adapt(w, ex.target).u;
    double s_like = 0.0, s_dislike = 0.0;
    for (const auto& x : ex.likes) s_like += t.dot(adapt(w, x).u);
    s_like /= static_cast<double>(ex.likes.size());
    for (const auto& x : ex.dislikes) s_dislike += t.dot(adapt(w, x).u);
    if (!ex.dislikes.empty()) s_dislike /= static_cast<double>(ex.dislikes.size());
    out.push_back(-s_like + s_dislike + margin);
  }
  return out;
}

Eigen::VectorXd to_vector(std::span<const float> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[k];
  return out;
}

}  // namespace

AdapterWeights AdapterWeights::from(const EncoderStack& stack) {
  AdapterWeights w{to_matrix(stack.text), to_matrix(stack.image_crossmodal), std::nullopt};
  if (stack.sep_enc()) w.unimodal = to_matrix(*stack.image_unimodal_sep);
  return w;
}

EncoderStack AdapterWeights::to_stack() const {
  EncoderStack s{to_adapter(text), to_adapter(crossmodal), std::nullopt};
  if (unimodal) s.image_unimodal_sep = to_adapter(*unimodal);
  return s;
}

LossGradient total_loss(std::span<const TrainingExample> batch, const AdapterWeights& weights,
                        const TrainerConfig& cfg) {
  if (batch.empty()) throw InvalidArgument("empty batch");
  const auto d = weights.text.rows();
  LossGradient out;
  out.grad_text = Eigen::MatrixXd::Zero(d, d);
  out.grad_crossmodal = Eigen::MatrixXd::Zero(d, d);
  if (weights.unimodal) out.grad_unimodal = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd& grad_feedback = out.grad_unimodal ? *out.grad_unimodal : out.grad_crossmodal;
  const Eigen::MatrixXd& w_feedback = weights.feedback_adapter();

  if (cfg.loss_kind == LossKind::ranking) {
    out.feedback_loss = ranking_feedback(batch, w_feedback, cfg.margin, grad_feedback);
  } else {
    std::vector<const Eigen::VectorXd*> targets, positives;
    for (const auto& ex : batch) {
      if (ex.likes.empty()) throw InvalidArgument("training example has no liked item");
      targets.push_back(&ex.target);
      positives.push_back(&ex.likes.front());
    }
    out.feedback_loss = paired_contrastive(targets, w_feedback, grad_feedback, positives, w_feedback,
                                           grad_feedback, cfg.temperature, 1.0);
  }

  std::vector<const Eigen::VectorXd*> queries, images;
  for (const auto& ex : batch) {
    queries.push_back(&ex.query);
    images.push_back(&ex.target);
  }
  out.alignment_loss = paired_contrastive(queries, weights.text, out.grad_text, images, weights.crossmodal,
                                          out.grad_crossmodal, cfg.temperature, cfg.alignment_weight);

  out.loss = out.feedback_loss + cfg.alignment_weight * out.alignment_loss;
  if (!std::isfinite(out.loss)) {
    throw TrainingDiverged("non-finite loss (feedback " + std::to_string(out.feedback_loss) + ", alignment " +
                           std::to_string(out.alignment_loss) + ")");
  }
  return out;
}

nlohmann::ordered_json curve_to_json(std::span<const EpochLoss> curve) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& e : curve) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["mean_loss"] = e.mean_loss;
    arr.push_back(std::move(j));
  }
  return arr;
}

TrainResult train(std::shared_ptr<const Dataset> dataset, const TrainerConfig& cfg, EncoderStack initial,
                  void (*on_epoch)(const EpochLoss&)) {
  cfg.validate();
  if (!dataset) throw InvalidArgument("train needs a dataset");
  const auto& train_ids = dataset->splits.train;
  if (train_ids.empty()) throw InvalidArgument("train split is empty");

  TrainResult result;
  result.stack = std::move(initial);
  AdapterWeights weights = AdapterWeights::from(result.stack);

  // Base vectors never change; cache them once.
  std::vector<Eigen::VectorXd> base_images(dataset->size());
  for (std::size_t i = 0; i < dataset->size(); ++i) base_images[i] = to_vector(dataset->retrieval_images.row(i));

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Engine engine(dataset, result.stack);
    std::vector<TrainingExample> examples;
    examples.reserve(train_ids.size());
    for (ItemId q : train_ids) {
      const auto trace = run_query(engine, q, cfg.feedback);
      TrainingExample ex;
      ex.query = to_vector(dataset->query_for(q));
      ex.target = base_images[q];
      for (ItemId id : trace.feedback.likes) ex.likes.push_back(base_images[id]);
      for (ItemId id : trace.feedback.dislikes) ex.dislikes.push_back(base_images[id]);
      examples.push_back(std::move(ex));
    }

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::stream(cfg.seed, "train/shuffle/" + std::to_string(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    std::vector<TrainingExample> batch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      const auto lg = total_loss(batch, weights, cfg);
      loss_sum += lg.loss;
      ++batches;
      if (cfg.learning_rate != 0.0) {
        weights.text -= cfg.learning_rate * lg.grad_text;
        weights.crossmodal -= cfg.learning_rate * lg.grad_crossmodal;
        if (weights.unimodal) *weights.unimodal -= cfg.learning_rate * *lg.grad_unimodal;
      }
    }
    if (cfg.learning_rate != 0.0) result.stack = weights.to_stack();
    const EpochLoss e{epoch + 1, loss_sum / static_cast<double>(batches)};
    if (!std::isfinite(e.mean_loss)) throw TrainingDiverged("non-finite mean loss at epoch " + std::to_string(e.epoch));
    result.curve.push_back(e);
    if (on_epoch) on_epoch(e);
  }
  return result;
}

GradCheckReport gradient_check(LossKind kind, std::size_t n_trials, double tolerance, std::uint64_t seed) {
  if (n_trials < 1) throw InvalidArgument("n_trials must be >= 1");
  constexpr double kStep = 1e-5;
  constexpr double kKinkRadius = 1e-4;
  constexpr double kDenominatorFloor = 1e-6;

  GradCheckReport report;
  report.kind = kind;
  report.tolerance = tolerance;
  Rng rng = Rng::stream(seed, std::string("gradcheck/") + std::string(to_string(kind)));

  auto random_unit = [&rng](Eigen::Index d) {
    Eigen::VectorXd v(d);
    do {
      for (Eigen::Index k = 0; k < d; ++k) v[k] = rng.normal();
    } while (v.norm() == 0.0);
    return Eigen::VectorXd(v / v.norm());
  };
  auto random_adapter = [&rng](Eigen::Index d) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Identity(d, d);
    const double scale = 0.5 / std::sqrt(static_cast<double>(d));
    for (Eigen::Index r = 0; r < d; ++r) {
      for (Eigen::Index c = 0; c < d; ++c) w(r, c) += scale * rng.normal();
    }
    return w;
  };

  while (report.trials < n_trials) {
    const auto d = static_cast<Eigen::Index>(2 + rng.below(15));  // 2..16
    const std::size_t b = 1 + rng.below(8);                      // 1..8
    TrainerConfig cfg;
    cfg.loss_kind = kind;
    cfg.margin = 0.5 * rng.uniform();
    cfg.temperature = 0.05 + 0.95 * rng.uniform();
    cfg.alignment_weight = rng.uniform() < 0.2 ? 0.0 : 1.0;

    AdapterWeights weights{random_adapter(d), random_adapter(d), std::nullopt};
    if (rng.uniform() < 0.5) weights.unimodal = random_adapter(d);

    std::vector<TrainingExample> batch(b);
    for (auto& ex : batch) {
      ex.query = random_unit(d);
      ex.target = random_unit(d);
      const std::size_t n_like = 1 + rng.below(3);
      const std::size_t n_dislike = rng.below(3);
      for (std::size_t i = 0; i < n_like; ++i) ex.likes.push_back(random_unit(d));
      for (std::size_t i = 0; i < n_dislike; ++i) ex.dislikes.push_back(random_unit(d));
    }
    if (kind == LossKind::ranking) {
      const auto args = hinge_arguments(batch, weights.feedback_adapter(), cfg.margin);
      if (std::any_of(args.begin(), args.end(), [](double h) { return std::abs(h) < kKinkRadius; })) {
        ++report.resampled;
        continue;
      }
    }

    const auto analytic = total_loss(batch, weights, cfg);
    auto check = [&](Eigen::MatrixXd& w, const Eigen::MatrixXd& grad) {
      for (Eigen::Index r = 0; r < d; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) {
          const double saved = w(r, c);
          w(r, c) = saved + kStep;
          const double up = total_loss(batch, weights, cfg).loss;
          w(r, c) = saved - kStep;
          const double down = total_loss(batch, weights, cfg).loss;
          w(r, c) = saved;
          const double numeric = (up - down) / (2.0 * kStep);
          const double a = grad(r, c);
          const double denom = std::max({std::abs(a), std::abs(numeric), kDenominatorFloor});
          report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
        }
      }
    };
    check(weights.text, analytic.grad_text);
    check(weights.crossmodal, analytic.grad_crossmodal);
    if (weights.unimodal) check(*weights.unimodal, *analytic.grad_unimodal);
    ++report.trials;
  }
  return report;
}

}  // namespace cfr
