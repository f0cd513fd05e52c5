#include "cfr/losses.hpp"

#include <algorithm>
#include <cmath>

#include "cfr/error.hpp"

namespace cfr {

double ranking_loss(double s_like, double s_dislike, double margin) {
  return std::max(0.0, -s_like + s_dislike + margin);
}

ContrastiveResult symmetric_contrastive(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw InvalidArgument("temperature must be positive");
  if (a.rows() == 0 || a.rows() != b.rows() || a.cols() != b.cols()) {
    throw InvalidArgument("contrastive batch shapes must match and be non-empty");
  }
  const auto n = a.rows();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Eigen::MatrixXd logits = (a * b.transpose()) / t;

  // Row softmax for a->b, column softmax for b->a, both max-shifted.
  Eigen::MatrixXd p_row(n, n), p_col(n, n);
  double row_term = 0.0, col_term = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double mx = logits.row(j).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(j).array() - mx).exp().matrix();
    const double z = e.sum();
    p_row.row(j) = e / z;
    row_term += (mx + std::log(z)) - logits(j, j);
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    const double mx = logits.col(k).maxCoeff();
    const Eigen::VectorXd e = (logits.col(k).array() - mx).exp().matrix();
    const double z = e.sum();
    p_col.col(k) = e / z;
    col_term += (mx + std::log(z)) - logits(k, k);
  }

  ContrastiveResult r;
  r.loss = 0.5 * (row_term * inv_n + col_term * inv_n);
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd g = 0.5 * inv_n * ((p_row - eye) + (p_col - eye));
  r.grad_a = (g * b) / t;
  r.grad_b = (g.transpose() * a) / t;
  return r;
}

double contrastive_feedback_loss(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& positives, double t) {
  return symmetric_contrastive(targets, positives, t).loss;
}

double alignment_loss(const Eigen::MatrixXd& text, const Eigen::MatrixXd& images, double t) {
  return symmetric_contrastive(text, images, t).loss;
}

}  // namespace cfr
