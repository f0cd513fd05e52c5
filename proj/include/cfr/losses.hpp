#pragma once

// Feedback-guided training losses. All math is f64; batches are Eigen
// matrices with one embedding per row.

#include <Eigen/Dense>

namespace cfr {

/// max(0, -s_like + s_dislike + margin). The subgradient at the hinge
/// boundary is taken as 0.
double ranking_loss(double s_like, double s_dislike, double margin);

struct ContrastiveResult {
  double loss = 0.0;
  Eigen::MatrixXd grad_a;  // dL/da, same shape as a
  Eigen::MatrixXd grad_b;  // dL/db, same shape as b
};

/// Symmetric in-batch InfoNCE over logits a_j . b_k / t: the mean of the
/// a->b and b->a cross-entropy terms, matched pairs on the diagonal.
/// Throws InvalidArgument for t <= 0, an empty batch or shape mismatch.
ContrastiveResult symmetric_contrastive(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double t);

/// Targets vs their positive feedback images (negatives are not used).
double contrastive_feedback_loss(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& positives, double t);

/// Text embeddings vs their matching image embeddings.
double alignment_loss(const Eigen::MatrixXd& text, const Eigen::MatrixXd& images, double t);

}  // namespace cfr
