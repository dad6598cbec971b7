#pragma once

// Sensor ranking by self-attention.
//
//   X (N x 3)  ->  Q = X Wq, K = X Wk, V = X Wv            (N x d')
//   score_ij = q_i . k_j          (plain dot product, no 1/sqrt(d') factor)
//   alpha    = row-wise softmax(score)
//   z_i      = sum_j alpha_ij v_j
//   s_i      = w_s . z_i + b_s
//   top-k    = k largest s_i, ties broken by ascending sensor id
//
// Features are min-max normalized per column before projection so that queue
// length, battery and dB gain enter on a comparable scale.
//
// Cost per ranking is O(N^2 d' + N d d'); the unscaled dot product means large
// weights saturate the softmax quickly, which the uniform [-0.5, 0.5] init keeps
// in check for normalized inputs.

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "uavsim/features.hpp"

namespace uavsim {

struct AttentionParams {
  Eigen::MatrixXd w_q;  // d x d'
  Eigen::MatrixXd w_k;  // d x d'
  Eigen::MatrixXd w_v;  // d x d'
  Eigen::VectorXd w_s;  // d'
  double b_s = 0.0;

  Eigen::Index d() const { return w_q.rows(); }
  Eigen::Index d_prime() const { return w_q.cols(); }
  bool all_finite() const;
};

/// Throws std::invalid_argument on inconsistent shapes or non-finite entries.
void validate(const AttentionParams& params);

/// Entries uniform in [-0.5, 0.5].
AttentionParams init_attention_params(int d, int d_prime, std::mt19937_64& rng);

struct Projections {
  Eigen::MatrixXd q;
  Eigen::MatrixXd k;
  Eigen::MatrixXd v;
};

struct ImportanceRanking {
  Eigen::VectorXd scores;
  Eigen::MatrixXd alpha;
  std::vector<int> selected;
};

FeatureMatrix normalize_features(const FeatureMatrix& raw);
FeatureMatrix denormalize_features(const FeatureMatrix& normalized);

Projections qkv_project(const Eigen::MatrixXd& x, const AttentionParams& params);
Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k);
Eigen::MatrixXd context_vectors(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& v);
Eigen::VectorXd importance_scores(const Eigen::MatrixXd& z, const AttentionParams& params);

/// Row indices 0..N-1 serve as ids.
std::vector<int> top_k_select(const Eigen::VectorXd& scores, int k);
std::vector<int> top_k_select(const Eigen::VectorXd& scores, std::span<const int> ids, int k);

/// Full pipeline. Raw features are normalized first; already normalized ones are
/// used as is. `k` is clamped to the number of rows.
ImportanceRanking rank_sensors(const FeatureMatrix& features, const AttentionParams& params, int k);

/// One step of hindsight feedback. realized_loss has one entry per feature row;
/// the row with the largest value is the training label.
struct FeedbackStep {
  FeatureMatrix features;
  std::vector<int> selected;
  std::vector<double> realized_loss;
};

/// Index of the largest realized loss (lowest row on ties), or nullopt when no
/// row carries a positive loss.
std::optional<Eigen::Index> hindsight_label(std::span<const double> realized_loss);

struct AttentionGradient {
  Eigen::MatrixXd w_q;
  Eigen::MatrixXd w_k;
  Eigen::MatrixXd w_v;
  Eigen::VectorXd w_s;
  double b_s = 0.0;
};

/// Mean over labelled steps of -log softmax(s)_label. Steps without a label are
/// skipped; returns 0 when none remain.
double surrogate_loss(const AttentionParams& params, std::span<const FeedbackStep> feedback);
AttentionGradient surrogate_gradient(const AttentionParams& params, std::span<const FeedbackStep> feedback);

struct UpdateResult {
  AttentionParams params;
  bool applied = false;
  bool non_finite = false;  // gradient or result was not finite; params returned unchanged
  double loss_before = 0.0;
};

/// One gradient-descent step on the surrogate loss.
UpdateResult update_params(const AttentionParams& params, std::span<const FeedbackStep> feedback,
                           double learning_rate);

/// Flat text checkpoint: a shape header followed by row-major numbers.
void save_params(std::ostream& out, const AttentionParams& params);
AttentionParams load_params(std::istream& in);

}  // namespace uavsim
