#include "uavsim/attention.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "uavsim/text.hpp"

namespace uavsim {

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  Eigen::VectorXd e = (v.array() - m).exp().matrix();
  return e / e.sum();
}

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

const Eigen::MatrixXd& prepared_values(const FeatureMatrix& f, FeatureMatrix& storage) {
  if (f.normalized) return f.values;
  storage = normalize_features(f);
  return storage.values;
}

struct ForwardPass {
  Projections proj;
  Eigen::MatrixXd alpha;
  Eigen::MatrixXd z;
  Eigen::VectorXd scores;
};

ForwardPass forward(const Eigen::MatrixXd& x, const AttentionParams& p) {
  ForwardPass f;
  f.proj = qkv_project(x, p);
  f.alpha = attention_weights(f.proj.q, f.proj.k);
  f.z = context_vectors(f.alpha, f.proj.v);
  f.scores = importance_scores(f.z, p);
  return f;
}

void write_matrix(std::ostream& out, const char* name, const Eigen::MatrixXd& m) {
  out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c > 0) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

std::string next_token(std::istream& in) {
  std::string tok;
  if (!(in >> tok)) throw std::runtime_error("attention checkpoint truncated");
  return tok;
}

void expect_token(std::istream& in, std::string_view expected) {
  const std::string tok = next_token(in);
  if (tok != expected) {
    throw std::runtime_error("attention checkpoint: expected '" + std::string(expected) + "', got '" + tok + "'");
  }
}

Eigen::MatrixXd read_matrix(std::istream& in, const char* name) {
  expect_token(in, name);
  const auto rows = parse_int(next_token(in));
  const auto cols = parse_int(next_token(in));
  if (rows < 0 || cols < 0) throw std::runtime_error("attention checkpoint: negative shape");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = parse_double(next_token(in));
  }
  return m;
}

}  // namespace

bool AttentionParams::all_finite() const {
  return w_q.allFinite() && w_k.allFinite() && w_v.allFinite() && w_s.allFinite() && std::isfinite(b_s);
}

void validate(const AttentionParams& p) {
  if (p.d() < 1 || p.d_prime() < 1) throw std::invalid_argument("attention: empty projection");
  if (p.w_k.rows() != p.d() || p.w_v.rows() != p.d() || p.w_k.cols() != p.d_prime() ||
      p.w_v.cols() != p.d_prime()) {
    throw std::invalid_argument("attention: W_Q, W_K, W_V must share shape d x d'");
  }
  if (p.w_s.size() != p.d_prime()) throw std::invalid_argument("attention: w_s must have length d'");
  if (!p.all_finite()) throw std::invalid_argument("attention: parameters must be finite");
}

AttentionParams init_attention_params(int d, int d_prime, std::mt19937_64& rng) {
  if (d < 1 || d_prime < 1) throw std::invalid_argument("attention dimensions must be positive");
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  auto fill = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = u(rng);
    return m;
  };
  AttentionParams p;
  p.w_q = fill(d, d_prime);
  p.w_k = fill(d, d_prime);
  p.w_v = fill(d, d_prime);
  p.w_s = fill(d_prime, 1).col(0);
  p.b_s = u(rng);
  return p;
}

FeatureMatrix normalize_features(const FeatureMatrix& raw) {
  if (raw.values.rows() < 1) throw std::invalid_argument("feature matrix needs at least one row");
  if (!raw.values.allFinite()) throw std::invalid_argument("feature matrix has non-finite entries");
  FeatureMatrix out = raw;
  out.col_min = raw.values.colwise().minCoeff();
  out.col_max = raw.values.colwise().maxCoeff();
  for (Eigen::Index c = 0; c < raw.values.cols(); ++c) {
    const double lo = out.col_min(c);
    const double span = out.col_max(c) - lo;
    for (Eigen::Index r = 0; r < raw.values.rows(); ++r) {
      out.values(r, c) = span > 0.0 ? (raw.values(r, c) - lo) / span : 0.5;
    }
  }
  out.normalized = true;
  return out;
}

FeatureMatrix denormalize_features(const FeatureMatrix& normalized) {
  if (!normalized.normalized) throw std::invalid_argument("feature matrix is not normalized");
  FeatureMatrix out = normalized;
  for (Eigen::Index c = 0; c < out.values.cols(); ++c) {
    const double lo = normalized.col_min(c);
    const double span = normalized.col_max(c) - lo;
    for (Eigen::Index r = 0; r < out.values.rows(); ++r) {
      out.values(r, c) = span > 0.0 ? normalized.values(r, c) * span + lo : lo;
    }
  }
  out.normalized = false;
  return out;
}

Projections qkv_project(const Eigen::MatrixXd& x, const AttentionParams& p) {
  if (x.cols() != p.d() || p.w_k.rows() != p.d() || p.w_v.rows() != p.d()) {
    throw std::invalid_argument("qkv_project: feature width does not match projection rows");
  }
  return {x * p.w_q, x * p.w_k, x * p.w_v};
}

Eigen::MatrixXd attention_weights(const Eigen::MatrixXd& q, const Eigen::MatrixXd& k) {
  if (q.cols() != k.cols()) throw std::invalid_argument("attention_weights: Q and K widths differ");
  const Eigen::MatrixXd scores = q * k.transpose();
  Eigen::MatrixXd alpha(scores.rows(), scores.cols());
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    alpha.row(i) = softmax(scores.row(i).transpose()).transpose();
  }
  return alpha;
}

Eigen::MatrixXd context_vectors(const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& v) {
  if (alpha.cols() != v.rows()) throw std::invalid_argument("context_vectors: shape mismatch");
  return alpha * v;
}

Eigen::VectorXd importance_scores(const Eigen::MatrixXd& z, const AttentionParams& p) {
  if (z.cols() != p.w_s.size()) throw std::invalid_argument("importance_scores: shape mismatch");
  return (z * p.w_s).array() + p.b_s;
}

std::vector<int> top_k_select(const Eigen::VectorXd& scores, int k) {
  std::vector<int> ids(static_cast<std::size_t>(scores.size()));
  std::iota(ids.begin(), ids.end(), 0);
  return top_k_select(scores, ids, k);
}

std::vector<int> top_k_select(const Eigen::VectorXd& scores, std::span<const int> ids, int k) {
  const auto n = static_cast<int>(scores.size());
  if (static_cast<int>(ids.size()) != n) throw std::invalid_argument("top_k_select: ids and scores differ in length");
  if (k < 1 || k > n) throw std::invalid_argument("top_k_select: k must lie in [1, N]");
  if (!scores.allFinite()) throw std::invalid_argument("top_k_select: scores must be finite");
  std::vector<int> rows(static_cast<std::size_t>(n));
  std::iota(rows.begin(), rows.end(), 0);
  std::partial_sort(rows.begin(), rows.begin() + k, rows.end(), [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return ids[static_cast<std::size_t>(a)] < ids[static_cast<std::size_t>(b)];
  });
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(ids[static_cast<std::size_t>(rows[static_cast<std::size_t>(i)])]);
  return out;
}

ImportanceRanking rank_sensors(const FeatureMatrix& features, const AttentionParams& params, int k) {
  if (k < 1) throw std::invalid_argument("rank_sensors: k must be positive");
  if (static_cast<Eigen::Index>(features.ids.size()) != features.values.rows()) {
    throw std::invalid_argument("rank_sensors: ids and feature rows differ in length");
  }
  FeatureMatrix storage;
  const Eigen::MatrixXd& x = prepared_values(features, storage);
  ForwardPass f = forward(x, params);
  ImportanceRanking r;
  r.selected = top_k_select(f.scores, features.ids, std::min<int>(k, static_cast<int>(x.rows())));
  r.scores = std::move(f.scores);
  r.alpha = std::move(f.alpha);
  return r;
}

std::optional<Eigen::Index> hindsight_label(std::span<const double> realized_loss) {
  std::optional<Eigen::Index> best;
  for (std::size_t i = 0; i < realized_loss.size(); ++i) {
    if (!(realized_loss[i] > 0.0)) continue;
    if (!best || realized_loss[i] > realized_loss[static_cast<std::size_t>(*best)]) {
      best = static_cast<Eigen::Index>(i);
    }
  }
  return best;
}

double surrogate_loss(const AttentionParams& params, std::span<const FeedbackStep> feedback) {
  double total = 0.0;
  int labelled = 0;
  for (const FeedbackStep& step : feedback) {
    const auto label = hindsight_label(step.realized_loss);
    if (!label) continue;
    FeatureMatrix storage;
    const ForwardPass f = forward(prepared_values(step.features, storage), params);
    total += log_sum_exp(f.scores) - f.scores(*label);
    ++labelled;
  }
  return labelled > 0 ? total / labelled : 0.0;
}

AttentionGradient surrogate_gradient(const AttentionParams& p, std::span<const FeedbackStep> feedback) {
  AttentionGradient g;
  g.w_q = Eigen::MatrixXd::Zero(p.d(), p.d_prime());
  g.w_k = Eigen::MatrixXd::Zero(p.d(), p.d_prime());
  g.w_v = Eigen::MatrixXd::Zero(p.d(), p.d_prime());
  g.w_s = Eigen::VectorXd::Zero(p.d_prime());

  int labelled = 0;
  for (const FeedbackStep& step : feedback) {
    if (static_cast<Eigen::Index>(step.realized_loss.size()) != step.features.values.rows()) {
      throw std::invalid_argument("feedback: realized_loss must have one entry per feature row");
    }
    const auto label = hindsight_label(step.realized_loss);
    if (!label) continue;
    ++labelled;

    FeatureMatrix storage;
    const Eigen::MatrixXd& x = prepared_values(step.features, storage);
    const ForwardPass f = forward(x, p);

    Eigen::VectorXd ds = softmax(f.scores);
    ds(*label) -= 1.0;

    g.b_s += ds.sum();
    g.w_s += f.z.transpose() * ds;
    const Eigen::MatrixXd dz = ds * p.w_s.transpose();
    const Eigen::MatrixXd dalpha = dz * f.proj.v.transpose();
    const Eigen::MatrixXd dv = f.alpha.transpose() * dz;
    const Eigen::VectorXd row_dot = (f.alpha.array() * dalpha.array()).rowwise().sum();
    const Eigen::MatrixXd dscore = (f.alpha.array() * (dalpha.colwise() - row_dot).array()).matrix();
    const Eigen::MatrixXd dq = dscore * f.proj.k;
    const Eigen::MatrixXd dk = dscore.transpose() * f.proj.q;
    g.w_q += x.transpose() * dq;
    g.w_k += x.transpose() * dk;
    g.w_v += x.transpose() * dv;
  }
  if (labelled > 0) {
    const double inv = 1.0 / labelled;
    g.w_q *= inv;
    g.w_k *= inv;
    g.w_v *= inv;
    g.w_s *= inv;
    g.b_s *= inv;
  }
  return g;
}

UpdateResult update_params(const AttentionParams& params, std::span<const FeedbackStep> feedback,
                           double learning_rate) {
  if (feedback.empty()) throw std::invalid_argument("update_params needs at least one feedback step");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  UpdateResult r{params, false, false, 0.0};
  if (learning_rate == 0.0) return r;

  r.loss_before = surrogate_loss(params, feedback);
  const AttentionGradient g = surrogate_gradient(params, feedback);
  if (!(g.w_q.allFinite() && g.w_k.allFinite() && g.w_v.allFinite() && g.w_s.allFinite() && std::isfinite(g.b_s))) {
    r.non_finite = true;
    return r;
  }
  AttentionParams next = params;
  next.w_q -= learning_rate * g.w_q;
  next.w_k -= learning_rate * g.w_k;
  next.w_v -= learning_rate * g.w_v;
  next.w_s -= learning_rate * g.w_s;
  next.b_s -= learning_rate * g.b_s;
  if (!next.all_finite()) {
    r.non_finite = true;
    return r;
  }
  r.params = std::move(next);
  r.applied = true;
  return r;
}

void save_params(std::ostream& out, const AttentionParams& p) {
  validate(p);
  out << "uavsim-attention 1\n";
  write_matrix(out, "w_q", p.w_q);
  write_matrix(out, "w_k", p.w_k);
  write_matrix(out, "w_v", p.w_v);
  write_matrix(out, "w_s", p.w_s.transpose());
  out << "b_s " << format_double(p.b_s) << '\n';
}

AttentionParams load_params(std::istream& in) {
  expect_token(in, "uavsim-attention");
  expect_token(in, "1");
  AttentionParams p;
  p.w_q = read_matrix(in, "w_q");
  p.w_k = read_matrix(in, "w_k");
  p.w_v = read_matrix(in, "w_v");
  const Eigen::MatrixXd ws = read_matrix(in, "w_s");
  if (ws.rows() != 1) throw std::runtime_error("attention checkpoint: w_s must be a single row");
  p.w_s = ws.row(0).transpose();
  expect_token(in, "b_s");
  p.b_s = parse_double(next_token(in));
  validate(p);
  return p;
}

}  // namespace uavsim
