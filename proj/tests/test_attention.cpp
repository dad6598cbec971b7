#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "uavsim/attention.hpp"

using namespace uavsim;

namespace {

oracle::Mat to_mat(const Eigen::MatrixXd& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] = m(r, c);
  return out;
}

oracle::Weights to_weights(const AttentionParams& p) {
  oracle::Weights w;
  w.wq = to_mat(p.w_q);
  w.wk = to_mat(p.w_k);
  w.wv = to_mat(p.w_v);
  w.ws.assign(p.w_s.data(), p.w_s.data() + p.w_s.size());
  w.bs = p.b_s;
  return w;
}

FeatureMatrix random_features(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> q(0, 40);
  std::uniform_real_distribution<double> b(0.0, 50.0);
  std::uniform_real_distribution<double> g(110.0, 125.0);
  FeatureMatrix f;
  f.values.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    f.ids.push_back(i);
    f.values(i, 0) = q(rng);
    f.values(i, 1) = b(rng);
    f.values(i, 2) = g(rng);
  }
  return f;
}

void expect_near(const Eigen::MatrixXd& a, const oracle::Mat& b, double tol) {
  ASSERT_EQ(static_cast<std::size_t>(a.rows()), b.size());
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      EXPECT_NEAR(a(r, c), b[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)], tol);
}

}  // namespace

TEST(Normalize, EndpointsMapToUnitInterval) {
  FeatureMatrix f;
  f.ids = {0, 1, 2};
  f.values.resize(3, 3);
  f.values << 0, 7, 1, 20, 7, 2, 40, 7, 3;
  const FeatureMatrix n = normalize_features(f);
  EXPECT_EQ(n.values(0, 0), 0.0);
  EXPECT_EQ(n.values(1, 0), 0.5);
  EXPECT_EQ(n.values(2, 0), 1.0);
  for (int r = 0; r < 3; ++r) EXPECT_EQ(n.values(r, 1), 0.5);  // constant column
}

TEST(Normalize, RoundTrip) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const FeatureMatrix f = random_features(2 + i % 9, rng);
    const FeatureMatrix back = denormalize_features(normalize_features(f));
    EXPECT_TRUE(back.values.isApprox(f.values, 1e-12));
    EXPECT_LT((back.values - f.values).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Project, IdentityWeightsCopyInput) {
  AttentionParams p;
  p.w_q = p.w_k = p.w_v = Eigen::MatrixXd::Identity(3, 3);
  p.w_s = Eigen::VectorXd::Ones(3);
  Eigen::MatrixXd x(2, 3);
  x << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  const Projections pr = qkv_project(x, p);
  EXPECT_EQ(pr.q, x);
  EXPECT_EQ(pr.k, x);
  EXPECT_EQ(pr.v, x);
  EXPECT_TRUE(qkv_project(Eigen::MatrixXd::Zero(2, 3), p).q.isZero());
}

TEST(Project, MatchesTripleLoop) {
  std::mt19937_64 rng(8);
  const AttentionParams p = init_attention_params(3, 5, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 3);
  const Projections pr = qkv_project(x, p);
  expect_near(pr.q, oracle::matmul(to_mat(x), to_mat(p.w_q)), 1e-12);
  expect_near(pr.k, oracle::matmul(to_mat(x), to_mat(p.w_k)), 1e-12);
  expect_near(pr.v, oracle::matmul(to_mat(x), to_mat(p.w_v)), 1e-12);
}

TEST(Softmax, SingleRowIsOne) {
  const Eigen::MatrixXd a = attention_weights(Eigen::MatrixXd::Constant(1, 4, 0.3), Eigen::MatrixXd::Constant(1, 4, 2.0));
  ASSERT_EQ(a.rows(), 1);
  EXPECT_EQ(a(0, 0), 1.0);
}

TEST(Softmax, EqualScoresAreUniform) {
  const Eigen::MatrixXd q = Eigen::MatrixXd::Zero(5, 3);
  const Eigen::MatrixXd a = attention_weights(q, Eigen::MatrixXd::Random(5, 3));
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = 0; j < 5; ++j) EXPECT_NEAR(a(i, j), 0.2, 1e-15);
}

TEST(Softmax, MatchesExpOverSum) {
  const Eigen::MatrixXd q = Eigen::MatrixXd::Random(5, 4);
  const Eigen::MatrixXd k = Eigen::MatrixXd::Random(5, 4);
  expect_near(attention_weights(q, k), oracle::softmax_rows(oracle::matmul(to_mat(q), oracle::transpose(to_mat(k)))),
              1e-12);
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Eigen::MatrixXd q = Eigen::MatrixXd::Constant(3, 2, 400.0);
  Eigen::MatrixXd k = Eigen::MatrixXd::Constant(3, 2, 1.0);
  k(1, 0) = 2.0;
  const Eigen::MatrixXd a = attention_weights(q, k);
  EXPECT_TRUE(a.allFinite());
  EXPECT_NEAR(a.row(0).sum(), 1.0, 1e-12);
}

TEST(Context, IdentityAndUniformWeights) {
  const Eigen::MatrixXd v = Eigen::MatrixXd::Random(4, 3);
  EXPECT_EQ(context_vectors(Eigen::MatrixXd::Identity(4, 4), v), v);
  const Eigen::MatrixXd z = context_vectors(Eigen::MatrixXd::Constant(4, 4, 0.25), v);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_TRUE(z.row(i).isApprox(v.colwise().mean(), 1e-12));
  const Eigen::MatrixXd alpha = Eigen::MatrixXd::Random(4, 4);
  expect_near(context_vectors(alpha, v), oracle::matmul(to_mat(alpha), to_mat(v)), 1e-12);
}

TEST(Scores, ZeroHeadGivesBias) {
  AttentionParams p;
  p.w_q = p.w_k = p.w_v = Eigen::MatrixXd::Ones(3, 2);
  p.w_s = Eigen::VectorXd::Zero(2);
  p.b_s = -1.25;
  const Eigen::VectorXd s = importance_scores(Eigen::MatrixXd::Random(4, 2), p);
  for (Eigen::Index i = 0; i < 4; ++i) EXPECT_EQ(s(i), -1.25);
}

TEST(Scores, BiasShiftsEveryScore) {
  std::mt19937_64 rng(2);
  AttentionParams p = init_attention_params(3, 4, rng);
  const Eigen::MatrixXd z = Eigen::MatrixXd::Random(6, 4);
  const Eigen::VectorXd a = importance_scores(z, p);
  p.b_s += 3.5;
  const Eigen::VectorXd b = importance_scores(z, p);
  for (Eigen::Index i = 0; i < 6; ++i) EXPECT_NEAR(b(i), a(i) + 3.5, 1e-12);
}

TEST(TopK, AllWhenKIsN) {
  Eigen::VectorXd s(4);
  s << 0.1, 0.4, 0.2, 0.3;
  EXPECT_EQ(top_k_select(s, 4), (std::vector<int>{1, 3, 2, 0}));
}

TEST(TopK, TiesGoToLowerId) {
  Eigen::VectorXd s(3);
  s << 3, 1, 3;
  EXPECT_EQ(top_k_select(s, 2), (std::vector<int>{0, 2}));
}

TEST(TopK, RejectsBadK) {
  Eigen::VectorXd s(3);
  s << 1, 2, 3;
  EXPECT_THROW(top_k_select(s, 0), std::invalid_argument);
  EXPECT_THROW(top_k_select(s, 4), std::invalid_argument);
}

TEST(TopK, MatchesFullSort) {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> n_dist(1, 16);
  std::uniform_int_distribution<int> coarse(0, 5);  // forces ties
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = n_dist(rng);
    Eigen::VectorXd s(n);
    std::vector<double> sv;
    std::vector<int> ids;
    for (int i = 0; i < n; ++i) {
      s(i) = coarse(rng);
      sv.push_back(s(i));
      ids.push_back(100 - 3 * i);
    }
    const int k = std::uniform_int_distribution<int>(1, n)(rng);
    ASSERT_EQ(top_k_select(s, ids, k), oracle::top_k(sv, ids, static_cast<std::size_t>(k)));
  }
}

TEST(Pipeline, MatchesNaiveReimplementation) {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 16;
    const int dp = 1 + (trial * 7) % 16;
    const AttentionParams p = init_attention_params(3, dp, rng);
    const FeatureMatrix f = random_features(n, rng);
    const ImportanceRanking r = rank_sensors(f, p, 3);
    const oracle::Pipeline o = oracle::attention(to_mat(f.values), to_weights(p));
    for (int i = 0; i < n; ++i) EXPECT_NEAR(r.scores(i), o.scores[static_cast<std::size_t>(i)], 1e-9);
    expect_near(r.alpha, o.alpha, 1e-9);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(r.alpha.row(i).sum(), 1.0, 1e-9);
    EXPECT_EQ(r.selected, oracle::top_k(o.scores, f.ids, static_cast<std::size_t>(std::min(3, n))));
  }
}

TEST(Surrogate, LabelIsLargestPositiveLoss) {
  EXPECT_EQ(hindsight_label(std::vector<double>{0.0, 2.0, 5.0, 5.0}), 2);
  EXPECT_FALSE(hindsight_label(std::vector<double>{0.0, 0.0}).has_value());
}

TEST(Surrogate, LossMatchesOracle) {
  std::mt19937_64 rng(31);
  const AttentionParams p = init_attention_params(3, 4, rng);
  std::vector<FeedbackStep> fb;
  std::vector<oracle::Instance> data;
  for (int i = 0; i < 5; ++i) {
    FeedbackStep s;
    s.features = random_features(3 + i, rng);
    for (int j = 0; j < 3 + i; ++j) s.realized_loss.push_back((j * 7 + i) % 4);
    data.push_back({to_mat(s.features.values), s.realized_loss});
    fb.push_back(std::move(s));
  }
  EXPECT_NEAR(surrogate_loss(p, fb), oracle::surrogate(data, to_weights(p)), 1e-12);
}

TEST(Update, ZeroLearningRateKeepsParams) {
  std::mt19937_64 rng(1);
  const AttentionParams p = init_attention_params(3, 4, rng);
  FeedbackStep s;
  s.features = random_features(3, rng);
  s.realized_loss = {0, 1, 0};
  const UpdateResult r = update_params(p, std::vector<FeedbackStep>{s}, 0.0);
  EXPECT_EQ(r.params.w_q, p.w_q);
  EXPECT_EQ(r.params.w_s, p.w_s);
  EXPECT_EQ(r.params.b_s, p.b_s);
}

TEST(Update, EmptyFeedbackRejected) {
  std::mt19937_64 rng(1);
  const AttentionParams p = init_attention_params(3, 4, rng);
  EXPECT_THROW(update_params(p, std::vector<FeedbackStep>{}, 0.1), std::invalid_argument);
}

TEST(Update, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 5; ++trial) {
    const AttentionParams p = init_attention_params(3, 4, rng);
    FeedbackStep s;
    s.features = random_features(3, rng);
    s.realized_loss = {0.5, 2.0 + trial, 1.0};
    const std::vector<FeedbackStep> fb{s};
    const std::vector<oracle::Instance> data{{to_mat(s.features.values), s.realized_loss}};
    const AttentionGradient g = surrogate_gradient(p, fb);

    const double h = 1e-6;
    double num_sq = 0, diff_sq = 0, ana_sq = 0;
    auto probe = [&](double analytic, auto&& set) {
      oracle::Weights plus = to_weights(p), minus = to_weights(p);
      set(plus, +h);
      set(minus, -h);
      const double numeric = (oracle::surrogate(data, plus) - oracle::surrogate(data, minus)) / (2 * h);
      num_sq += numeric * numeric;
      ana_sq += analytic * analytic;
      diff_sq += (numeric - analytic) * (numeric - analytic);
    };
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        const auto ri = static_cast<Eigen::Index>(r), ci = static_cast<Eigen::Index>(c);
        probe(g.w_q(ri, ci), [&](oracle::Weights& w, double d) { w.wq[r][c] += d; });
        probe(g.w_k(ri, ci), [&](oracle::Weights& w, double d) { w.wk[r][c] += d; });
        probe(g.w_v(ri, ci), [&](oracle::Weights& w, double d) { w.wv[r][c] += d; });
      }
    for (std::size_t c = 0; c < 4; ++c)
      probe(g.w_s(static_cast<Eigen::Index>(c)), [&](oracle::Weights& w, double d) { w.ws[c] += d; });
    probe(g.b_s, [&](oracle::Weights& w, double d) { w.bs += d; });
    EXPECT_LT(std::sqrt(diff_sq) / std::max(std::sqrt(num_sq), std::sqrt(ana_sq)), 1e-4);
  }
}

TEST(Update, SelectionFrequencyOfTargetNeverDrops) {
  std::mt19937_64 rng(12);
  AttentionParams p = init_attention_params(3, 4, rng);
  std::vector<FeatureMatrix> pool;
  for (int i = 0; i < 20; ++i) {
    FeatureMatrix f = random_features(5, rng);
    for (int j = 0; j < 5; ++j) f.values(j, 0) = std::min(f.values(j, 0), 30.0);
    f.values(2, 0) = 40.0;
    pool.push_back(std::move(f));
  }
  // Sensor 2 always has the fullest queue and always goes on to lose the most.
  auto frequency = [&] {
    int hits = 0;
    for (const auto& f : pool) hits += rank_sensors(f, p, 1).selected.front() == 2;
    return hits;
  };
  std::vector<FeedbackStep> fb;
  for (const auto& f : pool) fb.push_back({f, {}, {0.1, 0.2, 3.0, 0.0, 0.1}});
  const double loss_start = surrogate_loss(p, fb);
  int previous = frequency();
  const int start = previous;
  for (int it = 0; it < 50; ++it) {
    p = update_params(p, fb, 0.5).params;
    const int now = frequency();
    EXPECT_GE(now, previous) << "iteration " << it;
    previous = now;
  }
  EXPECT_GT(previous, start);
  EXPECT_LT(surrogate_loss(p, fb), loss_start);
}

TEST(Checkpoint, RoundTripIsExact) {
  std::mt19937_64 rng(3);
  const AttentionParams p = init_attention_params(3, 6, rng);
  std::stringstream ss;
  save_params(ss, p);
  const AttentionParams q = load_params(ss);
  EXPECT_EQ(q.w_q, p.w_q);
  EXPECT_EQ(q.w_k, p.w_k);
  EXPECT_EQ(q.w_v, p.w_v);
  EXPECT_EQ(q.w_s, p.w_s);
  EXPECT_EQ(q.b_s, p.b_s);
}

TEST(Checkpoint, TruncatedInputRejected) {
  std::mt19937_64 rng(3);
  std::stringstream ss;
  save_params(ss, init_attention_params(3, 2, rng));
  const std::string text = ss.str();
  std::istringstream cut(text.substr(0, text.size() / 2));
  EXPECT_ANY_THROW(load_params(cut));
}
