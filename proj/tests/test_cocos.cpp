#include <gtest/gtest.h>

#include "cocoslab/cocos.hpp"
#include "cocoslab/cocos_protocol.hpp"
#include "support.hpp"

using namespace cocoslab;
using cocoslab::testing::vec;

namespace {

const LossParams kParams{};

RetrievalBatch<double> separated_pairwise(std::size_t n) {
  std::vector<VectorXd> v;
  for (std::size_t i = 0; i < n; ++i) {
    VectorXd e = VectorXd::Zero(static_cast<Eigen::Index>(n));
    e[static_cast<Eigen::Index>(i)] = 1;
    v.push_back(e);
  }
  return cocoslab::testing::pairwise_batch(v, v);
}

}  // namespace

TEST(CountTripletSh, RandomInitNearlyAllViolate) {
  std::mt19937_64 rng(1);
  double total = 0.0;
  for (int t = 0; t < 10; ++t) {
    const auto b = cocoslab::testing::random_pairwise(rng, 64, 32);
    total += static_cast<double>(count_triplet_sh(b, Direction::i2t, kParams).c_batch) / 10.0;
  }
  EXPECT_GT(total, 0.95 * 64);
}

TEST(CountTripletSh, SeparatedGivesZero) {
  const auto c = count_triplet_sh(separated_pairwise(5), Direction::i2t, kParams);
  EXPECT_EQ(c.c_batch, 0u);
  EXPECT_EQ(c.c_zero, 5u);
  EXPECT_DOUBLE_EQ(c.c_q_contributing, 0.0);
}

TEST(CountTripletSh, PerQueryIsZeroOrOne) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto b = cocoslab::testing::random_pairwise(rng, 2 + t % 20, 4);
    for (Direction d : {Direction::i2t, Direction::t2i}) {
      const auto c = count_triplet_sh(b, d, kParams);
      for (auto v : c.per_query) EXPECT_LE(v, 1u);
      EXPECT_LE(c.c_q, 1.0);
      if (c.c_batch > 0) EXPECT_DOUBLE_EQ(c.c_q_contributing, 1.0);
    }
  }
}

TEST(CountTriplet, AllViolatingCountsEveryNegative) {
  // all embeddings identical: every gap is 0 < alpha
  std::vector<VectorXd> v(6, vec({1, 0}));
  const auto c = count_triplet(cocoslab::testing::pairwise_batch(v, v), Direction::i2t, kParams);
  for (auto q : c.per_query) EXPECT_EQ(q, 5u);
  EXPECT_EQ(c.c_batch, 30u);
  EXPECT_EQ(c.c_zero, 0u);
  EXPECT_DOUBLE_EQ(c.c_q, 5.0);
}

TEST(CountTriplet, MatchesNonzeroGradientTerms) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const auto b = cocoslab::testing::random_pairwise(rng, 2 + t % 30, 3 + t % 5);
    for (Direction d : {Direction::i2t, Direction::t2i}) {
      std::size_t terms = 0;
      for (const auto& q : b.queries(d)) {
        const auto r = triplet_grad(q.values(), score_set(q, b, d), b, kParams);
        for (const auto& term : r.terms) terms += term.weight != 0.0;
      }
      EXPECT_EQ(count_triplet(b, d, kParams).c_batch, terms);
    }
  }
}

TEST(CountTriplet, WrongLayout) {
  std::mt19937_64 rng(4);
  const auto g = cocoslab::testing::random_grouped(rng, 2, 2, 3);
  EXPECT_THROW(count_triplet(g, Direction::i2t, kParams), Error);
  EXPECT_THROW(count_triplet_sh(g, Direction::i2t, kParams), Error);
  EXPECT_THROW(count_ntxent(g, Direction::i2t, kParams, 0.01), Error);
  const auto p = cocoslab::testing::random_pairwise(rng, 3, 3);
  EXPECT_THROW(count_smooth_ap(p, Direction::i2t, kParams, 0.01), Error);
}

TEST(CountNtxent, UniformScores) {
  std::vector<VectorXd> v(4, vec({1, 0}));
  const auto c = count_ntxent(cocoslab::testing::pairwise_batch(v, v), Direction::i2t, kParams, 0.2);
  EXPECT_DOUBLE_EQ(c.c_qv_neg, 3.0);
  EXPECT_NEAR(c.w_qv_neg, 0.75, 1e-15);
  EXPECT_NEAR(c.w_qv_pos, 0.75, 1e-15);
}

TEST(CountNtxent, WeightsPartitionSoftmaxMass) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const auto b = cocoslab::testing::random_pairwise(rng, 8, 4);
    const double eps = 0.05;
    const auto c = count_ntxent(b, Direction::i2t, kParams, eps);
    for (std::size_t q = 0; q < c.w_neg_per_query.size(); ++q) {
      const auto s = score_set(b.images()[q], b, Direction::i2t);
      const VectorXd p = detail::softmax(s.scores(), kParams.tau_ntxent);
      double below = 0.0;
      for (std::size_t i = 0; i < s.size(); ++i)
        if (!s.is_positive(i) && p[static_cast<Eigen::Index>(i)] <= eps) below += p[static_cast<Eigen::Index>(i)];
      EXPECT_NEAR(c.w_neg_per_query[q] + (1.0 - c.w_pos_per_query[q]) + below, 1.0, 1e-12);
      EXPECT_GE(c.w_pos_per_query[q], 0.0);
      EXPECT_LE(c.w_pos_per_query[q], 1.0);
    }
  }
}

TEST(CountNtxent, ZeroEpsilonCountsAllNegatives) {
  std::mt19937_64 rng(6);
  const auto b = cocoslab::testing::random_pairwise(rng, 10, 4);
  for (auto v : count_ntxent(b, Direction::t2i, kParams, 0.0).c_per_query) EXPECT_EQ(v, 9u);
}

TEST(CountSmoothAp, SaturatedScoresCountNothing) {
  std::vector<VectorXd> im{vec({1, 0}), vec({-1, 0})};
  std::vector<VectorXd> cap{vec({1, 0}), vec({1, 0}), vec({-1, 0}), vec({-1, 0})};
  const auto b = cocoslab::testing::grouped_batch(im, cap, 2);
  // positives tie with each other at gap 0, so only the t2i direction is fully saturated
  const auto c = count_smooth_ap(b, Direction::t2i, kParams, 0.01);
  EXPECT_EQ(c.c_zero, 4u);
  EXPECT_DOUBLE_EQ(c.c_q, 0.0);
}

TEST(CountSmoothAp, EqualScoresAreCounted) {
  // sim(0) = 1 / (4 tau) = 25 at tau = 0.01; ranks are 1
  EXPECT_DOUBLE_EQ(detail::sigmoid_derivative(0.0, 0.01), 25.0);
  const auto b = cocoslab::testing::grouped_batch({vec({1, 0}), vec({1, 0})}, {vec({1, 0}), vec({1, 0})}, 1);
  const auto c = count_smooth_ap(b, Direction::i2t, kParams, 0.01);
  EXPECT_DOUBLE_EQ(c.c_q, 1.0);
  EXPECT_EQ(c.c_zero, 0u);
}

TEST(CountSmoothAp, ZeroEpsilonCountsAllPairs) {
  std::mt19937_64 rng(7);
  LossParams wide;
  wide.tau_smooth = 1.0;
  const auto b = cocoslab::testing::random_grouped(rng, 4, 3, 5);
  for (auto v : count_smooth_ap(b, Direction::i2t, wide, 0.0).per_query) EXPECT_DOUBLE_EQ(v, 11.0);
  for (auto v : count_smooth_ap(b, Direction::t2i, wide, 0.0).per_query) EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(Cocos, CountsNonIncreasingInEpsilon) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 20; ++t) {
    const auto p = cocoslab::testing::random_pairwise(rng, 16, 4);
    const auto g = cocoslab::testing::random_grouped(rng, 4, 3, 4);
    double prev_n = 1e9, prev_s = 1e9;
    for (double eps : {0.0, 1e-4, 1e-3, 0.01, 0.1, 1.0, 10.0}) {
      const double n = count_ntxent(p, Direction::i2t, kParams, eps).c_qv_neg;
      const double s = count_smooth_ap(g, Direction::i2t, kParams, eps).c_q;
      EXPECT_LE(n, prev_n);
      EXPECT_LE(s, prev_s);
      prev_n = n;
      prev_s = s;
    }
  }
}

// --------------------------------------------------------------------------
// protocol

namespace {

SynthDataset small_dataset(std::size_t tuples) {
  SynthConfig c;
  c.num_tuples = tuples;
  c.captions_per_image = 2;
  c.core_dim = 4;
  c.nuisance_dim = 2;
  c.seed = 3;
  return generate(c);
}

}  // namespace

TEST(CocosProtocol, OneBatchHasZeroStd) {
  const auto ds = small_dataset(10);  // 8 training tuples, 16 captions
  const auto enc = init_encoders(ds.config.latent_dim(), 4, 1);
  CocosConfig cfg;
  cfg.batch_size = 16;
  const auto r = cocos_protocol(enc, ds, LossKind::triplet, Direction::i2t, cfg);
  ASSERT_EQ(r.num_batches(), 1u);
  for (const auto& s : r.statistics) {
    EXPECT_DOUBLE_EQ(s.summary.mean, s.per_batch.front());
    EXPECT_DOUBLE_EQ(s.summary.std, 0.0);
  }
}

TEST(CocosProtocol, DropsShortBatchAndIsDeterministic) {
  const auto ds = small_dataset(50);  // 40 training tuples, 80 captions
  const auto enc = init_encoders(ds.config.latent_dim(), 4, 1);
  CocosConfig cfg;
  cfg.batch_size = 30;
  const auto a = cocos_protocol(enc, ds, LossKind::ntxent, Direction::t2i, cfg);
  EXPECT_EQ(a.num_batches(), 2u);
  const auto b = cocos_protocol(enc, ds, LossKind::ntxent, Direction::t2i, cfg);
  EXPECT_EQ(to_key_values(a), to_key_values(b));
  cfg.batch_size = 81;
  EXPECT_THROW(cocos_protocol(enc, ds, LossKind::ntxent, Direction::t2i, cfg), Error);
}

TEST(CocosProtocol, GroupedBatchesCountImages) {
  const auto ds = small_dataset(50);
  const auto enc = init_encoders(ds.config.latent_dim(), 4, 2);
  CocosConfig cfg;
  cfg.batch_size = 20;
  const auto r = cocos_protocol(enc, ds, LossKind::smooth_ap, Direction::t2i, cfg);
  EXPECT_EQ(r.num_batches(), 2u);
  for (double z : r.statistic("c_smooth_zero").per_batch) EXPECT_LE(z, 40.0);
}

TEST(CocosProtocol, AgreesWithGradientReports) {
  const auto ds = small_dataset(50);
  const auto enc = init_encoders(ds.config.latent_dim(), 4, 3);
  CocosConfig cfg;
  cfg.batch_size = 40;
  const auto r = cocos_protocol(enc, ds, LossKind::triplet, Direction::i2t, cfg);
  // replay the same shuffle and count nonzero triplet_grad terms directly
  std::mt19937_64 rng(cfg.seed);
  const auto plans = plan_epoch(ds.train, Layout::pairwise, cfg.batch_size, rng);
  const MatrixXd img = enc.encode_images(ds.train.images);
  const MatrixXd cap = enc.encode_captions(ds.train.captions);
  std::vector<double> expected;
  for (const auto& plan : plans) {
    if (plan.size() < cfg.batch_size) continue;
    const auto b = materialize(plan, img, cap);
    std::size_t terms = 0;
    for (const auto& q : b.images()) terms += triplet_grad(q.values(), score_set(q, b, Direction::i2t), b, kParams).terms.size();
    expected.push_back(static_cast<double>(terms));
  }
  EXPECT_EQ(r.statistic("c_batch").per_batch, expected);
}

TEST(MeanStd, SampleConvention) {
  EXPECT_DOUBLE_EQ(mean_std({}).mean, 0.0);
  EXPECT_DOUBLE_EQ(mean_std({4.0}).std, 0.0);
  EXPECT_DOUBLE_EQ(mean_std({2.0, 2.0}).std, 0.0);
  EXPECT_DOUBLE_EQ(mean_std({1.0, 3.0}).std, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(mean_std({1.0, 3.0}).mean, 2.0);
}
