#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "cocoslab/metrics.hpp"
#include "support.hpp"

using namespace cocoslab;
using cocoslab::testing::scores;
using cocoslab::testing::vec;

namespace {

// Sort descending and average precision at each positive.
double brute_force_ap(const std::vector<double>& s, const std::vector<char>& positive) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  double sum = 0.0;
  int hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positive[order[r]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / hits;
}

}  // namespace

TEST(RankOf, Examples) {
  EXPECT_EQ(rank_of(2, scores({0.9, 0.7, 0.5}, {2})), 3u);
  const auto eq = scores({0.4, 0.4, 0.4}, {0});
  for (Id i = 0; i < 3; ++i) EXPECT_EQ(rank_of(i, eq), 1u);
  EXPECT_EQ(rank_of(1, scores({0.2, 0.8, 0.5}, {0})), 1u);
}

TEST(RankOf, CandidateNotFound) {
  try {
    rank_of(7, scores({0.1, 0.2}, {0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::candidate_not_found);
  }
}

TEST(RankOf, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(2 + t % 10), g(s.size());
    for (auto& x : s) x = std::round(u(rng) * 8) / 8;  // coarse grid makes ties
    std::transform(s.begin(), s.end(), g.begin(), [](double x) { return std::exp(3 * x) - 2; });
    const auto a = scores(s, {0});
    const auto b = scores(g, {0});
    for (Id i = 0; i < static_cast<Id>(s.size()); ++i) EXPECT_EQ(rank_of(i, a), rank_of(i, b));
  }
}

TEST(ExactAp, Examples) {
  EXPECT_DOUBLE_EQ(exact_ap(scores({0.9, 0.8, 0.1, 0.0}, {0, 1})), 1.0);
  EXPECT_NEAR(exact_ap(scores({0.9, 0.7, 0.5}, {0, 2})), 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(exact_ap(scores({0.9, 0.7, 0.5, 0.3, 0.1}, {4})), 1.0 / 5.0, 1e-15);
}

TEST(ExactAp, NoPositives) { EXPECT_THROW(exact_ap(scores({0.1}, {})), Error); }

TEST(ExactAp, MatchesSortOracleOverAllPermutations) {
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<double> base(n);
    for (std::size_t i = 0; i < n; ++i) base[i] = 0.1 * static_cast<double>(i) - 0.25;
    for (unsigned mask = 1; mask < (1u << n); ++mask) {
      std::vector<Id> pos;
      std::vector<char> flag(n, 0);
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) {
          pos.push_back(static_cast<Id>(i));
          flag[i] = 1;
        }
      auto perm = base;
      std::sort(perm.begin(), perm.end());
      do {
        EXPECT_NEAR(exact_ap(scores(perm, pos)), brute_force_ap(perm, flag), 1e-12);
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
}

TEST(ExactAp, ReciprocalRankForSinglePositive) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + t % 12);
    for (auto& x : s) x = u(rng);
    const Id p = static_cast<Id>(rng() % s.size());
    const auto ss = scores(s, {p});
    EXPECT_NEAR(exact_ap(ss), 1.0 / static_cast<double>(rank_of(p, ss)), 1e-15);
  }
}

TEST(RecallAtK, Examples) {
  EXPECT_EQ(recall_at_k(scores({0.9, 0.1}, {0}), 1), 1);
  // positive ranked 7th of 10
  std::vector<double> s{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1};
  EXPECT_EQ(recall_at_k(scores(s, {6}), 5), 0);
  EXPECT_EQ(recall_at_k(scores(s, {6}), 10), 1);
  // five positives, best at rank 4
  EXPECT_EQ(recall_at_k(scores(s, {3, 5, 7, 8, 9}), 1), 0);
  EXPECT_EQ(recall_at_k(scores(s, {3, 5, 7, 8, 9}), 5), 1);
}

TEST(RecallAtK, TiesBreakByAscendingId) {
  EXPECT_EQ(recall_at_k(scores({0.5, 0.5}, {0}), 1), 1);
  EXPECT_EQ(recall_at_k(scores({0.5, 0.5}, {1}), 1), 0);
}

TEST(RecallAtK, MonotoneInK) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + t % 15);
    for (auto& x : s) x = u(rng);
    const auto ss = scores(s, {static_cast<Id>(rng() % s.size())});
    for (int k = 1; k < 16; ++k) EXPECT_LE(recall_at_k(ss, k), recall_at_k(ss, k + 1));
  }
}

TEST(ApAtK, Examples) {
  std::vector<double> s{1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4};
  EXPECT_DOUBLE_EQ(ap_at_k(scores(s, {0, 1, 2, 3, 4}), 5), 1.0);
  EXPECT_DOUBLE_EQ(ap_at_k(scores(s, {5, 6}), 5), 0.0);
  EXPECT_DOUBLE_EQ(ap_at_k(scores(s, {1, 3}), 5), 0.5);
}

TEST(Evaluate, PerfectRetrieval) {
  std::vector<VectorXd> v;
  for (int i = 0; i < 12; ++i) {
    VectorXd e = VectorXd::Zero(12);
    e[i] = 1;
    v.push_back(e);
  }
  const auto b = cocoslab::testing::pairwise_batch(v, v);
  for (Direction d : {Direction::i2t, Direction::t2i}) {
    const auto m = evaluate(b, d);
    EXPECT_DOUBLE_EQ(m.recall_at.at(1), 1.0);
    EXPECT_DOUBLE_EQ(m.recall_at.at(5), 1.0);
    EXPECT_DOUBLE_EQ(m.recall_at.at(10), 1.0);
    EXPECT_DOUBLE_EQ(m.rsum, 3.0);
    EXPECT_DOUBLE_EQ(m.map_at_5, 1.0);
    EXPECT_EQ(m.num_queries, 12u);
  }
}

TEST(Evaluate, SingleQueryCorpus) {
  const auto b = cocoslab::testing::pairwise_batch({vec({1, 0})}, {vec({0.6, 0.8})});
  const auto m = evaluate(b, Direction::i2t);
  EXPECT_DOUBLE_EQ(m.recall_at.at(1), 1.0);
  EXPECT_DOUBLE_EQ(m.average_recall, 1.0);
}

TEST(Evaluate, RandomEmbeddingsNearChance) {
  std::mt19937_64 rng(7);
  double r1 = 0.0, r10 = 0.0;
  const int reps = 10;
  for (int t = 0; t < reps; ++t) {
    const auto b = cocoslab::testing::random_pairwise(rng, 200, 16);
    const auto m = evaluate(b, Direction::i2t);
    r1 += m.recall_at.at(1) / reps;
    r10 += m.recall_at.at(10) / reps;
  }
  EXPECT_NEAR(r1, 1.0 / 200, 0.01);
  EXPECT_NEAR(r10, 10.0 / 200, 0.02);
}
