#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "cocoslab/gradcheck.hpp"
#include "support.hpp"

using namespace cocoslab;
using cocoslab::testing::vec;

TEST(FiniteDifference, LinearFunctionIsExact) {
  const VectorXd v = vec({0.3, -1.2, 2.5});
  const auto g = finite_difference_grad([&](const VectorXd& x) { return v.dot(x); }, vec({1, 2, 3}));
  EXPECT_LE((g - v).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(FiniteDifference, ConstantIsZero) {
  const auto g = finite_difference_grad([](const VectorXd&) { return 4.0; }, vec({1, 2}));
  EXPECT_EQ(g, VectorXd::Zero(2));
}

TEST(FiniteDifference, NonFiniteValueRejected) {
  try {
    finite_difference_grad([](const VectorXd& x) { return std::log(x[0]); }, vec({0.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::non_finite_function_value);
  }
}

TEST(CompareGradients, RelativeErrorDenominator) {
  const auto e = compare_gradients(vec({1.0, 2.0}), vec({1.0, 2.2}));
  EXPECT_NEAR(e.abs, 0.2, 1e-12);
  EXPECT_NEAR(e.rel, 0.2 / 2.2, 1e-12);
  EXPECT_EQ(e.worst_index, 1);
  const auto z = compare_gradients(vec({0.0}), vec({1e-12}));
  EXPECT_NEAR(z.rel, 1e-4, 1e-12);
}

TEST(GradCheck, EveryLossPassesAtDefaults) {
  GradCheckOptions opts;
  for (LossKind kind : {LossKind::triplet, LossKind::triplet_sh, LossKind::ntxent, LossKind::smooth_ap}) {
    for (Eigen::Index d : {2, 8, 16}) {
      const auto r = check(kind, random_instances(kind, d), opts);
      EXPECT_TRUE(r.pass) << to_string(kind) << " d=" << d << " rel " << r.max_rel_error << " " << r.failure;
      EXPECT_EQ(r.trials, 100u);
      EXPECT_LT(r.skipped, 10u);
    }
  }
}

TEST(GradCheck, SmoothApRandomInstanceDirectly) {
  std::mt19937_64 rng(9);
  const auto gen = random_instances(LossKind::smooth_ap, 8, 6);
  const LossParams p;
  for (int t = 0; t < 20; ++t) {
    const auto inst = gen(rng);
    const auto analytic =
        smooth_ap_grad(inst.query, dot_score_set(inst.query, inst.batch, inst.query_id, inst.direction), inst.batch, p)
            .grad;
    const auto numeric = finite_difference_grad(
        [&](const VectorXd& q) {
          return query_loss(LossKind::smooth_ap, dot_score_set(q, inst.batch, inst.query_id, inst.direction), p);
        },
        inst.query);
    // saturated sigmoids leave gradients near 1e-11, where the stencil's roundoff dominates
    const auto err = compare_gradients(analytic, numeric);
    if (err.abs > 1e-8) EXPECT_LT(err.rel, 1e-5) << "trial " << t;
  }
}

TEST(GradCheck, HingeBoundaryIsSkipped) {
  // q . v_pos - q . v_neg == alpha exactly
  const auto batch = cocoslab::testing::pairwise_batch({vec({1, 0}), vec({0, 1})}, {vec({1, 0}), vec({0, 1})});
  const InstanceGenerator at_kink = [&](std::mt19937_64&) {
    return GradCheckInstance{batch, 0, Direction::i2t, vec({0.6, 0.4})};
  };
  GradCheckOptions opts;
  opts.trials = 5;
  for (LossKind kind : {LossKind::triplet, LossKind::triplet_sh}) {
    const auto r = check(kind, at_kink, opts);
    EXPECT_EQ(r.skipped, 5u);
    EXPECT_TRUE(r.pass);
  }
}

TEST(GradCheck, TinyTemperatureReportedNotThrown) {
  GradCheckOptions opts;
  opts.params.tau_smooth = 1e-8;
  opts.trials = 20;
  GradCheckResult r;
  EXPECT_NO_THROW(r = check(LossKind::smooth_ap, random_instances(LossKind::smooth_ap, 8), opts));
  EXPECT_EQ(r.trials, 20u);
}

TEST(GradCheck, FailureIsReported) {
  // a generator whose batch lacks the query makes every instance throw
  const auto batch = cocoslab::testing::pairwise_batch({vec({1, 0})}, {vec({1, 0})});
  const InstanceGenerator broken = [&](std::mt19937_64&) {
    return GradCheckInstance{batch, 42, Direction::i2t, vec({0.6, 0.4})};
  };
  GradCheckOptions opts;
  opts.trials = 3;
  const auto r = check(LossKind::ntxent, broken, opts);
  EXPECT_FALSE(r.pass);
  EXPECT_FALSE(r.failure.empty());
}

TEST(GradCheck, SuiteRunsQuickly) {
  const auto start = std::chrono::steady_clock::now();
  const auto entries = run_gradcheck_suite(GradCheckOptions{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(entries.size(), 12u);
  for (const auto& e : entries) EXPECT_TRUE(e.result.pass);
  EXPECT_LT(secs, 10.0);
}
