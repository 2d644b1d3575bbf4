#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cocoslab/losses.hpp"

namespace cocoslab {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
VectorXd finite_difference_grad(const std::function<double(const VectorXd&)>& f, const VectorXd& x,
                                double h = 1e-5);

/// Error of one analytic gradient against its numeric counterpart. The relative
/// error is ||a - n||_inf / max(||a||_inf, ||n||_inf, 1e-8).
struct GradientError {
  double rel = 0.0;
  double abs = 0.0;
  Eigen::Index worst_index = -1;
};

GradientError compare_gradients(const VectorXd& analytic, const VectorXd& numeric);

struct GradCheckResult {
  /// Worst relative error among instances whose absolute error exceeds the floor.
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  Eigen::Index worst_index = -1;
  std::size_t worst_trial = 0;
  std::size_t trials = 0;
  std::size_t skipped = 0;
  bool pass = true;
  /// Set when an instance threw instead of producing a gradient.
  std::string failure;
};

struct GradCheckInstance {
  RetrievalBatch<double> batch;
  Id query_id;
  Direction direction;
  VectorXd query;
};

using InstanceGenerator = std::function<GradCheckInstance(std::mt19937_64&)>;

/// Random unit-norm candidates of dimension `dim` in the layout `kind` trains on,
/// with at most `max_candidates` candidates per query and a free query vector.
InstanceGenerator random_instances(LossKind kind, Eigen::Index dim, std::size_t max_candidates = 12);

struct GradCheckOptions {
  double tolerance = 1e-5;
  double step = 1e-5;
  double abs_floor = 1e-8;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  LossParams params;
};

/// Compares the closed-form query gradient of `kind` with finite differences of
/// the per-query loss on seeded random instances. Hinge instances within 10h of
/// a kink are skipped and counted.
GradCheckResult check(LossKind kind, const InstanceGenerator& generator, const GradCheckOptions& opts);

struct GradCheckSuiteEntry {
  LossKind kind;
  Eigen::Index dim;
  GradCheckResult result;
};

/// All four losses over d in {2, 8, 16}.
std::vector<GradCheckSuiteEntry> run_gradcheck_suite(const GradCheckOptions& opts);

}  // namespace cocoslab
