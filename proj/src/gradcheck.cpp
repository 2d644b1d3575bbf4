#include "cocoslab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace cocoslab {

VectorXd finite_difference_grad(const std::function<double(const VectorXd&)>& f, const VectorXd& x, double h) {
  if (!(h > 0.0)) throw Error(Errc::invalid_argument, "finite difference step must be > 0");
  VectorXd g(x.size());
  VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw Error(Errc::non_finite_function_value, "function not finite near coordinate " + std::to_string(i));
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

GradientError compare_gradients(const VectorXd& analytic, const VectorXd& numeric) {
  GradientError e;
  const VectorXd diff = (analytic - numeric).cwiseAbs();
  e.abs = diff.maxCoeff(&e.worst_index);
  const double denom = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
  e.rel = e.abs / denom;
  return e;
}

namespace {

VectorXd random_unit(std::mt19937_64& rng, Eigen::Index dim) {
  std::normal_distribution<double> normal;
  VectorXd v(dim);
  do {
    for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal(rng);
  } while (v.norm() < 1e-6);
  return v / v.norm();
}

std::size_t uniform_size(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool near_hinge_kink(LossKind kind, const ScoreSet<double>& s, const LossParams& p, double margin) {
  if (kind != LossKind::triplet && kind != LossKind::triplet_sh) return false;
  std::size_t pi = 0;
  while (!s.is_positive(pi)) ++pi;
  std::vector<double> negatives;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (j != pi) negatives.push_back(s.score(j));
  std::sort(negatives.begin(), negatives.end(), std::greater<>());
  const auto at_boundary = [&](double neg) { return std::abs(s.score(pi) - neg - p.alpha) <= margin; };
  if (kind == LossKind::triplet) return std::any_of(negatives.begin(), negatives.end(), at_boundary);
  // the hardest negative must also be unambiguous under the perturbation
  if (negatives.size() > 1 && negatives[0] - negatives[1] <= 2.0 * margin) return true;
  return at_boundary(negatives[0]);
}

}  // namespace

InstanceGenerator random_instances(LossKind kind, Eigen::Index dim, std::size_t max_candidates) {
  if (dim < 1 || max_candidates < 2) throw Error(Errc::invalid_argument, "need dim >= 1 and >= 2 candidates");
  return [=](std::mt19937_64& rng) {
    const Direction dir = uniform_size(rng, 0, 1) == 0 ? Direction::i2t : Direction::t2i;
    std::size_t n = 0;
    std::size_t k = 1;
    if (layout_for(kind) == Layout::pairwise) {
      n = uniform_size(rng, 2, max_candidates);
    } else {
      k = uniform_size(rng, 1, 3);
      const std::size_t max_n = dir == Direction::i2t ? std::max<std::size_t>(1, max_candidates / k) : max_candidates;
      n = uniform_size(rng, std::min<std::size_t>(2, max_n), std::min<std::size_t>(max_n, 4));
    }
    std::vector<EmbeddingVector<double>> images;
    std::vector<EmbeddingVector<double>> captions;
    std::map<Id, std::vector<Id>> positives;
    for (std::size_t i = 0; i < n; ++i) {
      const Id img = static_cast<Id>(i);
      images.emplace_back(random_unit(rng, dim), Modality::image, img);
      for (std::size_t c = 0; c < k; ++c) {
        const Id cap = static_cast<Id>(i * k + c);
        captions.emplace_back(random_unit(rng, dim), Modality::caption, cap);
        positives[img].push_back(cap);
      }
    }
    RetrievalBatch<double> batch(std::move(images), std::move(captions), std::move(positives), layout_for(kind));
    const auto& queries = batch.queries(dir);
    const auto& pick = queries[uniform_size(rng, 0, queries.size() - 1)];
    const double scale = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    VectorXd q = scale * random_unit(rng, dim);
    return GradCheckInstance{std::move(batch), pick.id(), dir, std::move(q)};
  };
}

GradCheckResult check(LossKind kind, const InstanceGenerator& generator, const GradCheckOptions& opts) {
  if (opts.trials < 1) throw Error(Errc::invalid_argument, "trials must be >= 1");
  GradCheckResult result;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t t = 0; t < opts.trials; ++t) {
    ++result.trials;
    try {
      const GradCheckInstance inst = generator(rng);
      const auto s = dot_score_set(inst.query, inst.batch, inst.query_id, inst.direction);
      if (near_hinge_kink(kind, s, opts.params, 10.0 * opts.step)) {
        ++result.skipped;
        continue;
      }
      const VectorXd analytic = query_grad(kind, inst.query, s, inst.batch, opts.params).grad;
      const auto f = [&](const VectorXd& x) {
        return query_loss(kind, dot_score_set(x, inst.batch, inst.query_id, inst.direction), opts.params);
      };
      const VectorXd numeric = finite_difference_grad(f, inst.query, opts.step);
      const GradientError e = compare_gradients(analytic, numeric);
      if (e.abs > result.max_abs_error) result.max_abs_error = e.abs;
      if (e.abs > opts.abs_floor && e.rel > result.max_rel_error) {
        result.max_rel_error = e.rel;
        result.worst_index = e.worst_index;
        result.worst_trial = t;
      }
    } catch (const Error& err) {
      result.failure = err.what();
      result.pass = false;
      return result;
    }
  }
  result.pass = result.max_rel_error <= opts.tolerance;
  return result;
}

std::vector<GradCheckSuiteEntry> run_gradcheck_suite(const GradCheckOptions& opts) {
  std::vector<GradCheckSuiteEntry> out;
  for (LossKind kind : {LossKind::triplet, LossKind::triplet_sh, LossKind::ntxent, LossKind::smooth_ap}) {
    for (Eigen::Index dim : {2, 8, 16}) {
      GradCheckOptions o = opts;
      o.seed = opts.seed + static_cast<std::uint64_t>(dim) * 1000 + static_cast<std::uint64_t>(kind);
      out.push_back({kind, dim, check(kind, random_instances(kind, dim), o)});
    }
  }
  return out;
}

}  // namespace cocoslab
