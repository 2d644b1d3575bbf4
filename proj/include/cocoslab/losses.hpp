#pragma once

#include <cmath>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "cocoslab/embedding.hpp"

namespace cocoslab {

enum class LossKind { triplet, triplet_sh, ntxent, smooth_ap };

std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);

/// Batch layout each loss trains and is analyzed on.
inline Layout layout_for(LossKind k) { return k == LossKind::smooth_ap ? Layout::grouped : Layout::pairwise; }

struct LossParams {
  double alpha = 0.2;        // triplet margin
  double tau_ntxent = 0.1;   // softmax temperature
  double tau_smooth = 0.01;  // sigmoid temperature of the rank relaxation

  void validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error(Errc::invalid_config, "alpha must be >= 0");
    if (!(tau_ntxent > 0.0)) throw Error(Errc::invalid_config, "tau_ntxent must be > 0");
    if (!(tau_smooth > 0.0)) throw Error(Errc::invalid_config, "tau_smooth must be > 0");
  }
};

/// One weighted piece of a query gradient. The direction it stands for is
/// v[neg_id] - v[pos_id], with an absent side contributing zero. For SmoothAP,
/// `neg_id` may name another positive (the second member of the pair).
template <typename Scalar>
struct GradientTerm {
  std::optional<Id> pos_id;
  std::optional<Id> neg_id;
  Scalar weight;
};

/// dL/dq of a single query's loss term, with its decomposition into candidate terms.
template <typename Scalar>
struct GradientReport {
  Id query_id = 0;
  Direction direction = Direction::i2t;
  Vector<Scalar> grad;
  std::vector<GradientTerm<Scalar>> terms;
};

namespace detail {

template <typename Scalar>
std::size_t require_single_positive(const ScoreSet<Scalar>& s) {
  if (s.num_positives() != 1) throw Error(Errc::wrong_positive_count, "expected exactly one positive");
  if (s.num_negatives() == 0) throw Error(Errc::no_negatives, "query has no negatives");
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.is_positive(i)) return i;
  return 0;
}

/// Highest-scoring negative; ties go to the lowest id.
template <typename Scalar>
std::size_t hardest_negative(const ScoreSet<Scalar>& s) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.is_positive(i)) continue;
    if (!best || s.score(i) > s.score(*best)) best = i;
  }
  return *best;
}

template <typename Scalar>
Scalar sigmoid(Scalar x, Scalar tau) {
  const Scalar z = x / tau;
  if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

/// Derivative of sigmoid(x; tau) with respect to x.
template <typename Scalar>
Scalar sigmoid_derivative(Scalar x, Scalar tau) {
  const Scalar e = std::exp(-std::abs(x / tau));
  return e / ((Scalar(1) + e) * (Scalar(1) + e)) / tau;
}

/// Softmax of scores / tau with the max-shift guard.
template <typename Scalar>
Vector<Scalar> softmax(const Vector<Scalar>& scores, Scalar tau) {
  const Vector<Scalar> z = scores / tau;
  const Scalar m = z.maxCoeff();
  Vector<Scalar> e = (z.array() - m).exp().matrix();
  return e / e.sum();
}

template <typename Scalar>
Scalar log_sum_exp(const Vector<Scalar>& scores, Scalar tau) {
  const Vector<Scalar> z = scores / tau;
  const Scalar m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

template <typename Scalar>
void require_layout(const RetrievalBatch<Scalar>& batch, Layout expected) {
  if (batch.layout() != expected)
    throw Error(Errc::wrong_layout, std::string("expected ") + std::string(to_string(expected)) + " layout");
}

template <typename Scalar>
void require_query_dim(const Vector<Scalar>& q, const RetrievalBatch<Scalar>& batch) {
  if (q.size() != batch.dim()) throw Error(Errc::dimension_mismatch, "query dimension differs from batch");
}

/// Smooth positive-set and full-set ranks of positive i, using D_ij = s_j - s_i.
template <typename Scalar>
std::pair<Scalar, Scalar> smooth_ranks(const ScoreSet<Scalar>& s, std::size_t i, Scalar tau) {
  Scalar rank_pos = 1;
  Scalar rank_neg = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j == i) continue;
    const Scalar g = sigmoid(s.score(j) - s.score(i), tau);
    if (s.is_positive(j))
      rank_pos += g;
    else
      rank_neg += g;
  }
  return {rank_pos, rank_pos + rank_neg};
}

template <typename Scalar>
Vector<Scalar> chain_to_query(const Vector<Scalar>& score_grad, const ScoreSet<Scalar>& s,
                              const RetrievalBatch<Scalar>& batch) {
  const Modality cm = candidate_modality(s.direction());
  Vector<Scalar> g = Vector<Scalar>::Zero(batch.dim());
  for (std::size_t c = 0; c < s.size(); ++c) {
    const Scalar w = score_grad[static_cast<Eigen::Index>(c)];
    if (w != Scalar(0)) g += w * batch.get(cm, s.id(c)).values();
  }
  return g;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Per-query loss values

template <typename Scalar>
Scalar triplet_sh_loss(const ScoreSet<Scalar>& s, const LossParams& p) {
  const auto pi = detail::require_single_positive(s);
  const auto ni = detail::hardest_negative(s);
  return std::max(Scalar(p.alpha) - s.score(pi) + s.score(ni), Scalar(0));
}

template <typename Scalar>
Scalar triplet_loss(const ScoreSet<Scalar>& s, const LossParams& p) {
  const auto pi = detail::require_single_positive(s);
  Scalar total = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j == pi) continue;
    total += std::max(Scalar(p.alpha) - s.score(pi) + s.score(j), Scalar(0));
  }
  return total;
}

/// -log softmax probability of the positive; the denominator runs over every
/// candidate in `s`, positive included.
template <typename Scalar>
Scalar ntxent_query_loss(const ScoreSet<Scalar>& s, const LossParams& p) {
  if (s.num_positives() != 1) throw Error(Errc::wrong_positive_count, "expected exactly one positive");
  std::size_t pi = 0;
  while (!s.is_positive(pi)) ++pi;
  const Scalar tau = Scalar(p.tau_ntxent);
  return detail::log_sum_exp(s.scores(), tau) - s.score(pi) / tau;
}

/// Smoothed average precision of the query; equals exact AP as tau -> 0.
template <typename Scalar>
Scalar smooth_ap_value(const ScoreSet<Scalar>& s, const LossParams& p) {
  if (s.num_positives() == 0) throw Error(Errc::no_positives, "smooth AP needs a positive");
  const Scalar tau = Scalar(p.tau_smooth);
  Scalar sum = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.is_positive(i)) continue;
    const auto [rank_pos, rank_all] = detail::smooth_ranks(s, i, tau);
    sum += rank_pos / rank_all;
  }
  return sum / Scalar(s.num_positives());
}

/// Loss of a single query term as it enters the batch objective.
template <typename Scalar>
Scalar query_loss(LossKind kind, const ScoreSet<Scalar>& s, const LossParams& p) {
  switch (kind) {
    case LossKind::triplet: return triplet_loss(s, p);
    case LossKind::triplet_sh: return triplet_sh_loss(s, p);
    case LossKind::ntxent: return ntxent_query_loss(s, p);
    case LossKind::smooth_ap: return Scalar(1) - smooth_ap_value(s, p);
  }
  return Scalar(0);
}

// ---------------------------------------------------------------------------
// Gradients of per-query losses with respect to each candidate score

template <typename Scalar>
Vector<Scalar> triplet_sh_score_grad(const ScoreSet<Scalar>& s, const LossParams& p) {
  const auto pi = detail::require_single_positive(s);
  const auto ni = detail::hardest_negative(s);
  Vector<Scalar> g = Vector<Scalar>::Zero(static_cast<Eigen::Index>(s.size()));
  if (s.score(pi) - s.score(ni) < Scalar(p.alpha)) {
    g[static_cast<Eigen::Index>(pi)] = -1;
    g[static_cast<Eigen::Index>(ni)] = 1;
  }
  return g;
}

template <typename Scalar>
Vector<Scalar> triplet_score_grad(const ScoreSet<Scalar>& s, const LossParams& p) {
  const auto pi = detail::require_single_positive(s);
  Vector<Scalar> g = Vector<Scalar>::Zero(static_cast<Eigen::Index>(s.size()));
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j == pi) continue;
    if (s.score(pi) - s.score(j) < Scalar(p.alpha)) {
      g[static_cast<Eigen::Index>(pi)] -= 1;
      g[static_cast<Eigen::Index>(j)] += 1;
    }
  }
  return g;
}

template <typename Scalar>
Vector<Scalar> ntxent_score_grad(const ScoreSet<Scalar>& s, const LossParams& p) {
  if (s.num_positives() != 1) throw Error(Errc::wrong_positive_count, "expected exactly one positive");
  const Scalar tau = Scalar(p.tau_ntxent);
  Vector<Scalar> g = detail::softmax(s.scores(), tau);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.is_positive(i)) g[static_cast<Eigen::Index>(i)] -= Scalar(1);
  return g / tau;
}

/// Gradient of 1 - smooth AP with respect to the scores.
template <typename Scalar>
Vector<Scalar> smooth_ap_score_grad(const ScoreSet<Scalar>& s, const LossParams& p) {
  if (s.num_positives() == 0) throw Error(Errc::no_positives, "smooth AP needs a positive");
  const Scalar tau = Scalar(p.tau_smooth);
  const Scalar inv_p = Scalar(1) / Scalar(s.num_positives());
  Vector<Scalar> g = Vector<Scalar>::Zero(static_cast<Eigen::Index>(s.size()));
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.is_positive(i)) continue;
    const auto [rank_pos, rank_all] = detail::smooth_ranks(s, i, tau);
    const Scalar inv_sq = Scalar(1) / (rank_all * rank_all);
    // d(rank_pos / rank_all) = (rank_all - rank_pos) d(rank_pos) / rank_all^2 - rank_pos d(rank_neg) / rank_all^2
    const Scalar coef_pos = (rank_all - rank_pos) * inv_sq;
    const Scalar coef_neg = -rank_pos * inv_sq;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j == i) continue;
      const Scalar d = detail::sigmoid_derivative(s.score(j) - s.score(i), tau);
      const Scalar c = (s.is_positive(j) ? coef_pos : coef_neg) * d * inv_p;
      // loss = 1 - AP, hence the sign flip
      g[static_cast<Eigen::Index>(j)] -= c;
      g[static_cast<Eigen::Index>(i)] += c;
    }
  }
  return g;
}

template <typename Scalar>
Vector<Scalar> query_score_grad(LossKind kind, const ScoreSet<Scalar>& s, const LossParams& p) {
  switch (kind) {
    case LossKind::triplet: return triplet_score_grad(s, p);
    case LossKind::triplet_sh: return triplet_sh_score_grad(s, p);
    case LossKind::ntxent: return ntxent_score_grad(s, p);
    case LossKind::smooth_ap: return smooth_ap_score_grad(s, p);
  }
  return {};
}

namespace detail {

/// Loss and score gradient of 1 - smooth AP in one pass, one exp per pair.
template <typename Scalar>
std::pair<Scalar, Vector<Scalar>> smooth_ap_fused(const ScoreSet<Scalar>& s, const LossParams& p) {
  if (s.num_positives() == 0) throw Error(Errc::no_positives, "smooth AP needs a positive");
  const Scalar tau = Scalar(p.tau_smooth);
  const Scalar inv_p = Scalar(1) / Scalar(s.num_positives());
  const auto n = static_cast<Eigen::Index>(s.size());
  Vector<Scalar> g = Vector<Scalar>::Zero(n);
  Vector<Scalar> sig(n);
  Vector<Scalar> dsig(n);
  Scalar ap = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!s.is_positive(static_cast<std::size_t>(i))) continue;
    Scalar rank_pos = 1;
    Scalar rank_neg = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const Scalar z = (s.score(static_cast<std::size_t>(j)) - s.score(static_cast<std::size_t>(i))) / tau;
      const Scalar e = std::exp(-std::abs(z));
      const Scalar inv = Scalar(1) / (Scalar(1) + e);
      sig[j] = z >= Scalar(0) ? inv : e * inv;
      dsig[j] = e * inv * inv / tau;
      if (s.is_positive(static_cast<std::size_t>(j)))
        rank_pos += sig[j];
      else
        rank_neg += sig[j];
    }
    const Scalar rank_all = rank_pos + rank_neg;
    ap += rank_pos / rank_all;
    const Scalar inv_sq = Scalar(1) / (rank_all * rank_all);
    const Scalar coef_pos = (rank_all - rank_pos) * inv_sq * inv_p;
    const Scalar coef_neg = -rank_pos * inv_sq * inv_p;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const Scalar c = (s.is_positive(static_cast<std::size_t>(j)) ? coef_pos : coef_neg) * dsig[j];
      g[j] -= c;
      g[i] += c;
    }
  }
  return {Scalar(1) - ap * inv_p, std::move(g)};
}

}  // namespace detail

/// query_loss and query_score_grad together.
template <typename Scalar>
std::pair<Scalar, Vector<Scalar>> query_loss_and_score_grad(LossKind kind, const ScoreSet<Scalar>& s,
                                                            const LossParams& p) {
  if (kind == LossKind::smooth_ap) return detail::smooth_ap_fused(s, p);
  return {query_loss(kind, s, p), query_score_grad(kind, s, p)};
}

// ---------------------------------------------------------------------------
// Query gradients in closed form. All reports hold the loss descent gradient
// dL/dq, for dot-product scores against the stored candidates.

template <typename Scalar>
GradientReport<Scalar> triplet_sh_grad(const Vector<Scalar>& q, const ScoreSet<Scalar>& s,
                                       const RetrievalBatch<Scalar>& batch, const LossParams& p) {
  detail::require_query_dim(q, batch);
  const auto pi = detail::require_single_positive(s);
  const auto ni = detail::hardest_negative(s);
  GradientReport<Scalar> r{s.query_id(), s.direction(), Vector<Scalar>::Zero(batch.dim()), {}};
  if (s.score(pi) - s.score(ni) < Scalar(p.alpha)) {
    const Modality cm = candidate_modality(s.direction());
    r.grad = batch.get(cm, s.id(ni)).values() - batch.get(cm, s.id(pi)).values();
    r.terms.push_back({s.id(pi), s.id(ni), Scalar(1)});
  }
  return r;
}

template <typename Scalar>
GradientReport<Scalar> triplet_grad(const Vector<Scalar>& q, const ScoreSet<Scalar>& s,
                                    const RetrievalBatch<Scalar>& batch, const LossParams& p) {
  detail::require_query_dim(q, batch);
  const auto pi = detail::require_single_positive(s);
  const Modality cm = candidate_modality(s.direction());
  const Vector<Scalar>& v_pos = batch.get(cm, s.id(pi)).values();
  GradientReport<Scalar> r{s.query_id(), s.direction(), Vector<Scalar>::Zero(batch.dim()), {}};
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j == pi || !(s.score(pi) - s.score(j) < Scalar(p.alpha))) continue;
    r.grad += batch.get(cm, s.id(j)).values() - v_pos;
    r.terms.push_back({s.id(pi), s.id(j), Scalar(1)});
  }
  return r;
}

/// Positive term weight (1 - p+)/tau on -v+, and p-/tau on each +v-.
template <typename Scalar>
GradientReport<Scalar> ntxent_grad(const Vector<Scalar>& q, const ScoreSet<Scalar>& s,
                                   const RetrievalBatch<Scalar>& batch, const LossParams& p) {
  detail::require_query_dim(q, batch);
  if (s.num_positives() != 1) throw Error(Errc::wrong_positive_count, "expected exactly one positive");
  const Scalar tau = Scalar(p.tau_ntxent);
  const Vector<Scalar> prob = detail::softmax(s.scores(), tau);
  GradientReport<Scalar> r{s.query_id(), s.direction(), Vector<Scalar>::Zero(batch.dim()), {}};
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Scalar pr = prob[static_cast<Eigen::Index>(i)];
    if (s.is_positive(i))
      r.terms.push_back({s.id(i), std::nullopt, (Scalar(1) - pr) / tau});
    else
      r.terms.push_back({std::nullopt, s.id(i), pr / tau});
  }
  r.grad = detail::chain_to_query(ntxent_score_grad(s, p), s, batch);
  return r;
}

/// Gradient of 1 - smooth AP. Pair (i, j) with i positive carries
///   rank_pos(i) sim(D_ij) / (|P| rank_all(i)^2)                   for j negative
///   -(rank_all(i) - rank_pos(i)) sim(D_ij) / (|P| rank_all(i)^2)  for j positive
/// on v_j - v_i, where ranks are the smooth ranks and sim is the sigmoid derivative.
template <typename Scalar>
GradientReport<Scalar> smooth_ap_grad(const Vector<Scalar>& q, const ScoreSet<Scalar>& s,
                                      const RetrievalBatch<Scalar>& batch, const LossParams& p) {
  detail::require_query_dim(q, batch);
  if (s.num_positives() == 0) throw Error(Errc::no_positives, "smooth AP needs a positive");
  const Scalar tau = Scalar(p.tau_smooth);
  const Scalar inv_p = Scalar(1) / Scalar(s.num_positives());
  GradientReport<Scalar> r{s.query_id(), s.direction(), Vector<Scalar>::Zero(batch.dim()), {}};
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.is_positive(i)) continue;
    const auto [rank_pos, rank_all] = detail::smooth_ranks(s, i, tau);
    const Scalar inv_sq = Scalar(1) / (rank_all * rank_all);
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j == i) continue;
      const Scalar sim = detail::sigmoid_derivative(s.score(j) - s.score(i), tau);
      const Scalar w = s.is_positive(j) ? -(rank_all - rank_pos) * sim * inv_sq * inv_p : rank_pos * sim * inv_sq * inv_p;
      if (w != Scalar(0)) r.terms.push_back({s.id(i), s.id(j), w});
    }
  }
  r.grad = detail::chain_to_query(smooth_ap_score_grad(s, p), s, batch);
  return r;
}

template <typename Scalar>
GradientReport<Scalar> query_grad(LossKind kind, const Vector<Scalar>& q, const ScoreSet<Scalar>& s,
                                  const RetrievalBatch<Scalar>& batch, const LossParams& p) {
  switch (kind) {
    case LossKind::triplet: return triplet_grad(q, s, batch, p);
    case LossKind::triplet_sh: return triplet_sh_grad(q, s, batch, p);
    case LossKind::ntxent: return ntxent_grad(q, s, batch, p);
    case LossKind::smooth_ap: return smooth_ap_grad(q, s, batch, p);
  }
  return {};
}

/// Sum over terms of weight * (v_neg - v_pos).
template <typename Scalar>
Vector<Scalar> reconstruct(const GradientReport<Scalar>& r, const RetrievalBatch<Scalar>& batch) {
  const Modality cm = candidate_modality(r.direction);
  Vector<Scalar> g = Vector<Scalar>::Zero(batch.dim());
  for (const auto& t : r.terms) {
    if (t.neg_id) g += t.weight * batch.get(cm, *t.neg_id).values();
    if (t.pos_id) g -= t.weight * batch.get(cm, *t.pos_id).values();
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch losses

/// Mean over all 2n queries (both directions) of the per-query NT-Xent term.
template <typename Scalar>
Scalar ntxent_loss(const RetrievalBatch<Scalar>& batch, const LossParams& p) {
  detail::require_layout(batch, Layout::pairwise);
  Scalar total = 0;
  for (Direction d : {Direction::i2t, Direction::t2i})
    for (const auto& q : batch.queries(d)) total += ntxent_query_loss(score_set(q, batch, d), p);
  return total / Scalar(batch.size());
}

/// Mean over the queries of one direction of 1 - smooth AP.
template <typename Scalar>
Scalar smooth_ap_batch_loss(const RetrievalBatch<Scalar>& batch, Direction d, const LossParams& p) {
  detail::require_layout(batch, Layout::grouped);
  Scalar total = 0;
  const auto& queries = batch.queries(d);
  for (const auto& q : queries) total += Scalar(1) - smooth_ap_value(score_set(q, batch, d), p);
  return total / Scalar(queries.size());
}

/// The scalar a trainer minimizes on one batch: triplet variants sum over all
/// queries of both directions; NT-Xent and SmoothAP average over |B|.
template <typename Scalar>
Scalar batch_objective(LossKind kind, const RetrievalBatch<Scalar>& batch, const LossParams& p) {
  detail::require_layout(batch, layout_for(kind));
  Scalar total = 0;
  for (Direction d : {Direction::i2t, Direction::t2i})
    for (const auto& q : batch.queries(d)) total += query_loss(kind, score_set(q, batch, d), p);
  if (kind == LossKind::ntxent || kind == LossKind::smooth_ap) total /= Scalar(batch.size());
  return total;
}

}  // namespace cocoslab
