#pragma once

#include <vector>

#include "cocoslab/losses.hpp"
#include "cocoslab/metrics.hpp"

namespace cocoslab {

/// Counts of contributing triplets for the hinge losses over one batch direction.
struct TripletCounts {
  std::vector<std::size_t> per_query;  // contributing triplets per query, in query-id order
  std::size_t c_batch = 0;             // sum over queries
  std::size_t c_zero = 0;              // queries with no contributing triplet
  double c_q = 0.0;                    // mean over all queries
  double c_q_contributing = 0.0;       // mean over queries with a nonzero count
};

struct NtxentCounts {
  std::vector<std::size_t> c_per_query;     // negatives with softmax weight > epsilon
  std::vector<double> w_neg_per_query;      // summed weight of those negatives
  std::vector<double> w_pos_per_query;      // 1 - softmax weight of the positive
  double c_qv_neg = 0.0;
  double w_qv_neg = 0.0;
  double w_qv_pos = 0.0;
};

struct SmoothApCounts {
  std::vector<double> per_query;
  std::size_t c_zero = 0;
  double c_q = 0.0;
  double c_q_contributing = 0.0;
};

namespace detail {

inline void summarize(TripletCounts& c) {
  std::size_t nonzero = 0;
  for (auto v : c.per_query) {
    c.c_batch += v;
    if (v == 0)
      ++c.c_zero;
    else
      ++nonzero;
  }
  c.c_q = c.per_query.empty() ? 0.0 : static_cast<double>(c.c_batch) / static_cast<double>(c.per_query.size());
  c.c_q_contributing = nonzero == 0 ? 0.0 : static_cast<double>(c.c_batch) / static_cast<double>(nonzero);
}

template <typename Scalar>
double mean_of(const std::vector<Scalar>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (auto x : v) s += static_cast<double>(x);
  return s / static_cast<double>(v.size());
}

}  // namespace detail

/// Queries whose hardest negative violates the margin (0 or 1 per query).
template <typename Scalar>
TripletCounts count_triplet_sh(const RetrievalBatch<Scalar>& batch, Direction d, const LossParams& p) {
  detail::require_layout(batch, Layout::pairwise);
  TripletCounts c;
  for (const auto& q : batch.queries(d)) {
    const auto s = score_set(q, batch, d);
    const auto pi = detail::require_single_positive(s);
    const auto ni = detail::hardest_negative(s);
    c.per_query.push_back(s.score(pi) - s.score(ni) < Scalar(p.alpha) ? 1 : 0);
  }
  detail::summarize(c);
  return c;
}

template <typename Scalar>
TripletCounts count_triplet(const RetrievalBatch<Scalar>& batch, Direction d, const LossParams& p) {
  detail::require_layout(batch, Layout::pairwise);
  TripletCounts c;
  for (const auto& q : batch.queries(d)) {
    const auto s = score_set(q, batch, d);
    const auto pi = detail::require_single_positive(s);
    std::size_t n = 0;
    for (std::size_t j = 0; j < s.size(); ++j)
      if (j != pi && s.score(pi) - s.score(j) < Scalar(p.alpha)) ++n;
    c.per_query.push_back(n);
  }
  detail::summarize(c);
  return c;
}

template <typename Scalar>
NtxentCounts count_ntxent(const RetrievalBatch<Scalar>& batch, Direction d, const LossParams& p, double epsilon) {
  detail::require_layout(batch, Layout::pairwise);
  NtxentCounts c;
  const Scalar tau = Scalar(p.tau_ntxent);
  for (const auto& q : batch.queries(d)) {
    const auto s = score_set(q, batch, d);
    const Vector<Scalar> prob = detail::softmax(s.scores(), tau);
    std::size_t n = 0;
    double w_neg = 0.0;
    double w_pos = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double w = static_cast<double>(prob[static_cast<Eigen::Index>(i)]);
      if (s.is_positive(i)) {
        w_pos = 1.0 - w;
      } else if (w > epsilon) {
        ++n;
        w_neg += w;
      }
    }
    c.c_per_query.push_back(n);
    c.w_neg_per_query.push_back(w_neg);
    c.w_pos_per_query.push_back(w_pos);
  }
  c.c_qv_neg = detail::mean_of(c.c_per_query);
  c.w_qv_neg = detail::mean_of(c.w_neg_per_query);
  c.w_qv_pos = detail::mean_of(c.w_pos_per_query);
  return c;
}

/// Per query: (1/|P|) sum over positives i of #{j != i : sim(D_ij) / R(i)^2 > epsilon},
/// with R the exact rank among all candidates.
template <typename Scalar>
SmoothApCounts count_smooth_ap(const RetrievalBatch<Scalar>& batch, Direction d, const LossParams& p,
                               double epsilon) {
  detail::require_layout(batch, Layout::grouped);
  SmoothApCounts c;
  const Scalar tau = Scalar(p.tau_smooth);
  double total = 0.0;
  std::size_t nonzero = 0;
  for (const auto& q : batch.queries(d)) {
    const auto s = score_set(q, batch, d);
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.is_positive(i)) continue;
      const double rank = static_cast<double>(rank_of(s.id(i), s));
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (j == i) continue;
        const double sim = static_cast<double>(detail::sigmoid_derivative(s.score(j) - s.score(i), tau));
        if (sim / (rank * rank) > epsilon) ++count;
      }
    }
    const double v = static_cast<double>(count) / static_cast<double>(s.num_positives());
    c.per_query.push_back(v);
    total += v;
    if (count == 0)
      ++c.c_zero;
    else
      ++nonzero;
  }
  c.c_q = c.per_query.empty() ? 0.0 : total / static_cast<double>(c.per_query.size());
  c.c_q_contributing = nonzero == 0 ? 0.0 : total / static_cast<double>(nonzero);
  return c;
}

}  // namespace cocoslab
