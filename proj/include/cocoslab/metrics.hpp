#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <vector>

#include "cocoslab/embedding.hpp"

namespace cocoslab {

/// Fractions in [0, 1]; callers scale to percent when reporting.
struct RetrievalMetrics {
  Direction direction = Direction::i2t;
  std::map<int, double> recall_at;
  double map_at_5 = 0.0;
  /// R@1 + R@5 + R@10 for this direction.
  double rsum = 0.0;
  /// Mean of R@1, R@5, R@10.
  double average_recall = 0.0;
  std::size_t num_queries = 0;
};

/// 1 + number of candidates scoring strictly higher than `id`.
template <typename Scalar>
std::size_t rank_of(Id id, const ScoreSet<Scalar>& s) {
  const auto idx = s.index_of(id);
  if (idx < 0) throw Error(Errc::candidate_not_found, "candidate " + std::to_string(id) + " not in score set");
  const Scalar si = s.score(static_cast<std::size_t>(idx));
  std::size_t rank = 1;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (static_cast<std::ptrdiff_t>(j) != idx && si - s.score(j) < Scalar(0)) ++rank;
  return rank;
}

/// Average precision with the strict-inequality rank function.
template <typename Scalar>
double exact_ap(const ScoreSet<Scalar>& s) {
  if (s.num_positives() == 0) throw Error(Errc::no_positives, "AP needs a positive");
  double sum = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!s.is_positive(i)) continue;
    std::size_t rank_pos = 1;
    std::size_t rank_all = 1;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (j == i || !(s.score(i) - s.score(j) < Scalar(0))) continue;
      ++rank_all;
      if (s.is_positive(j)) ++rank_pos;
    }
    sum += static_cast<double>(rank_pos) / static_cast<double>(rank_all);
  }
  return sum / static_cast<double>(s.num_positives());
}

/// Candidate indices sorted by descending score, ties by ascending id.
template <typename Scalar>
std::vector<std::size_t> ranked_order(const ScoreSet<Scalar>& s) {
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // ids ascend with index, so a stable sort on score alone breaks ties by id
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s.score(a) > s.score(b); });
  return order;
}

template <typename Scalar>
int recall_at_k(const ScoreSet<Scalar>& s, int k) {
  if (k < 1) throw Error(Errc::invalid_argument, "k must be >= 1");
  if (s.num_positives() == 0) throw Error(Errc::no_positives, "recall needs a positive");
  const auto order = ranked_order(s);
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  for (std::size_t r = 0; r < top; ++r)
    if (s.is_positive(order[r])) return 1;
  return 0;
}

/// AP truncated at k: sum of precision at each positive inside the top-k list,
/// divided by min(|P|, k).
template <typename Scalar>
double ap_at_k(const ScoreSet<Scalar>& s, int k) {
  if (k < 1) throw Error(Errc::invalid_argument, "k must be >= 1");
  if (s.num_positives() == 0) throw Error(Errc::no_positives, "AP needs a positive");
  const auto order = ranked_order(s);
  const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < top; ++r) {
    if (!s.is_positive(order[r])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(std::min<std::size_t>(s.num_positives(), static_cast<std::size_t>(k)));
}

/// Full-corpus retrieval metrics for one direction. Every query is ranked
/// against every candidate of the other modality in `corpus`.
template <typename Scalar>
RetrievalMetrics evaluate(const RetrievalBatch<Scalar>& corpus, Direction d) {
  const auto& queries = corpus.queries(d);
  if (queries.empty()) throw Error(Errc::empty_corpus, "no queries");
  RetrievalMetrics m;
  m.direction = d;
  m.num_queries = queries.size();
  const std::vector<int> ks{1, 5, 10};
  for (int k : ks) m.recall_at[k] = 0.0;
  for (const auto& q : queries) {
    const auto s = score_set(q, corpus, d);
    for (int k : ks) m.recall_at[k] += recall_at_k(s, k);
    m.map_at_5 += ap_at_k(s, 5);
  }
  const double n = static_cast<double>(queries.size());
  for (int k : ks) m.recall_at[k] /= n;
  m.map_at_5 /= n;
  m.rsum = m.recall_at[1] + m.recall_at[5] + m.recall_at[10];
  m.average_recall = m.rsum / 3.0;
  return m;
}

}  // namespace cocoslab
