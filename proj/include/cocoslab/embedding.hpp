#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "cocoslab/types.hpp"

namespace cocoslab {

/// A point in the shared latent space, tagged with its modality and an opaque id.
template <typename Scalar = double>
class EmbeddingVector {
 public:
  EmbeddingVector(Vector<Scalar> values, Modality modality, Id id)
      : values_(std::move(values)), modality_(modality), id_(id) {
    if (values_.size() < 1) throw Error(Errc::dimension_mismatch, "embedding must have d >= 1");
    if (!values_.allFinite()) throw Error(Errc::invalid_argument, "embedding has non-finite values");
  }

  const Vector<Scalar>& values() const { return values_; }
  Modality modality() const { return modality_; }
  Id id() const { return id_; }
  Eigen::Index dim() const { return values_.size(); }

 private:
  Vector<Scalar> values_;
  Modality modality_;
  Id id_;
};

template <typename Scalar>
EmbeddingVector<Scalar> normalize(const EmbeddingVector<Scalar>& v) {
  const Scalar norm = v.values().norm();
  if (!(norm > Scalar(0))) throw Error(Errc::zero_vector, "cannot normalize a zero vector");
  return EmbeddingVector<Scalar>(v.values() / norm, v.modality(), v.id());
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.size() != b.size()) throw Error(Errc::dimension_mismatch, "cosine_similarity dimension mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > Scalar(0)) || !(nb > Scalar(0))) throw Error(Errc::zero_vector, "cosine_similarity of zero vector");
  const Scalar c = a.dot(b) / (na * nb);
  return std::clamp(c, Scalar(-1), Scalar(1));
}

template <typename Scalar>
Scalar cosine_similarity(const EmbeddingVector<Scalar>& a, const EmbeddingVector<Scalar>& b) {
  return cosine_similarity(a.values(), b.values());
}

/// Images and captions of one minibatch (or one evaluation split) plus the
/// image -> positive captions map. Images and captions are kept sorted by id.
template <typename Scalar = double>
class RetrievalBatch {
 public:
  RetrievalBatch(std::vector<EmbeddingVector<Scalar>> images, std::vector<EmbeddingVector<Scalar>> captions,
                 std::map<Id, std::vector<Id>> positive_map, Layout layout)
      : images_(std::move(images)),
        captions_(std::move(captions)),
        positive_map_(std::move(positive_map)),
        layout_(layout) {
    auto by_id = [](const auto& a, const auto& b) { return a.id() < b.id(); };
    std::sort(images_.begin(), images_.end(), by_id);
    std::sort(captions_.begin(), captions_.end(), by_id);
    validate();
  }

  const std::vector<EmbeddingVector<Scalar>>& images() const { return images_; }
  const std::vector<EmbeddingVector<Scalar>>& captions() const { return captions_; }
  const std::map<Id, std::vector<Id>>& positive_map() const { return positive_map_; }
  Layout layout() const { return layout_; }
  Eigen::Index dim() const { return dim_; }
  /// Positives per image: 1 for pairwise, k for grouped.
  std::size_t captions_per_image() const { return k_; }
  /// Total number of embeddings, |B|.
  std::size_t size() const { return images_.size() + captions_.size(); }

  const std::vector<EmbeddingVector<Scalar>>& queries(Direction d) const {
    return d == Direction::i2t ? images_ : captions_;
  }
  const std::vector<EmbeddingVector<Scalar>>& candidates(Direction d) const {
    return d == Direction::i2t ? captions_ : images_;
  }

  /// Index into images()/captions(), or -1 when absent.
  std::ptrdiff_t find(Modality m, Id id) const {
    const auto& list = m == Modality::image ? images_ : captions_;
    auto it = std::lower_bound(list.begin(), list.end(), id, [](const auto& e, Id v) { return e.id() < v; });
    if (it == list.end() || it->id() != id) return -1;
    return it - list.begin();
  }

  const EmbeddingVector<Scalar>& get(Modality m, Id id) const {
    const auto idx = find(m, id);
    if (idx < 0) throw Error(Errc::candidate_not_found, "id " + std::to_string(id) + " not in batch");
    return (m == Modality::image ? images_ : captions_)[static_cast<std::size_t>(idx)];
  }

  Id owner_of(Id caption_id) const {
    const auto idx = find(Modality::caption, caption_id);
    if (idx < 0) throw Error(Errc::candidate_not_found, "caption " + std::to_string(caption_id) + " not in batch");
    return owner_[static_cast<std::size_t>(idx)];
  }

  /// Ids of the positive candidates for a query, ascending.
  std::vector<Id> positives_of(Id query_id, Direction d) const {
    if (d == Direction::t2i) return {owner_of(query_id)};
    auto it = positive_map_.find(query_id);
    if (it == positive_map_.end()) throw Error(Errc::query_not_in_batch, "image " + std::to_string(query_id));
    std::vector<Id> out = it->second;
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  void validate() {
    if (images_.empty() || captions_.empty()) throw Error(Errc::invalid_batch, "batch needs images and captions");
    dim_ = images_.front().dim();
    for (const auto* list : {&images_, &captions_}) {
      for (std::size_t i = 0; i < list->size(); ++i) {
        if ((*list)[i].dim() != dim_) throw Error(Errc::dimension_mismatch, "embeddings differ in dimension");
        if (i > 0 && (*list)[i].id() == (*list)[i - 1].id()) throw Error(Errc::invalid_batch, "duplicate id");
      }
    }
    for (const auto& img : images_)
      if (img.modality() != Modality::image) throw Error(Errc::invalid_batch, "image list holds a caption");
    for (const auto& cap : captions_)
      if (cap.modality() != Modality::caption) throw Error(Errc::invalid_batch, "caption list holds an image");

    owner_.assign(captions_.size(), Id{-1});
    k_ = 0;
    for (const auto& img : images_) {
      auto it = positive_map_.find(img.id());
      if (it == positive_map_.end() || it->second.empty())
        throw Error(Errc::invalid_batch, "image " + std::to_string(img.id()) + " has no positives");
      if (k_ == 0) k_ = it->second.size();
      if (it->second.size() != k_) throw Error(Errc::invalid_batch, "unequal positive counts");
      for (Id cid : it->second) {
        const auto idx = find(Modality::caption, cid);
        if (idx < 0) throw Error(Errc::invalid_batch, "positive caption missing from batch");
        if (owner_[static_cast<std::size_t>(idx)] != -1) throw Error(Errc::invalid_batch, "caption has two owners");
        owner_[static_cast<std::size_t>(idx)] = img.id();
      }
    }
    if (positive_map_.size() != images_.size()) throw Error(Errc::invalid_batch, "positive map has unknown images");
    for (Id o : owner_)
      if (o == -1) throw Error(Errc::invalid_batch, "caption without an image");
    if (layout_ == Layout::pairwise && k_ != 1) throw Error(Errc::invalid_batch, "pairwise layout needs k = 1");
  }

  std::vector<EmbeddingVector<Scalar>> images_;
  std::vector<EmbeddingVector<Scalar>> captions_;
  std::map<Id, std::vector<Id>> positive_map_;
  Layout layout_;
  std::vector<Id> owner_;
  std::size_t k_ = 0;
  Eigen::Index dim_ = 0;
};

/// Similarity scores of one query against every opposite-modality candidate,
/// ordered by ascending candidate id.
template <typename Scalar = double>
class ScoreSet {
 public:
  ScoreSet(Id query_id, std::vector<Id> ids, Vector<Scalar> scores, std::vector<char> positive,
           Direction direction = Direction::i2t)
      : query_id_(query_id),
        direction_(direction),
        ids_(std::move(ids)),
        scores_(std::move(scores)),
        positive_(std::move(positive)) {
    if (static_cast<Eigen::Index>(ids_.size()) != scores_.size() || ids_.size() != positive_.size())
      throw Error(Errc::invalid_argument, "ScoreSet field sizes differ");
    for (std::size_t i = 1; i < ids_.size(); ++i)
      if (ids_[i - 1] >= ids_[i]) throw Error(Errc::invalid_argument, "ScoreSet ids must be strictly ascending");
    if (!scores_.allFinite()) throw Error(Errc::invalid_argument, "ScoreSet has non-finite score");
    for (char p : positive_) num_positives_ += p ? 1 : 0;
  }

  /// Builds from unordered (id, score) pairs and a list of positive ids.
  static ScoreSet from_pairs(Id query_id, std::vector<std::pair<Id, Scalar>> pairs, const std::vector<Id>& positive_ids,
                             Direction direction = Direction::i2t) {
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<Id> ids(pairs.size());
    Vector<Scalar> scores(static_cast<Eigen::Index>(pairs.size()));
    std::vector<char> pos(pairs.size(), 0);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      ids[i] = pairs[i].first;
      scores[static_cast<Eigen::Index>(i)] = pairs[i].second;
    }
    for (Id p : positive_ids) {
      auto it = std::lower_bound(ids.begin(), ids.end(), p);
      if (it == ids.end() || *it != p) throw Error(Errc::candidate_not_found, "positive id not among scores");
      pos[static_cast<std::size_t>(it - ids.begin())] = 1;
    }
    return ScoreSet(query_id, std::move(ids), std::move(scores), std::move(pos), direction);
  }

  Id query_id() const { return query_id_; }
  Direction direction() const { return direction_; }
  std::size_t size() const { return ids_.size(); }
  Id id(std::size_t i) const { return ids_[i]; }
  Scalar score(std::size_t i) const { return scores_[static_cast<Eigen::Index>(i)]; }
  bool is_positive(std::size_t i) const { return positive_[i] != 0; }
  const std::vector<Id>& ids() const { return ids_; }
  const Vector<Scalar>& scores() const { return scores_; }
  std::size_t num_positives() const { return num_positives_; }
  std::size_t num_negatives() const { return ids_.size() - num_positives_; }

  std::vector<Id> positive_ids() const { return select(true); }
  std::vector<Id> negative_ids() const { return select(false); }

  std::ptrdiff_t index_of(Id id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return -1;
    return it - ids_.begin();
  }

 private:
  std::vector<Id> select(bool positive) const {
    std::vector<Id> out;
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (is_positive(i) == positive) out.push_back(ids_[i]);
    return out;
  }

  Id query_id_;
  Direction direction_;
  std::vector<Id> ids_;
  Vector<Scalar> scores_;
  std::vector<char> positive_;
  std::size_t num_positives_ = 0;
};

namespace detail {

template <typename Scalar, typename ScoreFn>
ScoreSet<Scalar> build_score_set(const RetrievalBatch<Scalar>& batch, Id query_id, Direction d, ScoreFn&& score) {
  if (batch.find(query_modality(d), query_id) < 0)
    throw Error(Errc::query_not_in_batch, "query " + std::to_string(query_id) + " not in batch");
  const auto& cands = batch.candidates(d);
  std::vector<Id> ids(cands.size());
  Vector<Scalar> scores(static_cast<Eigen::Index>(cands.size()));
  std::vector<char> pos(cands.size(), 0);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    ids[i] = cands[i].id();
    scores[static_cast<Eigen::Index>(i)] = score(cands[i].values());
  }
  for (Id p : batch.positives_of(query_id, d)) {
    auto it = std::lower_bound(ids.begin(), ids.end(), p);
    pos[static_cast<std::size_t>(it - ids.begin())] = 1;
  }
  return ScoreSet<Scalar>(query_id, std::move(ids), std::move(scores), std::move(pos), d);
}

}  // namespace detail

/// Cosine scores of `query` against the opposite modality of `batch`.
template <typename Scalar>
ScoreSet<Scalar> score_set(const EmbeddingVector<Scalar>& query, const RetrievalBatch<Scalar>& batch, Direction d) {
  if (query.modality() != query_modality(d))
    throw Error(Errc::query_not_in_batch, "query modality does not match direction");
  if (query.dim() != batch.dim()) throw Error(Errc::dimension_mismatch, "query dimension differs from batch");
  return detail::build_score_set(batch, query.id(), d,
                                 [&](const Vector<Scalar>& v) { return cosine_similarity(query.values(), v); });
}

template <typename Scalar>
ScoreSet<Scalar> score_set(const RetrievalBatch<Scalar>& batch, Id query_id, Direction d) {
  return score_set(batch.get(query_modality(d), query_id), batch, d);
}

/// Plain dot-product scores of a free query vector `q` standing in for
/// `query_id`. Candidates are used as stored.
template <typename Scalar, typename Derived>
ScoreSet<Scalar> dot_score_set(const Eigen::MatrixBase<Derived>& q, const RetrievalBatch<Scalar>& batch, Id query_id,
                               Direction d) {
  if (q.size() != batch.dim()) throw Error(Errc::dimension_mismatch, "query dimension differs from batch");
  return detail::build_score_set(batch, query_id, d, [&](const Vector<Scalar>& v) { return q.dot(v); });
}

}  // namespace cocoslab
