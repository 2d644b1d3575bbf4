#pragma once

#include <random>
#include <vector>

#include "cocoslab/embedding.hpp"

namespace cocoslab::testing {

inline VectorXd vec(std::initializer_list<double> v) {
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline VectorXd random_unit(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> n(0.0, 1.0);
  VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v[i] = n(rng);
  return v / v.norm();
}

/// Image i is paired with caption i.
inline RetrievalBatch<double> pairwise_batch(const std::vector<VectorXd>& images, const std::vector<VectorXd>& captions) {
  std::vector<EmbeddingVector<double>> im, cap;
  std::map<Id, std::vector<Id>> pos;
  for (std::size_t i = 0; i < images.size(); ++i) {
    im.emplace_back(images[i], Modality::image, static_cast<Id>(i));
    cap.emplace_back(captions[i], Modality::caption, static_cast<Id>(i));
    pos[static_cast<Id>(i)] = {static_cast<Id>(i)};
  }
  return RetrievalBatch<double>(std::move(im), std::move(cap), std::move(pos), Layout::pairwise);
}

/// Caption c belongs to image c / k.
inline RetrievalBatch<double> grouped_batch(const std::vector<VectorXd>& images, const std::vector<VectorXd>& captions,
                                            std::size_t k) {
  std::vector<EmbeddingVector<double>> im, cap;
  std::map<Id, std::vector<Id>> pos;
  for (std::size_t i = 0; i < images.size(); ++i) {
    im.emplace_back(images[i], Modality::image, static_cast<Id>(i));
    pos[static_cast<Id>(i)];
  }
  for (std::size_t c = 0; c < captions.size(); ++c) {
    cap.emplace_back(captions[c], Modality::caption, static_cast<Id>(c));
    pos[static_cast<Id>(c / k)].push_back(static_cast<Id>(c));
  }
  return RetrievalBatch<double>(std::move(im), std::move(cap), std::move(pos), Layout::grouped);
}

inline RetrievalBatch<double> random_pairwise(std::mt19937_64& rng, std::size_t n, Eigen::Index d) {
  std::vector<VectorXd> im, cap;
  for (std::size_t i = 0; i < n; ++i) {
    im.push_back(random_unit(rng, d));
    cap.push_back(random_unit(rng, d));
  }
  return pairwise_batch(im, cap);
}

inline RetrievalBatch<double> random_grouped(std::mt19937_64& rng, std::size_t n, std::size_t k, Eigen::Index d) {
  std::vector<VectorXd> im, cap;
  for (std::size_t i = 0; i < n; ++i) im.push_back(random_unit(rng, d));
  for (std::size_t c = 0; c < n * k; ++c) cap.push_back(random_unit(rng, d));
  return grouped_batch(im, cap, k);
}

/// Query 0 over candidates 0..n-1 with the listed scores; `positives` are ids.
inline ScoreSet<double> scores(const std::vector<double>& s, const std::vector<Id>& positives) {
  std::vector<std::pair<Id, double>> pairs;
  for (std::size_t i = 0; i < s.size(); ++i) pairs.emplace_back(static_cast<Id>(i), s[i]);
  return ScoreSet<double>::from_pairs(0, pairs, positives);
}

}  // namespace cocoslab::testing
