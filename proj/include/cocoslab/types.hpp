#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace cocoslab {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using VectorXd = Vector<double>;
using MatrixXd = Matrix<double>;

using Id = std::int64_t;

enum class Modality { image, caption };

/// Retrieval direction: image query against captions (i2t) or the reverse.
enum class Direction { i2t, t2i };

/// Pairwise: n image-caption pairs. Grouped: n images each with all k captions.
enum class Layout { pairwise, grouped };

enum class Errc {
  zero_vector,
  dimension_mismatch,
  query_not_in_batch,
  invalid_batch,
  wrong_positive_count,
  no_negatives,
  wrong_layout,
  no_positives,
  candidate_not_found,
  empty_corpus,
  empty_dataset,
  non_finite_function_value,
  invalid_config,
  no_identifiers,
  invalid_layout,
  layout_mismatch,
  diverged_loss,
  config_parse,
  io_failure,
  invalid_argument,
};

std::string_view to_string(Errc code);

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

std::string_view to_string(Modality m);
std::string_view to_string(Direction d);
std::string_view to_string(Layout l);

Modality parse_modality(std::string_view s);
Direction parse_direction(std::string_view s);
Layout parse_layout(std::string_view s);

inline Modality query_modality(Direction d) {
  return d == Direction::i2t ? Modality::image : Modality::caption;
}

inline Modality candidate_modality(Direction d) {
  return d == Direction::i2t ? Modality::caption : Modality::image;
}

}  // namespace cocoslab
