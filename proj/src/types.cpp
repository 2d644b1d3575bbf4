#include "cocoslab/types.hpp"

#include "cocoslab/losses.hpp"

namespace cocoslab {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::zero_vector: return "ZeroVector";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::query_not_in_batch: return "QueryNotInBatch";
    case Errc::invalid_batch: return "InvalidBatch";
    case Errc::wrong_positive_count: return "WrongPositiveCount";
    case Errc::no_negatives: return "NoNegatives";
    case Errc::wrong_layout: return "WrongLayout";
    case Errc::no_positives: return "NoPositives";
    case Errc::candidate_not_found: return "CandidateNotFound";
    case Errc::empty_corpus: return "EmptyCorpus";
    case Errc::empty_dataset: return "EmptyDataset";
    case Errc::non_finite_function_value: return "NonFiniteFunctionValue";
    case Errc::invalid_config: return "InvalidConfig";
    case Errc::no_identifiers: return "NoIdentifiers";
    case Errc::invalid_layout: return "InvalidLayout";
    case Errc::layout_mismatch: return "LayoutMismatch";
    case Errc::diverged_loss: return "DivergedLoss";
    case Errc::config_parse: return "ConfigParse";
    case Errc::io_failure: return "IoFailure";
    case Errc::invalid_argument: return "InvalidArgument";
  }
  return "Unknown";
}

std::string_view to_string(Modality m) { return m == Modality::image ? "image" : "caption"; }
std::string_view to_string(Direction d) { return d == Direction::i2t ? "i2t" : "t2i"; }
std::string_view to_string(Layout l) { return l == Layout::pairwise ? "pairwise" : "grouped"; }

Modality parse_modality(std::string_view s) {
  if (s == "image") return Modality::image;
  if (s == "caption") return Modality::caption;
  throw Error(Errc::invalid_argument, "unknown modality '" + std::string(s) + "'");
}

Direction parse_direction(std::string_view s) {
  if (s == "i2t") return Direction::i2t;
  if (s == "t2i") return Direction::t2i;
  throw Error(Errc::invalid_argument, "unknown direction '" + std::string(s) + "'");
}

Layout parse_layout(std::string_view s) {
  if (s == "pairwise") return Layout::pairwise;
  if (s == "grouped") return Layout::grouped;
  throw Error(Errc::invalid_argument, "unknown layout '" + std::string(s) + "'");
}

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::triplet: return "triplet";
    case LossKind::triplet_sh: return "triplet_sh";
    case LossKind::ntxent: return "ntxent";
    case LossKind::smooth_ap: return "smooth_ap";
  }
  return "unknown";
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "triplet") return LossKind::triplet;
  if (s == "triplet_sh") return LossKind::triplet_sh;
  if (s == "ntxent") return LossKind::ntxent;
  if (s == "smooth_ap") return LossKind::smooth_ap;
  throw Error(Errc::invalid_argument, "unknown loss '" + std::string(s) + "'");
}

}  // namespace cocoslab
