#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "cocoslab/embedding.hpp"
#include "cocoslab/text_io.hpp"

namespace cocoslab {

/// Vector-level stand-in for overlaying t digit images on the picture and
/// appending their labels to every caption: t symbols drawn per tuple from a
/// pool of `pool_size`, written as a scaled multi-hot block shared by the
/// tuple's image and captions.
struct IdentifierInjection {
  bool enabled = false;
  std::size_t count = 3;
  std::size_t pool_size = 10;
  double scale = 1.0;
};

struct SynthConfig {
  std::size_t num_tuples = 2000;
  std::size_t captions_per_image = 5;
  std::size_t core_dim = 8;
  std::size_t nuisance_dim = 24;
  double noise = 0.5;
  IdentifierInjection identifiers;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  double test_fraction = 0.1;

  std::size_t latent_dim() const {
    return core_dim + nuisance_dim + (identifiers.enabled ? identifiers.pool_size : 0);
  }
  void validate() const;
};

/// Raw latents of one split, stored column-wise. Caption column c belongs to
/// image column c / k.
struct SynthSplit {
  MatrixXd images;
  MatrixXd captions;
  std::vector<Id> tuple_ids;
  std::size_t captions_per_image = 1;

  std::size_t num_images() const { return static_cast<std::size_t>(images.cols()); }
  std::size_t num_captions() const { return static_cast<std::size_t>(captions.cols()); }
  std::size_t owner(std::size_t caption_col) const { return caption_col / captions_per_image; }
};

struct SynthDataset {
  SynthConfig config;
  SynthSplit train;
  SynthSplit val;
  SynthSplit test;
  bool identifiers_stripped = false;

  /// First row of the identifier block.
  std::size_t identifier_offset() const { return config.core_dim + config.nuisance_dim; }
};

/// Image latent = z0 + image nuisance + identifiers; caption i = z0 + z'_i + identifiers.
/// z0 ~ N(0, I); both nuisance blocks ~ sigma N(0, I). Deterministic in `seed`, and
/// the identifier draws use their own stream so the other blocks do not depend on them.
SynthDataset generate(const SynthConfig& config);

/// Zeroes the identifier block of every test-split record; train and val untouched.
SynthDataset strip_identifiers(SynthDataset dataset);

/// Grouped corpus with image ids = column index and caption ids = column index.
RetrievalBatch<double> split_corpus(const MatrixXd& image_embeddings, const MatrixXd& caption_embeddings,
                                    std::size_t captions_per_image);

/// Which split columns make up one minibatch. Pairwise: captions[i] is the single
/// positive of images[i] (an image may appear more than once). Grouped:
/// captions[i*k .. i*k+k) belong to images[i].
struct BatchPlan {
  Layout layout = Layout::pairwise;
  std::size_t captions_per_image = 1;
  std::vector<std::size_t> images;
  std::vector<std::size_t> captions;

  std::size_t size() const { return images.size(); }
};

/// One epoch: pairwise visits every caption once, grouped visits every image
/// once with all its captions. The final batch may be short.
std::vector<BatchPlan> plan_epoch(const SynthSplit& split, Layout layout, std::size_t batch_n, std::mt19937_64& rng);

/// Batch of the given embedding columns; entry i gets image id i, captions get
/// id i (pairwise) or i*k + c (grouped).
RetrievalBatch<double> materialize(const BatchPlan& plan, const MatrixXd& image_embeddings,
                                   const MatrixXd& caption_embeddings);

std::vector<RetrievalBatch<double>> sample_batches(const SynthSplit& split, Layout layout, std::size_t batch_n,
                                                   std::uint64_t seed);

/// Writes train.emb, val.emb, test.emb and dataset.manifest into `dir`.
void save_dataset(const SynthDataset& dataset, const std::filesystem::path& dir);
SynthDataset load_dataset(const std::filesystem::path& dir);

KeyValues to_key_values(const SynthConfig& config);
SynthConfig synth_config_from(const KeyValues& kv);

}  // namespace cocoslab
