#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cocoslab/losses.hpp"
#include "cocoslab/metrics.hpp"
#include "cocoslab/synthdata.hpp"

namespace cocoslab {

/// Two unshared linear encoders; outputs are unit-normalized columns.
struct EncoderPair {
  MatrixXd image_weights;    // d_out x d_in
  MatrixXd caption_weights;  // d_out x d_in

  MatrixXd encode_images(const MatrixXd& inputs) const;
  MatrixXd encode_captions(const MatrixXd& inputs) const;
};

/// Entries uniform in [-1/sqrt(d_in), 1/sqrt(d_in)].
EncoderPair init_encoders(std::size_t d_in, std::size_t d_out, std::uint64_t seed);

enum class Optimizer { sgd, adam };

std::string_view to_string(Optimizer o);
Optimizer parse_optimizer(std::string_view s);

struct TrainConfig {
  LossKind loss = LossKind::triplet_sh;
  /// Adam uses beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
  Optimizer optimizer = Optimizer::sgd;
  LossParams params;
  std::size_t epochs = 30;
  double lr = 2e-4;
  std::size_t lr_decay_epoch = 15;
  double lr_decay = 0.1;
  std::size_t batch_n = 128;
  std::size_t d_out = 32;
  std::uint64_t seed = 0;
  /// SmoothAP batches hold all k captions of an image, so its runs take this
  /// many times more epochs; 0 means k.
  std::size_t smooth_ap_epoch_multiplier = 0;

  void validate() const;
  std::size_t epoch_multiplier(std::size_t captions_per_image) const;
};

struct Checkpoint {
  EncoderPair encoders;
  std::size_t epoch = 0;
  /// Percent scale, R@{1,5,10} summed over both directions.
  double validation_rsum = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_rsum = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Checkpoint best;
  EncoderPair final_encoders;
  std::vector<EpochLog> log;
};

struct ParameterGradient {
  double loss = 0.0;
  MatrixXd image_weights;
  MatrixXd caption_weights;
};

/// Exact gradient of the batch objective (see batch_objective) with respect to
/// both weight matrices, including the normalization Jacobian. Column i of
/// `image_inputs` is batch image i; caption columns follow the BatchPlan
/// convention for `layout` with `captions_per_image` captions per image.
ParameterGradient full_batch_grad(const MatrixXd& image_inputs, const MatrixXd& caption_inputs, Layout layout,
                                  std::size_t captions_per_image, LossKind kind, const LossParams& params,
                                  const EncoderPair& encoders);

struct SplitMetrics {
  RetrievalMetrics i2t;
  RetrievalMetrics t2i;

  /// Percent scale.
  double rsum() const { return 100.0 * (i2t.rsum + t2i.rsum); }
};

SplitMetrics evaluate_split(const EncoderPair& encoders, const SynthSplit& split);

using EpochCallback = std::function<void(const EpochLog&)>;

/// Minibatch training; keeps the checkpoint with the highest
/// validation rsum (epoch 0 is the initialization).
TrainResult train(const SynthDataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch = {});

std::string format_training_log(const std::vector<EpochLog>& log);

/// Weight rows in the embedding text format (modality field = encoder role),
/// plus a `<path>.meta` key-value sidecar.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

KeyValues to_key_values(const TrainConfig& config);
TrainConfig train_config_from(const KeyValues& kv);

}  // namespace cocoslab
