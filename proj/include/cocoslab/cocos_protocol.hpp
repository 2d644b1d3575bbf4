#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cocoslab/cocos.hpp"
#include "cocoslab/stats.hpp"
#include "cocoslab/trainer.hpp"

namespace cocoslab {

struct CocosStatistic {
  std::string name;
  std::vector<double> per_batch;
  MeanStd summary;
};

struct CocosReport {
  LossKind loss = LossKind::triplet_sh;
  Direction direction = Direction::i2t;
  double epsilon = 0.01;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::vector<CocosStatistic> statistics;

  std::size_t num_batches() const { return statistics.empty() ? 0 : statistics.front().per_batch.size(); }
  /// Throws InvalidArgument for an unknown name.
  const CocosStatistic& statistic(const std::string& name) const;
};

struct CocosConfig {
  double epsilon = 0.01;
  /// Pairs per batch for the pairwise losses, images per batch for SmoothAP.
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  LossParams params;
};

/// Statistic names reported for `loss`, in report order.
std::vector<std::string> cocos_statistic_names(LossKind loss);

/// Per-batch statistics of one batch, in cocos_statistic_names order.
std::vector<double> cocos_batch_statistics(const RetrievalBatch<double>& batch, LossKind loss, Direction direction,
                                           const CocosConfig& config);

/// Frozen encoders over one shuffled pass of the training split. Short final
/// batches are dropped; EmptyDataset if no full batch exists.
CocosReport cocos_protocol(const EncoderPair& encoders, const SynthDataset& dataset, LossKind loss,
                           Direction direction, const CocosConfig& config);

KeyValues to_key_values(const CocosReport& report);

}  // namespace cocoslab
