#include "cocoslab/cocos_protocol.hpp"

#include <random>
#include <sstream>

namespace cocoslab {

const CocosStatistic& CocosReport::statistic(const std::string& name) const {
  for (const auto& s : statistics)
    if (s.name == name) return s;
  throw Error(Errc::invalid_argument, "no statistic named '" + name + "'");
}

std::vector<std::string> cocos_statistic_names(LossKind loss) {
  switch (loss) {
    case LossKind::triplet_sh:
    case LossKind::triplet: return {"c_q", "c_q_contributing", "c_batch", "c_zero"};
    case LossKind::ntxent: return {"c_qv_neg", "w_qv_neg", "w_qv_pos"};
    case LossKind::smooth_ap: return {"c_smooth_q", "c_smooth_q_contributing", "c_smooth_zero"};
  }
  return {};
}

std::vector<double> cocos_batch_statistics(const RetrievalBatch<double>& batch, LossKind loss, Direction direction,
                                           const CocosConfig& config) {
  switch (loss) {
    case LossKind::triplet_sh:
    case LossKind::triplet: {
      const auto c = loss == LossKind::triplet ? count_triplet(batch, direction, config.params)
                                               : count_triplet_sh(batch, direction, config.params);
      return {c.c_q, c.c_q_contributing, static_cast<double>(c.c_batch), static_cast<double>(c.c_zero)};
    }
    case LossKind::ntxent: {
      const auto c = count_ntxent(batch, direction, config.params, config.epsilon);
      return {c.c_qv_neg, c.w_qv_neg, c.w_qv_pos};
    }
    case LossKind::smooth_ap: {
      const auto c = count_smooth_ap(batch, direction, config.params, config.epsilon);
      return {c.c_q, c.c_q_contributing, static_cast<double>(c.c_zero)};
    }
  }
  return {};
}

CocosReport cocos_protocol(const EncoderPair& encoders, const SynthDataset& dataset, LossKind loss,
                           Direction direction, const CocosConfig& config) {
  config.params.validate();
  if (!(config.epsilon >= 0.0)) throw Error(Errc::invalid_config, "epsilon must be >= 0");
  if (config.batch_size < 1) throw Error(Errc::invalid_config, "batch size must be >= 1");
  const SynthSplit& split = dataset.train;
  if (split.num_images() == 0) throw Error(Errc::empty_dataset, "training split is empty");

  const MatrixXd img = encoders.encode_images(split.images);
  const MatrixXd cap = encoders.encode_captions(split.captions);
  std::mt19937_64 rng(config.seed);
  const auto plans = plan_epoch(split, layout_for(loss), config.batch_size, rng);

  CocosReport r;
  r.loss = loss;
  r.direction = direction;
  r.epsilon = config.epsilon;
  r.batch_size = config.batch_size;
  r.seed = config.seed;
  for (auto& name : cocos_statistic_names(loss)) r.statistics.push_back({std::move(name), {}, {}});

  for (const auto& plan : plans) {
    if (plan.size() < config.batch_size) continue;
    const auto values = cocos_batch_statistics(materialize(plan, img, cap), loss, direction, config);
    for (std::size_t i = 0; i < values.size(); ++i) r.statistics[i].per_batch.push_back(values[i]);
  }
  if (r.num_batches() == 0) throw Error(Errc::empty_dataset, "no full batch in the training split");
  for (auto& s : r.statistics) s.summary = mean_std(s.per_batch);
  return r;
}

KeyValues to_key_values(const CocosReport& r) {
  KeyValues kv{
      {"loss", std::string(to_string(r.loss))},
      {"direction", std::string(to_string(r.direction))},
      {"epsilon", format_double(r.epsilon)},
      {"batch_size", std::to_string(r.batch_size)},
      {"seed", std::to_string(r.seed)},
      {"batches", std::to_string(r.num_batches())},
  };
  for (const auto& s : r.statistics) {
    kv.emplace_back(s.name + ".mean", format_double(s.summary.mean));
    kv.emplace_back(s.name + ".std", format_double(s.summary.std));
    std::ostringstream os;
    for (std::size_t i = 0; i < s.per_batch.size(); ++i) os << (i ? "," : "") << format_double(s.per_batch[i]);
    kv.emplace_back(s.name + ".per_batch", os.str());
  }
  return kv;
}

}  // namespace cocoslab
