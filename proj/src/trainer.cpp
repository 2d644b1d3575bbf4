#include "cocoslab/trainer.hpp"

#include <cmath>
#include <random>
#include <sstream>

namespace cocoslab {

namespace {

MatrixXd normalized_columns(const MatrixXd& e) {
  MatrixXd u = e;
  for (Eigen::Index c = 0; c < u.cols(); ++c) {
    const double n = u.col(c).norm();
    if (!std::isfinite(n)) throw Error(Errc::diverged_loss, "encoder output overflowed");
    if (!(n > 0.0)) throw Error(Errc::zero_vector, "encoder produced a zero embedding");
    u.col(c) /= n;
  }
  return u;
}

/// Back through u = e / |e| for every column.
MatrixXd normalization_backward(const MatrixXd& e, const MatrixXd& u, const MatrixXd& grad_u) {
  MatrixXd grad_e(e.rows(), e.cols());
  for (Eigen::Index c = 0; c < e.cols(); ++c) {
    const double n = e.col(c).norm();
    grad_e.col(c) = (grad_u.col(c) - u.col(c) * u.col(c).dot(grad_u.col(c))) / n;
  }
  return grad_e;
}

MatrixXd gather(const MatrixXd& src, const std::vector<std::size_t>& cols) {
  MatrixXd out(src.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = src.col(static_cast<Eigen::Index>(cols[i]));
  return out;
}

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(parse_unsigned(s)); }

struct AdamState {
  MatrixXd m;
  MatrixXd v;
};

class ParameterUpdate {
 public:
  ParameterUpdate(Optimizer opt, const EncoderPair& enc) : opt_(opt) {
    if (opt_ == Optimizer::adam) {
      for (auto* st : {&image_, &caption_}) {
        st->m = MatrixXd::Zero(enc.image_weights.rows(), enc.image_weights.cols());
        st->v = st->m;
      }
    }
  }

  void apply(EncoderPair& enc, const ParameterGradient& g, double lr) {
    if (opt_ == Optimizer::sgd) {
      enc.image_weights -= lr * g.image_weights;
      enc.caption_weights -= lr * g.caption_weights;
      return;
    }
    ++step_;
    adam(enc.image_weights, g.image_weights, image_, lr);
    adam(enc.caption_weights, g.caption_weights, caption_, lr);
  }

 private:
  void adam(MatrixXd& w, const MatrixXd& g, AdamState& st, double lr) const {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    st.m = beta1 * st.m + (1.0 - beta1) * g;
    st.v = beta2 * st.v + (1.0 - beta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
    w.array() -= lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps);
  }

  Optimizer opt_;
  AdamState image_;
  AdamState caption_;
  std::size_t step_ = 0;
};

}  // namespace

std::string_view to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer parse_optimizer(std::string_view s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw Error(Errc::config_parse, "unknown optimizer '" + std::string(s) + "'");
}

MatrixXd EncoderPair::encode_images(const MatrixXd& inputs) const { return normalized_columns(image_weights * inputs); }

MatrixXd EncoderPair::encode_captions(const MatrixXd& inputs) const {
  return normalized_columns(caption_weights * inputs);
}

EncoderPair init_encoders(std::size_t d_in, std::size_t d_out, std::uint64_t seed) {
  if (d_in < 1 || d_out < 1) throw Error(Errc::invalid_config, "encoder dimensions must be >= 1");
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  EncoderPair enc;
  enc.image_weights.resize(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in));
  enc.caption_weights.resize(static_cast<Eigen::Index>(d_out), static_cast<Eigen::Index>(d_in));
  for (auto* w : {&enc.image_weights, &enc.caption_weights})
    for (Eigen::Index c = 0; c < w->cols(); ++c)
      for (Eigen::Index r = 0; r < w->rows(); ++r) (*w)(r, c) = uniform(rng);
  return enc;
}

void TrainConfig::validate() const {
  params.validate();
  if (epochs < 1) throw Error(Errc::invalid_config, "epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(Errc::invalid_config, "lr must be >= 0");
  if (!(lr_decay > 0.0)) throw Error(Errc::invalid_config, "lr_decay must be > 0");
  if (batch_n < 1) throw Error(Errc::invalid_config, "batch_n must be >= 1");
  if (d_out < 1) throw Error(Errc::invalid_config, "d_out must be >= 1");
}

std::size_t TrainConfig::epoch_multiplier(std::size_t captions_per_image) const {
  if (loss != LossKind::smooth_ap) return 1;
  return smooth_ap_epoch_multiplier == 0 ? captions_per_image : smooth_ap_epoch_multiplier;
}

ParameterGradient full_batch_grad(const MatrixXd& image_inputs, const MatrixXd& caption_inputs, Layout layout,
                                  std::size_t captions_per_image, LossKind kind, const LossParams& params,
                                  const EncoderPair& encoders) {
  if (layout != layout_for(kind)) throw Error(Errc::layout_mismatch, "batch layout does not suit the loss");
  const std::size_t k = layout == Layout::pairwise ? 1 : captions_per_image;
  const auto n = image_inputs.cols();
  const auto m = caption_inputs.cols();
  if (m != n * static_cast<Eigen::Index>(k)) throw Error(Errc::invalid_batch, "caption count must be k per image");

  const MatrixXd e_img = encoders.image_weights * image_inputs;
  const MatrixXd e_cap = encoders.caption_weights * caption_inputs;
  const MatrixXd u_img = normalized_columns(e_img);
  const MatrixXd u_cap = normalized_columns(e_cap);
  const MatrixXd scores = u_img.transpose() * u_cap;  // n x m

  MatrixXd grad_scores = MatrixXd::Zero(n, m);
  double loss = 0.0;

  std::vector<Id> cap_ids(static_cast<std::size_t>(m));
  std::vector<Id> img_ids(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < m; ++c) cap_ids[static_cast<std::size_t>(c)] = c;
  for (Eigen::Index i = 0; i < n; ++i) img_ids[static_cast<std::size_t>(i)] = i;

  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<char> pos(static_cast<std::size_t>(m), 0);
    for (std::size_t c = 0; c < k; ++c) pos[static_cast<std::size_t>(i) * k + c] = 1;
    const ScoreSet<double> s(i, cap_ids, scores.row(i).transpose(), std::move(pos), Direction::i2t);
    auto [l, g] = query_loss_and_score_grad(kind, s, params);
    loss += l;
    grad_scores.row(i) += g.transpose();
  }
  for (Eigen::Index c = 0; c < m; ++c) {
    std::vector<char> pos(static_cast<std::size_t>(n), 0);
    pos[static_cast<std::size_t>(c) / k] = 1;
    const ScoreSet<double> s(c, img_ids, scores.col(c), std::move(pos), Direction::t2i);
    auto [l, g] = query_loss_and_score_grad(kind, s, params);
    loss += l;
    grad_scores.col(c) += g;
  }
  if (kind == LossKind::ntxent || kind == LossKind::smooth_ap) {
    const double b = static_cast<double>(n + m);
    loss /= b;
    grad_scores /= b;
  }

  const MatrixXd grad_u_img = u_cap * grad_scores.transpose();
  const MatrixXd grad_u_cap = u_img * grad_scores;
  ParameterGradient g;
  g.loss = loss;
  g.image_weights = normalization_backward(e_img, u_img, grad_u_img) * image_inputs.transpose();
  g.caption_weights = normalization_backward(e_cap, u_cap, grad_u_cap) * caption_inputs.transpose();
  return g;
}

SplitMetrics evaluate_split(const EncoderPair& encoders, const SynthSplit& split) {
  const auto corpus = split_corpus(encoders.encode_images(split.images), encoders.encode_captions(split.captions),
                                   split.captions_per_image);
  return {evaluate(corpus, Direction::i2t), evaluate(corpus, Direction::t2i)};
}

TrainResult train(const SynthDataset& dataset, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const SynthSplit& train_split = dataset.train;
  if (train_split.num_images() == 0) throw Error(Errc::empty_dataset, "training split is empty");
  if (dataset.val.num_images() == 0) throw Error(Errc::empty_dataset, "validation split is empty");

  const Layout layout = layout_for(config.loss);
  const std::size_t k = train_split.captions_per_image;
  const std::size_t multiplier = config.epoch_multiplier(k);
  const std::size_t total_epochs = config.epochs * multiplier;
  const std::size_t decay_after = config.lr_decay_epoch * multiplier;

  TrainResult result;
  EncoderPair enc = init_encoders(static_cast<std::size_t>(train_split.images.rows()), config.d_out, config.seed);
  std::mt19937_64 batch_rng(config.seed + 1);
  ParameterUpdate update(config.optimizer, enc);

  result.best = {enc, 0, evaluate_split(enc, dataset.val).rsum()};
  for (std::size_t epoch = 1; epoch <= total_epochs; ++epoch) {
    const double lr = epoch > decay_after ? config.lr * config.lr_decay : config.lr;
    const auto plans = plan_epoch(train_split, layout, config.batch_n, batch_rng);
    double loss_sum = 0.0;
    for (const auto& plan : plans) {
      const MatrixXd x_img = gather(train_split.images, plan.images);
      const MatrixXd x_cap = gather(train_split.captions, plan.captions);
      const ParameterGradient g = full_batch_grad(x_img, x_cap, layout, k, config.loss, config.params, enc);
      if (!std::isfinite(g.loss)) throw Error(Errc::diverged_loss, "non-finite loss at epoch " + std::to_string(epoch));
      loss_sum += g.loss;
      update.apply(enc, g, lr);
      if (!enc.image_weights.allFinite() || !enc.caption_weights.allFinite())
        throw Error(Errc::diverged_loss, "non-finite weights at epoch " + std::to_string(epoch));
    }
    EpochLog entry{epoch, loss_sum / static_cast<double>(plans.size()), evaluate_split(enc, dataset.val).rsum(), lr};
    if (entry.val_rsum > result.best.validation_rsum) result.best = {enc, epoch, entry.val_rsum};
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.final_encoders = std::move(enc);
  return result;
}

std::string format_training_log(const std::vector<EpochLog>& log) {
  std::string out;
  for (const auto& e : log)
    out += std::to_string(e.epoch) + ' ' + format_double(e.loss) + ' ' + format_double(e.val_rsum) + ' ' +
           format_double(e.lr) + '\n';
  return out;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::vector<EmbeddingRecord> rows;
  const auto& enc = checkpoint.encoders;
  for (Eigen::Index r = 0; r < enc.image_weights.rows(); ++r)
    rows.push_back({r, Modality::image, 0, enc.image_weights.row(r).transpose()});
  for (Eigen::Index r = 0; r < enc.caption_weights.rows(); ++r)
    rows.push_back({r, Modality::caption, 0, enc.caption_weights.row(r).transpose()});
  write_records(path, rows);
  write_key_values(std::filesystem::path(path.string() + ".meta"),
                   {{"epoch", std::to_string(checkpoint.epoch)},
                    {"validation_rsum", format_double(checkpoint.validation_rsum)},
                    {"d_in", std::to_string(enc.image_weights.cols())},
                    {"d_out", std::to_string(enc.image_weights.rows())}});
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const KeyValues meta = read_key_values(std::filesystem::path(path.string() + ".meta"));
  const auto rows = read_records(path);
  const auto d_in = static_cast<Eigen::Index>(to_size(lookup(meta, "d_in")));
  const auto d_out = static_cast<Eigen::Index>(to_size(lookup(meta, "d_out")));
  Checkpoint cp;
  cp.epoch = to_size(lookup(meta, "epoch"));
  cp.validation_rsum = parse_double(lookup(meta, "validation_rsum"));
  cp.encoders.image_weights = MatrixXd::Zero(d_out, d_in);
  cp.encoders.caption_weights = MatrixXd::Zero(d_out, d_in);
  std::vector<char> seen(static_cast<std::size_t>(2 * d_out), 0);
  for (const auto& r : rows) {
    if (r.values.size() != d_in || r.id < 0 || r.id >= d_out)
      throw Error(Errc::config_parse, "checkpoint row out of shape");
    auto& w = r.modality == Modality::image ? cp.encoders.image_weights : cp.encoders.caption_weights;
    w.row(r.id) = r.values.transpose();
    seen[static_cast<std::size_t>(r.id + (r.modality == Modality::image ? 0 : d_out))] = 1;
  }
  for (char s : seen)
    if (!s) throw Error(Errc::config_parse, "checkpoint is missing rows");
  return cp;
}

KeyValues to_key_values(const TrainConfig& c) {
  return {
      {"loss", std::string(to_string(c.loss))},
      {"optimizer", std::string(to_string(c.optimizer))},
      {"alpha", format_double(c.params.alpha)},
      {"tau_ntxent", format_double(c.params.tau_ntxent)},
      {"tau_smooth", format_double(c.params.tau_smooth)},
      {"epochs", std::to_string(c.epochs)},
      {"lr", format_double(c.lr)},
      {"lr_decay_epoch", std::to_string(c.lr_decay_epoch)},
      {"lr_decay", format_double(c.lr_decay)},
      {"batch_n", std::to_string(c.batch_n)},
      {"d_out", std::to_string(c.d_out)},
      {"seed", std::to_string(c.seed)},
      {"smooth_ap_epoch_multiplier", std::to_string(c.smooth_ap_epoch_multiplier)},
  };
}

TrainConfig train_config_from(const KeyValues& kv) {
  TrainConfig c;
  try {
    c.loss = parse_loss_kind(lookup_or(kv, "loss", std::string(to_string(c.loss))));
  } catch (const Error& e) {
    throw Error(Errc::config_parse, e.what());
  }
  c.optimizer = parse_optimizer(lookup_or(kv, "optimizer", std::string(to_string(c.optimizer))));
  c.params.alpha = parse_double(lookup_or(kv, "alpha", format_double(c.params.alpha)));
  c.params.tau_ntxent = parse_double(lookup_or(kv, "tau_ntxent", format_double(c.params.tau_ntxent)));
  c.params.tau_smooth = parse_double(lookup_or(kv, "tau_smooth", format_double(c.params.tau_smooth)));
  c.epochs = to_size(lookup_or(kv, "epochs", std::to_string(c.epochs)));
  c.lr = parse_double(lookup_or(kv, "lr", format_double(c.lr)));
  c.lr_decay_epoch = to_size(lookup_or(kv, "lr_decay_epoch", std::to_string(c.lr_decay_epoch)));
  c.lr_decay = parse_double(lookup_or(kv, "lr_decay", format_double(c.lr_decay)));
  c.batch_n = to_size(lookup_or(kv, "batch_n", std::to_string(c.batch_n)));
  c.d_out = to_size(lookup_or(kv, "d_out", std::to_string(c.d_out)));
  c.seed = to_size(lookup_or(kv, "seed", std::to_string(c.seed)));
  c.smooth_ap_epoch_multiplier =
      to_size(lookup_or(kv, "smooth_ap_epoch_multiplier", std::to_string(c.smooth_ap_epoch_multiplier)));
  c.validate();
  return c;
}

}  // namespace cocoslab
