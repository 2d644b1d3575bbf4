#include "cocoslab/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cocoslab {

void SynthConfig::validate() const {
  if (num_tuples < 1) throw Error(Errc::invalid_config, "num_tuples must be >= 1");
  if (captions_per_image < 1) throw Error(Errc::invalid_config, "captions_per_image must be >= 1");
  if (core_dim < 1) throw Error(Errc::invalid_config, "core_dim must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw Error(Errc::invalid_config, "noise must be >= 0");
  if (!(val_fraction >= 0.0) || !(test_fraction >= 0.0) || val_fraction + test_fraction >= 1.0)
    throw Error(Errc::invalid_config, "split fractions must be >= 0 and sum below 1");
  if (identifiers.enabled) {
    if (identifiers.pool_size < 1 || identifiers.count < 1 || identifiers.count > identifiers.pool_size)
      throw Error(Errc::invalid_config, "identifier count must be in [1, pool_size]");
    if (!(identifiers.scale > 0.0)) throw Error(Errc::invalid_config, "identifier scale must be > 0");
  }
}

namespace {

constexpr std::uint64_t kIdentifierStream = 0x9e3779b97f4a7c15ULL;

SynthSplit make_split(const MatrixXd& images, const MatrixXd& captions, std::size_t first, std::size_t count,
                      std::size_t k) {
  SynthSplit s;
  s.captions_per_image = k;
  const auto f = static_cast<Eigen::Index>(first);
  const auto n = static_cast<Eigen::Index>(count);
  const auto kk = static_cast<Eigen::Index>(k);
  s.images = images.middleCols(f, n);
  s.captions = captions.middleCols(f * kk, n * kk);
  s.tuple_ids.resize(count);
  std::iota(s.tuple_ids.begin(), s.tuple_ids.end(), static_cast<Id>(first));
  return s;
}

}  // namespace

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.num_tuples;
  const std::size_t k = config.captions_per_image;
  const auto d0 = static_cast<Eigen::Index>(config.core_dim);
  const auto dn = static_cast<Eigen::Index>(config.nuisance_dim);
  const auto d = static_cast<Eigen::Index>(config.latent_dim());

  MatrixXd images = MatrixXd::Zero(d, static_cast<Eigen::Index>(n));
  MatrixXd captions = MatrixXd::Zero(d, static_cast<Eigen::Index>(n * k));

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal;
  std::mt19937_64 id_rng(config.seed ^ kIdentifierStream);
  std::vector<std::size_t> symbols(config.identifiers.pool_size);

  for (std::size_t t = 0; t < n; ++t) {
    const auto col = static_cast<Eigen::Index>(t);
    for (Eigen::Index r = 0; r < d0; ++r) images(r, col) = normal(rng);
    for (Eigen::Index r = 0; r < dn; ++r) images(d0 + r, col) = config.noise * normal(rng);
    for (std::size_t c = 0; c < k; ++c) {
      const auto cc = static_cast<Eigen::Index>(t * k + c);
      captions.col(cc).head(d0) = images.col(col).head(d0);
      for (Eigen::Index r = 0; r < dn; ++r) captions(d0 + r, cc) = config.noise * normal(rng);
    }
    if (config.identifiers.enabled) {
      std::iota(symbols.begin(), symbols.end(), std::size_t{0});
      std::shuffle(symbols.begin(), symbols.end(), id_rng);
      for (std::size_t j = 0; j < config.identifiers.count; ++j) {
        const auto row = d0 + dn + static_cast<Eigen::Index>(symbols[j]);
        images(row, col) = config.identifiers.scale;
        for (std::size_t c = 0; c < k; ++c) captions(row, static_cast<Eigen::Index>(t * k + c)) = config.identifiers.scale;
      }
    }
  }

  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.test_fraction));
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * config.val_fraction));
  if (n_test + n_val >= n) throw Error(Errc::invalid_config, "not enough tuples for a training split");
  const std::size_t n_train = n - n_val - n_test;

  SynthDataset ds;
  ds.config = config;
  ds.train = make_split(images, captions, 0, n_train, k);
  ds.val = make_split(images, captions, n_train, n_val, k);
  ds.test = make_split(images, captions, n_train + n_val, n_test, k);
  return ds;
}

SynthDataset strip_identifiers(SynthDataset dataset) {
  if (!dataset.config.identifiers.enabled) throw Error(Errc::no_identifiers, "dataset has no identifier block");
  const auto off = static_cast<Eigen::Index>(dataset.identifier_offset());
  const auto len = static_cast<Eigen::Index>(dataset.config.identifiers.pool_size);
  dataset.test.images.middleRows(off, len).setZero();
  dataset.test.captions.middleRows(off, len).setZero();
  dataset.identifiers_stripped = true;
  return dataset;
}

RetrievalBatch<double> split_corpus(const MatrixXd& image_embeddings, const MatrixXd& caption_embeddings,
                                    std::size_t captions_per_image) {
  if (image_embeddings.cols() == 0) throw Error(Errc::empty_corpus, "split has no images");
  std::vector<EmbeddingVector<double>> images;
  std::vector<EmbeddingVector<double>> captions;
  std::map<Id, std::vector<Id>> positives;
  images.reserve(static_cast<std::size_t>(image_embeddings.cols()));
  captions.reserve(static_cast<std::size_t>(caption_embeddings.cols()));
  for (Eigen::Index i = 0; i < image_embeddings.cols(); ++i) images.emplace_back(image_embeddings.col(i), Modality::image, i);
  for (Eigen::Index c = 0; c < caption_embeddings.cols(); ++c) {
    captions.emplace_back(caption_embeddings.col(c), Modality::caption, c);
    positives[c / static_cast<Eigen::Index>(captions_per_image)].push_back(c);
  }
  return RetrievalBatch<double>(std::move(images), std::move(captions), std::move(positives), Layout::grouped);
}

std::vector<BatchPlan> plan_epoch(const SynthSplit& split, Layout layout, std::size_t batch_n, std::mt19937_64& rng) {
  if (batch_n < 1) throw Error(Errc::invalid_layout, "batch size must be >= 1");
  if (split.num_images() == 0) throw Error(Errc::empty_dataset, "split is empty");
  const std::size_t k = split.captions_per_image;
  std::vector<BatchPlan> plans;
  if (layout == Layout::pairwise) {
    std::vector<std::size_t> order(split.num_captions());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch_n) {
      BatchPlan p;
      p.layout = Layout::pairwise;
      p.captions_per_image = 1;
      for (std::size_t i = start; i < std::min(order.size(), start + batch_n); ++i) {
        p.captions.push_back(order[i]);
        p.images.push_back(split.owner(order[i]));
      }
      plans.push_back(std::move(p));
    }
  } else {
    std::vector<std::size_t> order(split.num_images());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch_n) {
      BatchPlan p;
      p.layout = Layout::grouped;
      p.captions_per_image = k;
      for (std::size_t i = start; i < std::min(order.size(), start + batch_n); ++i) {
        p.images.push_back(order[i]);
        for (std::size_t c = 0; c < k; ++c) p.captions.push_back(order[i] * k + c);
      }
      plans.push_back(std::move(p));
    }
  }
  return plans;
}

RetrievalBatch<double> materialize(const BatchPlan& plan, const MatrixXd& image_embeddings,
                                   const MatrixXd& caption_embeddings) {
  std::vector<EmbeddingVector<double>> images;
  std::vector<EmbeddingVector<double>> captions;
  std::map<Id, std::vector<Id>> positives;
  const std::size_t k = plan.captions_per_image;
  for (std::size_t i = 0; i < plan.images.size(); ++i) {
    const Id img = static_cast<Id>(i);
    images.emplace_back(image_embeddings.col(static_cast<Eigen::Index>(plan.images[i])), Modality::image, img);
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t slot = i * k + c;
      const Id cap = static_cast<Id>(slot);
      captions.emplace_back(caption_embeddings.col(static_cast<Eigen::Index>(plan.captions[slot])), Modality::caption, cap);
      positives[img].push_back(cap);
    }
  }
  return RetrievalBatch<double>(std::move(images), std::move(captions), std::move(positives), plan.layout);
}

std::vector<RetrievalBatch<double>> sample_batches(const SynthSplit& split, Layout layout, std::size_t batch_n,
                                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<RetrievalBatch<double>> out;
  for (const auto& plan : plan_epoch(split, layout, batch_n, rng))
    out.push_back(materialize(plan, split.images, split.captions));
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

KeyValues to_key_values(const SynthConfig& c) {
  return {
      {"num_tuples", std::to_string(c.num_tuples)},
      {"captions_per_image", std::to_string(c.captions_per_image)},
      {"core_dim", std::to_string(c.core_dim)},
      {"nuisance_dim", std::to_string(c.nuisance_dim)},
      {"noise", format_double(c.noise)},
      {"identifiers", c.identifiers.enabled ? "on" : "off"},
      {"identifier_count", std::to_string(c.identifiers.count)},
      {"identifier_pool", std::to_string(c.identifiers.pool_size)},
      {"identifier_scale", format_double(c.identifiers.scale)},
      {"seed", std::to_string(c.seed)},
      {"val_fraction", format_double(c.val_fraction)},
      {"test_fraction", format_double(c.test_fraction)},
  };
}

namespace {

std::size_t to_size(const std::string& s) { return static_cast<std::size_t>(parse_unsigned(s)); }

}  // namespace

SynthConfig synth_config_from(const KeyValues& kv) {
  SynthConfig c;
  c.num_tuples = to_size(lookup_or(kv, "num_tuples", std::to_string(c.num_tuples)));
  c.captions_per_image = to_size(lookup_or(kv, "captions_per_image", std::to_string(c.captions_per_image)));
  c.core_dim = to_size(lookup_or(kv, "core_dim", std::to_string(c.core_dim)));
  c.nuisance_dim = to_size(lookup_or(kv, "nuisance_dim", std::to_string(c.nuisance_dim)));
  c.noise = parse_double(lookup_or(kv, "noise", format_double(c.noise)));
  const std::string ids = lookup_or(kv, "identifiers", "off");
  if (ids != "on" && ids != "off") throw Error(Errc::config_parse, "identifiers must be on or off");
  c.identifiers.enabled = ids == "on";
  c.identifiers.count = to_size(lookup_or(kv, "identifier_count", std::to_string(c.identifiers.count)));
  c.identifiers.pool_size = to_size(lookup_or(kv, "identifier_pool", std::to_string(c.identifiers.pool_size)));
  c.identifiers.scale = parse_double(lookup_or(kv, "identifier_scale", format_double(c.identifiers.scale)));
  c.seed = to_size(lookup_or(kv, "seed", "0"));
  c.val_fraction = parse_double(lookup_or(kv, "val_fraction", format_double(c.val_fraction)));
  c.test_fraction = parse_double(lookup_or(kv, "test_fraction", format_double(c.test_fraction)));
  c.validate();
  return c;
}

namespace {

std::vector<EmbeddingRecord> split_records(const SynthSplit& s) {
  std::vector<EmbeddingRecord> out;
  for (std::size_t i = 0; i < s.num_images(); ++i)
    out.push_back({s.tuple_ids[i], Modality::image, s.tuple_ids[i], s.images.col(static_cast<Eigen::Index>(i))});
  for (std::size_t c = 0; c < s.num_captions(); ++c) {
    const Id owner = s.tuple_ids[s.owner(c)];
    const Id id = owner * static_cast<Id>(s.captions_per_image) + static_cast<Id>(c % s.captions_per_image);
    out.push_back({id, Modality::caption, owner, s.captions.col(static_cast<Eigen::Index>(c))});
  }
  return out;
}

SynthSplit split_from_records(const std::vector<EmbeddingRecord>& records, std::size_t k, std::size_t dim) {
  std::vector<const EmbeddingRecord*> images;
  std::vector<const EmbeddingRecord*> captions;
  for (const auto& r : records) {
    if (static_cast<std::size_t>(r.values.size()) != dim) throw Error(Errc::config_parse, "record has wrong dimension");
    (r.modality == Modality::image ? images : captions).push_back(&r);
  }
  auto by_id = [](const EmbeddingRecord* a, const EmbeddingRecord* b) { return a->id < b->id; };
  std::sort(images.begin(), images.end(), by_id);
  std::sort(captions.begin(), captions.end(), by_id);
  if (captions.size() != images.size() * k) throw Error(Errc::config_parse, "caption count does not match k");
  SynthSplit s;
  s.captions_per_image = k;
  s.images.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(images.size()));
  s.captions.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(captions.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    s.images.col(static_cast<Eigen::Index>(i)) = images[i]->values;
    s.tuple_ids.push_back(images[i]->id);
  }
  for (std::size_t c = 0; c < captions.size(); ++c) {
    if (captions[c]->group_id != s.tuple_ids[c / k]) throw Error(Errc::config_parse, "caption group out of order");
    s.captions.col(static_cast<Eigen::Index>(c)) = captions[c]->values;
  }
  return s;
}

}  // namespace

void save_dataset(const SynthDataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_failure, "cannot create " + dir.string());
  KeyValues manifest = to_key_values(ds.config);
  manifest.emplace_back("latent_dim", std::to_string(ds.config.latent_dim()));
  manifest.emplace_back("train_tuples", std::to_string(ds.train.num_images()));
  manifest.emplace_back("val_tuples", std::to_string(ds.val.num_images()));
  manifest.emplace_back("test_tuples", std::to_string(ds.test.num_images()));
  manifest.emplace_back("identifiers_stripped", ds.identifiers_stripped ? "yes" : "no");
  write_key_values(dir / "dataset.manifest", manifest);
  write_records(dir / "train.emb", split_records(ds.train));
  write_records(dir / "val.emb", split_records(ds.val));
  write_records(dir / "test.emb", split_records(ds.test));
}

SynthDataset load_dataset(const std::filesystem::path& dir) {
  const KeyValues manifest = read_key_values(dir / "dataset.manifest");
  SynthDataset ds;
  ds.config = synth_config_from(manifest);
  ds.identifiers_stripped = lookup_or(manifest, "identifiers_stripped", "no") == "yes";
  const std::size_t k = ds.config.captions_per_image;
  const std::size_t dim = ds.config.latent_dim();
  ds.train = split_from_records(read_records(dir / "train.emb"), k, dim);
  ds.val = split_from_records(read_records(dir / "val.emb"), k, dim);
  ds.test = split_from_records(read_records(dir / "test.emb"), k, dim);
  return ds;
}

}  // namespace cocoslab
