#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cocoslab/cocos_protocol.hpp"
#include "cocoslab/stats.hpp"
#include "cocoslab/trainer.hpp"

namespace cocoslab {

struct RunSpec {
  std::string label;
  TrainConfig train;
  std::size_t repeats = 1;
};

struct ExperimentConfig {
  /// Either a saved dataset directory or a generator config.
  std::optional<std::filesystem::path> dataset_path;
  SynthConfig synth;
  std::vector<RunSpec> runs;
  bool cocos_enabled = true;
  CocosConfig cocos;
  std::filesystem::path output_dir = "out";
  std::uint64_t base_seed = 0;

  void validate() const;
};

/// INI text:
///
///   [experiment]  output, seed
///   [dataset]     path, or any generator key (num_tuples, noise, identifiers, ...)
///   [run:LABEL]   loss, repeats, and any training key (epochs, lr, alpha, ...)
///   [cocos]       enabled, epsilon, batch_size, seed
///
/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

SynthDataset load_or_generate(const ExperimentConfig& config);

/// Metric names in report order. mAP@5 is reported for i2t only.
const std::vector<std::string>& metric_names(Direction d);
/// Percent-scale value of a named metric.
double metric_value(const RetrievalMetrics& m, const std::string& name);

/// Test metrics of one finished repetition.
struct RunRecord {
  std::string label;
  LossKind loss = LossKind::triplet_sh;
  std::size_t repetition = 0;
  std::uint64_t seed = 0;
  std::size_t best_epoch = 0;
  double validation_rsum = 0.0;
  SplitMetrics test;
};

KeyValues to_key_values(const RunRecord& record);
RunRecord run_record_from(const KeyValues& kv);

struct AggregateRow {
  std::string label;
  std::string direction;  // i2t, t2i or all
  std::string metric;
  MeanStd value;
};

struct ExperimentReport {
  std::vector<RunRecord> records;
  std::vector<AggregateRow> rows;
  std::vector<CocosReport> cocos;
  std::vector<std::string> cocos_labels;  // parallel to `cocos`
};

/// Rows grouped by label in first-seen order.
std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records);

std::string format_report_csv(const std::vector<AggregateRow>& rows);
/// Aligned table with a header listing each label's seeds.
std::string format_report_table(const std::vector<RunRecord>& records, const std::vector<AggregateRow>& rows);
std::string format_cocos_csv(const std::vector<std::string>& labels, const std::vector<CocosReport>& reports);

/// Every metrics.txt below `dir`, in path order.
std::vector<RunRecord> collect_run_records(const std::filesystem::path& dir);

struct SingleRun {
  RunRecord record;
  std::vector<CocosReport> cocos;  // i2t then t2i; empty unless repetition 0 with COCOS enabled
};

/// One repetition (seed = base_seed + repetition) writing train.log,
/// config.txt, checkpoint.txt, metrics.txt and cocos.txt into `dir`.
SingleRun run_single(const ExperimentConfig& config, const SynthDataset& dataset, const RunSpec& run,
                     std::size_t repetition, const std::filesystem::path& dir);

struct ExperimentOptions {
  std::size_t jobs = 1;
  /// Progress lines; null for silence.
  std::ostream* log = nullptr;
};

/// Trains every repetition of every run (concurrently up to `jobs`), writes
/// per-run directories under output/runs/LABEL/repN, runs COCOS on repetition
/// 0 of each label, and writes report.csv, report.txt and cocos.csv.
ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentOptions& options = {});

}  // namespace cocoslab
