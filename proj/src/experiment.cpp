#include "cocoslab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace cocoslab {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

std::uint64_t to_u64(const std::string& s, const std::string& what) {
  try {
    return parse_unsigned(s);
  } catch (const Error& e) {
    throw Error(Errc::config_parse, what + ": " + e.what());
  }
}

KeyValues section_values(const pt::ptree& section, const std::string& name, const std::set<std::string>& allowed) {
  KeyValues kv;
  for (const auto& [key, child] : section) {
    if (!child.empty()) throw Error(Errc::config_parse, "nested key in [" + name + "]");
    if (!allowed.count(key)) throw Error(Errc::config_parse, "unknown key '" + key + "' in [" + name + "]");
    kv.emplace_back(key, child.data());
  }
  return kv;
}

std::set<std::string> keys_of(const KeyValues& kv) {
  std::set<std::string> out;
  for (const auto& [k, v] : kv) out.insert(k);
  return out;
}

template <typename F>
auto as_config_error(const std::string& where, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == Errc::config_parse) throw;
    throw Error(Errc::config_parse, where + ": " + e.what());
  }
}

fs::path resolve(const fs::path& p, const fs::path& base) { return p.is_absolute() || base.empty() ? p : base / p; }

}  // namespace

void ExperimentConfig::validate() const {
  if (runs.empty()) throw Error(Errc::config_parse, "no [run:LABEL] section");
  std::set<std::string> labels;
  for (const auto& r : runs) {
    if (r.label.empty()) throw Error(Errc::config_parse, "empty run label");
    if (!labels.insert(r.label).second) throw Error(Errc::config_parse, "duplicate run label '" + r.label + "'");
    if (r.repeats < 1) throw Error(Errc::config_parse, "repeats must be >= 1 for '" + r.label + "'");
  }
}

ExperimentConfig parse_experiment_config(std::istream& in, const fs::path& base_dir) {
  std::ostringstream text;
  text << in.rdbuf();
  pt::ptree tree;
  try {
    std::istringstream parse_in(text.str());
    pt::read_ini(parse_in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw Error(Errc::config_parse, e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [name, node] : tree)
    if (node.empty() && !node.data().empty()) throw Error(Errc::config_parse, "key '" + name + "' outside of a section");

  // The ini reader drops sections without keys, so take the section order from the text.
  std::vector<std::string> names;
  {
    std::istringstream lines(text.str());
    std::string line;
    while (std::getline(lines, line)) {
      const auto first = line.find_first_not_of(" \t\r");
      const auto last = line.find_last_not_of(" \t\r");
      if (first == std::string::npos || line[first] != '[' || line[last] != ']') continue;
      names.push_back(line.substr(first + 1, last - first - 1));
    }
  }
  const pt::ptree no_keys;

  ExperimentConfig c;
  auto synth_keys = keys_of(to_key_values(SynthConfig{}));
  synth_keys.insert("path");
  auto run_keys = keys_of(to_key_values(TrainConfig{}));
  run_keys.erase("seed");
  run_keys.insert("repeats");

  for (const auto& name : names) {
    const auto found = tree.find(name);
    const pt::ptree& section = found == tree.not_found() ? no_keys : found->second;
    if (name == "experiment") {
      const auto kv = section_values(section, name, {"output", "seed"});
      c.output_dir = resolve(lookup_or(kv, "output", c.output_dir.string()), base_dir);
      c.base_seed = to_u64(lookup_or(kv, "seed", "0"), "experiment.seed");
    } else if (name == "dataset") {
      auto kv = section_values(section, name, synth_keys);
      const std::string path = lookup_or(kv, "path", "");
      if (!path.empty()) {
        if (kv.size() > 1) throw Error(Errc::config_parse, "[dataset] takes either path or generator keys");
        c.dataset_path = resolve(path, base_dir);
      } else {
        c.synth = as_config_error("[dataset]", [&] { return synth_config_from(kv); });
      }
    } else if (name == "cocos") {
      const auto kv = section_values(section, name, {"enabled", "epsilon", "batch_size", "seed"});
      const std::string enabled = lookup_or(kv, "enabled", "on");
      if (enabled != "on" && enabled != "off") throw Error(Errc::config_parse, "cocos.enabled must be on or off");
      c.cocos_enabled = enabled == "on";
      c.cocos.epsilon = parse_double(lookup_or(kv, "epsilon", format_double(c.cocos.epsilon)));
      c.cocos.batch_size = to_u64(lookup_or(kv, "batch_size", std::to_string(c.cocos.batch_size)), "cocos.batch_size");
      c.cocos.seed = to_u64(lookup_or(kv, "seed", "0"), "cocos.seed");
      if (!(c.cocos.epsilon >= 0.0) || c.cocos.batch_size < 1)
        throw Error(Errc::config_parse, "cocos needs epsilon >= 0 and batch_size >= 1");
    } else if (name.rfind("run:", 0) == 0) {
      const auto kv = section_values(section, name, run_keys);
      RunSpec r;
      r.label = name.substr(4);
      r.repeats = to_u64(lookup_or(kv, "repeats", "1"), name + ".repeats");
      r.train = as_config_error("[" + name + "]", [&] { return train_config_from(kv); });
      c.runs.push_back(std::move(r));
    } else {
      throw Error(Errc::config_parse, "unknown section [" + name + "]");
    }
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot read " + path.string());
  return parse_experiment_config(in, path.parent_path());
}

SynthDataset load_or_generate(const ExperimentConfig& config) {
  return config.dataset_path ? load_dataset(*config.dataset_path) : generate(config.synth);
}

const std::vector<std::string>& metric_names(Direction d) {
  static const std::vector<std::string> i2t{"R@1", "R@5", "R@10", "average_recall", "mAP@5", "rsum"};
  static const std::vector<std::string> t2i{"R@1", "R@5", "R@10", "average_recall", "rsum"};
  return d == Direction::i2t ? i2t : t2i;
}

double metric_value(const RetrievalMetrics& m, const std::string& name) {
  if (name == "R@1") return 100.0 * m.recall_at.at(1);
  if (name == "R@5") return 100.0 * m.recall_at.at(5);
  if (name == "R@10") return 100.0 * m.recall_at.at(10);
  if (name == "average_recall") return 100.0 * m.average_recall;
  if (name == "mAP@5") return 100.0 * m.map_at_5;
  if (name == "rsum") return 100.0 * m.rsum;
  throw Error(Errc::invalid_argument, "unknown metric '" + name + "'");
}

// ---------------------------------------------------------------------------
// Run records

namespace {

void put_metrics(KeyValues& kv, const RetrievalMetrics& m) {
  const std::string p = std::string(to_string(m.direction)) + ".";
  for (int k : {1, 5, 10}) kv.emplace_back(p + "recall@" + std::to_string(k), format_double(m.recall_at.at(k)));
  kv.emplace_back(p + "map@5", format_double(m.map_at_5));
  kv.emplace_back(p + "rsum", format_double(m.rsum));
  kv.emplace_back(p + "average_recall", format_double(m.average_recall));
  kv.emplace_back(p + "queries", std::to_string(m.num_queries));
}

RetrievalMetrics get_metrics(const KeyValues& kv, Direction d) {
  RetrievalMetrics m;
  m.direction = d;
  const std::string p = std::string(to_string(d)) + ".";
  for (int k : {1, 5, 10}) m.recall_at[k] = parse_double(lookup(kv, p + "recall@" + std::to_string(k)));
  m.map_at_5 = parse_double(lookup(kv, p + "map@5"));
  m.rsum = parse_double(lookup(kv, p + "rsum"));
  m.average_recall = parse_double(lookup(kv, p + "average_recall"));
  m.num_queries = to_u64(lookup(kv, p + "queries"), p + "queries");
  return m;
}

}  // namespace

KeyValues to_key_values(const RunRecord& r) {
  KeyValues kv{
      {"label", r.label},
      {"loss", std::string(to_string(r.loss))},
      {"repetition", std::to_string(r.repetition)},
      {"seed", std::to_string(r.seed)},
      {"best_epoch", std::to_string(r.best_epoch)},
      {"validation_rsum", format_double(r.validation_rsum)},
  };
  put_metrics(kv, r.test.i2t);
  put_metrics(kv, r.test.t2i);
  return kv;
}

RunRecord run_record_from(const KeyValues& kv) {
  RunRecord r;
  r.label = lookup(kv, "label");
  r.loss = as_config_error("loss", [&] { return parse_loss_kind(lookup(kv, "loss")); });
  r.repetition = to_u64(lookup(kv, "repetition"), "repetition");
  r.seed = to_u64(lookup(kv, "seed"), "seed");
  r.best_epoch = to_u64(lookup(kv, "best_epoch"), "best_epoch");
  r.validation_rsum = parse_double(lookup(kv, "validation_rsum"));
  r.test.i2t = get_metrics(kv, Direction::i2t);
  r.test.t2i = get_metrics(kv, Direction::t2i);
  return r;
}

std::vector<RunRecord> collect_run_records(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::io_failure, "not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == "metrics.txt") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> out;
  for (const auto& f : files) out.push_back(run_record_from(read_key_values(f)));
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation and formatting

std::vector<AggregateRow> aggregate(const std::vector<RunRecord>& records) {
  std::vector<std::string> labels;
  for (const auto& r : records)
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);

  std::vector<AggregateRow> rows;
  for (const auto& label : labels) {
    std::vector<const RunRecord*> group;
    for (const auto& r : records)
      if (r.label == label) group.push_back(&r);
    std::sort(group.begin(), group.end(), [](auto* a, auto* b) { return a->repetition < b->repetition; });
    for (Direction d : {Direction::i2t, Direction::t2i}) {
      for (const auto& name : metric_names(d)) {
        std::vector<double> v;
        for (const auto* r : group) v.push_back(metric_value(d == Direction::i2t ? r->test.i2t : r->test.t2i, name));
        rows.push_back({label, std::string(to_string(d)), name, mean_std(v)});
      }
    }
    std::vector<double> total;
    for (const auto* r : group) total.push_back(r->test.rsum());
    rows.push_back({label, "all", "rsum", mean_std(total)});
  }
  return rows;
}

std::string format_report_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  os << "label,direction,metric,mean,std\n";
  for (const auto& r : rows)
    os << r.label << ',' << r.direction << ',' << r.metric << ',' << format_double(r.value.mean) << ','
       << format_double(r.value.std) << '\n';
  return os.str();
}

std::string format_report_table(const std::vector<RunRecord>& records, const std::vector<AggregateRow>& rows) {
  std::ostringstream os;
  std::vector<std::string> labels;
  for (const auto& r : rows)
    if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
  for (const auto& label : labels) {
    std::vector<std::pair<std::size_t, std::uint64_t>> seeds;
    for (const auto& r : records)
      if (r.label == label) seeds.emplace_back(r.repetition, r.seed);
    std::sort(seeds.begin(), seeds.end());
    os << "# " << label << " seeds:";
    for (const auto& [rep, seed] : seeds) os << ' ' << seed;
    os << '\n';
  }

  const std::vector<std::string> columns{"R@1", "R@5", "R@10", "average_recall", "mAP@5", "rsum"};
  std::size_t label_w = 5;
  for (const auto& l : labels) label_w = std::max(label_w, l.size());
  auto cell = [](const std::string& s) {
    std::ostringstream c;
    c << std::setw(18) << s;
    return c.str();
  };
  os << std::left << std::setw(static_cast<int>(label_w)) << "label" << std::right << "  dir ";
  for (const auto& c : columns) os << cell(c == "average_recall" ? "AR" : c);
  os << '\n';
  for (const auto& label : labels) {
    for (const std::string dir : {"i2t", "t2i", "all"}) {
      os << std::left << std::setw(static_cast<int>(label_w)) << label << std::right << "  " << std::setw(3) << dir
         << ' ';
      for (const auto& c : columns) {
        auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& r) {
          return r.label == label && r.direction == dir && r.metric == c;
        });
        if (it == rows.end()) {
          os << cell("-");
          continue;
        }
        std::ostringstream v;
        v << std::fixed << std::setprecision(2) << it->value.mean << " +/- " << it->value.std;
        os << cell(v.str());
      }
      os << '\n';
    }
  }
  return os.str();
}

std::string format_cocos_csv(const std::vector<std::string>& labels, const std::vector<CocosReport>& reports) {
  std::ostringstream os;
  os << "label,loss,direction,statistic,mean,std,batches\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    for (const auto& s : r.statistics)
      os << labels.at(i) << ',' << to_string(r.loss) << ',' << to_string(r.direction) << ',' << s.name << ','
         << format_double(s.summary.mean) << ',' << format_double(s.summary.std) << ',' << r.num_batches() << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Runner

namespace {

struct Job {
  const RunSpec* run;
  std::size_t repetition;
};

}  // namespace

SingleRun run_single(const ExperimentConfig& config, const SynthDataset& dataset, const RunSpec& run,
                     std::size_t repetition, const fs::path& dir) {
  TrainConfig tc = run.train;
  tc.seed = config.base_seed + repetition;
  fs::create_directories(dir);

  const TrainResult result = train(dataset, tc);
  write_text(dir / "train.log", format_training_log(result.log));
  write_key_values(dir / "config.txt", to_key_values(tc));
  save_checkpoint(result.best, dir / "checkpoint.txt");

  SingleRun out;
  RunRecord& r = out.record;
  r.label = run.label;
  r.loss = tc.loss;
  r.repetition = repetition;
  r.seed = tc.seed;
  r.best_epoch = result.best.epoch;
  r.validation_rsum = result.best.validation_rsum;
  r.test = evaluate_split(result.best.encoders, dataset.test);
  write_key_values(dir / "metrics.txt", to_key_values(r));

  if (config.cocos_enabled && repetition == 0) {
    CocosConfig cc = config.cocos;
    cc.params = tc.params;
    KeyValues kv;
    for (Direction d : {Direction::i2t, Direction::t2i}) {
      out.cocos.push_back(cocos_protocol(result.best.encoders, dataset, tc.loss, d, cc));
      for (const auto& [k, v] : to_key_values(out.cocos.back()))
        kv.emplace_back(std::string(to_string(d)) + "." + k, v);
    }
    write_key_values(dir / "cocos.txt", kv);
  }
  return out;
}

ExperimentReport run_experiment(const ExperimentConfig& config, const ExperimentOptions& options) {
  config.validate();
  const SynthDataset dataset = load_or_generate(config);
  fs::create_directories(config.output_dir);

  std::vector<Job> jobs;
  for (const auto& run : config.runs)
    for (std::size_t rep = 0; rep < run.repeats; ++rep) jobs.push_back({&run, rep});

  std::vector<SingleRun> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const auto& job = jobs[i];
        results[i] = run_single(config, dataset, *job.run, job.repetition,
                                config.output_dir / "runs" / job.run->label / ("rep" + std::to_string(job.repetition)));
        if (options.log) {
          std::lock_guard lock(log_mutex);
          *options.log << jobs[i].run->label << " rep " << jobs[i].repetition << ": test rsum "
                       << std::fixed << std::setprecision(2) << results[i].record.test.rsum() << std::defaultfloat
                       << '\n';
        }
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.jobs, jobs.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentReport report;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    report.records.push_back(results[i].record);
    for (auto& c : results[i].cocos) {
      report.cocos.push_back(std::move(c));
      report.cocos_labels.push_back(jobs[i].run->label);
    }
  }
  report.rows = aggregate(report.records);
  write_text(config.output_dir / "report.csv", format_report_csv(report.rows));
  write_text(config.output_dir / "report.txt", format_report_table(report.records, report.rows));
  if (config.cocos_enabled) write_text(config.output_dir / "cocos.csv", format_cocos_csv(report.cocos_labels, report.cocos));
  return report;
}

}  // namespace cocoslab
