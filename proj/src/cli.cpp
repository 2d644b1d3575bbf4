#include "cocoslab/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>

#include "cocoslab/experiment.hpp"
#include "cocoslab/gradcheck.hpp"

namespace cocoslab {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("COCOS_LAB_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t pos = 0;
    const auto s = std::stoull(v, &pos);
    if (v[pos] != '\0' || v[0] == '-') throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw UsageError(std::string("COCOS_LAB_SEED is not a non-negative integer: '") + v + "'");
  }
}

/// --seed wins over COCOS_LAB_SEED, which wins over the config file.
void apply_seed(ExperimentConfig& c, const std::optional<std::uint64_t>& flag) {
  if (flag)
    c.base_seed = *flag;
  else if (auto e = env_seed())
    c.base_seed = *e;
}

void print_metrics(std::ostream& out, const SplitMetrics& m) {
  out << "dir " << std::setw(9) << "R@1" << std::setw(9) << "R@5" << std::setw(9) << "R@10" << std::setw(9) << "AR"
      << std::setw(9) << "mAP@5" << std::setw(9) << "rsum" << '\n';
  out << std::fixed << std::setprecision(2);
  for (const auto* r : {&m.i2t, &m.t2i}) {
    out << to_string(r->direction);
    for (const std::string name : {"R@1", "R@5", "R@10", "average_recall", "mAP@5", "rsum"}) {
      if (name == "mAP@5" && r->direction == Direction::t2i)
        out << std::setw(9) << "-";
      else
        out << std::setw(9) << metric_value(*r, name);
    }
    out << '\n';
  }
  out << "rsum " << m.rsum() << '\n' << std::defaultfloat;
}

const SynthSplit& pick_split(const SynthDataset& ds, const std::string& name) {
  if (name == "train") return ds.train;
  if (name == "val") return ds.val;
  return ds.test;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contrastive loss comparison lab on synthetic image-caption data"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "experiment config; its [dataset] section is used")->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--seed", seed, "generator seed");
  bool gen_strip = false;
  gen->add_flag("--strip-identifiers", gen_strip, "zero the identifier block of the test split");

  auto* train_cmd = app.add_subcommand("train", "train a single run");
  train_cmd->add_option("--config", config_path, "experiment config")->required();
  train_cmd->add_option("--out", out_dir, "run directory")->required();
  train_cmd->add_option("--seed", seed, "training seed");
  std::string label;
  train_cmd->add_option("--label", label, "run section to train (default: the first)");

  auto* eval = app.add_subcommand("eval", "retrieval metrics of a checkpoint");
  std::string checkpoint_path;
  std::string data_dir;
  std::string split_name = "test";
  bool eval_strip = false;
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--split", split_name, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval->add_flag("--strip-identifiers", eval_strip, "zero the test identifiers before evaluating");

  auto* cocos = app.add_subcommand("cocos", "contributing-sample counts of a checkpoint");
  std::string loss_name;
  CocosConfig cocos_cfg;
  cocos->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  cocos->add_option("--data", data_dir, "dataset directory")->required();
  cocos->add_option("--loss", loss_name, "triplet, triplet_sh, ntxent or smooth_ap")->required();
  cocos->add_option("--epsilon", cocos_cfg.epsilon, "weight threshold");
  cocos->add_option("--batch-size", cocos_cfg.batch_size, "pairs (or images for smooth_ap) per batch");
  cocos->add_option("--seed", seed, "shuffle seed");
  cocos->add_option("--alpha", cocos_cfg.params.alpha, "hinge margin");
  cocos->add_option("--tau-ntxent", cocos_cfg.params.tau_ntxent, "softmax temperature");
  cocos->add_option("--tau-smooth", cocos_cfg.params.tau_smooth, "rank sigmoid temperature");

  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of all four losses");
  GradCheckOptions gc;
  grad->add_option("--trials", gc.trials, "random instances per loss and dimension");
  grad->add_option("--seed", seed, "instance seed");
  grad->add_option("--tolerance", gc.tolerance, "relative error bound");

  auto* report = app.add_subcommand("report", "aggregate run directories into one table");
  report->add_option("--out", out_dir, "directory holding run directories")->required();

  auto* run = app.add_subcommand("run", "run a full experiment");
  run->add_option("--config", config_path, "experiment config")->required();
  run->add_option("--out", out_dir, "output directory (overrides the config)");
  run->add_option("--jobs", jobs, "concurrent runs")->check(CLI::PositiveNumber);
  run->add_option("--seed", seed, "base seed");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n' << "run with --help for usage\n";
    return 1;
  }

  try {
    if (gen->parsed()) {
      SynthConfig sc;
      if (!config_path.empty()) {
        const auto c = load_experiment_config(config_path);
        if (c.dataset_path) throw UsageError("config names a dataset path; nothing to generate");
        sc = c.synth;
      }
      if (seed) sc.seed = *seed;
      SynthDataset ds = generate(sc);
      if (gen_strip) ds = strip_identifiers(std::move(ds));
      save_dataset(ds, out_dir);
      out << "wrote " << ds.train.num_images() << '/' << ds.val.num_images() << '/' << ds.test.num_images()
          << " tuples to " << out_dir << '\n';
    } else if (train_cmd->parsed()) {
      ExperimentConfig c = load_experiment_config(config_path);
      apply_seed(c, seed);
      auto it = label.empty() ? c.runs.begin()
                              : std::find_if(c.runs.begin(), c.runs.end(), [&](const RunSpec& r) { return r.label == label; });
      if (it == c.runs.end()) throw UsageError("no run labelled '" + label + "'");
      const auto ds = load_or_generate(c);
      const auto result = run_single(c, ds, *it, 0, out_dir);
      out << "best epoch " << result.record.best_epoch << ", validation rsum " << result.record.validation_rsum
          << '\n';
      print_metrics(out, result.record.test);
    } else if (eval->parsed()) {
      const auto cp = load_checkpoint(checkpoint_path);
      SynthDataset ds = load_dataset(data_dir);
      if (eval_strip) ds = strip_identifiers(std::move(ds));
      print_metrics(out, evaluate_split(cp.encoders, pick_split(ds, split_name)));
    } else if (cocos->parsed()) {
      LossKind kind;
      try {
        kind = parse_loss_kind(loss_name);
      } catch (const Error& e) {
        throw UsageError(e.what());
      }
      if (seed) cocos_cfg.seed = *seed;
      const auto cp = load_checkpoint(checkpoint_path);
      const auto ds = load_dataset(data_dir);
      for (Direction d : {Direction::i2t, Direction::t2i}) {
        KeyValues kv;
        for (auto& [k, v] : to_key_values(cocos_protocol(cp.encoders, ds, kind, d, cocos_cfg)))
          if (k.find(".per_batch") == std::string::npos) kv.emplace_back(k, v);
        write_key_values(out, kv);
        out << '\n';
      }
    } else if (grad->parsed()) {
      if (seed) gc.seed = *seed;
      bool ok = true;
      for (const auto& e : run_gradcheck_suite(gc)) {
        out << std::left << std::setw(11) << to_string(e.kind) << std::right << " d=" << std::setw(2) << e.dim
            << "  max_rel " << std::setw(12) << e.result.max_rel_error << "  skipped " << e.result.skipped << "  "
            << (e.result.pass ? "PASS" : "FAIL") << '\n';
        if (!e.result.failure.empty()) out << "  " << e.result.failure << '\n';
        ok = ok && e.result.pass;
      }
      if (!ok) {
        err << "gradient check failed\n";
        return 2;
      }
    } else if (report->parsed()) {
      if (!fs::is_directory(out_dir)) throw UsageError("not a directory: " + out_dir);
      const auto records = collect_run_records(out_dir);
      if (records.empty()) throw UsageError("no run directories under " + out_dir);
      out << format_report_table(records, aggregate(records));
    } else if (run->parsed()) {
      ExperimentConfig c = load_experiment_config(config_path);
      apply_seed(c, seed);
      if (!out_dir.empty()) c.output_dir = out_dir;
      ExperimentOptions opts;
      opts.jobs = jobs;
      opts.log = &err;
      const auto r = run_experiment(c, opts);
      out << format_report_table(r.records, r.rows);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace cocoslab
