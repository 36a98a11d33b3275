#include "deepfeat/cli/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <unistd.h>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "deepfeat/common/error.hpp"
#include "deepfeat/data/dataset.hpp"
#include "deepfeat/llm/bpe.hpp"
#include "deepfeat/llm/features.hpp"
#include "deepfeat/llm/gpt2.hpp"
#include "deepfeat/model/deepfeat.hpp"
#include "deepfeat/rocket/rocket.hpp"
#include "deepfeat/train/trainer.hpp"

namespace deepfeat::cli {

namespace {

namespace fs = std::filesystem;
using train::TrainConfig;

/// Usage problems detected after CLI11 parsing (bad combinations, bad files).
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_matrix_csv(const fs::path& path, const nn::Tensor<float>& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  const std::size_t width = m.dim(1);
  for (std::size_t j = 0; j < width; ++j) out << (j ? "," : "") << 'f' << j;
  out << '\n' << std::setprecision(9);
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    const float* row = m.data() + i * width;
    for (std::size_t j = 0; j < width; ++j) {
      if (j) out << ',';
      out << row[j];
    }
    out << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

/// Flags shared by train and ablate; applied on top of an optional JSON config.
struct TrainFlags {
  std::string config_file;
  std::string dataset;
  std::size_t epochs = 0;
  std::string mode;
  std::string selection;
  std::uint64_t seed = 0;
  std::size_t batch_size = 0;
  double lr = 0.0;
  double decay_rate = 0.0;
  std::size_t decay_steps = 0;
  double gamma = 0.0;
  double alpha = 0.0;
  std::string weights;
  std::uint64_t rocket_seed = 0;
  std::string vocab;
  std::string cache_dir;
  int digits = 0;
  std::string separator;

  std::map<std::string, CLI::Option*> opts;

  void add_to(CLI::App& app) {
    opts["config"] = app.add_option("--config", config_file, "JSON training config; flags override its values")
                         ->check(CLI::ExistingFile);
    opts["dataset"] = app.add_option("--dataset", dataset, "dataset directory (manifest.json + data.csv)");
    opts["epochs"] = app.add_option("--epochs", epochs, "training epochs")->check(CLI::Range(1, 1000000));
    opts["mode"] = app.add_option("--mode", mode, "ablation mode")
                       ->check(CLI::IsMember({"full", "rf", "pf", "rf_pf", "dc"}));
    opts["selection"] = app.add_option("--selection", selection, "checkpoint selection policy")
                            ->check(CLI::IsMember({"val_best", "test_best", "last"}));
    opts["seed"] = app.add_option("--seed", seed, "seed for initialization, shuffling and dropout");
    opts["batch"] = app.add_option("--batch-size", batch_size, "mini-batch size")->check(CLI::Range(1, 1 << 20));
    opts["lr"] = app.add_option("--lr", lr, "initial learning rate")->check(CLI::PositiveNumber);
    opts["decay_rate"] = app.add_option("--decay-rate", decay_rate, "inverse-time decay rate")->check(CLI::NonNegativeNumber);
    opts["decay_steps"] = app.add_option("--decay-steps", decay_steps, "steps per decay stair")->check(CLI::Range(1, 1 << 30));
    opts["gamma"] = app.add_option("--focal-gamma", gamma, "focal loss gamma")->check(CLI::NonNegativeNumber);
    opts["alpha"] = app.add_option("--focal-alpha", alpha, "focal loss alpha")->check(CLI::PositiveNumber);
    opts["weights"] = app.add_option("--weights", weights, "GPT-2 weights: TSAR path or synthetic:<seed>");
    opts["rocket_seed"] = app.add_option("--rocket-seed", rocket_seed, "seed of the random kernel bank");
    opts["vocab"] = app.add_option("--vocab", vocab, "directory with vocab.json and merges.txt");
    opts["cache_dir"] = app.add_option("--cache-dir", cache_dir, "feature cache directory (default DEEPFEAT_CACHE_DIR)");
    opts["digits"] = app.add_option("--digits", digits, "fractional digits when serializing values")->check(CLI::Range(0, 17));
    opts["separator"] = app.add_option("--separator", separator, "separator between serialized values");
  }

  bool given(const char* name) const { return opts.at(name)->count() > 0; }

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!config_file.empty()) {
      try {
        cfg = TrainConfig::from_json(nlohmann::json::parse(read_text(config_file)));
      } catch (const nlohmann::json::exception& e) {
        throw UsageError(config_file + ": " + e.what());
      }
    }
    if (given("dataset")) cfg.dataset = dataset;
    if (given("epochs")) cfg.epochs = epochs;
    if (given("mode")) cfg.mode = model::parse_ablation_mode(mode);
    if (given("selection")) cfg.selection = train::parse_selection_policy(selection);
    if (given("seed")) cfg.seed = seed;
    if (given("batch")) cfg.batch_size = batch_size;
    if (given("lr")) cfg.schedule.lr0 = lr;
    if (given("decay_rate")) cfg.schedule.decay_rate = decay_rate;
    if (given("decay_steps")) cfg.schedule.decay_steps = decay_steps;
    if (given("gamma")) cfg.focal_gamma = gamma;
    if (given("alpha")) cfg.focal_alpha = alpha;
    if (given("weights")) cfg.features.weights = weights;
    if (given("rocket_seed")) cfg.features.rocket_seed = rocket_seed;
    if (given("vocab")) cfg.features.vocab_dir = vocab;
    if (given("cache_dir")) cfg.features.cache_dir = cache_dir;
    if (given("digits")) cfg.features.serialization.fractional_digits = digits;
    if (given("separator")) cfg.features.serialization.separator = separator;
    if (cfg.dataset.empty()) throw UsageError("--dataset is required (flag or config file)");
    cfg.validate();
    return cfg;
  }
};

model::BranchSet union_of(const std::vector<model::AblationMode>& modes) {
  model::BranchSet u;
  for (auto m : modes) {
    const auto b = model::branches_for(m);
    u.global |= b.global;
    u.local |= b.local;
    u.rocket |= b.rocket;
    u.llm |= b.llm;
  }
  return u;
}

std::vector<model::AblationMode> parse_modes(const std::string& list) {
  std::vector<model::AblationMode> modes;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto m = model::parse_ablation_mode(item);
    if (std::find(modes.begin(), modes.end(), m) == modes.end()) modes.push_back(m);
  }
  if (modes.empty()) throw UsageError("--modes lists no ablation mode");
  return modes;
}

void print_table(std::ostream& out, const train::AblationTable& table) {
  out << std::left << std::setw(10) << "variant" << std::setw(16) << "accuracy" << "macro_f1\n";
  for (const auto& row : table.rows) {
    const auto a = train::mean_std(row.accuracy);
    const auto f = train::mean_std(row.macro_f1);
    std::ostringstream as, fs_;
    as << std::fixed << std::setprecision(1) << 100 * a.mean << " +- " << 100 * a.std;
    fs_ << std::fixed << std::setprecision(1) << 100 * f.mean << " +- " << 100 * f.std;
    out << std::setw(10) << train::table_label(row.mode) << std::setw(16) << as.str() << fs_.str() << '\n';
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DeepFeat IoT time-series classifier", "deepfeat"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "deepfeat 1.0.0");
  const train::Logger log = [&err](const std::string& line) { err << line << std::endl; };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic labelled dataset");
  std::string synth_spec = "default";
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--spec", synth_spec, "JSON spec file, or 'default'");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output dataset directory")->required();

  // extract
  auto* extract = app.add_subcommand("extract", "write one branch's feature matrix as CSV");
  std::string ex_dataset, ex_branch, ex_weights, ex_out, ex_vocab, ex_checkpoint;
  std::uint64_t ex_seed = 0;
  int ex_digits = 3;
  std::string ex_sep = ", ";
  extract->add_option("--dataset", ex_dataset, "dataset directory")->required();
  extract->add_option("--branch", ex_branch, "rf, pf, global or local")->required();
  extract->add_option("--weights", ex_weights, "GPT-2 weights for pf: TSAR path or synthetic:<seed>");
  extract->add_option("--out", ex_out, "output CSV")->required();
  extract->add_option("--seed", ex_seed, "kernel-bank seed (rf) or initialization seed (global, local)");
  extract->add_option("--checkpoint", ex_checkpoint, "trained checkpoint for global/local branches");
  extract->add_option("--vocab", ex_vocab, "directory with vocab.json and merges.txt");
  extract->add_option("--digits", ex_digits, "fractional digits (pf)")->check(CLI::Range(0, 17));
  extract->add_option("--separator", ex_sep, "value separator (pf)");

  // train
  auto* trn = app.add_subcommand("train", "train a model and write checkpoint, history and report");
  TrainFlags train_flags;
  train_flags.add_to(*trn);
  std::string train_out;
  trn->add_option("--out", train_out, "output directory")->required();

  // eval
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string ev_checkpoint, ev_dataset, ev_split = "test", ev_out, ev_cache;
  evl->add_option("--checkpoint", ev_checkpoint, "checkpoint directory")->required();
  evl->add_option("--dataset", ev_dataset, "dataset directory (default: the one used for training)");
  evl->add_option("--split", ev_split, "test (the training run's held-out split) or all")
      ->check(CLI::IsMember({"test", "all"}));
  evl->add_option("--out", ev_out, "write the JSON report here as well");
  evl->add_option("--cache-dir", ev_cache, "feature cache directory");

  // ablate
  auto* abl = app.add_subcommand("ablate", "repeated trainings per ablation mode");
  TrainFlags ablate_flags;
  ablate_flags.add_to(*abl);
  std::string ab_out, ab_modes = "rf,pf,rf_pf,dc,full";
  std::size_t ab_runs = 10, ab_jobs = 1;
  abl->add_option("--out", ab_out, "output directory")->required();
  abl->add_option("--modes", ab_modes, "comma-separated modes");
  abl->add_option("--runs", ab_runs, "runs per mode")->check(CLI::Range(2, 1000));
  abl->add_option("--jobs", ab_jobs, "parallel runs")->check(CLI::Range(1, 256));

  // report
  auto* rep = app.add_subcommand("report", "summarize run CSVs: mean, std and Cohen's d");
  std::vector<std::string> rep_runs;
  std::string rep_out;
  rep->add_option("--runs", rep_runs, "runs CSV files (variant,run,seed,accuracy,macro_f1)")
      ->required()
      ->check(CLI::ExistingFile);
  rep->add_option("--out", rep_out, "directory for ablation.csv and cohens_d.csv");

  // describe
  auto* desc = app.add_subcommand("describe", "print length, sample and class counts");
  std::string desc_dataset;
  desc->add_option("--dataset", desc_dataset, "dataset directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*synth) {
      const data::SynthSpec spec =
          synth_spec == "default" ? data::SynthSpec::defaults() : data::SynthSpec::from_json(read_text(synth_spec));
      const data::Dataset ds = data::synth_generate(spec, synth_seed);
      data::save_dataset(ds, synth_out);
      out << "wrote " << ds.size() << " series of length " << spec.length << " in " << ds.num_classes()
          << " classes to " << synth_out << '\n';
    } else if (*extract) {
      if (ex_branch != "rf" && ex_branch != "pf" && ex_branch != "global" && ex_branch != "local") {
        throw UsageError("--branch must be one of rf, pf, global, local");
      }
      if (ex_branch == "pf" && ex_weights.empty()) throw UsageError("--branch pf requires --weights");
      const data::Dataset ds = data::load_dataset(ex_dataset);
      nn::Tensor<float> features;
      if (ex_branch == "rf" || ex_branch == "pf") {
        train::FeatureOptions opt;
        opt.rocket_seed = ex_seed;
        opt.weights = ex_weights;
        opt.vocab_dir = ex_vocab;
        opt.serialization = {ex_digits, ex_sep};
        opt.serialization.validate();
        model::BranchSet b;
        (ex_branch == "rf" ? b.rocket : b.llm) = true;
        auto store = train::compute_features(ds, b, opt, log);
        features = ex_branch == "rf" ? std::move(store.rocket) : std::move(store.llm);
      } else {
        std::unique_ptr<model::DeepFeatModel<float>> owned;
        model::DeepFeatModel<float>* net = nullptr;
        train::Checkpoint ck;
        if (!ex_checkpoint.empty()) {
          ck = train::load_checkpoint(ex_checkpoint);
          net = ck.model.get();
        } else {
          model::ModelConfig mc;
          mc.classes = std::max<std::size_t>(2, ds.num_classes());
          owned = std::make_unique<model::DeepFeatModel<float>>(mc);
          owned->init(ex_seed);
          net = owned.get();
          log("note: no --checkpoint given; using freshly initialized branch weights (seed " + std::to_string(ex_seed) + ")");
        }
        const bool global = ex_branch == "global";
        if ((global && !net->global()) || (!global && !net->local())) {
          throw UsageError("the checkpoint's mode has no " + ex_branch + " branch");
        }
        const std::size_t steps = ds.samples.front().values.size();
        const std::size_t width = global ? net->config().global_width() : net->config().local_width();
        features = nn::Tensor<float>({ds.size(), width});
        constexpr std::size_t kChunk = 64;
        for (std::size_t s = 0; s < ds.size(); s += kChunk) {
          const std::size_t n = std::min(kChunk, ds.size() - s);
          nn::Tensor<float> x({n, steps, 1});
          for (std::size_t b = 0; b < n; ++b) {
            const auto& v = ds.samples[s + b].values;
            std::transform(v.begin(), v.end(), x.data() + b * steps, [](double d) { return static_cast<float>(d); });
          }
          const auto f = global ? net->global()->forward(x) : net->local()->forward(x);
          std::copy_n(f.data(), f.size(), features.data() + s * width);
        }
      }
      write_matrix_csv(ex_out, features);
      out << "wrote " << features.dim(0) << " x " << features.dim(1) << " features to " << ex_out << '\n';
    } else if (*trn) {
      TrainConfig cfg = train_flags.resolve();
      cfg.output_dir = train_out;
      const data::Dataset ds = data::load_dataset(cfg.dataset);
      const auto features = train::compute_features(ds, model::branches_for(cfg.mode), cfg.features, log);
      const auto plan = train::make_split_plan(ds, cfg);
      auto result = train::train(cfg, ds, features, plan, log);
      const fs::path dir(train_out);
      fs::create_directories(dir);
      train::save_checkpoint(dir / "checkpoint", *result.model, cfg, ds.classes, result.selected_epoch);
      train::write_history_csv(dir / "history.csv", result.history);
      nlohmann::json summary = train::report_to_json(result.test_report, ds.classes);
      summary["mode"] = model::to_string(cfg.mode);
      summary["selection"] = train::to_string(cfg.selection);
      summary["selected_epoch"] = result.selected_epoch;
      summary["epochs"] = cfg.epochs;
      summary["train_seconds"] = result.seconds;
      summary["split"] = {{"train", plan.train.size()}, {"val", plan.val.size()}, {"test", plan.test.size()}};
      std::ofstream(dir / "report.json") << summary.dump(2) << '\n';
      out << summary.dump(2) << '\n';
    } else if (*evl) {
      train::Checkpoint ck = train::load_checkpoint(ev_checkpoint);
      if (!ev_cache.empty()) ck.config.features.cache_dir = ev_cache;
      const fs::path dataset_dir = ev_dataset.empty() ? ck.config.dataset : fs::path(ev_dataset);
      const data::Dataset ds = data::load_dataset(dataset_dir);
      if (ds.classes != ck.classes) throw UsageError("dataset classes differ from the checkpoint's classes");
      const auto features = train::compute_features(ds, model::branches_for(ck.model->config().mode), ck.config.features, log);
      std::vector<std::size_t> indices;
      if (ev_split == "all") {
        indices.resize(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) indices[i] = i;
      } else {
        indices = train::make_split_plan(ds, ck.config).test;
      }
      const auto report = train::evaluate(*ck.model, ds, features, indices);
      nlohmann::json j = train::report_to_json(report, ds.classes);
      j["split"] = ev_split;
      j["samples"] = indices.size();
      if (!ev_out.empty()) std::ofstream(ev_out) << j.dump(2) << '\n';
      out << j.dump(2) << '\n';
    } else if (*abl) {
      TrainConfig cfg = ablate_flags.resolve();
      const auto modes = parse_modes(ab_modes);
      const data::Dataset ds = data::load_dataset(cfg.dataset);
      const auto features = train::compute_features(ds, union_of(modes), cfg.features, log);
      const auto table = train::ablation_run(cfg, ds, features, modes, ab_runs, ab_jobs, log);
      const fs::path dir(ab_out);
      fs::create_directories(dir);
      train::write_ablation_csv(dir / "ablation.csv", table);
      train::write_runs_csv(dir / "runs.csv", table);
      train::write_cohens_d_csv(dir / "cohens_d.csv", table);
      print_table(out, table);
    } else if (*rep) {
      train::AblationTable merged;
      for (const auto& path : rep_runs) {
        const auto t = train::read_runs_csv(path);
        merged.runs.insert(merged.runs.end(), t.runs.begin(), t.runs.end());
      }
      // Regroup rows from the merged runs.
      for (const auto& r : merged.runs) {
        auto it = std::find_if(merged.rows.begin(), merged.rows.end(),
                               [&](const train::AblationRow& row) { return row.mode == r.mode; });
        if (it == merged.rows.end()) {
          merged.rows.push_back({r.mode, {}, {}});
          it = std::prev(merged.rows.end());
        }
        it->accuracy.push_back(r.accuracy);
        it->macro_f1.push_back(r.macro_f1);
      }
      print_table(out, merged);
      if (!rep_out.empty()) {
        fs::create_directories(rep_out);
        train::write_ablation_csv(fs::path(rep_out) / "ablation.csv", merged);
        train::write_cohens_d_csv(fs::path(rep_out) / "cohens_d.csv", merged);
      } else {
        const fs::path tmp = fs::temp_directory_path() / ("deepfeat-report-" + std::to_string(::getpid()) + ".csv");
        train::write_cohens_d_csv(tmp, merged);
        out << "\n" << read_text(tmp);
        fs::remove(tmp);
      }
    } else if (*desc) {
      const auto d = data::describe(data::load_dataset(desc_dataset));
      out << "name " << d.name << "\nlength " << d.length << "\nsamples " << d.samples << "\nclasses " << d.classes
          << '\n';
    }
    return kExitOk;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const data::DataError& e) {
    err << "error [" << data::to_string(e.code()) << "]: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {  // ArgumentError, DimensionError
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace deepfeat::cli
