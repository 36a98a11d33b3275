#include "deepfeat/train/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "deepfeat/common/error.hpp"
#include "deepfeat/common/rng.hpp"
#include "deepfeat/llm/bpe.hpp"
#include "deepfeat/llm/features.hpp"
#include "deepfeat/llm/gpt2.hpp"
#include "deepfeat/rocket/rocket.hpp"

namespace deepfeat::train {

using model::AblationMode;
using model::DeepFeatModel;
using nn::Tensor;

std::string to_string(SelectionPolicy policy) {
  switch (policy) {
    case SelectionPolicy::TestBest: return "test_best";
    case SelectionPolicy::ValBest: return "val_best";
    case SelectionPolicy::Last: return "last";
  }
  return "?";
}

SelectionPolicy parse_selection_policy(const std::string& name) {
  if (name == "test_best") return SelectionPolicy::TestBest;
  if (name == "val_best") return SelectionPolicy::ValBest;
  if (name == "last") return SelectionPolicy::Last;
  throw ArgumentError("unknown selection policy '" + name + "' (expected test_best, val_best or last)");
}

// --- configuration -----------------------------------------------------------

nlohmann::json FeatureOptions::to_json() const {
  return {{"rocket_seed", rocket_seed},
          {"weights", weights},
          {"vocab_dir", vocab_dir.string()},
          {"fractional_digits", serialization.fractional_digits},
          {"separator", serialization.separator},
          {"fine_tune_llm", fine_tune_llm},
          {"cache_dir", cache_dir.string()}};
}

FeatureOptions FeatureOptions::from_json(const nlohmann::json& j) {
  FeatureOptions f;
  f.rocket_seed = j.value("rocket_seed", f.rocket_seed);
  f.weights = j.value("weights", f.weights);
  f.vocab_dir = j.value("vocab_dir", f.vocab_dir.string());
  f.serialization.fractional_digits = j.value("fractional_digits", f.serialization.fractional_digits);
  f.serialization.separator = j.value("separator", f.serialization.separator);
  f.fine_tune_llm = j.value("fine_tune_llm", f.fine_tune_llm);
  f.cache_dir = j.value("cache_dir", f.cache_dir.string());
  return f;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (!(schedule.lr0 > 0.0) || !std::isfinite(schedule.lr0)) throw ArgumentError("lr0 must be positive");
  if (schedule.decay_steps < 1) throw ArgumentError("decay_steps must be >= 1");
  if (!(schedule.decay_rate >= 0.0)) throw ArgumentError("decay_rate must be >= 0");
  if (!(focal_gamma >= 0.0) || !(focal_alpha > 0.0)) throw ArgumentError("focal gamma must be >= 0 and alpha > 0");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ArgumentError("split_ratio must be in (0, 1)");
  if (selection == SelectionPolicy::ValBest && !(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ArgumentError("val_fraction must be in (0, 1)");
  }
  features.serialization.validate();
  if (features.fine_tune_llm) throw ArgumentError("GPT-2 fine-tuning is not supported; the language-model branch is frozen");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"lr0", schedule.lr0},
          {"decay_steps", schedule.decay_steps},
          {"decay_rate", schedule.decay_rate},
          {"batch_size", batch_size},
          {"focal_gamma", focal_gamma},
          {"focal_alpha", focal_alpha},
          {"seed", seed},
          {"mode", model::to_string(mode)},
          {"selection", to_string(selection)},
          {"val_fraction", val_fraction},
          {"split_ratio", split_ratio},
          {"split_seed", split_seed},
          {"model", model.to_json()},
          {"features", features.to_json()},
          {"dataset", dataset.string()},
          {"output_dir", output_dir.string()}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.epochs = j.value("epochs", c.epochs);
    c.schedule.lr0 = j.value("lr0", c.schedule.lr0);
    c.schedule.decay_steps = j.value("decay_steps", c.schedule.decay_steps);
    c.schedule.decay_rate = j.value("decay_rate", c.schedule.decay_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.focal_gamma = j.value("focal_gamma", c.focal_gamma);
    c.focal_alpha = j.value("focal_alpha", c.focal_alpha);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mode")) c.mode = model::parse_ablation_mode(j.at("mode").get<std::string>());
    if (j.contains("selection")) c.selection = parse_selection_policy(j.at("selection").get<std::string>());
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.split_ratio = j.value("split_ratio", c.split_ratio);
    c.split_seed = j.value("split_seed", c.split_seed);
    if (j.contains("model")) {
      auto m = j.at("model");
      if (!m.contains("mode")) m["mode"] = model::to_string(c.mode);
      if (!m.contains("classes")) m["classes"] = 2;
      c.model = model::ModelConfig::from_json(m);
    }
    if (j.contains("features")) c.features = FeatureOptions::from_json(j.at("features"));
    c.dataset = j.value("dataset", std::string());
    c.output_dir = j.value("output_dir", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("bad training config: ") + e.what());
  }
  return c;
}

// --- features ----------------------------------------------------------------

std::filesystem::path bundled_vocab_dir() { return std::filesystem::path(DEEPFEAT_ASSET_DIR) / "gpt2"; }

FeatureStore compute_features(const data::Dataset& dataset, model::BranchSet needed, const FeatureOptions& options,
                              const Logger& log) {
  FeatureStore store;
  const auto series = dataset.series();
  if (needed.rocket) {
    const auto t0 = std::chrono::steady_clock::now();
    const rocket::KernelBank bank = rocket::generate_bank(options.rocket_seed);
    std::vector<std::vector<float>> as_float;
    as_float.reserve(series.size());
    for (const auto& s : series) as_float.emplace_back(s.begin(), s.end());
    store.rocket = rocket::extract_batch(as_float, bank);
    if (log) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream os;
      os << "randomized-kernel features: " << series.size() << " x " << store.rocket.dim(1) << " in " << std::fixed
         << std::setprecision(1) << secs << " s";
      log(os.str());
    }
  }
  if (needed.llm) {
    if (options.fine_tune_llm) throw ArgumentError("GPT-2 fine-tuning is not supported; the language-model branch is frozen");
    const auto vocab = options.vocab_dir.empty() ? bundled_vocab_dir() : options.vocab_dir;
    const llm::BpeTokenizer tokenizer = llm::BpeTokenizer::load_dir(vocab);
    if (log && options.weights.rfind("synthetic:", 0) == 0) {
      log("warning: GPT-2 weights are synthetic (" + options.weights + "); pass a converted checkpoint for pretrained features");
    }
    const llm::Gpt2Model gpt2(llm::load_weights_spec(options.weights));
    const llm::LlmFeatureExtractor extractor(tokenizer, gpt2, {options.serialization, false});
    const auto key = llm::feature_cache_key(series, options.serialization, llm::weights_fingerprint(gpt2.weights()));
    const auto dir = options.cache_dir.empty() ? llm::default_cache_dir() : options.cache_dir;
    const auto t0 = std::chrono::steady_clock::now();
    bool hit = false;
    store.llm = llm::cached_features(extractor, series, key, dir, &hit);
    if (log) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream os;
      os << "language-model features: " << series.size() << " x " << store.llm.dim(1) << (hit ? " from cache " : " in ")
         << std::fixed << std::setprecision(1) << secs << " s (" << (dir / (key + ".flc")).string() << ")";
      log(os.str());
    }
  }
  return store;
}

SplitPlan make_split_plan(const data::Dataset& dataset, const TrainConfig& cfg) {
  const Split outer = stratified_split(dataset, cfg.split_ratio, cfg.split_seed);
  SplitPlan plan;
  plan.test = outer.test;
  if (cfg.selection != SelectionPolicy::ValBest) {
    plan.train = outer.train;
    return plan;
  }
  const auto all_labels = dataset.labels();
  std::vector<std::size_t> labels;
  labels.reserve(outer.train.size());
  for (std::size_t i : outer.train) labels.push_back(all_labels[i]);
  const Split inner = stratified_split(labels, dataset.num_classes(), 1.0 - cfg.val_fraction,
                                       splitmix64_mix(cfg.split_seed ^ fnv1a64("validation")));
  for (std::size_t i : inner.train) plan.train.push_back(outer.train[i]);
  for (std::size_t i : inner.test) plan.val.push_back(outer.train[i]);
  return plan;
}

// --- training ----------------------------------------------------------------

namespace {

model::BranchInputs<float> gather(const data::Dataset& dataset, const FeatureStore& features,
                                  model::BranchSet branches, std::span<const std::size_t> rows) {
  model::BranchInputs<float> in;
  const std::size_t batch = rows.size();
  if (branches.global || branches.local) {
    const std::size_t steps = dataset.samples.at(rows[0]).values.size();
    in.series = Tensor<float>({batch, steps, 1});
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& v = dataset.samples.at(rows[b]).values;
      if (v.size() != steps) throw DimensionError("series in one batch must share a length");
      std::transform(v.begin(), v.end(), in.series.data() + b * steps, [](double x) { return static_cast<float>(x); });
    }
  }
  auto copy_rows = [&](const Tensor<float>& src, Tensor<float>& dst, const char* what) {
    if (src.empty()) throw ArgumentError(std::string(what) + " features were not computed");
    const std::size_t w = src.dim(1);
    dst = Tensor<float>({batch, w});
    for (std::size_t b = 0; b < batch; ++b) std::copy_n(src.data() + rows[b] * w, w, dst.data() + b * w);
  };
  if (branches.rocket) copy_rows(features.rocket, in.rocket, "randomized-kernel");
  if (branches.llm) copy_rows(features.llm, in.llm, "language-model");
  return in;
}

struct Scored {
  EvalReport report;
  double loss = 0.0;
};

Scored score(DeepFeatModel<float>& model, const data::Dataset& dataset, const FeatureStore& features,
             const std::vector<std::size_t>& indices, double gamma, double alpha) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kEvalBatch = 64;
  const model::BranchSet branches = model::branches_for(model.config().mode);
  std::vector<std::size_t> actual, predicted;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const std::size_t n = std::min(kEvalBatch, indices.size() - start);
    const std::span<const std::size_t> rows(indices.data() + start, n);
    const Tensor<float> probs = model.predict_proba(gather(dataset, features, branches, rows));
    for (std::size_t b = 0; b < n; ++b) {
      const auto p = probs.row(b);
      const std::size_t y = dataset.samples[rows[b]].label;
      actual.push_back(y);
      predicted.push_back(static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()));
      loss_sum += nn::focal_loss<float>(p, y, static_cast<float>(gamma), static_cast<float>(alpha));
    }
  }
  Scored s{compute_report(actual, predicted, dataset.num_classes()), loss_sum / static_cast<double>(indices.size())};
  s.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return s;
}

std::vector<Tensor<float>> snapshot(const nn::ParamRefs<float>& params) {
  std::vector<Tensor<float>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->value);
  return out;
}

}  // namespace

EvalReport evaluate(DeepFeatModel<float>& model, const data::Dataset& dataset, const FeatureStore& features,
                    const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ArgumentError("cannot evaluate an empty split");
  return score(model, dataset, features, indices, 2.0, 0.25).report;
}

TrainResult train(const TrainConfig& cfg, const data::Dataset& dataset, const FeatureStore& features,
                  const SplitPlan& plan, const Logger& log) {
  cfg.validate();
  if (plan.train.empty() || plan.test.empty()) throw ArgumentError("train and test splits must be nonempty");
  if (cfg.selection == SelectionPolicy::ValBest && plan.val.empty()) {
    throw ArgumentError("val_best selection needs a validation split");
  }
  const auto t0 = std::chrono::steady_clock::now();

  model::ModelConfig mc = cfg.model;
  mc.mode = cfg.mode;
  mc.classes = dataset.num_classes();
  const model::BranchSet branches = model::branches_for(cfg.mode);
  if (branches.rocket) mc.rocket_width = features.rocket.empty() ? mc.rocket_width : features.rocket.dim(1);
  if (branches.llm) mc.llm_width = features.llm.empty() ? mc.llm_width : features.llm.dim(1);

  TrainResult result;
  result.model = std::make_unique<DeepFeatModel<float>>(mc);
  auto& net = *result.model;
  net.init(cfg.seed);
  const auto params = net.params();
  nn::Adam<float> adam(params);
  nn::SoftmaxFocalLoss<float> loss(static_cast<float>(cfg.focal_gamma), static_cast<float>(cfg.focal_alpha));
  Rng shuffle_rng = Rng::stream(cfg.seed, "shuffle");
  Rng dropout_rng = Rng::stream(cfg.seed, "dropout");

  std::vector<Tensor<float>> best;
  double best_primary = -1.0;
  double best_loss = 0.0;
  std::size_t step = 0;
  std::vector<std::size_t> order = plan.train;
  std::vector<std::size_t> targets;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    double lr = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, n);
      const auto inputs = gather(dataset, features, branches, rows);
      targets.clear();
      for (std::size_t i : rows) targets.push_back(dataset.samples[i].label);

      const Tensor<float> logits = net.forward(inputs, nn::Mode::Train, dropout_rng);
      const float batch_loss = loss.forward(logits, targets);
      if (!std::isfinite(batch_loss)) {
        throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + "; try a lower learning rate");
      }
      adam.zero_grad();
      net.backward(loss.backward());
      lr = nn::lr_at(cfg.schedule, step);
      adam.step(lr);
      ++step;

      loss_sum += static_cast<double>(batch_loss) * static_cast<double>(n);
      const auto& probs = loss.probabilities();
      for (std::size_t b = 0; b < n; ++b) {
        const auto p = probs.row(b);
        if (static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == targets[b]) ++correct;
      }
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(order.size());
    rec.lr = lr;
    const Scored test = score(net, dataset, features, plan.test, cfg.focal_gamma, cfg.focal_alpha);
    rec.test_acc = test.report.accuracy;
    rec.test_macro_f1 = test.report.macro_f1;
    rec.test_loss = test.loss;
    if (!plan.val.empty()) {
      const Scored val = score(net, dataset, features, plan.val, cfg.focal_gamma, cfg.focal_alpha);
      rec.val_acc = val.report.accuracy;
      rec.val_loss = val.loss;
    }
    result.history.push_back(rec);

    double primary = 0.0;
    double tie = 0.0;
    switch (cfg.selection) {
      case SelectionPolicy::ValBest:
        primary = rec.val_acc;
        tie = rec.val_loss;
        break;
      case SelectionPolicy::TestBest:
        primary = rec.test_acc;
        tie = rec.test_loss;
        break;
      case SelectionPolicy::Last: primary = static_cast<double>(epoch); break;
    }
    if (primary > best_primary || (primary == best_primary && tie < best_loss)) {
      best_primary = primary;
      best_loss = tie;
      best = snapshot(params);
      result.selected_epoch = epoch;
    }

    if (log) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(4) << "[" << model::to_string(cfg.mode) << " seed " << cfg.seed << "] epoch "
         << epoch << "/" << cfg.epochs << " loss " << rec.train_loss << " train_acc " << rec.train_acc;
      if (!plan.val.empty()) os << " val_acc " << rec.val_acc;
      os << " test_acc " << rec.test_acc << " test_f1 " << rec.test_macro_f1 << " lr " << std::setprecision(6) << rec.lr;
      log(os.str());
    }
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(best[i]);
  result.test_report = score(net, dataset, features, plan.test, cfg.focal_gamma, cfg.focal_alpha).report;
  result.steps = step;
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

TrainResult train(const TrainConfig& cfg, const Logger& log) {
  cfg.validate();
  const data::Dataset dataset = data::load_dataset(cfg.dataset);
  const FeatureStore features = compute_features(dataset, model::branches_for(cfg.mode), cfg.features, log);
  return train(cfg, dataset, features, make_split_plan(dataset, cfg), log);
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "epoch,train_loss,train_acc,test_acc,test_macro_f1,lr\n";
  out << std::setprecision(9);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.test_acc << ',' << r.test_macro_f1 << ','
        << r.lr << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

nlohmann::json report_to_json(const EvalReport& report, const std::vector<std::string>& classes) {
  nlohmann::json per_class = nlohmann::json::array();
  for (std::size_t c = 0; c < report.f1.size(); ++c) {
    per_class.push_back({{"class", c < classes.size() ? classes[c] : std::to_string(c)},
                         {"precision", report.precision[c]},
                         {"recall", report.recall[c]},
                         {"f1", report.f1[c]},
                         {"support", report.support[c]}});
  }
  return {{"accuracy", report.accuracy},
          {"macro_f1", report.macro_f1},
          {"per_class", per_class},
          {"confusion", report.confusion},
          {"seconds", report.seconds}};
}

// --- checkpoints -------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& dir, DeepFeatModel<float>& model, const TrainConfig& cfg,
                     const std::vector<std::string>& classes, std::size_t selected_epoch) {
  std::filesystem::create_directories(dir);
  model.to_archive().write(dir / "model.tsar");
  const nlohmann::json side = {{"format", "deepfeat-checkpoint"},
                               {"version", 1},
                               {"model", model.config().to_json()},
                               {"train", cfg.to_json()},
                               {"classes", classes},
                               {"selected_epoch", selected_epoch}};
  std::ofstream out(dir / "model.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write " + (dir / "model.json").string());
  out << side.dump(2) << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw FormatError("cannot open " + (dir / "model.json").string());
  Checkpoint ck;
  model::ModelConfig mc;
  try {
    const auto side = nlohmann::json::parse(in);
    if (side.value("format", "") != "deepfeat-checkpoint") throw FormatError("not a deepfeat checkpoint sidecar");
    mc = model::ModelConfig::from_json(side.at("model"));
    ck.config = TrainConfig::from_json(side.at("train"));
    ck.classes = side.at("classes").get<std::vector<std::string>>();
    ck.selected_epoch = side.value("selected_epoch", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError((dir / "model.json").string() + ": " + e.what());
  }
  if (ck.classes.size() != mc.classes) throw FormatError("checkpoint class list disagrees with its model config");
  ck.model = std::make_unique<DeepFeatModel<float>>(mc);
  ck.model->load_archive(io::TensorArchive::read(dir / "model.tsar"));
  return ck;
}

// --- ablation ----------------------------------------------------------------

std::string table_label(AblationMode mode) {
  switch (mode) {
    case AblationMode::Rf: return "RF";
    case AblationMode::Pf: return "PF";
    case AblationMode::RfPf: return "RF & PF";
    case AblationMode::Dc: return "DC";
    case AblationMode::Full: return "Ours";
  }
  return "?";
}

AblationTable ablation_run(const TrainConfig& base, const data::Dataset& dataset, const FeatureStore& features,
                           const std::vector<AblationMode>& modes, std::size_t n_runs, std::size_t jobs,
                           const Logger& log) {
  if (n_runs < 2) throw ArgumentError("an ablation needs at least 2 runs per mode");
  if (modes.empty()) throw ArgumentError("no ablation modes given");
  base.validate();
  const SplitPlan plan = make_split_plan(dataset, base);

  AblationTable table;
  for (AblationMode m : modes) {
    for (std::size_t r = 0; r < n_runs; ++r) table.runs.push_back({m, r, base.seed + r, 0.0, 0.0});
  }
  std::mutex log_mutex;
  const Logger safe_log = log ? Logger([&](const std::string& line) {
    std::lock_guard<std::mutex> lock(log_mutex);
    log(line);
  })
                              : Logger();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= table.runs.size()) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      RunOutcome& out = table.runs[i];
      try {
        TrainConfig cfg = base;
        cfg.mode = out.mode;
        cfg.seed = out.seed;
        const TrainResult res = train(cfg, dataset, features, plan, {});
        out.accuracy = res.test_report.accuracy;
        out.macro_f1 = res.test_report.macro_f1;
        if (safe_log) {
          std::ostringstream os;
          os << std::fixed << std::setprecision(4) << "ablation " << model::to_string(out.mode) << " run " << out.run
             << " (seed " << out.seed << "): accuracy " << out.accuracy << " macro_f1 " << out.macro_f1 << " in "
             << std::setprecision(1) << res.seconds << " s";
          safe_log(os.str());
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, table.runs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (AblationMode m : modes) {
    AblationRow row{m, {}, {}};
    for (const auto& r : table.runs) {
      if (r.mode != m) continue;
      row.accuracy.push_back(r.accuracy);
      row.macro_f1.push_back(r.macro_f1);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string pm(const MeanStd& m) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * m.mean << "\xC2\xB1" << 100.0 * m.std;
  return os.str();
}

}  // namespace

void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "variant,runs,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std,accuracy,macro_f1\n";
  for (const auto& row : table.rows) {
    const MeanStd acc = mean_std(row.accuracy);
    const MeanStd f1 = mean_std(row.macro_f1);
    out << csv_quote(table_label(row.mode)) << ',' << row.accuracy.size() << std::fixed << std::setprecision(4) << ','
        << 100.0 * acc.mean << ',' << 100.0 * acc.std << ',' << 100.0 * f1.mean << ',' << 100.0 * f1.std << ','
        << pm(acc) << ',' << pm(f1) << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

void write_runs_csv(const std::filesystem::path& path, const AblationTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "variant,run,seed,accuracy,macro_f1\n" << std::setprecision(17);
  for (const auto& r : table.runs) {
    out << model::to_string(r.mode) << ',' << r.run << ',' << r.seed << ',' << r.accuracy << ',' << r.macro_f1 << '\n';
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

void write_cohens_d_csv(const std::filesystem::path& path, const AblationTable& table) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "metric,variant";
  for (const auto& col : table.rows) out << ',' << csv_quote(table_label(col.mode));
  out << '\n' << std::fixed << std::setprecision(4);
  for (const char* metric : {"accuracy", "macro_f1"}) {
    const bool acc = std::string(metric) == "accuracy";
    for (const auto& row : table.rows) {
      out << metric << ',' << csv_quote(table_label(row.mode));
      for (const auto& col : table.rows) {
        out << ',';
        try {
          out << cohens_d(acc ? row.accuracy : row.macro_f1, acc ? col.accuracy : col.macro_f1);
        } catch (const ArgumentError&) {
          out << "NA";
        }
      }
      out << '\n';
    }
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

AblationTable read_runs_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("variant,run,seed,accuracy,macro_f1", 0) != 0) {
    throw FormatError(path.string() + ": expected header variant,run,seed,accuracy,macro_f1");
  }
  AblationTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string variant, run, seed, acc, f1;
    if (!std::getline(ls, variant, ',') || !std::getline(ls, run, ',') || !std::getline(ls, seed, ',') ||
        !std::getline(ls, acc, ',') || !std::getline(ls, f1, ',')) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + " has too few fields");
    }
    RunOutcome r;
    try {
      r.mode = model::parse_ablation_mode(variant);
      r.run = std::stoul(run);
      r.seed = std::stoull(seed);
      r.accuracy = std::stod(acc);
      r.macro_f1 = std::stod(f1);
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
    table.runs.push_back(r);
  }
  for (const auto& r : table.runs) {
    auto it = std::find_if(table.rows.begin(), table.rows.end(), [&](const AblationRow& row) { return row.mode == r.mode; });
    if (it == table.rows.end()) {
      table.rows.push_back({r.mode, {}, {}});
      it = std::prev(table.rows.end());
    }
    it->accuracy.push_back(r.accuracy);
    it->macro_f1.push_back(r.macro_f1);
  }
  return table;
}

}  // namespace deepfeat::train
