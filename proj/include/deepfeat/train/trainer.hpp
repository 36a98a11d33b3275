#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "deepfeat/data/dataset.hpp"
#include "deepfeat/llm/serialize.hpp"
#include "deepfeat/model/deepfeat.hpp"
#include "deepfeat/nn/optim.hpp"
#include "deepfeat/train/metrics.hpp"

namespace deepfeat::train {

enum class SelectionPolicy { TestBest, ValBest, Last };

std::string to_string(SelectionPolicy policy);
SelectionPolicy parse_selection_policy(const std::string& name);

using Logger = std::function<void(const std::string&)>;

/// How the two frozen branches are produced.
struct FeatureOptions {
  std::uint64_t rocket_seed = 0;
  /// TSAR path or "synthetic:<seed>".
  std::string weights = "synthetic:0";
  std::filesystem::path vocab_dir;  // empty: the bundled GPT-2 vocabulary
  llm::SerializationConfig serialization;
  bool fine_tune_llm = false;
  std::filesystem::path cache_dir;  // empty: llm::default_cache_dir()

  nlohmann::json to_json() const;
  static FeatureOptions from_json(const nlohmann::json& j);
};

struct TrainConfig {
  std::size_t epochs = 200;
  nn::LrSchedule schedule;
  std::size_t batch_size = 16;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  std::uint64_t seed = 0;
  model::AblationMode mode = model::AblationMode::Full;
  SelectionPolicy selection = SelectionPolicy::ValBest;
  /// Fraction of the training split held out for val_best selection.
  double val_fraction = 0.15;
  double split_ratio = 0.7;
  std::uint64_t split_seed = 100;
  /// Branch and head sizes; mode and classes are filled in from this config
  /// and the dataset.
  model::ModelConfig model;
  FeatureOptions features;
  std::filesystem::path dataset;
  std::filesystem::path output_dir;

  /// Throws ArgumentError on any violated precondition.
  void validate() const;
  nlohmann::json to_json() const;
  /// Keys absent from `j` keep their defaults.
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Frozen per-sample features for a whole dataset, row-aligned with it.
struct FeatureStore {
  nn::Tensor<float> rocket;  // [N x 20000] or empty
  nn::Tensor<float> llm;     // [N x 768] or empty
};

std::filesystem::path bundled_vocab_dir();

/// Computes the frozen features a mode needs; language-model features go
/// through the on-disk cache.
FeatureStore compute_features(const data::Dataset& dataset, model::BranchSet needed, const FeatureOptions& options,
                              const Logger& log = {});

/// train / validation / test indices into the dataset.
struct SplitPlan {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;  // empty unless selection == ValBest
  std::vector<std::size_t> test;
};

/// Stratified split_ratio split with split_seed; under val_best a further
/// stratified val_fraction of the training part is held out.
SplitPlan make_split_plan(const data::Dataset& dataset, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double val_loss = 0.0;
  double test_acc = 0.0;
  double test_macro_f1 = 0.0;
  double test_loss = 0.0;
  double lr = 0.0;  // rate applied at the epoch's last step
};

struct TrainResult {
  std::unique_ptr<model::DeepFeatModel<float>> model;
  std::vector<EpochRecord> history;
  std::size_t selected_epoch = 0;
  EvalReport test_report;  // of the retained model
  double seconds = 0.0;
  std::size_t steps = 0;
};

/// Training loop: per epoch, shuffled mini-batches, focal loss, Adam at
/// lr_at(schedule, step); per-epoch evaluation; the retained model is chosen
/// by cfg.selection. Throws DivergenceError on a non-finite loss.
TrainResult train(const TrainConfig& cfg, const data::Dataset& dataset, const FeatureStore& features,
                  const SplitPlan& plan, const Logger& log = {});

/// Loads the dataset, computes features, splits and trains.
TrainResult train(const TrainConfig& cfg, const Logger& log = {});

/// Eval-mode predictions of `model` on the samples at `indices`.
EvalReport evaluate(model::DeepFeatModel<float>& model, const data::Dataset& dataset, const FeatureStore& features,
                    const std::vector<std::size_t>& indices);

/// Writes epoch,train_loss,train_acc,test_acc,test_macro_f1,lr.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

nlohmann::json report_to_json(const EvalReport& report, const std::vector<std::string>& classes);

// ---------------------------------------------------------------------------
// Checkpoints: <dir>/model.tsar (parameters) + <dir>/model.json (sidecar).

void save_checkpoint(const std::filesystem::path& dir, model::DeepFeatModel<float>& model, const TrainConfig& cfg,
                     const std::vector<std::string>& classes, std::size_t selected_epoch);

struct Checkpoint {
  std::unique_ptr<model::DeepFeatModel<float>> model;
  TrainConfig config;
  std::vector<std::string> classes;
  std::size_t selected_epoch = 0;
};

/// Throws FormatError on a missing or inconsistent checkpoint.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Ablation

struct RunOutcome {
  model::AblationMode mode;
  std::size_t run = 0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct AblationRow {
  model::AblationMode mode;
  std::vector<double> accuracy;
  std::vector<double> macro_f1;
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<RunOutcome> runs;
};

/// n_runs trainings per mode with seeds base.seed + run_index, sharing one
/// split and one set of frozen features. Runs fan out over `jobs` threads.
AblationTable ablation_run(const TrainConfig& base, const data::Dataset& dataset, const FeatureStore& features,
                           const std::vector<model::AblationMode>& modes, std::size_t n_runs, std::size_t jobs = 1,
                           const Logger& log = {});

/// Display name used in the tables: RF, PF, RF & PF, DC, Ours.
std::string table_label(model::AblationMode mode);

/// variant,runs,accuracy_mean,accuracy_std,macro_f1_mean,macro_f1_std,accuracy,macro_f1
/// (means and stds in percent; the last two columns render "mean±std").
void write_ablation_csv(const std::filesystem::path& path, const AblationTable& table);
/// variant,run,seed,accuracy,macro_f1
void write_runs_csv(const std::filesystem::path& path, const AblationTable& table);
/// metric,variant,<variant...>: d(row vs column); NA where undefined.
void write_cohens_d_csv(const std::filesystem::path& path, const AblationTable& table);
/// Reads a runs CSV back into rows (for reporting).
AblationTable read_runs_csv(const std::filesystem::path& path);

}  // namespace deepfeat::train
