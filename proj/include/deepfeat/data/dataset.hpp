#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace deepfeat::data {

enum class DataErrorCode {
  MissingFile,
  BadManifest,
  BadHeader,
  UnknownLabel,
  LengthMismatch,
  NonNumeric,
  NonFinite,
  EmptyClass,
};

const char* to_string(DataErrorCode code) noexcept;

/// Dataset validation failure. `row` is the 1-based CSV line (0 if not
/// applicable) and `column` the 1-based CSV field.
class DataError : public std::runtime_error {
 public:
  DataError(DataErrorCode code, const std::string& message, std::size_t row = 0, std::size_t column = 0);

  DataErrorCode code() const noexcept { return code_; }
  std::size_t row() const noexcept { return row_; }
  std::size_t column() const noexcept { return column_; }

 private:
  DataErrorCode code_;
  std::size_t row_;
  std::size_t column_;
};

struct Sample {
  std::string id;
  std::vector<double> values;
  std::size_t label = 0;  // index into Dataset::classes

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::string name;
  std::vector<std::string> classes;
  std::optional<std::size_t> expected_length;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  std::size_t num_classes() const noexcept { return classes.size(); }
  std::vector<std::size_t> labels() const;
  std::vector<std::vector<double>> series() const;
  /// Samples at `indices`, same class inventory.
  Dataset subset(const std::vector<std::size_t>& indices) const;

  /// Throws DataError on any broken invariant.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Reads `manifest.json` ({"name", "classes", "length"}) and `data.csv`
/// (header `id,label,v1..vn`) from `dir`.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes manifest.json and data.csv; values use the shortest decimal form
/// that round-trips exactly.
void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);

struct DatasetSummary {
  std::string name;
  std::size_t length = 0;  // 0 when lengths vary
  std::size_t samples = 0;
  std::size_t classes = 0;
  std::vector<std::size_t> class_counts;
};

DatasetSummary describe(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic data

enum class GeneratorKind { Sinusoid, LinearTrend, Ar1, SquareWave };

struct ClassGenerator {
  std::string name;
  GeneratorKind kind = GeneratorKind::Sinusoid;
  double freq = 3.0;   // cycles per series (sinusoid, square wave)
  double amp = 1.0;    // amplitude; innovation std for AR(1)
  double slope = 2.0;  // total rise over the series (linear trend)
  double phi = 0.9;    // AR(1) coefficient
};

struct SynthSpec {
  std::string name = "synthetic";
  std::vector<ClassGenerator> classes;
  std::size_t samples_per_class = 50;
  std::size_t length = 128;
  double noise = 0.1;  // additive Gaussian std

  /// 4 classes (sinusoid, linear trend, AR(1), square wave) x 50 x 128, noise 0.1.
  static SynthSpec defaults();
  /// JSON form: {"name", "samples_per_class", "length", "noise",
  ///             "classes": [{"name", "kind", "freq", "amp", "slope", "phi"}]};
  /// omitted keys keep their defaults. Throws ArgumentError on bad input.
  static SynthSpec from_json(const std::string& text);
  void validate() const;
};

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed);

}  // namespace deepfeat::data
