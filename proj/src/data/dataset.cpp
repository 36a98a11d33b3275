#include "deepfeat/data/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "deepfeat/common/error.hpp"
#include "deepfeat/common/rng.hpp"

namespace deepfeat::data {

const char* to_string(DataErrorCode code) noexcept {
  switch (code) {
    case DataErrorCode::MissingFile: return "missing-file";
    case DataErrorCode::BadManifest: return "bad-manifest";
    case DataErrorCode::BadHeader: return "bad-header";
    case DataErrorCode::UnknownLabel: return "unknown-label";
    case DataErrorCode::LengthMismatch: return "length-mismatch";
    case DataErrorCode::NonNumeric: return "non-numeric";
    case DataErrorCode::NonFinite: return "non-finite";
    case DataErrorCode::EmptyClass: return "empty-class";
  }
  return "unknown";
}

namespace {

std::string located(const std::string& message, std::size_t row, std::size_t column) {
  std::string where;
  if (row != 0) where += "line " + std::to_string(row);
  if (column != 0) where += (where.empty() ? "" : ", ") + std::string("column ") + std::to_string(column);
  return where.empty() ? message : where + ": " + message;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

DataError::DataError(DataErrorCode code, const std::string& message, std::size_t row, std::size_t column)
    : std::runtime_error(located(message, row, column)), code_(code), row_(row), column_(column) {}

std::vector<std::size_t> Dataset::labels() const {
  std::vector<std::size_t> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::vector<std::vector<double>> Dataset::series() const {
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.values);
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.name = name;
  out.classes = classes;
  out.expected_length = expected_length;
  out.samples.reserve(indices.size());
  for (std::size_t i : indices) out.samples.push_back(samples.at(i));
  return out;
}

void Dataset::validate() const {
  std::vector<std::size_t> counts(classes.size(), 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label >= classes.size()) {
      throw DataError(DataErrorCode::UnknownLabel, "sample " + s.id + " has label index " + std::to_string(s.label));
    }
    ++counts[s.label];
    if (s.values.empty()) throw DataError(DataErrorCode::LengthMismatch, "sample " + s.id + " is empty");
    if (expected_length && s.values.size() != *expected_length) {
      throw DataError(DataErrorCode::LengthMismatch, "sample " + s.id + " has " + std::to_string(s.values.size()) +
                                                         " values, expected " + std::to_string(*expected_length));
    }
    for (std::size_t j = 0; j < s.values.size(); ++j) {
      if (!std::isfinite(s.values[j])) {
        throw DataError(DataErrorCode::NonFinite, "sample " + s.id + " value " + std::to_string(j + 1) + " is not finite");
      }
    }
  }
  for (std::size_t c = 0; c < classes.size(); ++c) {
    if (counts[c] == 0) throw DataError(DataErrorCode::EmptyClass, "class '" + classes[c] + "' has no samples");
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto csv_path = dir / "data.csv";
  std::ifstream manifest_in(manifest_path);
  if (!manifest_in) throw DataError(DataErrorCode::MissingFile, "cannot open " + manifest_path.string());
  std::ifstream csv_in(csv_path, std::ios::binary);
  if (!csv_in) throw DataError(DataErrorCode::MissingFile, "cannot open " + csv_path.string());

  Dataset ds;
  try {
    const auto m = nlohmann::json::parse(manifest_in);
    ds.name = m.at("name").get<std::string>();
    ds.classes = m.at("classes").get<std::vector<std::string>>();
    if (m.contains("length") && !m.at("length").is_null()) {
      const auto len = m.at("length").get<std::int64_t>();
      if (len < 1) throw DataError(DataErrorCode::BadManifest, "manifest length must be >= 1");
      ds.expected_length = static_cast<std::size_t>(len);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(DataErrorCode::BadManifest, manifest_path.string() + ": " + e.what());
  }
  if (ds.classes.size() < 2) throw DataError(DataErrorCode::BadManifest, "manifest must list at least 2 classes");
  std::map<std::string, std::size_t> class_index;
  for (std::size_t c = 0; c < ds.classes.size(); ++c) {
    if (!class_index.emplace(ds.classes[c], c).second) {
      throw DataError(DataErrorCode::BadManifest, "duplicate class '" + ds.classes[c] + "'");
    }
  }

  std::string line;
  if (!std::getline(csv_in, line)) throw DataError(DataErrorCode::BadHeader, csv_path.string() + " is empty", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_fields(line);
  if (header.size() < 3 || header[0] != "id" || header[1] != "label") {
    throw DataError(DataErrorCode::BadHeader, "header must start with id,label", 1);
  }
  for (std::size_t j = 2; j < header.size(); ++j) {
    if (header[j] != "v" + std::to_string(j - 1)) {
      throw DataError(DataErrorCode::BadHeader, "expected column v" + std::to_string(j - 1), 1, j + 1);
    }
  }
  const std::size_t width = header.size() - 2;
  if (ds.expected_length && width != *ds.expected_length) {
    throw DataError(DataErrorCode::LengthMismatch,
                    "header has " + std::to_string(width) + " value columns, manifest says " +
                        std::to_string(*ds.expected_length),
                    1);
  }

  std::size_t row = 1;
  while (std::getline(csv_in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(DataErrorCode::LengthMismatch,
                      "row has " + std::to_string(fields.size() - std::min<std::size_t>(fields.size(), 2)) +
                          " values, expected " + std::to_string(width),
                      row);
    }
    Sample s;
    s.id = std::string(fields[0]);
    const auto it = class_index.find(std::string(fields[1]));
    if (it == class_index.end()) {
      throw DataError(DataErrorCode::UnknownLabel, "label '" + std::string(fields[1]) + "' is not in the manifest", row,
                      2);
    }
    s.label = it->second;
    s.values.reserve(width);
    for (std::size_t j = 2; j < fields.size(); ++j) {
      std::string_view f = fields[j];
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw DataError(DataErrorCode::NonNumeric, "'" + std::string(f) + "' is not a number", row, j + 1);
      }
      if (!std::isfinite(v)) throw DataError(DataErrorCode::NonFinite, "value is not finite", row, j + 1);
      s.values.push_back(v);
    }
    ds.samples.push_back(std::move(s));
  }
  if (!ds.expected_length) ds.expected_length = width;
  ds.validate();
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
  dataset.validate();
  if (dataset.samples.empty()) throw ArgumentError("cannot save an empty dataset");
  const std::size_t width = dataset.samples.front().values.size();
  for (const auto& s : dataset.samples) {
    if (s.values.size() != width) throw DataError(DataErrorCode::LengthMismatch, "series lengths differ");
  }
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["name"] = dataset.name;
  m["classes"] = dataset.classes;
  m["length"] = width;
  {
    std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
    out << m.dump(2) << '\n';
  }
  std::ofstream out(dir / "data.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + (dir / "data.csv").string());
  out << "id,label";
  for (std::size_t j = 1; j <= width; ++j) out << ",v" << j;
  out << '\n';
  for (const auto& s : dataset.samples) {
    out << s.id << ',' << dataset.classes[s.label];
    for (double v : s.values) out << ',' << format_double(v);
    out << '\n';
  }
  if (!out) throw FormatError("failed writing " + (dir / "data.csv").string());
}

DatasetSummary describe(const Dataset& dataset) {
  DatasetSummary d;
  d.name = dataset.name;
  d.samples = dataset.size();
  d.classes = dataset.num_classes();
  d.class_counts.assign(d.classes, 0);
  for (const auto& s : dataset.samples) ++d.class_counts.at(s.label);
  if (dataset.expected_length) {
    d.length = *dataset.expected_length;
  } else if (!dataset.samples.empty()) {
    d.length = dataset.samples.front().values.size();
    for (const auto& s : dataset.samples) {
      if (s.values.size() != d.length) d.length = 0;
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

SynthSpec SynthSpec::defaults() {
  SynthSpec spec;
  spec.classes = {
      {"sinusoid", GeneratorKind::Sinusoid, 3.0, 1.0, 0.0, 0.0},
      {"linear_trend", GeneratorKind::LinearTrend, 0.0, 0.0, 2.0, 0.0},
      {"ar1", GeneratorKind::Ar1, 0.0, 0.3, 0.0, 0.9},
      {"square_wave", GeneratorKind::SquareWave, 2.0, 1.0, 0.0, 0.0},
  };
  return spec;
}

namespace {

GeneratorKind parse_kind(const std::string& s) {
  if (s == "sinusoid") return GeneratorKind::Sinusoid;
  if (s == "linear-trend" || s == "linear_trend") return GeneratorKind::LinearTrend;
  if (s == "ar1" || s == "AR(1)") return GeneratorKind::Ar1;
  if (s == "square-wave" || s == "square_wave") return GeneratorKind::SquareWave;
  throw ArgumentError("unknown generator kind '" + s + "'");
}

}  // namespace

SynthSpec SynthSpec::from_json(const std::string& text) {
  SynthSpec spec = defaults();
  try {
    const auto j = nlohmann::json::parse(text);
    if (!j.is_object()) throw ArgumentError("synth spec must be a JSON object");
    spec.name = j.value("name", spec.name);
    spec.samples_per_class = j.value("samples_per_class", spec.samples_per_class);
    spec.length = j.value("length", spec.length);
    spec.noise = j.value("noise", spec.noise);
    if (j.contains("classes")) {
      spec.classes.clear();
      for (const auto& c : j.at("classes")) {
        ClassGenerator g;
        g.kind = parse_kind(c.at("kind").get<std::string>());
        g.name = c.value("name", c.at("kind").get<std::string>());
        g.freq = c.value("freq", g.freq);
        g.amp = c.value("amp", g.amp);
        g.slope = c.value("slope", g.slope);
        g.phi = c.value("phi", g.phi);
        spec.classes.push_back(std::move(g));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(std::string("bad synth spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

void SynthSpec::validate() const {
  if (classes.size() < 2) throw ArgumentError("synth spec needs at least 2 classes");
  if (samples_per_class < 1) throw ArgumentError("samples_per_class must be >= 1");
  if (length < 1) throw ArgumentError("length must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ArgumentError("noise must be finite and >= 0");
  std::map<std::string, int> names;
  for (const auto& c : classes) {
    if (c.name.empty() || c.name.find_first_of(",\n\r") != std::string::npos) {
      throw ArgumentError("class names must be nonempty and free of commas and newlines");
    }
    if (++names[c.name] > 1) throw ArgumentError("duplicate class name '" + c.name + "'");
    if (c.kind == GeneratorKind::Ar1 && !(std::abs(c.phi) < 1.0)) throw ArgumentError("AR(1) needs |phi| < 1");
  }
}

Dataset synth_generate(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  Dataset ds;
  ds.name = spec.name;
  ds.expected_length = spec.length;
  for (const auto& c : spec.classes) ds.classes.push_back(c.name);
  Rng rng = Rng::stream(seed, "synth");
  const double n = static_cast<double>(spec.length);
  std::size_t next_id = 0;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& g = spec.classes[c];
    for (std::size_t k = 0; k < spec.samples_per_class; ++k) {
      Sample s;
      char id[32];
      std::snprintf(id, sizeof(id), "s%05zu", next_id++);
      s.id = id;
      s.label = c;
      s.values.resize(spec.length);
      double ar = 0.0;
      for (std::size_t t = 0; t < spec.length; ++t) {
        const double phase = 2.0 * std::numbers::pi * g.freq * static_cast<double>(t) / n;
        double clean = 0.0;
        switch (g.kind) {
          case GeneratorKind::Sinusoid: clean = g.amp * std::sin(phase); break;
          case GeneratorKind::LinearTrend: clean = g.slope * (static_cast<double>(t) / n - 0.5); break;
          case GeneratorKind::Ar1:
            ar = g.phi * ar + g.amp * rng.normal();
            clean = ar;
            break;
          case GeneratorKind::SquareWave: clean = std::sin(phase) >= 0.0 ? g.amp : -g.amp; break;
        }
        s.values[t] = clean + spec.noise * rng.normal();
      }
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace deepfeat::data
