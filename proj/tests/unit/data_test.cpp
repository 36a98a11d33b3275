#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support.hpp"

#include "deepfeat/common/error.hpp"
#include "deepfeat/data/dataset.hpp"

using namespace deepfeat;
using namespace deepfeat::data;

namespace {

Dataset tiny() {
  Dataset d;
  d.name = "tiny";
  d.classes = {"a", "b"};
  d.expected_length = 3;
  d.samples = {{"r1", {0.1, -2.5e-7, 3.0}, 0}, {"r2", {1.0 / 3.0, 1e300, -0.0}, 1}};
  return d;
}

void write_files(const std::filesystem::path& dir, const std::string& manifest, const std::string& csv) {
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "manifest.json") << manifest;
  std::ofstream(dir / "data.csv") << csv;
}

DataErrorCode load_error(const std::filesystem::path& dir, std::size_t* row = nullptr, std::size_t* col = nullptr) {
  try {
    load_dataset(dir);
  } catch (const DataError& e) {
    if (row) *row = e.row();
    if (col) *col = e.column();
    return e.code();
  }
  FAIL("expected a DataError");
  return DataErrorCode::MissingFile;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kManifest = R"({"name": "t", "classes": ["a", "b"], "length": 3})";

}  // namespace

TEST_CASE("save then load reproduces the dataset exactly") {
  testing::TempDir dir("data");
  const auto d = tiny();
  save_dataset(d, dir.path());
  CHECK(load_dataset(dir.path()) == d);
  const std::string csv = read_file(dir / "data.csv");
  CHECK(csv.rfind("id,label,v1,v2,v3\n", 0) == 0);
  CHECK(csv.find('\r') == std::string::npos);
}

TEST_CASE("load errors carry distinct codes and positions") {
  testing::TempDir dir("data");
  SUBCASE("missing files") {
    CHECK(load_error(dir / "nothing") == DataErrorCode::MissingFile);
  }
  SUBCASE("short row") {
    write_files(dir.path(), kManifest, "id,label,v1,v2,v3\nx,a,1,2,3\ny,b,1,2\n");
    std::size_t row = 0;
    CHECK(load_error(dir.path(), &row) == DataErrorCode::LengthMismatch);
    CHECK(row == 3);
  }
  SUBCASE("unknown label") {
    write_files(dir.path(), kManifest, "id,label,v1,v2,v3\nx,c,1,2,3\n");
    CHECK(load_error(dir.path()) == DataErrorCode::UnknownLabel);
  }
  SUBCASE("non-numeric value") {
    write_files(dir.path(), kManifest, "id,label,v1,v2,v3\nx,a,1,two,3\n");
    std::size_t row = 0, col = 0;
    CHECK(load_error(dir.path(), &row, &col) == DataErrorCode::NonNumeric);
    CHECK(row == 2);
    CHECK(col == 4);
  }
  SUBCASE("missing value is not imputed") {
    write_files(dir.path(), kManifest, "id,label,v1,v2,v3\nx,a,1,,3\n");
    CHECK(load_error(dir.path()) == DataErrorCode::NonNumeric);
  }
  SUBCASE("NaN and infinity") {
    write_files(dir.path(), kManifest, "id,label,v1,v2,v3\nx,a,1,2,3\ny,b,nan,2,3\n");
    std::size_t row = 0, col = 0;
    CHECK(load_error(dir.path(), &row, &col) == DataErrorCode::NonFinite);
    CHECK(row == 3);
    CHECK(col == 3);
    write_files(dir.path(), kManifest, "id,label,v1,v2,v3\nx,a,1,2,inf\n");
    CHECK(load_error(dir.path()) == DataErrorCode::NonFinite);
  }
  SUBCASE("bad header") {
    write_files(dir.path(), kManifest, "id,class,v1,v2,v3\nx,a,1,2,3\n");
    CHECK(load_error(dir.path()) == DataErrorCode::BadHeader);
  }
  SUBCASE("bad manifest") {
    write_files(dir.path(), R"({"name": "t", "classes": ["a"]})", "id,label,v1\nx,a,1\n");
    CHECK(load_error(dir.path()) == DataErrorCode::BadManifest);
    write_files(dir.path(), "{not json", "id,label,v1\nx,a,1\n");
    CHECK(load_error(dir.path()) == DataErrorCode::BadManifest);
  }
  SUBCASE("empty class") {
    write_files(dir.path(), kManifest, "id,label,v1,v2,v3\nx,a,1,2,3\n");
    CHECK(load_error(dir.path()) == DataErrorCode::EmptyClass);
  }
}

TEST_CASE("synthetic generator") {
  const auto spec = SynthSpec::defaults();
  CHECK(spec.classes.size() == 4);
  CHECK(spec.samples_per_class == 50);
  CHECK(spec.length == 128);
  CHECK(spec.noise == 0.1);
  const auto d = synth_generate(spec, 3);
  const auto s = describe(d);
  CHECK(s.length == 128);
  CHECK(s.samples == 200);
  CHECK(s.classes == 4);
  CHECK(s.class_counts == std::vector<std::size_t>{50, 50, 50, 50});
  CHECK_NOTHROW(d.validate());

  SUBCASE("same seed gives identical files and the output loads back") {
    testing::TempDir a("synth"), b("synth");
    save_dataset(d, a.path());
    save_dataset(synth_generate(spec, 3), b.path());
    CHECK(read_file(a / "data.csv") == read_file(b / "data.csv"));
    CHECK(read_file(a / "manifest.json") == read_file(b / "manifest.json"));
    CHECK(load_dataset(a.path()) == d);
    CHECK(synth_generate(spec, 4) != d);
  }
  SUBCASE("nearest centroid on raw series separates the classes") {
    const auto train = synth_generate(spec, 11);
    std::vector<std::vector<double>> centroid(4, std::vector<double>(128, 0.0));
    for (const auto& smp : train.samples) {
      for (std::size_t t = 0; t < 128; ++t) centroid[smp.label][t] += smp.values[t] / 50.0;
    }
    const auto test = synth_generate(spec, 12);
    std::size_t correct = 0;
    for (const auto& smp : test.samples) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < 4; ++c) {
        double dist = 0;
        for (std::size_t t = 0; t < 128; ++t) dist += (smp.values[t] - centroid[c][t]) * (smp.values[t] - centroid[c][t]);
        if (dist < best_d) {
          best_d = dist;
          best = c;
        }
      }
      correct += best == smp.label;
    }
    CHECK(static_cast<double>(correct) / test.size() > 0.8);
  }
  SUBCASE("spec validation") {
    CHECK_THROWS_AS(SynthSpec::from_json(R"({"classes": [{"kind": "sinusoid"}]})"), ArgumentError);
    CHECK_THROWS_AS(SynthSpec::from_json(R"({"classes": [{"kind": "chirp"}, {"kind": "ar1"}]})"), ArgumentError);
    CHECK_THROWS_AS(SynthSpec::from_json("[1,2"), ArgumentError);
    const auto custom = SynthSpec::from_json(
        R"({"length": 32, "samples_per_class": 5, "classes": [{"kind": "ar1", "phi": 0.5}, {"kind": "square_wave"}]})");
    CHECK(custom.length == 32);
    CHECK(custom.classes[0].phi == 0.5);
    const auto small = synth_generate(custom, 0);
    CHECK(small.size() == 10);
    CHECK(small.classes == std::vector<std::string>{"ar1", "square_wave"});
  }
}
