#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

#include "deepfeat/cli/cli.hpp"
#include "deepfeat/data/dataset.hpp"

using namespace deepfeat;
using deepfeat::testing::TempDir;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

/// A small spec so the CLI tests stay quick.
std::filesystem::path small_spec(const TempDir& tmp) {
  const auto p = tmp / "spec.json";
  std::ofstream(p) << R"({"name": "tiny", "samples_per_class": 8, "length": 20,
    "classes": [{"name": "wave", "kind": "sinusoid"}, {"name": "ramp", "kind": "linear_trend"}]})";
  return p;
}

}  // namespace

TEST_CASE("cli: usage errors exit with 2") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"bogus"}).code == cli::kExitUsage);
  CHECK(run({"synth"}).code == cli::kExitUsage);  // --out is required
  CHECK(run({"train", "--out", "x"}).code == cli::kExitUsage);  // no dataset
  CHECK(run({"describe", "--dataset", "/definitely/not/here"}).code == cli::kExitUsage);
  CHECK(run({"--help"}).code == cli::kExitOk);
}

TEST_CASE("cli: synth, describe and extract") {
  TempDir tmp("cli");
  const auto spec = small_spec(tmp);
  const auto ds = tmp / "ds";

  auto r = run({"synth", "--spec", spec.string(), "--seed", "5", "--out", ds.string()});
  REQUIRE(r.code == cli::kExitOk);
  const std::string csv = slurp(ds / "data.csv");
  const std::string manifest = slurp(ds / "manifest.json");

  // Same seed, same bytes.
  REQUIRE(run({"synth", "--spec", spec.string(), "--seed", "5", "--out", (tmp / "ds2").string()}).code == 0);
  CHECK(slurp(tmp / "ds2" / "data.csv") == csv);
  REQUIRE(run({"synth", "--spec", spec.string(), "--seed", "6", "--out", (tmp / "ds3").string()}).code == 0);
  CHECK(slurp(tmp / "ds3" / "data.csv") != csv);

  r = run({"describe", "--dataset", ds.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out == "name tiny\nlength 20\nsamples 16\nclasses 2\n");

  SUBCASE("rf features") {
    r = run({"extract", "--dataset", ds.string(), "--branch", "rf", "--out", (tmp / "rf.csv").string()});
    REQUIRE(r.code == 0);
    const auto lines = lines_of(slurp(tmp / "rf.csv"));
    REQUIRE(lines.size() == 17);
    std::size_t commas = 0;
    for (char c : lines[1]) commas += c == ',';
    CHECK(commas + 1 == 20000);
    CHECK(lines[0].rfind("f0,f1,", 0) == 0);
  }
  SUBCASE("local features from a fresh model") {
    r = run({"extract", "--dataset", ds.string(), "--branch", "local", "--out", (tmp / "l.csv").string()});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("note:") != std::string::npos);
    const auto lines = lines_of(slurp(tmp / "l.csv"));
    REQUIRE(lines.size() == 17);
    std::size_t commas = 0;
    for (char c : lines[1]) commas += c == ',';
    CHECK(commas + 1 == 256);
  }
  SUBCASE("bad extract requests") {
    CHECK(run({"extract", "--dataset", ds.string(), "--branch", "pf", "--out", (tmp / "p.csv").string()}).code == 2);
    CHECK(run({"extract", "--dataset", ds.string(), "--branch", "xx", "--out", (tmp / "p.csv").string()}).code == 2);
    CHECK(!std::filesystem::exists(tmp / "p.csv"));
  }
  SUBCASE("a malformed spec is a usage error") {
    std::ofstream(tmp / "bad.json") << R"({"classes": [{"name": "a", "kind": "triangle"}]})";
    CHECK(run({"synth", "--spec", (tmp / "bad.json").string(), "--out", (tmp / "o").string()}).code == 2);
    std::ofstream(tmp / "bad2.json") << "{not json";
    CHECK(run({"synth", "--spec", (tmp / "bad2.json").string(), "--out", (tmp / "o").string()}).code == 2);
  }

  // None of the above touched the input dataset.
  CHECK(slurp(ds / "data.csv") == csv);
  CHECK(slurp(ds / "manifest.json") == manifest);
}

TEST_CASE("cli: a broken data file reports its code") {
  TempDir tmp("cli-data");
  REQUIRE(run({"synth", "--spec", small_spec(tmp).string(), "--out", (tmp / "ds").string()}).code == 0);
  std::ofstream(tmp / "ds" / "data.csv", std::ios::app) << "extra,wave,1,2\n";
  const auto r = run({"describe", "--dataset", (tmp / "ds").string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.rfind("error [", 0) == 0);
}

TEST_CASE("cli: runtime failures exit with 1") {
  TempDir tmp("cli-rt");
  std::filesystem::create_directories(tmp / "ck");
  std::ofstream(tmp / "ck" / "model.json") << R"({"format": "something else"})";
  const auto r = run({"eval", "--checkpoint", (tmp / "ck").string()});
  CHECK(r.code == cli::kExitRuntime);
  CHECK(r.err.rfind("error: ", 0) == 0);
}

TEST_CASE("cli: train then eval") {
  TempDir tmp("cli-train");
  const auto ds = tmp / "ds";
  REQUIRE(run({"synth", "--spec", small_spec(tmp).string(), "--out", ds.string()}).code == 0);
  const auto out = tmp / "run";
  auto r = run({"train", "--dataset", ds.string(), "--out", out.string(), "--mode", "rf", "--epochs", "2",
                "--selection", "last", "--seed", "3"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(std::filesystem::exists(out / "checkpoint" / "model.tsar"));
  CHECK(lines_of(slurp(out / "history.csv")).size() == 3);
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report.at("mode") == "rf");
  CHECK(report.at("selected_epoch") == 2);

  r = run({"eval", "--checkpoint", (out / "checkpoint").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto ev = nlohmann::json::parse(r.out);
  CHECK(ev.at("accuracy").get<double>() == report.at("accuracy").get<double>());

  r = run({"eval", "--checkpoint", (out / "checkpoint").string(), "--split", "all"});
  REQUIRE(r.code == 0);
  const auto all = nlohmann::json::parse(r.out);
  std::size_t n = 0;
  for (const auto& c : all.at("per_class")) n += c.at("support").get<std::size_t>();
  CHECK(n == 16);

  // Flags override a JSON config; unknown modes are usage errors.
  std::ofstream(tmp / "cfg.json") << R"({"epochs": 1, "mode": "rf", "selection": "last"})";
  r = run({"train", "--config", (tmp / "cfg.json").string(), "--dataset", ds.string(), "--out",
           (tmp / "run2").string(), "--epochs", "2"});
  REQUIRE(r.code == 0);
  CHECK(lines_of(slurp(tmp / "run2" / "history.csv")).size() == 3);
  CHECK(run({"train", "--dataset", ds.string(), "--out", (tmp / "run3").string(), "--mode", "zz"}).code == 2);
  CHECK(run({"train", "--dataset", ds.string(), "--out", (tmp / "run3").string(), "--mode", "rf", "--lr", "1e30",
             "--epochs", "20", "--selection", "last"})
            .code == cli::kExitRuntime);
}

TEST_CASE("cli: report") {
  TempDir tmp("cli-report");
  std::ofstream(tmp / "a.csv") << "variant,run,seed,accuracy,macro_f1\nfull,0,0,2,2\nfull,1,1,4,4\n";
  std::ofstream(tmp / "b.csv") << "variant,run,seed,accuracy,macro_f1\nrf,0,0,1,1\nrf,1,1,3,3\n";
  auto r = run({"report", "--runs", (tmp / "a.csv").string(), (tmp / "b.csv").string(), "--out",
                (tmp / "out").string()});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto d = lines_of(slurp(tmp / "out" / "cohens_d.csv"));
  REQUIRE(d.size() == 5);
  CHECK(d[1] == "accuracy,Ours,0.0000,0.7071");
  CHECK(lines_of(slurp(tmp / "out" / "ablation.csv")).size() == 3);

  // Identical runs on both sides: d is 0.
  std::ofstream(tmp / "c.csv") << "variant,run,seed,accuracy,macro_f1\nrf,0,0,0.9,0.8\nrf,1,1,0.7,0.6\n"
                                  "full,0,0,0.9,0.8\nfull,1,1,0.7,0.6\n";
  r = run({"report", "--runs", (tmp / "c.csv").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("accuracy,RF,0.0000,0.0000") != std::string::npos);

  CHECK(run({"report", "--runs", (tmp / "missing.csv").string()}).code == 2);
}
