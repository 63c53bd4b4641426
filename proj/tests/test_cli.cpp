#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgc3d/cli.hpp"
#include "lgc3d/hsi.hpp"

using namespace lgc3d;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int rc;
  std::string out, err;
};

CliResult run(std::vector<std::string> args) {
  std::vector<const char*> argv;
  argv.push_back("lgc3d");
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int rc = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {rc, out.str(), err.str()};
}

nlohmann::json parse_json(const CliResult& r) {
  REQUIRE(r.rc == 0);
  return nlohmann::json::parse(r.out);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
}

// scratch directory shared by the pipeline test
const std::string kDir = "/tmp/lgc3d_cli";

std::string path(const std::string& name) { return kDir + "/" + name; }

struct DirGuard {
  DirGuard() {
    fs::remove_all(kDir);
    fs::create_directories(kDir);
  }
  ~DirGuard() { fs::remove_all(kDir); }
};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({}).rc == 2);
  CHECK(run({"frobnicate"}).rc == 2);
  CHECK(run({"synth"}).rc == 2);                          // missing required --out
  CHECK(run({"synth", "--bogus-flag", "1"}).rc == 2);
  auto help = run({"--help"});
  CHECK(help.rc == 0);
  CHECK(help.out.find("synth") != std::string::npos);
}

TEST_CASE("runtime failures exit with code 1 and a single error line") {
  auto r = run({"split", "--cube", "/tmp/lgc3d_cli_missing.cube", "--out", "/tmp/lgc3d_cli_missing.json"});
  CHECK(r.rc == 1);
  CHECK(r.err.rfind("error: ", 0) == 0);
  CHECK(r.err.find('\n') == r.err.size() - 1);  // exactly one line
}

TEST_CASE("the full pipeline runs end to end") {
  DirGuard guard;

  // synth
  auto synth = run({"synth", "--size", "16", "--bands", "8", "--classes", "3", "--sigma", "0.1",
                    "--seed", "5", "--name", "toy16", "--out", path("toy.cube"), "--json"});
  auto sj = parse_json(synth);
  CHECK(sj["height"] == 16);
  CHECK(sj["labeled"] == 256);

  // split
  auto split = run({"split", "--cube", path("toy.cube"), "--ratio", "6:1:3", "--seed", "3",
                    "--out", path("split.json"), "--json"});
  auto pj = parse_json(split);
  const int64_t total = pj["train"].get<int64_t>() + pj["val"].get<int64_t>() + pj["test"].get<int64_t>();
  CHECK(total == 256);
  CHECK(pj["train"].get<int64_t>() > pj["test"].get<int64_t>());

  // model config file
  write_text(path("tiny.json"), R"({
    "name": "tiny",
    "stage_blocks": [1, 1],
    "stage_growth": [2, 4],
    "base_growth": 2,
    "stage_groups": 2,
    "patch": 5,
    "bands": 8,
    "num_classes": 3
  })");

  // train (one epoch; the smoke test only checks plumbing, not accuracy)
  auto train = run({"train", "--cube", path("toy.cube"), "--split", path("split.json"),
                    "--config", path("tiny.json"), "--epochs", "1", "--batch", "16",
                    "--seed", "2", "--out", path("model.ckpt"), "--out-json", path("run0.json"),
                    "--quiet", "--json"});
  auto tj = parse_json(train);
  CHECK(tj["config"] == "tiny");
  CHECK(tj["patch"] == 5);
  CHECK(tj["runs"].size() == 1);
  CHECK(tj["runs"][0]["epochs_run"] == 1);
  CHECK(tj.contains("oa"));
  const double train_oa = tj["oa"].get<double>();
  CHECK(train_oa >= 0.0);
  CHECK(train_oa <= 1.0);
  CHECK(fs::exists(path("model.ckpt")));
  CHECK(fs::exists(path("run0.json")));

  // eval agrees with the train-time test metrics
  auto eval = run({"eval", "--cube", path("toy.cube"), "--split", path("split.json"),
                   "--checkpoint", path("model.ckpt"), "--json"});
  auto ej = parse_json(eval);
  CHECK(ej["bucket"] == "test");
  CHECK(ej["compiled"] == false);
  CHECK(ej["oa"].get<double>() == doctest::Approx(train_oa).epsilon(1e-12));

  // compiled eval is cross-checked against the frozen naive path internally
  auto evalc = run({"eval", "--cube", path("toy.cube"), "--split", path("split.json"),
                    "--checkpoint", path("model.ckpt"), "--compiled", "--json"});
  auto ecj = parse_json(evalc);
  CHECK(ecj["compiled"] == true);
  CHECK(ecj["gathers_per_run"].get<int64_t>() >= 1);
  CHECK(ecj["samples"] == ej["samples"]);

  // compile to a plan
  auto compile = run({"compile", "--checkpoint", path("model.ckpt"), "--out", path("model.plan"), "--json"});
  auto cj = parse_json(compile);
  CHECK(cj["grouped_layers"].get<int64_t>() == 3);  // 2 dense + 1 transition
  CHECK(cj["gathers_per_run"].get<int64_t>() == 4);
  CHECK(fs::exists(path("model.plan")));

  // bench the plan
  auto bench = run({"bench", "--plan", path("model.plan"), "--reps", "2", "--batch", "4", "--json"});
  auto bj = parse_json(bench);
  CHECK(bj["reps"] == 2);
  CHECK(bj["compiled_gathers"] == cj["gathers_per_run"]);
  CHECK(bj["naive_gathers"].get<int64_t>() == 2 * bj["grouped_layers"].get<int64_t>());
  CHECK(bj["max_abs_diff"].get<double>() <= 1e-4);

  // class map
  auto map = run({"map", "--cube", path("toy.cube"), "--checkpoint", path("model.ckpt"),
                  "--out", path("map.ppm"), "--json"});
  auto mj = parse_json(map);
  CHECK(mj["width"] == 16);
  std::ifstream ppm(path("map.ppm"), std::ios::binary);
  std::string header;
  std::getline(ppm, header);
  CHECK(header == "P3");

  // report aggregates the run JSON
  auto report = run({"report", "--dir", kDir, "--out-csv", path("table.csv"), "--json"});
  auto rj = parse_json(report);
  REQUIRE(rj.size() == 1);
  CHECK(rj[0]["config"] == "tiny");
  CHECK(rj[0]["runs"] == 1);
  CHECK(rj[0]["oa_mean"].get<double>() == doctest::Approx(train_oa).epsilon(1e-12));

  std::ifstream csv(path("table.csv"));
  std::string csv_header;
  std::getline(csv, csv_header);
  CHECK(csv_header == "dataset,config,ratio,patch,runs,oa_mean,oa_std,aa_mean,aa_std,kappa_mean,kappa_std");
  std::string csv_row;
  std::getline(csv, csv_row);
  CHECK(csv_row.find("toy16,tiny,6:1:3,5,1,") == 0);
}

TEST_CASE("convert builds a cube from raw and CSV inputs") {
  DirGuard guard;

  const int64_t h = 3, w = 4, bands = 2;
  std::vector<float> data(static_cast<size_t>(h * w * bands));
  for (size_t i = 0; i < data.size(); ++i) data[i] = 0.25f * static_cast<float>(i);
  std::vector<int16_t> labels(static_cast<size_t>(h * w));
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int16_t>(i % 3);

  {
    std::ofstream f(path("d.f32"), std::ios::binary);
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
    std::ofstream g(path("l.i16"), std::ios::binary);
    g.write(reinterpret_cast<const char*>(labels.data()),
            static_cast<std::streamsize>(labels.size() * sizeof(int16_t)));
  }

  auto conv = run({"convert", "--data", path("d.f32"), "--labels", path("l.i16"),
                   "--height", "3", "--width", "4", "--bands", "2", "--name", "tiny",
                   "--class-names", "a,b", "--out", path("raw.cube"), "--json"});
  auto cj = parse_json(conv);
  CHECK(cj["height"] == 3);

  HsiCube cube = load_cube(path("raw.cube"));
  CHECK(cube.name == "tiny");
  CHECK(cube.class_names == std::vector<std::string>{"a", "b"});
  CHECK(cube.at(0, 0, 1) == 0.25f);
  CHECK(cube.at(2, 3, 1) == 0.25f * 23.0f);
  CHECK(cube.label_at(1, 0) == labels[4]);

  // the same cube from CSV text inputs
  std::ostringstream dcsv, lcsv;
  for (size_t i = 0; i < data.size(); ++i) dcsv << data[i] << (i + 1 < data.size() ? "," : "\n");
  for (size_t i = 0; i < labels.size(); ++i) lcsv << labels[i] << (i + 1 < labels.size() ? "," : "\n");
  write_text(path("d.csv"), dcsv.str());
  write_text(path("l.csv"), lcsv.str());

  auto conv2 = run({"convert", "--data", path("d.csv"), "--labels", path("l.csv"),
                    "--height", "3", "--width", "4", "--bands", "2", "--name", "tiny",
                    "--class-names", "a,b", "--out", path("csv.cube")});
  CHECK(conv2.rc == 0);
  HsiCube cube2 = load_cube(path("csv.cube"));
  CHECK(cube2.data == cube.data);
  CHECK(cube2.labels == cube.labels);

  // element count mismatch
  auto bad = run({"convert", "--data", path("d.f32"), "--labels", path("l.i16"),
                  "--height", "5", "--width", "4", "--bands", "2", "--out", path("bad.cube")});
  CHECK(bad.rc == 1);
  CHECK(bad.err.rfind("error: ", 0) == 0);
}

TEST_CASE("flops reports reference deltas for the presets") {
  auto r = run({"flops", "--config", "small", "--json"});
  auto j = parse_json(r);
  CHECK(j["config"] == "small");
  CHECK(j["bands"] == 200);
  CHECK(j["patch"] == 15);
  CHECK(j["params"].get<int64_t>() > 0);
  CHECK(j["madds"].get<int64_t>() > 0);
  CHECK(j["params_with_selection"].get<int64_t>() >
        j["params"].get<int64_t>());

  int64_t layer_params = 0, layer_madds = 0;
  for (const auto& l : j["layers"]) {
    layer_params += l["params"].get<int64_t>();
    layer_madds += l["madds"].get<int64_t>();
  }
  CHECK(layer_params == j["params"].get<int64_t>());
  CHECK(layer_madds == j["madds"].get<int64_t>());

  REQUIRE(j.contains("reference"));
  CHECK(j["reference"]["params"] == 156856);
  CHECK(j["reference"]["flops"] == 6898600);

  // smaller geometry means fewer madds
  auto r2 = run({"flops", "--config", "small", "--bands", "32", "--patch", "9", "--json"});
  auto j2 = parse_json(r2);
  CHECK(j2["madds"].get<int64_t>() < j["madds"].get<int64_t>());
}

TEST_CASE("eval rejects an unknown bucket") {
  DirGuard guard;
  auto synth = run({"synth", "--size", "8", "--bands", "4", "--classes", "2", "--seed", "1",
                    "--out", path("b.cube")});
  REQUIRE(synth.rc == 0);
  auto r = run({"eval", "--cube", path("b.cube"), "--checkpoint", path("nonexistent.ckpt"),
                "--bucket", "nope"});
  CHECK(r.rc == 1);
  CHECK(r.err.find("bucket") != std::string::npos);
}
