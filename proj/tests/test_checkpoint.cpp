#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "lgc3d/checkpoint.hpp"

using namespace lgc3d;

namespace {

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ArrayStore sample_store() {
  ArrayStore store;
  Tensor<float> t = Tensor<float>::from_data({2, 3}, {1.5f, -2.25f, 0.0f, 4.0f, 1e-6f, -1e6f});
  store.add_f32("w", t);
  store.add_i64("perm", {3, 1, 4, 1, 5});
  store.meta["note"] = "hello";
  return store;
}

ModelConfig toy_config() {
  ModelConfig cfg;
  cfg.name = "toy";
  cfg.stage_blocks = {1};
  cfg.stage_growth = {2};
  cfg.base_growth = 2;
  cfg.stage_groups = {2};
  cfg.patch = 3;
  cfg.bands = 4;
  cfg.num_classes = 2;
  return cfg;
}

// a frozen two-layer graph plus its compiled form, for plan tests
struct PlanFixture {
  FrozenGraph<float> graph;
  CompiledNetwork<float> net;
};

GroupedConv3d<float> make_frozen(int64_t c, int64_t n, int64_t g, uint64_t seed) {
  for (uint64_t s = seed;; ++s) {
    Rng rng(s);
    auto layer = LgcConv3dLayer<float>::init(Conv3dSpec::make(c, n, 3, 1, 1), g, rng);
    try {
      return layer.freeze();
    } catch (const FreezeError&) {
      continue;  // resample; empty-channel groups are a legal training outcome
    }
  }
}

PlanFixture make_plan(uint64_t seed) {
  PlanFixture fx;
  int64_t id = fx.graph.add_input(5);
  id = fx.graph.add_conv_grouped(id, make_frozen(5, 6, 2, seed));
  id = fx.graph.add_relu(id);
  id = fx.graph.add_conv_grouped(id, make_frozen(6, 4, 2, seed + 100));
  id = fx.graph.add_global_avg_pool(id);
  Rng rng(seed + 7);
  Tensor<float> w({3, 4}), b({3});
  for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<float>(0.3 * rng.normal());
  for (int64_t i = 0; i < b.numel(); ++i) b[i] = static_cast<float>(0.1 * rng.normal());
  fx.graph.add_linear(id, w, b);
  fx.net = compile(fx.graph);
  return fx;
}

Tensor<float> probe_input(uint64_t seed) {
  Rng rng(seed);
  Tensor<float> x({2, 5, 4, 4, 4});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  return x;
}

}  // namespace

TEST_CASE("crc32 matches the standard check value") {
  const char* s = "123456789";
  CHECK(crc32(s, 9) == 0xCBF43926u);
  CHECK(crc32(s, 0) == 0u);
}

TEST_CASE("ArrayStore round-trips arrays and meta") {
  const std::string path = "/tmp/lgc3d_tc_store.bin";
  ArrayStore store = sample_store();
  store.save(path);

  ArrayStore back = ArrayStore::load(path);
  CHECK(back.meta["note"] == "hello");
  CHECK(back.has("w"));
  CHECK(back.has("perm"));
  CHECK(!back.has("missing"));
  REQUIRE(back.entries().size() == 2);

  Tensor<float> w = back.f32("w");
  REQUIRE(w.shape() == std::vector<int64_t>{2, 3});
  Tensor<float> orig = sample_store().f32("w");
  for (int64_t i = 0; i < w.numel(); ++i) CHECK(w[i] == orig[i]);

  CHECK(back.i64("perm") == std::vector<int64_t>{3, 1, 4, 1, 5});

  // saving the loaded store reproduces the same bytes
  const std::string path2 = "/tmp/lgc3d_tc_store2.bin";
  back.save(path2);
  CHECK(slurp(path) == slurp(path2));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("ArrayStore reports missing names and dtype mismatches") {
  ArrayStore store = sample_store();
  try {
    store.f32("nope");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.kind() == IoError::Kind::not_found);
  }
  try {
    store.f32("perm");  // stored as i64
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.kind() == IoError::Kind::parse);
  }
  try {
    store.i64("w");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.kind() == IoError::Kind::parse);
  }
}

TEST_CASE("ArrayStore::load rejects damaged containers") {
  const std::string path = "/tmp/lgc3d_tc_bad.bin";
  sample_store().save(path);
  const std::vector<char> good = slurp(path);

  SUBCASE("missing file") {
    try {
      ArrayStore::load("/tmp/lgc3d_tc_no_such_file.bin");
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::not_found);
    }
  }
  SUBCASE("bad magic") {
    std::vector<char> bytes = good;
    bytes[0] = 'X';
    spit(path, bytes);
    try {
      ArrayStore::load(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::bad_magic);
    }
  }
  SUBCASE("bad version") {
    std::vector<char> bytes = good;
    bytes[8] = 9;  // little-endian u16 version right after the 8-byte magic
    spit(path, bytes);
    try {
      ArrayStore::load(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::bad_version);
    }
  }
  SUBCASE("truncated payload") {
    std::vector<char> bytes = good;
    bytes.resize(bytes.size() - 6);
    spit(path, bytes);
    try {
      ArrayStore::load(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::truncated);
    }
  }
  SUBCASE("flipped payload byte fails the checksum") {
    std::vector<char> bytes = good;
    bytes[bytes.size() - 3] ^= 0x40;
    spit(path, bytes);
    try {
      ArrayStore::load(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.kind() == IoError::Kind::parse);
      CHECK(std::string(e.what()).find("checksum") != std::string::npos);
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("model checkpoints restore config, weights, and meta") {
  const std::string path = "/tmp/lgc3d_tc_model.bin";
  Rng rng(31);
  Model<float> model = Model<float>::build(toy_config(), rng);
  save_model_checkpoint(path, model, {{"epoch", 7}, {"tag", "unit"}});

  LoadedCheckpoint loaded = load_model_checkpoint(path);
  CHECK(loaded.config.name == "toy");
  CHECK(loaded.config.stage_blocks == std::vector<int64_t>{1});
  CHECK(loaded.meta["epoch"].get<int64_t>() == 7);
  CHECK(loaded.meta["tag"] == "unit");
  CHECK(loaded.meta["kind"] == "checkpoint");

  Rng prng(5);
  Tensor<float> x({2, 1, 4, 3, 3});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(prng.normal());
  Tensor<float> a = model.forward_eval(x);
  Tensor<float> b = loaded.model.forward_eval(x);
  REQUIRE(a.numel() == b.numel());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  std::remove(path.c_str());
}

TEST_CASE("loading a non-checkpoint container as a checkpoint fails") {
  const std::string path = "/tmp/lgc3d_tc_notck.bin";
  sample_store().save(path);
  try {
    load_model_checkpoint(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.kind() == IoError::Kind::parse);
  }
  std::remove(path.c_str());
}

TEST_CASE("a checkpoint missing an array fails to load") {
  const std::string path = "/tmp/lgc3d_tc_missing.bin";
  Rng rng(31);
  Model<float> model = Model<float>::build(toy_config(), rng);

  ArrayStore store;
  store.meta["kind"] = "checkpoint";
  store.meta["model_config"] = config_to_json(model.cfg);
  auto named = model.named_tensors();
  for (size_t i = 0; i + 1 < named.size(); ++i) store.add_f32(named[i].first, *named[i].second);
  store.save(path);

  try {
    load_model_checkpoint(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.kind() == IoError::Kind::not_found);
  }
  std::remove(path.c_str());
}

TEST_CASE("inference plans round-trip and replay bit-identically") {
  const std::string path = "/tmp/lgc3d_tc_plan.bin";
  PlanFixture fx = make_plan(50);
  save_plan(path, fx.graph, fx.net, {{"label", "unit-plan"}});

  LoadedPlan loaded = load_plan(path);
  CHECK(loaded.meta["label"] == "unit-plan");
  CHECK(loaded.net.source_digest == fx.net.source_digest);
  CHECK(loaded.net.gathers_per_run() == fx.net.gathers_per_run());

  Tensor<float> x = probe_input(3);
  Tensor<float> a = run_compiled(fx.net, x);
  Tensor<float> b = run_compiled(loaded.net, x);
  Tensor<float> c = run_frozen(loaded.graph, x);
  REQUIRE(a.numel() == b.numel());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
  REQUIRE(c.numel() == b.numel());
  for (int64_t i = 0; i < c.numel(); ++i) CHECK(std::abs(c[i] - b[i]) <= 1e-5f);
  std::remove(path.c_str());
}

TEST_CASE("a plan whose compiled indices disagree with its graph fails to load") {
  const std::string path = "/tmp/lgc3d_tc_planbad.bin";
  PlanFixture a = make_plan(50);
  PlanFixture b = make_plan(900);  // same topology, different packing

  // only meaningful when the packings actually differ
  bool differs = false;
  for (size_t i = 0; i < a.net.merged.size() && !differs; ++i)
    if (a.net.merged[i].perm != b.net.merged[i].perm) differs = true;
  REQUIRE(differs);

  save_plan(path, a.graph, b.net, {});
  try {
    load_plan(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.kind() == IoError::Kind::parse);
  }
  std::remove(path.c_str());
}

TEST_CASE("loading a non-plan container as a plan fails") {
  const std::string path = "/tmp/lgc3d_tc_notplan.bin";
  sample_store().save(path);
  try {
    load_plan(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.kind() == IoError::Kind::parse);
  }
  std::remove(path.c_str());
}
