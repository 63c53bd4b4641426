#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "lgc3d/checkpoint.hpp"
#include "lgc3d/optim.hpp"
#include "lgc3d/train.hpp"

using namespace lgc3d;

namespace {

// deterministic toy problem shared by the trainer tests
HsiCube toy_cube() {
  return normalize(synth_cube(12, 4, 2, 0.1, 3));
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

}  // namespace

TEST_CASE("rmsprop_update matches the hand-computed step") {
  Tensor<double> theta = Tensor<double>::full({1}, 1.0);
  Tensor<double> grad = Tensor<double>::full({1}, 1.0);
  Tensor<double> v = Tensor<double>::zeros({1});
  rmsprop_update<double>(theta, grad, v, 5e-4, 0.99, 1e-8);

  // v = 0.99*0 + 0.01*1 ; theta = 1 - 5e-4 / (sqrt(v) + 1e-8)
  CHECK(v[0] == doctest::Approx(0.01).epsilon(1e-12));
  const double expect = 1.0 - 5e-4 / (std::sqrt(v[0]) + 1e-8);
  CHECK(theta[0] == doctest::Approx(expect).epsilon(1e-12));
  CHECK(theta[0] == doctest::Approx(0.995).epsilon(1e-6));
}

TEST_CASE("rmsprop_update with zero gradient decays the state and keeps theta") {
  Tensor<double> theta = Tensor<double>::full({3}, 2.5);
  Tensor<double> grad = Tensor<double>::zeros({3});
  Tensor<double> v = Tensor<double>::full({3}, 0.04);
  rmsprop_update<double>(theta, grad, v, 0.1, 0.9, 1e-8);
  for (int64_t i = 0; i < 3; ++i) {
    CHECK(theta[i] == 2.5);
    CHECK(v[i] == doctest::Approx(0.036).epsilon(1e-12));
  }
}

TEST_CASE("rmsprop_update rejects mismatched shapes") {
  Tensor<double> theta = Tensor<double>::zeros({2, 2});
  Tensor<double> grad = Tensor<double>::zeros({4});
  Tensor<double> v = Tensor<double>::zeros({2, 2});
  CHECK_THROWS_AS(rmsprop_update<double>(theta, grad, v, 0.1, 0.9, 1e-8), ShapeError);
  Tensor<double> grad_ok = Tensor<double>::zeros({2, 2});
  Tensor<double> v_bad = Tensor<double>::zeros({1});
  CHECK_THROWS_AS(rmsprop_update<double>(theta, grad_ok, v_bad, 0.1, 0.9, 1e-8), ShapeError);
}

TEST_CASE("Rmsprop drives a quadratic toward its minimum") {
  auto x = ad::make_param(Tensor<double>::from_data({1, 3}, {5.0, -3.0, 2.0}), "x");
  const Tensor<double> target = Tensor<double>::from_data({1, 3}, {1.0, 2.0, 3.0});

  Rmsprop<double> opt({x}, 0.05);
  auto loss_of = [&]() {
    auto diff = ad::add(x, ad::scale(ad::make_const(target), -1.0));
    return ad::matmul(diff, ad::transpose(diff));  // sum of squares, shape {1,1}
  };

  auto first = loss_of();
  const double initial = first->value[0];
  opt.zero_grad();
  ad::backward(first);
  opt.step();

  for (int i = 0; i < 400; ++i) {
    auto loss = loss_of();
    opt.zero_grad();
    ad::backward(loss);
    opt.step();
  }
  auto final_loss = loss_of();
  CHECK(final_loss->value[0] < initial * 1e-3);
  for (int64_t i = 0; i < 3; ++i)
    CHECK(x->value[i] == doctest::Approx(target[i]).epsilon(0.05));

  CHECK(opt.state().size() == 1);
  CHECK(opt.state()[0].numel() == 3);
}

TEST_CASE("train_model records history and checkpoints the best model") {
  const std::string ck = "/tmp/lgc3d_to_ck.bin";
  std::remove(ck.c_str());

  HsiCube cube = toy_cube();
  SampleSplit split = stratified_split(cube, 6, 1, 3, 5);
  REQUIRE(!split.train.empty());

  Rng rng(11);
  Model<float> model = Model<float>::build(toy_config(), rng);

  TrainConfig tc;
  tc.epochs = 2;
  tc.lr = 1e-3;
  tc.batch_size = 16;
  tc.seed = 9;
  tc.checkpoint_path = ck;

  std::ostringstream log;
  TrainResult res = train_model(model, cube, split, tc, &log);

  REQUIRE(res.history.size() == 2);
  CHECK(res.history[0].epoch == 1);
  CHECK(res.history[1].epoch == 2);
  double best = -1.0;
  int64_t best_epoch = -1;
  for (const auto& el : res.history) {
    CHECK(std::isfinite(el.train_loss));
    CHECK(el.val_oa >= 0.0);
    CHECK(el.val_oa <= 1.0);
    CHECK(el.seconds >= 0.0);
    if (el.val_oa > best) {
      best = el.val_oa;
      best_epoch = el.epoch;
    }
  }
  CHECK(res.best_val_oa == best);
  CHECK(res.best_epoch == best_epoch);
  CHECK(res.seconds > 0.0);
  CHECK(log.str().find("epoch 1/2") != std::string::npos);

  // checkpoint holds the restored-best weights: bit-identical logits
  LoadedCheckpoint loaded = load_model_checkpoint(ck);
  CHECK(loaded.config.name == "toy");
  CHECK(loaded.meta["best_val_oa"].get<double>() == res.best_val_oa);
  CHECK(loaded.meta["epoch"].get<int64_t>() == res.best_epoch);

  PatchBatch probe = assemble_batch(cube, {{3, 3}, {8, 8}}, 3);
  Tensor<float> a = model.forward_eval(probe.x);
  Tensor<float> b = loaded.model.forward_eval(probe.x);
  REQUIRE(a.numel() == b.numel());
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);

  std::remove(ck.c_str());
}

TEST_CASE("train_model is deterministic for a fixed seed") {
  HsiCube cube = toy_cube();
  SampleSplit split = stratified_split(cube, 6, 1, 3, 5);

  TrainConfig tc;
  tc.epochs = 2;
  tc.lr = 1e-3;
  tc.batch_size = 16;
  tc.seed = 4;

  Rng ra(21);
  Model<float> ma = Model<float>::build(toy_config(), ra);
  TrainResult a = train_model(ma, cube, split, tc);

  Rng rb(21);
  Model<float> mb = Model<float>::build(toy_config(), rb);
  TrainResult b = train_model(mb, cube, split, tc);

  REQUIRE(a.history.size() == b.history.size());
  for (size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_loss == b.history[i].train_loss);
    CHECK(a.history[i].val_oa == b.history[i].val_oa);
  }
  CHECK(a.best_val_oa == b.best_val_oa);
  CHECK(a.best_epoch == b.best_epoch);
}

TEST_CASE("train_model honors stop_at_val_oa") {
  HsiCube cube = toy_cube();
  SampleSplit split = stratified_split(cube, 6, 1, 3, 5);

  Rng rng(11);
  Model<float> model = Model<float>::build(toy_config(), rng);

  TrainConfig tc;
  tc.epochs = 50;
  tc.lr = 1e-3;
  tc.batch_size = 16;
  tc.seed = 9;
  tc.stop_at_val_oa = 0.0;  // any epoch satisfies this

  TrainResult res = train_model(model, cube, split, tc);
  CHECK(res.history.size() == 1);
}

TEST_CASE("train_model validates its inputs") {
  HsiCube cube = toy_cube();
  SampleSplit split = stratified_split(cube, 6, 1, 3, 5);
  Rng rng(11);
  Model<float> model = Model<float>::build(toy_config(), rng);

  TrainConfig tc;
  tc.epochs = 0;
  CHECK_THROWS_AS(train_model(model, cube, split, tc), ConfigError);

  tc.epochs = 1;
  tc.lr = 0.0;
  CHECK_THROWS_AS(train_model(model, cube, split, tc), ConfigError);

  tc.lr = 1e-3;
  tc.batch_size = 0;
  CHECK_THROWS_AS(train_model(model, cube, split, tc), ConfigError);

  tc.batch_size = 8;
  SampleSplit empty;
  CHECK_THROWS_AS(train_model(model, cube, empty, tc), ValueError);
}

TEST_CASE("train_model reports the epoch when the loss goes non-finite") {
  HsiCube cube = toy_cube();
  cube.data[0] = std::numeric_limits<float>::quiet_NaN();

  SampleSplit split;
  split.train = {{0, 0}, {1, 1}};  // the first patch covers the poisoned pixel

  Rng rng(11);
  Model<float> model = Model<float>::build(toy_config(), rng);

  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 2;
  try {
    train_model(model, cube, split, tc);
    FAIL("expected ValueError");
  } catch (const ValueError& e) {
    CHECK(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("predict_coords is batch-size invariant") {
  HsiCube cube = toy_cube();
  Rng rng(11);
  Model<float> model = Model<float>::build(toy_config(), rng);

  std::vector<std::pair<int64_t, int64_t>> coords;
  for (int64_t r = 0; r < 12; r += 3)
    for (int64_t c = 0; c < 12; c += 3) coords.emplace_back(r, c);

  auto p1 = predict_coords(model, cube, coords, 1);
  auto p7 = predict_coords(model, cube, coords, 7);
  REQUIRE(p1.size() == coords.size());
  CHECK(p1 == p7);
  CHECK_THROWS_AS(predict_coords(model, cube, coords, 0), ValueError);

  MetricsReport rep = evaluate_coords(model, cube, coords, 4);
  CHECK(rep.samples == static_cast<int64_t>(coords.size()));
  CHECK_THROWS_AS(evaluate_coords(model, cube, {}, 4), ValueError);
}

TEST_CASE("palette_color maps unlabeled to black and wraps") {
  auto black = palette_color(0);
  CHECK(black[0] == 0);
  CHECK(black[1] == 0);
  CHECK(black[2] == 0);
  CHECK(palette_color(-3) == black);
  CHECK(palette_color(1) != black);
  CHECK(palette_color(1) == palette_color(21));  // 20-entry palette wraps
  CHECK(palette_color(5) == palette_color(25));
}

TEST_CASE("render_map writes a deterministic plain pixmap") {
  const std::string path = "/tmp/lgc3d_to_map.ppm";
  HsiCube cube = toy_cube();
  cube.labels[0] = 0;  // force one unlabeled pixel

  Rng rng(11);
  Model<float> model = Model<float>::build(toy_config(), rng);

  render_map(model, cube, 8, path);
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  CHECK(text.rfind("P3\n12 12\n255\n", 0) == 0);

  // unlabeled top-left pixel renders black
  std::istringstream body(text.substr(std::string("P3\n12 12\n255\n").size()));
  int r = -1, g = -1, b = -1;
  body >> r >> g >> b;
  CHECK(r == 0);
  CHECK(g == 0);
  CHECK(b == 0);

  render_map(model, cube, 3, "/tmp/lgc3d_to_map2.ppm");
  std::ifstream in2("/tmp/lgc3d_to_map2.ppm", std::ios::binary);
  std::stringstream buf2;
  buf2 << in2.rdbuf();
  CHECK(buf2.str() == text);  // batch size does not change the image

  std::remove(path.c_str());
  std::remove("/tmp/lgc3d_to_map2.ppm");
}
