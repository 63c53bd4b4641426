#include "lgc3d/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "lgc3d/checkpoint.hpp"
#include "lgc3d/ops.hpp"
#include "lgc3d/optim.hpp"
#include "lgc3d/rng.hpp"

namespace lgc3d {

nlohmann::json train_config_to_json(const TrainConfig& tc) {
  return {{"epochs", tc.epochs},
          {"lr", tc.lr},
          {"alpha", tc.alpha},
          {"eps", tc.eps},
          {"batch_size", tc.batch_size},
          {"seed", tc.seed},
          {"lambda", tc.lambda},
          {"tau", tc.tau},
          {"temperature", tc.temperature},
          {"stop_at_val_oa", tc.stop_at_val_oa}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig tc;
  tc.epochs = j.value("epochs", tc.epochs);
  tc.lr = j.value("lr", tc.lr);
  tc.alpha = j.value("alpha", tc.alpha);
  tc.eps = j.value("eps", tc.eps);
  tc.batch_size = j.value("batch_size", tc.batch_size);
  tc.seed = j.value("seed", tc.seed);
  tc.lambda = j.value("lambda", tc.lambda);
  tc.tau = j.value("tau", tc.tau);
  tc.temperature = j.value("temperature", tc.temperature);
  tc.stop_at_val_oa = j.value("stop_at_val_oa", tc.stop_at_val_oa);
  return tc;
}

std::vector<int64_t> predict_coords(const Model<float>& model, const HsiCube& cube,
                                    const std::vector<std::pair<int64_t, int64_t>>& coords,
                                    int64_t batch_size) {
  if (batch_size < 1) throw ValueError("predict: batch size must be >= 1");
  std::vector<int64_t> pred;
  pred.reserve(coords.size());
  for (size_t start = 0; start < coords.size(); start += static_cast<size_t>(batch_size)) {
    const size_t stop = std::min(coords.size(), start + static_cast<size_t>(batch_size));
    const std::vector<std::pair<int64_t, int64_t>> chunk(coords.begin() + static_cast<int64_t>(start),
                                                         coords.begin() + static_cast<int64_t>(stop));
    PatchBatch pb = assemble_batch(cube, chunk, model.cfg.patch);
    Tensor<float> logits = model.forward_eval(pb.x);
    const int64_t k = logits.dim(1);
    for (int64_t b = 0; b < logits.dim(0); ++b) {
      int64_t best = 0;
      for (int64_t c = 1; c < k; ++c)
        if (logits[b * k + c] > logits[b * k + best]) best = c;
      pred.push_back(best);
    }
  }
  return pred;
}

MetricsReport evaluate_coords(const Model<float>& model, const HsiCube& cube,
                              const std::vector<std::pair<int64_t, int64_t>>& coords, int64_t batch_size) {
  if (coords.empty()) throw ValueError("evaluate: no samples");
  if (cube.bands != model.cfg.bands)
    throw ConfigError("model expects " + std::to_string(model.cfg.bands) + " bands, cube has " +
                      std::to_string(cube.bands));
  if (cube.num_classes() > model.cfg.num_classes)
    throw ValueError("cube has " + std::to_string(cube.num_classes()) + " classes but the model ends in " +
                     std::to_string(model.cfg.num_classes) + " logits");
  std::vector<int64_t> truth;
  truth.reserve(coords.size());
  for (const auto& [r, c] : coords) truth.push_back(static_cast<int64_t>(cube.label_at(r, c)) - 1);
  const std::vector<int64_t> pred = predict_coords(model, cube, coords, batch_size);
  return compute_metrics(truth, pred, model.cfg.num_classes);
}

namespace {

std::vector<Tensor<float>> snapshot_tensors(Model<float>& model) {
  std::vector<Tensor<float>> out;
  for (auto& [name, t] : model.named_tensors()) out.push_back(*t);
  return out;
}

void restore_tensors(Model<float>& model, const std::vector<Tensor<float>>& snap) {
  auto named = model.named_tensors();
  for (size_t i = 0; i < named.size(); ++i) *named[i].second = snap[i];
}

}  // namespace

TrainResult train_model(Model<float>& model, const HsiCube& cube, const SampleSplit& split,
                        const TrainConfig& tc, std::ostream* log) {
  if (tc.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (tc.lr <= 0) throw ConfigError("train: learning rate must be positive");
  if (tc.batch_size < 1) throw ConfigError("train: batch size must be >= 1");
  if (split.train.empty()) throw ValueError("train: split has no training samples");

  Rng rng(tc.seed);
  Rmsprop<float> opt(model.params(), static_cast<float>(tc.lr), static_cast<float>(tc.alpha),
                     static_cast<float>(tc.eps));
  // the validation bucket steers checkpointing; tiny splits may not have one
  const auto& val_coords = split.val.empty() ? split.train : split.val;

  TrainResult result;
  std::vector<Tensor<float>> best_snapshot;
  std::vector<size_t> order(split.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto t0 = std::chrono::steady_clock::now();
  for (int64_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    rng.shuffle(order);
    double loss_sum = 0;
    int64_t batch_index = 0;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(tc.batch_size), ++batch_index) {
      const size_t stop = std::min(order.size(), start + static_cast<size_t>(tc.batch_size));
      std::vector<std::pair<int64_t, int64_t>> coords;
      coords.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) coords.push_back(split.train[order[i]]);
      PatchBatch pb = assemble_batch(cube, coords, model.cfg.patch);

      auto logits = model.forward_train(pb.x, static_cast<float>(tc.temperature));
      auto loss = ad::cross_entropy_mean(logits, pb.labels);
      if (tc.lambda != 0)
        loss = ad::add(loss, ad::scale(model.regularizer(static_cast<float>(tc.tau)),
                                       static_cast<float>(tc.lambda)));
      const double loss_value = loss->value[0];
      if (!std::isfinite(loss_value))
        throw ValueError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch_index));
      loss_sum += loss_value * static_cast<double>(stop - start);

      opt.zero_grad();
      ad::backward(loss);
      opt.step();
    }

    EpochLog el;
    el.epoch = epoch;
    el.train_loss = loss_sum / static_cast<double>(order.size());
    el.val_oa = evaluate_coords(model, cube, val_coords, tc.batch_size).oa;
    el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    result.history.push_back(el);
    if (log)
      *log << "epoch " << epoch << "/" << tc.epochs << "  loss " << std::fixed << std::setprecision(6)
           << el.train_loss << "  val_oa " << std::setprecision(4) << el.val_oa << std::defaultfloat << "\n";

    if (el.val_oa > result.best_val_oa) {
      result.best_val_oa = el.val_oa;
      result.best_epoch = epoch;
      best_snapshot = snapshot_tensors(model);
      if (!tc.checkpoint_path.empty()) {
        nlohmann::json extra{{"epoch", epoch},
                             {"best_val_oa", result.best_val_oa},
                             {"rng_state", rng.state_string()},
                             {"train_config", train_config_to_json(tc)}};
        save_model_checkpoint(tc.checkpoint_path, model, extra);
      }
    }
    if (tc.stop_at_val_oa >= 0 && result.best_val_oa >= tc.stop_at_val_oa) break;
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!best_snapshot.empty()) restore_tensors(model, best_snapshot);
  return result;
}

std::array<uint8_t, 3> palette_color(int64_t cls) {
  static const std::array<std::array<uint8_t, 3>, 20> palette = {{
      {255, 228, 69},  {46, 139, 87},   {65, 105, 225}, {255, 99, 71},  {148, 0, 211},
      {0, 206, 209},   {255, 140, 0},   {124, 252, 0},  {219, 112, 147}, {105, 105, 105},
      {176, 196, 222}, {139, 69, 19},   {0, 100, 0},    {255, 20, 147}, {70, 130, 180},
      {240, 230, 140}, {128, 0, 0},     {0, 255, 127},  {186, 85, 211}, {210, 180, 140},
  }};
  if (cls < 1) return {0, 0, 0};
  return palette[static_cast<size_t>((cls - 1) % static_cast<int64_t>(palette.size()))];
}

void render_map(const Model<float>& model, const HsiCube& cube, int64_t batch_size,
                const std::string& path) {
  std::vector<std::pair<int64_t, int64_t>> labeled;
  for (int64_t r = 0; r < cube.height; ++r)
    for (int64_t c = 0; c < cube.width; ++c)
      if (cube.label_at(r, c) > 0) labeled.emplace_back(r, c);
  const std::vector<int64_t> pred = predict_coords(model, cube, labeled, batch_size);

  std::vector<int64_t> cls(static_cast<size_t>(cube.height * cube.width), 0);
  for (size_t i = 0; i < labeled.size(); ++i)
    cls[static_cast<size_t>(labeled[i].first * cube.width + labeled[i].second)] = pred[i] + 1;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::write, "cannot open '" + path + "' for writing");
  out << "P3\n" << cube.width << " " << cube.height << "\n255\n";
  for (int64_t r = 0; r < cube.height; ++r) {
    for (int64_t c = 0; c < cube.width; ++c) {
      const auto rgb = palette_color(cls[static_cast<size_t>(r * cube.width + c)]);
      out << int(rgb[0]) << " " << int(rgb[1]) << " " << int(rgb[2]) << (c + 1 < cube.width ? " " : "\n");
    }
  }
  if (!out) throw IoError(IoError::Kind::write, "short write to '" + path + "'");
}

}  // namespace lgc3d
