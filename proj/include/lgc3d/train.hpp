#pragma once

#include <array>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgc3d/hsi.hpp"
#include "lgc3d/metrics.hpp"
#include "lgc3d/model.hpp"

namespace lgc3d {

struct TrainConfig {
  int64_t epochs = 100;
  double lr = 5e-4;
  double alpha = 0.99;  // rmsprop decay
  double eps = 1e-8;
  int64_t batch_size = 32;
  uint64_t seed = 0;
  double lambda = 0.1;  // group-regularizer weight
  double tau = 1.0;     // column-mass floor
  double temperature = 1.0;
  std::string checkpoint_path;  // best-validation weights land here when set
  double stop_at_val_oa = -1.0;  // stop early once val OA reaches this (negative = off)
};

nlohmann::json train_config_to_json(const TrainConfig& tc);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
  int64_t epoch = 0;       // 1-based
  double train_loss = 0;   // sample-weighted mean over the epoch
  double val_oa = 0;
  double seconds = 0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  double best_val_oa = -1.0;
  int64_t best_epoch = -1;  // 1-based
  double seconds = 0;
};

// predictions for a coordinate list, batched through the eval-mode forward
std::vector<int64_t> predict_coords(const Model<float>& model, const HsiCube& cube,
                                    const std::vector<std::pair<int64_t, int64_t>>& coords,
                                    int64_t batch_size);

MetricsReport evaluate_coords(const Model<float>& model, const HsiCube& cube,
                              const std::vector<std::pair<int64_t, int64_t>>& coords, int64_t batch_size);

// Shuffled mini-batches, loss = cross-entropy + lambda * group regularizer,
// rmsprop updates. Validation OA after every epoch; the best model is written
// to checkpoint_path on strict improvement and restored into `model` at the
// end. A non-finite loss aborts with the offending epoch/batch.
TrainResult train_model(Model<float>& model, const HsiCube& cube, const SampleSplit& split,
                        const TrainConfig& tc, std::ostream* log = nullptr);

// fixed palette for class maps; classes are 1-based, 0 (unlabeled) is black
std::array<uint8_t, 3> palette_color(int64_t cls);

// predicted class of every labeled pixel as a plain portable pixmap (P3);
// unlabeled pixels stay black
void render_map(const Model<float>& model, const HsiCube& cube, int64_t batch_size,
                const std::string& path);

}  // namespace lgc3d
