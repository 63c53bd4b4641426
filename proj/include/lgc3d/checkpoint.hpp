#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgc3d/compiler.hpp"
#include "lgc3d/model.hpp"

namespace lgc3d {

uint32_t crc32(const void* data, size_t n);

// Single-file container: JSON manifest (names, dtypes, shapes, checksums,
// embedded meta object) followed by concatenated little-endian payloads.
class ArrayStore {
 public:
  struct Entry {
    std::string name;
    std::string dtype;  // "f32" | "i64"
    std::vector<int64_t> shape;
    std::vector<uint8_t> bytes;
  };

  nlohmann::json meta = nlohmann::json::object();

  void add_f32(const std::string& name, const Tensor<float>& t);
  void add_i64(const std::string& name, const std::vector<int64_t>& v);
  bool has(const std::string& name) const;
  Tensor<float> f32(const std::string& name) const;
  std::vector<int64_t> i64(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static ArrayStore load(const std::string& path);

 private:
  const Entry& find(const std::string& name) const;
  std::vector<Entry> entries_;
};

// -- model checkpoints --------------------------------------------------------

void save_model_checkpoint(const std::string& path, Model<float>& model, const nlohmann::json& extra_meta);

struct LoadedCheckpoint {
  ModelConfig config;
  Model<float> model;
  nlohmann::json meta;
};

LoadedCheckpoint load_model_checkpoint(const std::string& path);

// -- compiled inference plans -------------------------------------------------

void save_plan(const std::string& path, const FrozenGraph<float>& graph, const CompiledNetwork<float>& net,
               const nlohmann::json& extra_meta);

struct LoadedPlan {
  FrozenGraph<float> graph;    // naive executable form (the oracle path)
  CompiledNetwork<float> net;  // recompiled and checked against the stored plan
  nlohmann::json meta;
};

LoadedPlan load_plan(const std::string& path);

}  // namespace lgc3d
