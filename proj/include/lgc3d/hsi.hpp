#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lgc3d/rng.hpp"
#include "lgc3d/tensor.hpp"

namespace lgc3d {

// A hyperspectral cube: data laid out (row, col, band), band fastest; labels
// per pixel with 0 = unlabeled, classes 1..K.
struct HsiCube {
  int64_t height = 0, width = 0, bands = 0;
  std::vector<float> data;     // height * width * bands
  std::vector<int16_t> labels; // height * width
  std::vector<std::string> class_names;
  std::string name;

  float at(int64_t r, int64_t c, int64_t b) const { return data[static_cast<size_t>((r * width + c) * bands + b)]; }
  float& at(int64_t r, int64_t c, int64_t b) { return data[static_cast<size_t>((r * width + c) * bands + b)]; }
  int16_t label_at(int64_t r, int64_t c) const { return labels[static_cast<size_t>(r * width + c)]; }

  int64_t num_classes() const {
    int16_t k = 0;
    for (int16_t l : labels) k = std::max(k, l);
    return k;
  }
  int64_t labeled_count() const {
    int64_t n = 0;
    for (int16_t l : labels) n += (l > 0);
    return n;
  }
  void validate() const;
};

void save_cube(const HsiCube& cube, const std::string& path);
HsiCube load_cube(const std::string& path);

// drops the listed band indices, preserving the order of the rest
HsiCube remove_bands(const HsiCube& cube, const std::vector<int64_t>& band_indices);

// M x M x bands window centered at (r,c) over the zero-padded cube (pad = M/2)
Tensor<float> extract_patch(const HsiCube& cube, int64_t r, int64_t c, int64_t m);

// per-band standardization to mean 0 / std 1 (std floor 1e-8)
HsiCube normalize(const HsiCube& cube);

struct SampleSplit {
  std::vector<std::pair<int64_t, int64_t>> train, val, test;  // (row, col)
  int64_t ratio_train = 6, ratio_val = 1, ratio_test = 3;
  uint64_t seed = 0;
  std::vector<std::string> warnings;  // classes too small to split
};

// per-class seeded shuffle; floor(a/(a+b+c) * n) to train, floor(b/..) to val,
// remainder to test; classes with < 3 labeled pixels go wholly to train
SampleSplit stratified_split(const HsiCube& cube, int64_t ratio_train, int64_t ratio_val, int64_t ratio_test,
                             uint64_t seed);

std::string split_to_json(const SampleSplit& split);
SampleSplit split_from_json(const std::string& text);

// Voronoi regions over K seeded sites, one smooth spectral signature per
// class (rejection-sampled for pairwise separation), plus Gaussian noise
HsiCube synth_cube(int64_t size, int64_t bands, int64_t classes, double sigma, uint64_t seed);

// class-mean spectra of a cube, one row per class 1..K
std::vector<std::vector<double>> class_mean_spectra(const HsiCube& cube);

struct PatchBatch {
  Tensor<float> x;  // (n, 1, bands, M, M)
  std::vector<int64_t> labels;  // 0-indexed classes
  std::vector<std::pair<int64_t, int64_t>> coords;
};

// patches for a coordinate list; labels are cube labels shifted to 0-index
PatchBatch assemble_batch(const HsiCube& cube, const std::vector<std::pair<int64_t, int64_t>>& coords,
                          int64_t m);

}  // namespace lgc3d
