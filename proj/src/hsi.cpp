#include "lgc3d/hsi.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "lgc3d/errors.hpp"

namespace lgc3d {

namespace {

constexpr char kMagic[12] = {'L', 'G', 'C', '3', 'D', 'H', 'S', 'I', 'C', 'U', 'B', 'E'};
constexpr uint16_t kVersion = 1;

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& in, void* p, size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw IoError(IoError::Kind::truncated, std::string("cube file ends inside ") + what);
}

}  // namespace

void HsiCube::validate() const {
  if (height < 1 || width < 1 || bands < 1)
    throw ValueError("cube dims must be positive, got " + std::to_string(height) + "x" + std::to_string(width) +
                     "x" + std::to_string(bands));
  if (static_cast<int64_t>(data.size()) != height * width * bands)
    throw ValueError("cube data size " + std::to_string(data.size()) + " does not match dims");
  if (static_cast<int64_t>(labels.size()) != height * width)
    throw ValueError("cube label raster size " + std::to_string(labels.size()) + " does not match dims");
  for (int16_t l : labels)
    if (l < 0) throw ValueError("cube labels must be >= 0 (0 = unlabeled)");
  for (float v : data)
    if (!std::isfinite(v)) throw ValueError("cube data contains a non-finite value");
}

void save_cube(const HsiCube& cube, const std::string& path) {
  cube.validate();
  nlohmann::json meta{{"height", cube.height}, {"width", cube.width},   {"bands", cube.bands},
                      {"dtype", "f32"},        {"name", cube.name},     {"class_names", cube.class_names},
                      {"num_classes", cube.num_classes()}};
  const std::string meta_text = meta.dump();
  if (meta_text.size() > 0xffffffffull) throw IoError(IoError::Kind::write, "cube metadata too large");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::write, "cannot open '" + path + "' for writing");
  write_bytes(out, kMagic, sizeof(kMagic));
  const uint16_t version = kVersion, flags = 0;
  write_bytes(out, &version, 2);
  write_bytes(out, &flags, 2);
  const uint32_t meta_len = static_cast<uint32_t>(meta_text.size());
  write_bytes(out, &meta_len, 4);
  write_bytes(out, meta_text.data(), meta_text.size());
  write_bytes(out, cube.data.data(), cube.data.size() * sizeof(float));
  write_bytes(out, cube.labels.data(), cube.labels.size() * sizeof(int16_t));
  if (!out) throw IoError(IoError::Kind::write, "short write to '" + path + "'");
}

HsiCube load_cube(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::not_found, "cube file '" + path + "' not found");

  char magic[sizeof(kMagic)];
  read_bytes(in, magic, sizeof(magic), "header");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(IoError::Kind::bad_magic, "'" + path + "' is not a cube file");
  uint16_t version = 0, flags = 0;
  read_bytes(in, &version, 2, "header");
  read_bytes(in, &flags, 2, "header");
  if (version != kVersion)
    throw IoError(IoError::Kind::bad_version, "cube version " + std::to_string(version) + " unsupported");
  uint32_t meta_len = 0;
  read_bytes(in, &meta_len, 4, "header");
  std::string meta_text(meta_len, '\0');
  read_bytes(in, meta_text.data(), meta_len, "metadata");

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const std::exception& e) {
    throw IoError(IoError::Kind::parse, std::string("cube metadata: ") + e.what());
  }

  HsiCube cube;
  cube.height = meta.at("height").get<int64_t>();
  cube.width = meta.at("width").get<int64_t>();
  cube.bands = meta.at("bands").get<int64_t>();
  if (meta.contains("name")) cube.name = meta.at("name").get<std::string>();
  if (meta.contains("class_names")) cube.class_names = meta.at("class_names").get<std::vector<std::string>>();
  if (cube.height < 1 || cube.width < 1 || cube.bands < 1 ||
      cube.height > (int64_t{1} << 20) || cube.width > (int64_t{1} << 20) || cube.bands > (int64_t{1} << 20) ||
      cube.height * cube.width > (int64_t{1} << 34) / std::max<int64_t>(cube.bands, 1))
    throw IoError(IoError::Kind::dim_overflow, "cube dims " + std::to_string(cube.height) + "x" +
                                                   std::to_string(cube.width) + "x" + std::to_string(cube.bands) +
                                                   " invalid or too large");

  cube.data.resize(static_cast<size_t>(cube.height * cube.width * cube.bands));
  read_bytes(in, cube.data.data(), cube.data.size() * sizeof(float), "data payload");
  cube.labels.resize(static_cast<size_t>(cube.height * cube.width));
  read_bytes(in, cube.labels.data(), cube.labels.size() * sizeof(int16_t), "label payload");
  cube.validate();
  return cube;
}

HsiCube remove_bands(const HsiCube& cube, const std::vector<int64_t>& band_indices) {
  std::vector<bool> drop(static_cast<size_t>(cube.bands), false);
  for (int64_t b : band_indices) {
    if (b < 0 || b >= cube.bands)
      throw ValueError("remove_bands: index " + std::to_string(b) + " outside [0," + std::to_string(cube.bands) + ")");
    if (drop[static_cast<size_t>(b)]) throw ValueError("remove_bands: duplicate index " + std::to_string(b));
    drop[static_cast<size_t>(b)] = true;
  }
  HsiCube out;
  out.height = cube.height;
  out.width = cube.width;
  out.bands = cube.bands - static_cast<int64_t>(band_indices.size());
  if (out.bands < 1) throw ValueError("remove_bands: no bands would remain");
  out.labels = cube.labels;
  out.class_names = cube.class_names;
  out.name = cube.name;
  out.data.resize(static_cast<size_t>(out.height * out.width * out.bands));
  size_t w = 0;
  for (int64_t px = 0; px < cube.height * cube.width; ++px)
    for (int64_t b = 0; b < cube.bands; ++b)
      if (!drop[static_cast<size_t>(b)]) out.data[w++] = cube.data[static_cast<size_t>(px * cube.bands + b)];
  return out;
}

Tensor<float> extract_patch(const HsiCube& cube, int64_t r, int64_t c, int64_t m) {
  if (m < 1 || m % 2 == 0) throw ValueError("extract_patch: window must be odd, got " + std::to_string(m));
  if (r < 0 || r >= cube.height || c < 0 || c >= cube.width)
    throw ValueError("extract_patch: center (" + std::to_string(r) + "," + std::to_string(c) + ") outside cube");
  const int64_t pad = m / 2;
  Tensor<float> patch({m, m, cube.bands});
  for (int64_t pr = 0; pr < m; ++pr) {
    const int64_t sr = r - pad + pr;
    if (sr < 0 || sr >= cube.height) continue;  // stays zero
    for (int64_t pc = 0; pc < m; ++pc) {
      const int64_t sc = c - pad + pc;
      if (sc < 0 || sc >= cube.width) continue;
      std::memcpy(patch.data() + (pr * m + pc) * cube.bands,
                  cube.data.data() + static_cast<size_t>((sr * cube.width + sc) * cube.bands),
                  static_cast<size_t>(cube.bands) * sizeof(float));
    }
  }
  return patch;
}

HsiCube normalize(const HsiCube& cube) {
  cube.validate();
  HsiCube out = cube;
  const int64_t px = cube.height * cube.width;
  for (int64_t b = 0; b < cube.bands; ++b) {
    double sum = 0.0;
    for (int64_t p = 0; p < px; ++p) sum += cube.data[static_cast<size_t>(p * cube.bands + b)];
    const double mean = sum / static_cast<double>(px);
    double sq = 0.0;
    for (int64_t p = 0; p < px; ++p) {
      const double d = cube.data[static_cast<size_t>(p * cube.bands + b)] - mean;
      sq += d * d;
    }
    const double std_dev = std::max(std::sqrt(sq / static_cast<double>(px)), 1e-8);
    for (int64_t p = 0; p < px; ++p)
      out.data[static_cast<size_t>(p * cube.bands + b)] =
          static_cast<float>((cube.data[static_cast<size_t>(p * cube.bands + b)] - mean) / std_dev);
  }
  return out;
}

SampleSplit stratified_split(const HsiCube& cube, int64_t ratio_train, int64_t ratio_val, int64_t ratio_test,
                             uint64_t seed) {
  if (ratio_train < 1 || ratio_val < 1 || ratio_test < 1)
    throw ValueError("split ratios must be positive integers");
  cube.validate();
  SampleSplit split;
  split.ratio_train = ratio_train;
  split.ratio_val = ratio_val;
  split.ratio_test = ratio_test;
  split.seed = seed;
  const int64_t total = ratio_train + ratio_val + ratio_test;
  const int64_t K = cube.num_classes();
  Rng root(seed);

  for (int64_t k = 1; k <= K; ++k) {
    std::vector<std::pair<int64_t, int64_t>> coords;
    for (int64_t r = 0; r < cube.height; ++r)
      for (int64_t c = 0; c < cube.width; ++c)
        if (cube.label_at(r, c) == k) coords.emplace_back(r, c);
    const int64_t n = static_cast<int64_t>(coords.size());
    if (n == 0) continue;
    if (n < 3) {
      split.warnings.push_back("class " + std::to_string(k) + " has only " + std::to_string(n) +
                               " labeled pixels; assigning all to train");
      split.train.insert(split.train.end(), coords.begin(), coords.end());
      continue;
    }
    Rng rng = root.derive(static_cast<uint64_t>(k));
    rng.shuffle(coords);
    const int64_t n_train = ratio_train * n / total;
    const int64_t n_val = ratio_val * n / total;
    for (int64_t i = 0; i < n; ++i) {
      if (i < n_train)
        split.train.push_back(coords[static_cast<size_t>(i)]);
      else if (i < n_train + n_val)
        split.val.push_back(coords[static_cast<size_t>(i)]);
      else
        split.test.push_back(coords[static_cast<size_t>(i)]);
    }
  }
  return split;
}

namespace {
nlohmann::json coords_json(const std::vector<std::pair<int64_t, int64_t>>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& [r, c] : v) a.push_back({r, c});
  return a;
}
std::vector<std::pair<int64_t, int64_t>> coords_from_json(const nlohmann::json& a) {
  std::vector<std::pair<int64_t, int64_t>> v;
  for (const auto& e : a) v.emplace_back(e.at(0).get<int64_t>(), e.at(1).get<int64_t>());
  return v;
}
}  // namespace

std::string split_to_json(const SampleSplit& split) {
  nlohmann::json j{{"ratios", {split.ratio_train, split.ratio_val, split.ratio_test}},
                   {"seed", split.seed},
                   {"train", coords_json(split.train)},
                   {"val", coords_json(split.val)},
                   {"test", coords_json(split.test)},
                   {"warnings", split.warnings}};
  return j.dump(2);
}

SampleSplit split_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw IoError(IoError::Kind::parse, std::string("split manifest: ") + e.what());
  }
  SampleSplit s;
  const auto& r = j.at("ratios");
  s.ratio_train = r.at(0).get<int64_t>();
  s.ratio_val = r.at(1).get<int64_t>();
  s.ratio_test = r.at(2).get<int64_t>();
  s.seed = j.at("seed").get<uint64_t>();
  s.train = coords_from_json(j.at("train"));
  s.val = coords_from_json(j.at("val"));
  s.test = coords_from_json(j.at("test"));
  if (j.contains("warnings")) s.warnings = j.at("warnings").get<std::vector<std::string>>();
  return s;
}

std::vector<std::vector<double>> class_mean_spectra(const HsiCube& cube) {
  const int64_t K = cube.num_classes();
  std::vector<std::vector<double>> mean(static_cast<size_t>(K), std::vector<double>(static_cast<size_t>(cube.bands), 0.0));
  std::vector<int64_t> count(static_cast<size_t>(K), 0);
  for (int64_t r = 0; r < cube.height; ++r)
    for (int64_t c = 0; c < cube.width; ++c) {
      const int16_t l = cube.label_at(r, c);
      if (l < 1) continue;
      ++count[static_cast<size_t>(l - 1)];
      for (int64_t b = 0; b < cube.bands; ++b) mean[static_cast<size_t>(l - 1)][static_cast<size_t>(b)] += cube.at(r, c, b);
    }
  for (int64_t k = 0; k < K; ++k)
    if (count[static_cast<size_t>(k)] > 0)
      for (auto& v : mean[static_cast<size_t>(k)]) v /= static_cast<double>(count[static_cast<size_t>(k)]);
  return mean;
}

HsiCube synth_cube(int64_t size, int64_t bands, int64_t classes, double sigma, uint64_t seed) {
  if (size < 1 || bands < 1) throw ValueError("synth_cube: size and bands must be >= 1");
  if (classes < 2) throw ValueError("synth_cube: need at least 2 classes");
  if (classes > size * size) throw ValueError("synth_cube: more classes than pixels");
  if (sigma < 0) throw ValueError("synth_cube: noise sigma must be >= 0");

  Rng rng(seed);

  // distinct Voronoi sites, one per class
  std::vector<std::pair<int64_t, int64_t>> sites;
  while (static_cast<int64_t>(sites.size()) < classes) {
    const int64_t r = rng.randint(size), c = rng.randint(size);
    bool dup = false;
    for (const auto& s : sites) dup = dup || (s.first == r && s.second == c);
    if (!dup) sites.emplace_back(r, c);
  }

  // smooth per-class signatures: offset + 3 harmonics; resample any class
  // whose curve sits closer than 5 sigma (L2 over bands) to an earlier one
  std::vector<std::vector<double>> curve(static_cast<size_t>(classes));
  auto draw_curve = [&]() {
    std::vector<double> f(static_cast<size_t>(bands));
    const double offset = rng.uniform(-0.5, 0.5);
    double amp[3], phase[3];
    for (int h = 0; h < 3; ++h) {
      amp[h] = rng.uniform(0.3, 1.0) / (h + 1);
      phase[h] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    for (int64_t b = 0; b < bands; ++b) {
      const double t = bands > 1 ? static_cast<double>(b) / static_cast<double>(bands - 1) : 0.0;
      double v = offset;
      for (int h = 0; h < 3; ++h) v += amp[h] * std::sin(2.0 * std::numbers::pi * (h + 1) * t + phase[h]);
      f[static_cast<size_t>(b)] = v;
    }
    return f;
  };
  auto l2 = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  for (int64_t k = 0; k < classes; ++k) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      curve[static_cast<size_t>(k)] = draw_curve();
      bool ok = true;
      for (int64_t j = 0; j < k; ++j)
        ok = ok && l2(curve[static_cast<size_t>(k)], curve[static_cast<size_t>(j)]) > 5.0 * sigma;
      if (ok) break;
      if (attempt == 999)
        throw ValueError("synth_cube: could not separate class signatures; lower sigma or the class count");
    }
  }

  HsiCube cube;
  cube.height = cube.width = size;
  cube.bands = bands;
  cube.name = "synthetic";
  cube.labels.resize(static_cast<size_t>(size * size));
  cube.data.resize(static_cast<size_t>(size * size * bands));
  for (int64_t k = 0; k < classes; ++k) cube.class_names.push_back("region" + std::to_string(k + 1));

  for (int64_t r = 0; r < size; ++r)
    for (int64_t c = 0; c < size; ++c) {
      int64_t best = 0;
      int64_t best_d = (r - sites[0].first) * (r - sites[0].first) + (c - sites[0].second) * (c - sites[0].second);
      for (int64_t k = 1; k < classes; ++k) {
        const int64_t d =
            (r - sites[static_cast<size_t>(k)].first) * (r - sites[static_cast<size_t>(k)].first) +
            (c - sites[static_cast<size_t>(k)].second) * (c - sites[static_cast<size_t>(k)].second);
        if (d < best_d) {
          best = k;
          best_d = d;
        }
      }
      cube.labels[static_cast<size_t>(r * size + c)] = static_cast<int16_t>(best + 1);
      for (int64_t b = 0; b < bands; ++b)
        cube.at(r, c, b) = static_cast<float>(curve[static_cast<size_t>(best)][static_cast<size_t>(b)] +
                                              sigma * rng.normal());
    }
  return cube;
}

PatchBatch assemble_batch(const HsiCube& cube, const std::vector<std::pair<int64_t, int64_t>>& coords,
                          int64_t m) {
  const int64_t n = static_cast<int64_t>(coords.size());
  if (n == 0) throw ValueError("assemble_batch: empty coordinate list");
  PatchBatch batch;
  batch.x = Tensor<float>({n, 1, cube.bands, m, m});
  batch.coords = coords;
  for (int64_t i = 0; i < n; ++i) {
    const auto [r, c] = coords[static_cast<size_t>(i)];
    const int16_t raw = cube.label_at(r, c);
    if (raw < 1) throw ValueError("assemble_batch: pixel (" + std::to_string(r) + "," + std::to_string(c) + ") is unlabeled");
    batch.labels.push_back(raw - 1);
    Tensor<float> patch = extract_patch(cube, r, c, m);
    for (int64_t b = 0; b < cube.bands; ++b)
      for (int64_t pr = 0; pr < m; ++pr)
        for (int64_t pc = 0; pc < m; ++pc)
          batch.x(i, int64_t{0}, b, pr, pc) = patch(pr, pc, b);
  }
  return batch;
}

}  // namespace lgc3d
