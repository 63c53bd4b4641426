#include "lgc3d/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lgc3d/checkpoint.hpp"
#include "lgc3d/train.hpp"

namespace lgc3d {
namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::not_found, "file '" + path + "' not found");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::write, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw IoError(IoError::Kind::write, "short write to '" + path + "'");
}

bool has_extension(const std::string& path, const std::string& ext) {
  return path.size() > ext.size() && path.compare(path.size() - ext.size(), ext.size(), ext) == 0;
}

struct RatioSpec {
  int64_t train = 6, val = 1, test = 3;
};

RatioSpec parse_ratio(const std::string& s) {
  RatioSpec r;
  char c1 = 0, c2 = 0;
  std::istringstream ss(s);
  if (!(ss >> r.train >> c1 >> r.val >> c2 >> r.test) || c1 != ':' || c2 != ':' || !(ss >> std::ws).eof())
    throw ValueError("ratio '" + s + "' is not of the form train:val:test");
  if (r.train < 0 || r.val < 0 || r.test < 0 || r.train + r.val + r.test == 0)
    throw ValueError("ratio '" + s + "' must have nonnegative parts and a positive sum");
  return r;
}

std::string ratio_string(const RatioSpec& r) {
  return std::to_string(r.train) + ":" + std::to_string(r.val) + ":" + std::to_string(r.test);
}

// plain-array interchange for community cube/label dumps: CSV by extension,
// raw little-endian binary otherwise
std::vector<float> read_f32_array(const std::string& path, int64_t expected) {
  std::vector<float> out;
  out.reserve(static_cast<size_t>(expected));
  if (has_extension(path, ".csv")) {
    std::string text = read_text_file(path);
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream ss(text);
    double v = 0;
    while (ss >> v) out.push_back(static_cast<float>(v));
    if (!ss.eof()) throw IoError(IoError::Kind::parse, "'" + path + "' has non-numeric content");
  } else {
    const std::string raw = read_text_file(path);
    if (raw.size() % sizeof(float) != 0)
      throw IoError(IoError::Kind::parse, "'" + path + "' size is not a multiple of 4 bytes");
    out.resize(raw.size() / sizeof(float));
    std::memcpy(out.data(), raw.data(), raw.size());
  }
  if (static_cast<int64_t>(out.size()) != expected)
    throw IoError(IoError::Kind::truncated, "'" + path + "' holds " + std::to_string(out.size()) +
                                                " values, expected " + std::to_string(expected));
  return out;
}

std::vector<int16_t> read_i16_array(const std::string& path, int64_t expected) {
  std::vector<int16_t> out;
  out.reserve(static_cast<size_t>(expected));
  if (has_extension(path, ".csv")) {
    std::string text = read_text_file(path);
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream ss(text);
    int64_t v = 0;
    while (ss >> v) out.push_back(static_cast<int16_t>(v));
    if (!ss.eof()) throw IoError(IoError::Kind::parse, "'" + path + "' has non-numeric content");
  } else {
    const std::string raw = read_text_file(path);
    if (raw.size() % sizeof(int16_t) != 0)
      throw IoError(IoError::Kind::parse, "'" + path + "' size is not a multiple of 2 bytes");
    out.resize(raw.size() / sizeof(int16_t));
    std::memcpy(out.data(), raw.data(), raw.size());
  }
  if (static_cast<int64_t>(out.size()) != expected)
    throw IoError(IoError::Kind::truncated, "'" + path + "' holds " + std::to_string(out.size()) +
                                                " values, expected " + std::to_string(expected));
  return out;
}

nlohmann::json metrics_json(const MetricsReport& m) {
  nlohmann::json confusion = nlohmann::json::array();
  for (int64_t r = 0; r < m.classes; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int64_t c = 0; c < m.classes; ++c) row.push_back(m.confusion[static_cast<size_t>(r * m.classes + c)]);
    confusion.push_back(std::move(row));
  }
  return {{"samples", m.samples}, {"classes", m.classes},     {"oa", m.oa},
          {"aa", m.aa},           {"kappa", m.kappa},         {"per_class", m.per_class},
          {"class_counts", m.class_counts},                   {"confusion", std::move(confusion)}};
}

void print_metrics_text(std::ostream& out, const MetricsReport& m) {
  out << std::fixed << std::setprecision(4) << "samples " << m.samples << "  oa " << m.oa << "  aa " << m.aa
      << "  kappa " << m.kappa << "\n"
      << std::defaultfloat;
  for (size_t k = 0; k < m.per_class.size(); ++k)
    out << "  class " << (k + 1) << ": " << m.class_counts[k] << " samples, recall " << std::fixed
        << std::setprecision(4) << m.per_class[k] << std::defaultfloat << "\n";
}

HsiCube load_cube_for_model(const std::string& path, bool do_normalize) {
  HsiCube cube = load_cube(path);
  return do_normalize ? normalize(cube) : cube;
}

SampleSplit resolve_split(const HsiCube& cube, const std::string& split_path, const RatioSpec& ratio,
                          uint64_t seed) {
  if (!split_path.empty()) return split_from_json(read_text_file(split_path));
  return stratified_split(cube, ratio.train, ratio.val, ratio.test, seed);
}

const std::vector<std::pair<int64_t, int64_t>>& pick_bucket(const SampleSplit& split, const std::string& bucket,
                                                            std::vector<std::pair<int64_t, int64_t>>& all) {
  if (bucket == "train") return split.train;
  if (bucket == "val") return split.val;
  if (bucket == "test") return split.test;
  if (bucket == "all") {
    all = split.train;
    all.insert(all.end(), split.val.begin(), split.val.end());
    all.insert(all.end(), split.test.begin(), split.test.end());
    return all;
  }
  throw ValueError("bucket '" + bucket + "' is not one of train|val|test|all");
}

std::vector<int64_t> predict_compiled_coords(const CompiledNetwork<float>& net, const HsiCube& cube,
                                             const std::vector<std::pair<int64_t, int64_t>>& coords,
                                             int64_t patch, int64_t batch_size) {
  std::vector<int64_t> pred;
  pred.reserve(coords.size());
  for (size_t start = 0; start < coords.size(); start += static_cast<size_t>(batch_size)) {
    const size_t stop = std::min(coords.size(), start + static_cast<size_t>(batch_size));
    const std::vector<std::pair<int64_t, int64_t>> chunk(coords.begin() + static_cast<int64_t>(start),
                                                         coords.begin() + static_cast<int64_t>(stop));
    PatchBatch pb = assemble_batch(cube, chunk, patch);
    Tensor<float> logits = run_compiled(net, pb.x);
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

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Table 8 inference-cost figures (Indian Pines, 200 bands, 15x15 patches)
bool reference_costs(const std::string& config_name, int64_t& params, int64_t& flops) {
  if (config_name == "small") { params = 156856; flops = 6898600; return true; }
  if (config_name == "base") { params = 882272; flops = 36199104; return true; }
  if (config_name == "larger") { params = 1834848; flops = 72421584; return true; }
  return false;
}

// ---------------------------------------------------------------------------

struct ConvertArgs {
  std::string data, labels, out, name = "converted", class_names;
  int64_t height = 0, width = 0, bands = 0;
  bool json = false;
};

int run_convert(const ConvertArgs& a, std::ostream& out) {
  HsiCube cube;
  cube.height = a.height;
  cube.width = a.width;
  cube.bands = a.bands;
  cube.name = a.name;
  cube.data = read_f32_array(a.data, a.height * a.width * a.bands);
  cube.labels = read_i16_array(a.labels, a.height * a.width);
  if (!a.class_names.empty()) {
    std::istringstream ss(a.class_names);
    std::string tok;
    while (std::getline(ss, tok, ',')) cube.class_names.push_back(tok);
  }
  cube.validate();
  save_cube(cube, a.out);
  if (a.json)
    out << nlohmann::json{{"out", a.out},
                          {"height", cube.height},
                          {"width", cube.width},
                          {"bands", cube.bands},
                          {"classes", cube.num_classes()},
                          {"labeled", cube.labeled_count()}}
               .dump(2)
        << "\n";
  else
    out << "wrote " << a.out << " (" << cube.height << "x" << cube.width << ", " << cube.bands << " bands, "
        << cube.num_classes() << " classes, " << cube.labeled_count() << " labeled)\n";
  return 0;
}

struct SynthArgs {
  int64_t size = 48, bands = 16, classes = 4;
  double sigma = 0.1;
  uint64_t seed = 0;
  std::string name = "synthetic", out;
  bool json = false;
};

int run_synth(const SynthArgs& a, std::ostream& out) {
  HsiCube cube = synth_cube(a.size, a.bands, a.classes, a.sigma, a.seed);
  cube.name = a.name;
  save_cube(cube, a.out);
  if (a.json)
    out << nlohmann::json{{"out", a.out},
                          {"height", cube.height},
                          {"width", cube.width},
                          {"bands", cube.bands},
                          {"classes", cube.num_classes()},
                          {"labeled", cube.labeled_count()},
                          {"sigma", a.sigma},
                          {"seed", a.seed}}
               .dump(2)
        << "\n";
  else
    out << "wrote " << a.out << " (" << cube.height << "x" << cube.width << ", " << cube.bands << " bands, "
        << cube.num_classes() << " classes)\n";
  return 0;
}

struct SplitArgs {
  std::string cube, out, ratio = "6:1:3";
  uint64_t seed = 0;
  bool json = false;
};

int run_split(const SplitArgs& a, std::ostream& out, std::ostream& err) {
  HsiCube cube = load_cube(a.cube);
  const RatioSpec r = parse_ratio(a.ratio);
  SampleSplit split = stratified_split(cube, r.train, r.val, r.test, a.seed);
  write_text_file(a.out, split_to_json(split));
  for (const auto& w : split.warnings) err << "warning: " << w << "\n";
  if (a.json)
    out << nlohmann::json{{"out", a.out},
                          {"ratio", ratio_string(r)},
                          {"seed", a.seed},
                          {"train", split.train.size()},
                          {"val", split.val.size()},
                          {"test", split.test.size()},
                          {"warnings", split.warnings}}
               .dump(2)
        << "\n";
  else
    out << "wrote " << a.out << " (train " << split.train.size() << ", val " << split.val.size() << ", test "
        << split.test.size() << ")\n";
  return 0;
}

struct TrainArgs {
  std::string cube, split, config = "small", out, out_json, ratio = "6:1:3";
  int64_t patch = 0, groups = 0, runs = 1;
  TrainConfig tc;
  bool no_normalize = false, quiet = false, json = false;
};

int run_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  if (a.runs < 1) throw ValueError("--runs must be >= 1");
  HsiCube cube = load_cube_for_model(a.cube, !a.no_normalize);
  const RatioSpec ratio = parse_ratio(a.ratio);
  SampleSplit split = resolve_split(cube, a.split, ratio, a.tc.seed);
  for (const auto& w : split.warnings) err << "warning: " << w << "\n";

  ModelConfig cfg = load_model_config(a.config);
  cfg.bands = cube.bands;
  cfg.num_classes = cube.num_classes();
  if (a.patch > 0) cfg.patch = a.patch;
  if (a.groups > 0) cfg.stage_groups.assign(cfg.stage_blocks.size(), a.groups);
  cfg.validate();

  nlohmann::json runs = nlohmann::json::array();
  std::vector<double> oas, aas, kappas;
  for (int64_t r = 0; r < a.runs; ++r) {
    TrainConfig tc = a.tc;
    tc.seed = a.tc.seed + static_cast<uint64_t>(r);
    tc.checkpoint_path = a.out.empty() ? "" : (a.runs > 1 ? a.out + ".run" + std::to_string(r) : a.out);

    Rng model_rng = Rng(tc.seed).derive(1);  // init stream; batch order uses the seed directly
    Model<float> model = Model<float>::build(cfg, model_rng);
    if (!a.quiet) err << "run " << (r + 1) << "/" << a.runs << " (seed " << tc.seed << ")\n";
    TrainResult res = train_model(model, cube, split, tc, a.quiet ? nullptr : &err);

    nlohmann::json run{{"seed", tc.seed},
                       {"best_val_oa", res.best_val_oa},
                       {"best_epoch", res.best_epoch},
                       {"epochs_run", res.history.size()},
                       {"seconds", res.seconds}};
    if (!tc.checkpoint_path.empty()) run["checkpoint"] = tc.checkpoint_path;
    if (!split.test.empty()) {
      const MetricsReport m = evaluate_coords(model, cube, split.test, tc.batch_size);
      run["test"] = metrics_json(m);
      oas.push_back(m.oa);
      aas.push_back(m.aa);
      kappas.push_back(m.kappa);
      if (!a.quiet)
        err << "run " << (r + 1) << " test oa " << std::fixed << std::setprecision(4) << m.oa << "  aa " << m.aa
            << "  kappa " << m.kappa << std::defaultfloat << "\n";
    }
    runs.push_back(std::move(run));
  }

  nlohmann::json result{{"dataset", cube.name},       {"config", cfg.name}, {"ratio", ratio_string(ratio)},
                        {"patch", cfg.patch},         {"bands", cfg.bands}, {"classes", cfg.num_classes},
                        {"runs", std::move(runs)}};
  if (!oas.empty()) {
    result["oa"] = mean_of(oas);
    result["aa"] = mean_of(aas);
    result["kappa"] = mean_of(kappas);
    result["oa_std"] = sample_std(oas);
    result["aa_std"] = sample_std(aas);
    result["kappa_std"] = sample_std(kappas);
  }
  if (!a.out.empty()) result["checkpoint"] = a.runs > 1 ? a.out + ".run0" : a.out;
  if (!a.out_json.empty()) write_text_file(a.out_json, result.dump(2) + "\n");
  if (a.json)
    out << result.dump(2) << "\n";
  else if (!oas.empty())
    out << "test oa " << std::fixed << std::setprecision(4) << mean_of(oas) << " ± " << sample_std(oas) << "  aa "
        << mean_of(aas) << " ± " << sample_std(aas) << "  kappa " << mean_of(kappas) << " ± " << sample_std(kappas)
        << std::defaultfloat << " over " << a.runs << " run(s)\n";
  else
    out << "training finished (no test bucket in the split)\n";
  return 0;
}

struct EvalArgs {
  std::string cube, split, checkpoint, bucket = "test", ratio = "6:1:3";
  uint64_t seed = 0;
  int64_t batch = 32;
  bool compiled = false, no_normalize = false, json = false;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  HsiCube cube = load_cube_for_model(a.cube, !a.no_normalize);
  SampleSplit split = resolve_split(cube, a.split, parse_ratio(a.ratio), a.seed);
  std::vector<std::pair<int64_t, int64_t>> all;
  const auto& coords = pick_bucket(split, a.bucket, all);
  if (coords.empty()) throw ValueError("bucket '" + a.bucket + "' is empty");

  LoadedCheckpoint lc = load_model_checkpoint(a.checkpoint);
  MetricsReport m;
  nlohmann::json extra = nlohmann::json::object();
  if (a.compiled) {
    lc.model.freeze_all();
    // frozen naive path and the compiled plan must agree sample-for-sample
    std::vector<int64_t> truth;
    truth.reserve(coords.size());
    for (const auto& [r, c] : coords) truth.push_back(static_cast<int64_t>(cube.label_at(r, c)) - 1);
    const std::vector<int64_t> naive_pred = predict_coords(lc.model, cube, coords, a.batch);
    FrozenGraph<float> graph = lc.model.lower();
    CompiledNetwork<float> net = compile(graph);
    const std::vector<int64_t> comp_pred =
        predict_compiled_coords(net, cube, coords, lc.model.cfg.patch, a.batch);
    const auto cm_naive = confusion_matrix(truth, naive_pred, lc.model.cfg.num_classes);
    const auto cm_comp = confusion_matrix(truth, comp_pred, lc.model.cfg.num_classes);
    if (cm_naive != cm_comp)
      throw ValueError("compiled and uncompiled inference disagree on the evaluation split");
    m = metrics_from_confusion(cm_comp, lc.model.cfg.num_classes);
    extra["compiled"] = true;
    extra["gathers_per_run"] = net.gathers_per_run();
    extra["source_digest"] = net.source_digest;
  } else {
    m = evaluate_coords(lc.model, cube, coords, a.batch);
    extra["compiled"] = false;
  }

  if (a.json) {
    nlohmann::json j = metrics_json(m);
    j["bucket"] = a.bucket;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    out << j.dump(2) << "\n";
  } else {
    out << "bucket " << a.bucket << (a.compiled ? " (compiled, verified against uncompiled)" : "") << "\n";
    print_metrics_text(out, m);
  }
  return 0;
}

struct CompileArgs {
  std::string checkpoint, out;
  bool json = false;
};

int run_compile(const CompileArgs& a, std::ostream& out) {
  LoadedCheckpoint lc = load_model_checkpoint(a.checkpoint);
  lc.model.freeze_all();
  FrozenGraph<float> graph = lc.model.lower();
  CompiledNetwork<float> net = compile(graph);
  save_plan(a.out, graph, net, {{"model_config", config_to_json(lc.model.cfg)}});
  if (a.json)
    out << nlohmann::json{{"out", a.out},
                          {"ops", graph.ops.size()},
                          {"grouped_layers", graph.grouped_layer_count()},
                          {"gathers_per_run", net.gathers_per_run()},
                          {"source_digest", net.source_digest}}
               .dump(2)
        << "\n";
  else
    out << "wrote " << a.out << " (" << graph.grouped_layer_count() << " grouped layers, "
        << net.gathers_per_run() << " gathers per run)\n";
  return 0;
}

struct BenchArgs {
  std::string plan;
  int64_t reps = 10, batch = 8, patch = 0, bands = 0;
  uint64_t seed = 0;
  double tol = 1e-4;
  bool json = false;
};

int run_bench(const BenchArgs& a, std::ostream& out) {
  if (a.reps < 1) throw ValueError("--reps must be >= 1");
  LoadedPlan plan = load_plan(a.plan);
  int64_t patch = a.patch, bands = a.bands;
  if (plan.meta.contains("model_config")) {
    const auto& mc = plan.meta.at("model_config");
    if (patch == 0) patch = mc.value("patch", int64_t{0});
    if (bands == 0) bands = mc.value("bands", int64_t{0});
  }
  if (patch <= 0 || bands <= 0)
    throw ValueError("plan carries no input geometry; pass --patch and --bands");

  Rng rng(a.seed);
  Tensor<float> x({a.batch, plan.graph.input_channels(), bands, patch, patch});
  for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.normal());
  const BenchReport rep = bench(plan.graph, plan.net, x, a.reps, a.tol);
  if (a.json)
    out << nlohmann::json{{"reps", rep.reps},
                          {"naive_ms", rep.naive_ms},
                          {"compiled_ms", rep.compiled_ms},
                          {"speedup", rep.compiled_ms > 0 ? rep.naive_ms / rep.compiled_ms : 0.0},
                          {"naive_gathers", rep.naive_gathers},
                          {"compiled_gathers", rep.compiled_gathers},
                          {"grouped_layers", rep.grouped_layers},
                          {"max_abs_diff", rep.max_abs_diff}}
               .dump(2)
        << "\n";
  else
    out << "naive " << rep.naive_ms << " ms (" << rep.naive_gathers << " gathers), compiled " << rep.compiled_ms
        << " ms (" << rep.compiled_gathers << " gathers), max |diff| " << rep.max_abs_diff << "\n";
  return 0;
}

struct FlopsArgs {
  std::string config = "small";
  int64_t bands = 200, patch = 15, groups = 0;
  bool json = false;
};

int run_flops(const FlopsArgs& a, std::ostream& out) {
  ModelConfig cfg = load_model_config(a.config);
  cfg.bands = a.bands;
  cfg.patch = a.patch;
  if (a.groups > 0) cfg.stage_groups.assign(cfg.stage_blocks.size(), a.groups);
  cfg.validate();
  Rng rng(0);
  Model<float> model = Model<float>::build(cfg, rng);
  const CostReport report = model.cost_report();

  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : report.layers)
    layers.push_back({{"name", l.name},
                      {"params", l.params},
                      {"selection_params", l.selection_params},
                      {"madds", l.madds}});
  nlohmann::json j{{"config", cfg.name},
                   {"bands", cfg.bands},
                   {"patch", cfg.patch},
                   {"params", report.params(false)},
                   {"selection_params", report.params(true) - report.params(false)},
                   {"params_with_selection", report.params(true)},
                   {"madds", report.madds()},
                   {"layers", std::move(layers)}};
  int64_t ref_params = 0, ref_flops = 0;
  if (reference_costs(cfg.name, ref_params, ref_flops)) {
    j["reference"] = {
        {"params", ref_params},
        {"flops", ref_flops},
        {"params_delta_pct", 100.0 * (static_cast<double>(report.params(false) - ref_params)) / ref_params},
        {"flops_delta_pct", 100.0 * (static_cast<double>(report.madds() - ref_flops)) / ref_flops}};
  }
  if (a.json) {
    out << j.dump(2) << "\n";
  } else {
    out << cfg.name << " @ " << cfg.bands << " bands, patch " << cfg.patch << "\n";
    for (const auto& l : report.layers)
      out << "  " << std::left << std::setw(10) << l.name << std::right << std::setw(10) << l.params
          << " params  " << std::setw(12) << l.madds << " madds\n";
    out << "params " << report.params(false) << " (+" << report.params(true) - report.params(false)
        << " selection logits), madds " << report.madds() << "\n";
    if (ref_params > 0)
      out << "reference params " << ref_params << " (delta "
          << 100.0 * (static_cast<double>(report.params(false) - ref_params)) / ref_params << "%), flops "
          << ref_flops << " (delta " << 100.0 * (static_cast<double>(report.madds() - ref_flops)) / ref_flops
          << "%)\n";
  }
  return 0;
}

struct MapArgs {
  std::string cube, checkpoint, out;
  int64_t batch = 32;
  bool no_normalize = false, json = false;
};

int run_map(const MapArgs& a, std::ostream& out) {
  HsiCube cube = load_cube_for_model(a.cube, !a.no_normalize);
  LoadedCheckpoint lc = load_model_checkpoint(a.checkpoint);
  render_map(lc.model, cube, a.batch, a.out);
  if (a.json)
    out << nlohmann::json{{"out", a.out},
                          {"width", cube.width},
                          {"height", cube.height},
                          {"labeled", cube.labeled_count()}}
               .dump(2)
        << "\n";
  else
    out << "wrote " << a.out << " (" << cube.width << "x" << cube.height << ")\n";
  return 0;
}

struct ReportArgs {
  std::string dir, out_csv, out_json;
  bool json = false;
};

int run_report(const ReportArgs& a, std::ostream& out, std::ostream& err) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(a.dir))
    throw IoError(IoError::Kind::not_found, "'" + a.dir + "' is not a directory");
  for (const auto& entry : std::filesystem::directory_iterator(a.dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  // rows keyed by (dataset, config, ratio, patch), aggregating repeated runs
  std::map<std::tuple<std::string, std::string, std::string, int64_t>,
           std::array<std::vector<double>, 3>>
      groups;
  for (const auto& f : files) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(f.string()));
    } catch (const std::exception&) {
      err << "warning: skipping unparsable " << f.string() << "\n";
      continue;
    }
    const char* needed[] = {"dataset", "config", "ratio", "patch", "oa", "aa", "kappa"};
    bool ok = true;
    for (const char* k : needed) ok = ok && j.contains(k);
    if (!ok) {
      err << "warning: skipping " << f.string() << " (missing result keys)\n";
      continue;
    }
    auto key = std::make_tuple(j.at("dataset").get<std::string>(), j.at("config").get<std::string>(),
                               j.at("ratio").get<std::string>(), j.at("patch").get<int64_t>());
    auto& g = groups[key];
    g[0].push_back(j.at("oa").get<double>());
    g[1].push_back(j.at("aa").get<double>());
    g[2].push_back(j.at("kappa").get<double>());
  }

  nlohmann::json rows = nlohmann::json::array();
  std::ostringstream csv;
  csv << "dataset,config,ratio,patch,runs,oa_mean,oa_std,aa_mean,aa_std,kappa_mean,kappa_std\n";
  for (const auto& [key, vals] : groups) {
    nlohmann::json row{{"dataset", std::get<0>(key)},      {"config", std::get<1>(key)},
                       {"ratio", std::get<2>(key)},        {"patch", std::get<3>(key)},
                       {"runs", vals[0].size()},           {"oa_mean", mean_of(vals[0])},
                       {"oa_std", sample_std(vals[0])},    {"aa_mean", mean_of(vals[1])},
                       {"aa_std", sample_std(vals[1])},    {"kappa_mean", mean_of(vals[2])},
                       {"kappa_std", sample_std(vals[2])}};
    csv << std::get<0>(key) << "," << std::get<1>(key) << "," << std::get<2>(key) << "," << std::get<3>(key)
        << "," << vals[0].size() << "," << mean_of(vals[0]) << "," << sample_std(vals[0]) << ","
        << mean_of(vals[1]) << "," << sample_std(vals[1]) << "," << mean_of(vals[2]) << ","
        << sample_std(vals[2]) << "\n";
    rows.push_back(std::move(row));
  }
  if (!a.out_csv.empty()) write_text_file(a.out_csv, csv.str());
  if (!a.out_json.empty()) write_text_file(a.out_json, rows.dump(2) + "\n");
  if (a.json)
    out << rows.dump(2) << "\n";
  else
    out << csv.str();
  return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"learnable 3D group convolution for hyperspectral image classification"};
  app.require_subcommand(1);

  ConvertArgs conv_args;
  auto* conv = app.add_subcommand("convert", "build a cube file from raw f32/i16 dumps or CSV");
  conv->add_option("--data", conv_args.data, "pixel data, (row, col, band) order, band fastest")->required();
  conv->add_option("--labels", conv_args.labels, "labels, row-major, 0 = unlabeled")->required();
  conv->add_option("--height", conv_args.height, "cube height")->required();
  conv->add_option("--width", conv_args.width, "cube width")->required();
  conv->add_option("--bands", conv_args.bands, "spectral bands")->required();
  conv->add_option("--name", conv_args.name, "dataset name stored in the cube");
  conv->add_option("--class-names", conv_args.class_names, "comma-separated class names");
  conv->add_option("--out", conv_args.out, "output cube path")->required();
  conv->add_flag("--json", conv_args.json, "JSON summary");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled cube");
  synth->add_option("--size", synth_args.size, "height = width");
  synth->add_option("--bands", synth_args.bands, "spectral bands");
  synth->add_option("--classes", synth_args.classes, "number of classes");
  synth->add_option("--sigma", synth_args.sigma, "noise level");
  synth->add_option("--seed", synth_args.seed, "generator seed");
  synth->add_option("--name", synth_args.name, "dataset name stored in the cube");
  synth->add_option("--out", synth_args.out, "output cube path")->required();
  synth->add_flag("--json", synth_args.json, "JSON summary");

  SplitArgs split_args;
  auto* split = app.add_subcommand("split", "stratified train/val/test split manifest");
  split->add_option("--cube", split_args.cube, "input cube")->required();
  split->add_option("--ratio", split_args.ratio, "train:val:test parts");
  split->add_option("--seed", split_args.seed, "shuffle seed");
  split->add_option("--out", split_args.out, "output split JSON")->required();
  split->add_flag("--json", split_args.json, "JSON summary");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a model, checkpointing the best-validation epoch");
  train->add_option("--cube", train_args.cube, "input cube")->required();
  train->add_option("--split", train_args.split, "split JSON (otherwise --ratio/--seed make one)");
  train->add_option("--ratio", train_args.ratio, "train:val:test parts when no --split");
  train->add_option("--config", train_args.config, "small|base|larger, or a config file");
  train->add_option("--patch", train_args.patch, "spatial patch size override");
  train->add_option("--groups", train_args.groups, "group count override for every stage");
  train->add_option("--epochs", train_args.tc.epochs, "training epochs");
  train->add_option("--lr", train_args.tc.lr, "learning rate");
  train->add_option("--alpha", train_args.tc.alpha, "rmsprop decay");
  train->add_option("--eps", train_args.tc.eps, "rmsprop epsilon");
  train->add_option("--batch", train_args.tc.batch_size, "batch size");
  train->add_option("--seed", train_args.tc.seed, "run seed (run r uses seed + r)");
  train->add_option("--lambda", train_args.tc.lambda, "group-regularizer weight");
  train->add_option("--tau", train_args.tc.tau, "column-mass floor");
  train->add_option("--temperature", train_args.tc.temperature, "selection softmax temperature");
  train->add_option("--stop-at-val-oa", train_args.tc.stop_at_val_oa, "stop early at this validation OA");
  train->add_option("--out", train_args.out, "checkpoint path (runs > 1 append .runN)");
  train->add_option("--out-json", train_args.out_json, "write the result JSON here too");
  train->add_option("--runs", train_args.runs, "independent seeded runs, reported mean±std");
  train->add_flag("--no-normalize", train_args.no_normalize, "skip per-band standardization");
  train->add_flag("--quiet", train_args.quiet, "suppress progress logging");
  train->add_flag("--json", train_args.json, "JSON result on stdout");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "metrics of a checkpoint on a split bucket");
  eval->add_option("--cube", eval_args.cube, "input cube")->required();
  eval->add_option("--split", eval_args.split, "split JSON (otherwise --ratio/--seed make one)");
  eval->add_option("--ratio", eval_args.ratio, "train:val:test parts when no --split");
  eval->add_option("--seed", eval_args.seed, "split seed when no --split");
  eval->add_option("--bucket", eval_args.bucket, "train|val|test|all");
  eval->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  eval->add_option("--batch", eval_args.batch, "evaluation batch size");
  eval->add_flag("--compiled", eval_args.compiled,
                 "freeze + compile, verify against the uncompiled path, report compiled metrics");
  eval->add_flag("--no-normalize", eval_args.no_normalize, "skip per-band standardization");
  eval->add_flag("--json", eval_args.json, "JSON metrics");

  CompileArgs compile_args;
  auto* compile_cmd = app.add_subcommand("compile", "freeze a checkpoint into a packed inference plan");
  compile_cmd->add_option("--checkpoint", compile_args.checkpoint, "trained checkpoint")->required();
  compile_cmd->add_option("--out", compile_args.out, "output plan path")->required();
  compile_cmd->add_flag("--json", compile_args.json, "JSON summary");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "time a plan: naive reordered vs compiled inference");
  bench_cmd->add_option("--plan", bench_args.plan, "compiled plan")->required();
  bench_cmd->add_option("--reps", bench_args.reps, "timing repetitions");
  bench_cmd->add_option("--batch", bench_args.batch, "probe batch size");
  bench_cmd->add_option("--patch", bench_args.patch, "probe patch size (default: from the plan)");
  bench_cmd->add_option("--bands", bench_args.bands, "probe band count (default: from the plan)");
  bench_cmd->add_option("--seed", bench_args.seed, "probe input seed");
  bench_cmd->add_option("--tol", bench_args.tol, "equivalence tolerance");
  bench_cmd->add_flag("--json", bench_args.json, "JSON report");

  FlopsArgs flops_args;
  auto* flops = app.add_subcommand("flops", "parameter and multiply-add accounting for a config");
  flops->add_option("--config", flops_args.config, "small|base|larger, or a config file");
  flops->add_option("--bands", flops_args.bands, "input spectral bands");
  flops->add_option("--patch", flops_args.patch, "input patch size");
  flops->add_option("--groups", flops_args.groups, "group count override for every stage");
  flops->add_flag("--json", flops_args.json, "JSON report");

  MapArgs map_args;
  auto* map_cmd = app.add_subcommand("map", "render the predicted class map as a plain PPM");
  map_cmd->add_option("--cube", map_args.cube, "input cube")->required();
  map_cmd->add_option("--checkpoint", map_args.checkpoint, "model checkpoint")->required();
  map_cmd->add_option("--out", map_args.out, "output .ppm path")->required();
  map_cmd->add_option("--batch", map_args.batch, "prediction batch size");
  map_cmd->add_flag("--no-normalize", map_args.no_normalize, "skip per-band standardization");
  map_cmd->add_flag("--json", map_args.json, "JSON summary");

  ReportArgs report_args;
  auto* report = app.add_subcommand("report", "aggregate run JSONs into result tables");
  report->add_option("--dir", report_args.dir, "directory of run JSON files")->required();
  report->add_option("--out-csv", report_args.out_csv, "write the CSV table here");
  report->add_option("--out-json", report_args.out_json, "write the JSON table here");
  report->add_flag("--json", report_args.json, "JSON rows on stdout");

  try {
    app.parse(argc, argv);
    if (conv->parsed()) return run_convert(conv_args, out);
    if (synth->parsed()) return run_synth(synth_args, out);
    if (split->parsed()) return run_split(split_args, out, err);
    if (train->parsed()) return run_train(train_args, out, err);
    if (eval->parsed()) return run_eval(eval_args, out);
    if (compile_cmd->parsed()) return run_compile(compile_args, out);
    if (bench_cmd->parsed()) return run_bench(bench_args, out);
    if (flops->parsed()) return run_flops(flops_args, out);
    if (map_cmd->parsed()) return run_map(map_args, out);
    if (report->parsed()) return run_report(report_args, out, err);
    err << "error: no subcommand\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? 0 : 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lgc3d
