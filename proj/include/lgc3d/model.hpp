#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lgc3d/compiler.hpp"
#include "lgc3d/lgc.hpp"
#include "lgc3d/ops.hpp"

namespace lgc3d {

// growth rate doubles at each stage: k, 2k, 4k, ...
inline int64_t growth_schedule(int64_t k, int64_t stage_index) {
  if (k < 1) throw ValueError("growth_schedule: base growth must be >= 1");
  if (stage_index < 0) throw ValueError("growth_schedule: stage index must be >= 0");
  return k << stage_index;
}

struct ModelConfig {
  std::string name = "custom";
  std::vector<int64_t> stage_blocks{4, 6, 8};
  std::vector<int64_t> stage_growth{4, 8, 16};
  int64_t base_growth = 4;
  std::vector<int64_t> stage_groups{4, 4, 4};
  int64_t compression = 2;   // transition channel divisor
  int64_t stem_channels = 0; // 0 = auto (2 * first-stage growth)
  int64_t num_classes = 16;
  int64_t patch = 15;  // spatial window M (square)
  int64_t bands = 200; // spectral length L

  int64_t stages() const { return static_cast<int64_t>(stage_blocks.size()); }
  int64_t stem_out() const { return stem_channels > 0 ? stem_channels : 2 * stage_growth.at(0); }

  void validate() const {
    if (stage_blocks.empty()) throw ConfigError("config: stage_blocks is empty");
    if (stage_blocks.size() != stage_growth.size())
      throw ConfigError("config: stage_blocks and stage_growth lengths differ");
    if (stage_groups.size() != stage_blocks.size())
      throw ConfigError("config: stage_groups must list one group count per stage");
    for (size_t s = 0; s < stage_blocks.size(); ++s) {
      if (stage_blocks[s] < 1) throw ConfigError("config: stage_blocks entries must be >= 1");
      if (stage_groups[s] < 1) throw ConfigError("config: stage_groups entries must be >= 1");
      if (stage_growth[s] != growth_schedule(base_growth, static_cast<int64_t>(s)))
        throw ConfigError("config: stage_growth[" + std::to_string(s) + "] = " + std::to_string(stage_growth[s]) +
                          " breaks the doubling schedule " + std::to_string(base_growth) + "*2^" + std::to_string(s));
    }
    if (compression < 1) throw ConfigError("config: compression must be >= 1");
    if (num_classes < 1) throw ConfigError("config: num_classes must be >= 1");
    if (patch < 1 || bands < 1) throw ConfigError("config: patch and bands must be >= 1");
    const int64_t transitions = stages() - 1;
    const int64_t min_patch = int64_t{1} << transitions;
    if (patch < min_patch)
      throw ConfigError("config: patch " + std::to_string(patch) + " too small for " + std::to_string(transitions) +
                        " transitions; minimum patch size is " + std::to_string(min_patch));
  }
};

inline std::vector<std::string> predefined_config_names() { return {"small", "base", "larger"}; }

inline ModelConfig predefined_config(const std::string& name) {
  ModelConfig c;
  c.name = name;
  if (name == "small") {
    c.stage_blocks = {4, 6, 8};
    c.base_growth = 4;
  } else if (name == "base") {
    c.stage_blocks = {6, 8, 10};
    c.base_growth = 8;
  } else if (name == "larger") {
    c.stage_blocks = {10, 10, 10};
    c.base_growth = 8;
  } else {
    throw ConfigError("config: unknown predefined config '" + name + "' (small, base, larger)");
  }
  c.stage_growth.clear();
  c.stage_groups.clear();
  for (int64_t s = 0; s < c.stages(); ++s) {
    c.stage_growth.push_back(growth_schedule(c.base_growth, s));
    c.stage_groups.push_back(4);
  }
  return c;
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{{"name", c.name},
                        {"stage_blocks", c.stage_blocks},
                        {"stage_growth", c.stage_growth},
                        {"base_growth", c.base_growth},
                        {"stage_groups", c.stage_groups},
                        {"compression", c.compression},
                        {"stem_channels", c.stem_channels},
                        {"num_classes", c.num_classes},
                        {"patch", c.patch},
                        {"bands", c.bands}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  if (j.contains("name")) c.name = j.at("name").get<std::string>();
  if (j.contains("stage_blocks")) c.stage_blocks = j.at("stage_blocks").get<std::vector<int64_t>>();
  if (j.contains("base_growth")) c.base_growth = j.at("base_growth").get<int64_t>();
  if (j.contains("stage_growth"))
    c.stage_growth = j.at("stage_growth").get<std::vector<int64_t>>();
  else {
    c.stage_growth.clear();
    for (int64_t s = 0; s < c.stages(); ++s) c.stage_growth.push_back(growth_schedule(c.base_growth, s));
  }
  if (j.contains("stage_groups")) {
    if (j.at("stage_groups").is_array())
      c.stage_groups = j.at("stage_groups").get<std::vector<int64_t>>();
    else
      c.stage_groups.assign(c.stage_blocks.size(), j.at("stage_groups").get<int64_t>());
  } else {
    c.stage_groups.assign(c.stage_blocks.size(), 4);
  }
  if (j.contains("compression")) c.compression = j.at("compression").get<int64_t>();
  if (j.contains("stem_channels")) c.stem_channels = j.at("stem_channels").get<int64_t>();
  if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<int64_t>();
  if (j.contains("patch")) c.patch = j.at("patch").get<int64_t>();
  if (j.contains("bands")) c.bands = j.at("bands").get<int64_t>();
  return c;
}

// flat "key = value" files: ints, quoted strings, [int, int, ...]
inline nlohmann::json parse_simple_toml(std::istream& in) {
  nlohmann::json j = nlohmann::json::object();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError(IoError::Kind::parse, "config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (val.empty()) throw IoError(IoError::Kind::parse, "config line " + std::to_string(lineno) + ": empty value");
    if (val.front() == '[') {
      if (val.back() != ']') throw IoError(IoError::Kind::parse, "config line " + std::to_string(lineno) + ": unterminated array");
      std::vector<int64_t> items;
      std::stringstream ss(val.substr(1, val.size() - 2));
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) items.push_back(std::stoll(tok));
      }
      j[key] = items;
    } else if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"')
        throw IoError(IoError::Kind::parse, "config line " + std::to_string(lineno) + ": unterminated string");
      j[key] = val.substr(1, val.size() - 2);
    } else {
      try {
        j[key] = static_cast<int64_t>(std::stoll(val));
      } catch (const std::exception&) {
        j[key] = val;  // bare word
      }
    }
  }
  return j;
}

// accepts a predefined name ("small") or a path to a .json / key=value file
inline ModelConfig load_model_config(const std::string& name_or_path) {
  for (const auto& n : predefined_config_names())
    if (name_or_path == n) return predefined_config(n);
  std::ifstream in(name_or_path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::not_found, "config file '" + name_or_path + "' not found");
  nlohmann::json j;
  if (name_or_path.size() > 5 && name_or_path.substr(name_or_path.size() - 5) == ".json") {
    try {
      in >> j;
    } catch (const std::exception& e) {
      throw IoError(IoError::Kind::parse, "config '" + name_or_path + "': " + e.what());
    }
  } else {
    j = parse_simple_toml(in);
  }
  return config_from_json(j);
}

// per-layer parameter / multiply-add accounting
struct LayerCost {
  std::string name;
  int64_t params = 0;            // weights (and bn affine / bias where present)
  int64_t selection_params = 0;  // S/T logits, discarded at frozen inference
  int64_t madds = 0;
};

struct CostReport {
  std::vector<LayerCost> layers;

  int64_t params(bool include_selection = true) const {
    int64_t t = 0;
    for (const auto& l : layers) t += l.params + (include_selection ? l.selection_params : 0);
    return t;
  }
  int64_t madds() const {
    int64_t t = 0;
    for (const auto& l : layers) t += l.madds;
    return t;
  }
};

// balanced split of n items into G groups: n/G each, remainder spread from group 0
inline int64_t balanced_part(int64_t n, int64_t groups, int64_t g) {
  return n / groups + (g < n % groups ? 1 : 0);
}

// Madds of one grouped conv layer; per_group empty = balanced split assumed
inline int64_t grouped_conv_madds(int64_t out_positions, int64_t n, int64_t c, int64_t k3, int64_t groups,
                                  const std::vector<int64_t>* n_per_group = nullptr,
                                  const std::vector<int64_t>* c_per_group = nullptr) {
  int64_t acc = 0;
  for (int64_t g = 0; g < groups; ++g) {
    const int64_t ng = n_per_group ? (*n_per_group)[static_cast<size_t>(g)] : balanced_part(n, groups, g);
    const int64_t cg = c_per_group ? (*c_per_group)[static_cast<size_t>(g)] : balanced_part(c, groups, g);
    acc += out_positions * ng * cg * k3;
  }
  return acc;
}

// The modified 3D-DenseNet. Feature layout per stage: an optional compressed
// trunk from the previous transition, then the stem map and every dense-layer
// output so far, all pooled to the current resolution. Dense layers consume
// the concatenation of all of it (cross-stage dense connectivity).
template <typename T>
class Model {
 public:
  struct BnParams {
    ad::NodePtr<T> gamma, beta;
    Tensor<T> running_mean, running_var;
  };
  struct DenseLayer {
    BnParams bn;
    LgcConv3dLayer<T> conv;
    int64_t in_channels = 0;
    int64_t stage = 0;
    bool frozen = false;
    GroupedConv3d<T> packed;
  };
  struct Transition {
    BnParams bn;
    LgcConv3dLayer<T> conv;
    int64_t in_channels = 0, out_channels = 0;
    Pool3dSpec pool;
    bool frozen = false;
    GroupedConv3d<T> packed;
  };

  ModelConfig cfg;
  ad::NodePtr<T> stem_w;
  Conv3dSpec stem_spec;
  std::vector<DenseLayer> dense;
  std::vector<Transition> trans;
  ad::NodePtr<T> head_w, head_b;
  int64_t head_in = 0;
  T bn_eps = static_cast<T>(1e-5);
  T bn_momentum = static_cast<T>(0.1);

  bool frozen() const { return frozen_; }

  static Model build(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    Model m;
    m.cfg = cfg;

    m.stem_spec = Conv3dSpec::make(1, cfg.stem_out(), 3, 1, 1);
    Tensor<T> sw({cfg.stem_out(), 1, 3, 3, 3});
    const T stem_std = std::sqrt(T(2) / T(27));
    for (int64_t i = 0; i < sw.numel(); ++i) sw[i] = static_cast<T>(rng.normal()) * stem_std;
    m.stem_w = ad::make_param(std::move(sw), "stem.w");

    // channel arithmetic: trunk (after 1st transition) + stem + all dense outputs
    int64_t trunk_ch = 0;
    int64_t carried_ch = cfg.stem_out();
    int64_t spatial = cfg.patch, spectral = cfg.bands;
    for (int64_t s = 0; s < cfg.stages(); ++s) {
      const int64_t growth = cfg.stage_growth[static_cast<size_t>(s)];
      const int64_t groups = cfg.stage_groups[static_cast<size_t>(s)];
      for (int64_t l = 0; l < cfg.stage_blocks[static_cast<size_t>(s)]; ++l) {
        DenseLayer dl;
        dl.stage = s;
        dl.in_channels = trunk_ch + carried_ch;
        dl.bn = make_bn(dl.in_channels, rng);
        dl.conv = LgcConv3dLayer<T>::init(Conv3dSpec::make(dl.in_channels, growth, 3, 1, 1), groups, rng);
        m.dense.push_back(std::move(dl));
        carried_ch += growth;
      }
      if (s + 1 < cfg.stages()) {
        Transition tr;
        tr.in_channels = trunk_ch + carried_ch;
        tr.out_channels = (tr.in_channels + cfg.compression - 1) / cfg.compression;
        if (spatial < 2)
          throw ConfigError("config: patch too small; spatial axis shrank below 2 before transition " +
                            std::to_string(s) + "; minimum patch size is " +
                            std::to_string(int64_t{1} << (cfg.stages() - 1)));
        tr.pool.wh = tr.pool.ww = tr.pool.sh = tr.pool.sw = 2;
        tr.pool.wd = tr.pool.sd = (spectral >= 2) ? 2 : 1;
        spatial /= 2;
        if (spectral >= 2) spectral /= 2;
        tr.bn = make_bn(tr.in_channels, rng);
        tr.conv = LgcConv3dLayer<T>::init(Conv3dSpec::make(tr.in_channels, tr.out_channels, 1, 1, 0),
                                          cfg.stage_groups[static_cast<size_t>(s + 1)], rng);
        trunk_ch = tr.out_channels;
        m.trans.push_back(std::move(tr));
      }
    }
    m.head_in = trunk_ch + carried_ch;

    Tensor<T> hw({cfg.num_classes, m.head_in});
    const T head_std = std::sqrt(T(1) / static_cast<T>(m.head_in));
    for (int64_t i = 0; i < hw.numel(); ++i) hw[i] = static_cast<T>(rng.normal()) * head_std;
    m.head_w = ad::make_param(std::move(hw), "head.w");
    m.head_b = ad::make_param(Tensor<T>({cfg.num_classes}), "head.b");
    return m;
  }

  // -- traversal backends ---------------------------------------------------
  // The architecture is written once; training, plain evaluation and lowering
  // to the inference graph all walk it through a backend.

  template <typename B>
  typename B::Handle traverse(B& b) const {
    using H = typename B::Handle;
    H stem = b.stem();
    std::vector<H> carried{stem};
    std::optional<H> trunk;
    auto visible = [&]() {
      std::vector<H> v;
      if (trunk) v.push_back(*trunk);
      for (const H& h : carried) v.push_back(h);
      return v;
    };
    size_t li = 0, ti = 0;
    for (int64_t s = 0; s < cfg.stages(); ++s) {
      for (int64_t l = 0; l < cfg.stage_blocks[static_cast<size_t>(s)]; ++l, ++li)
        carried.push_back(b.dense_layer(li, b.concat(visible(), dense[li].in_channels)));
      if (s + 1 < cfg.stages()) {
        trunk = b.transition(ti, b.concat(visible(), trans[ti].in_channels));
        for (H& h : carried) h = b.pool_carry(ti, h);
        ++ti;
      }
    }
    return b.head(b.concat(visible(), head_in));
  }

  struct AdBackend {
    using Handle = ad::NodePtr<T>;
    Model& m;
    Handle x;
    T temperature;

    Handle stem() { return ad::conv3d(x, m.stem_w, m.stem_spec); }
    Handle concat(const std::vector<Handle>& vis, int64_t expect) {
      Handle c = vis.size() == 1 ? vis[0] : ad::concat_channels(vis);
      if (c->value.dim(1) != expect)
        throw ShapeError("channel bookkeeping: concatenated " + std::to_string(c->value.dim(1)) +
                         " channels, planned " + std::to_string(expect));
      return c;
    }
    Handle dense_layer(size_t li, Handle in) {
      DenseLayer& d = m.dense[li];
      Handle h = ad::batch_norm_train(in, d.bn.gamma, d.bn.beta, d.bn.running_mean, d.bn.running_var,
                                      m.bn_eps, m.bn_momentum);
      return d.conv.forward(ad::relu(h), temperature);
    }
    Handle transition(size_t ti, Handle in) {
      Transition& t = m.trans[ti];
      Handle h = ad::avg_pool3d(in, t.pool);
      h = ad::batch_norm_train(h, t.bn.gamma, t.bn.beta, t.bn.running_mean, t.bn.running_var, m.bn_eps,
                               m.bn_momentum);
      return t.conv.forward(ad::relu(h), temperature);
    }
    Handle pool_carry(size_t ti, Handle h) { return ad::avg_pool3d(h, m.trans[ti].pool); }
    Handle head(Handle in) { return ad::linear(ad::global_avg_pool(in), m.head_w, m.head_b); }
  };

  struct EvalBackend {
    using Handle = Tensor<T>;
    const Model& m;
    Tensor<T> x;

    Handle stem() { return kern::conv3d_fwd(x, m.stem_w->value, m.stem_spec); }
    Handle concat(const std::vector<Handle>& vis, int64_t expect) {
      if (vis.size() == 1) {
        if (vis[0].dim(1) != expect) throw ShapeError("channel bookkeeping mismatch");
        return vis[0];
      }
      const Tensor<T>& f = vis[0];
      const int64_t B = f.dim(0), S = f.dim(2) * f.dim(3) * f.dim(4);
      Tensor<T> out({B, expect, f.dim(2), f.dim(3), f.dim(4)});
      for (int64_t b = 0; b < B; ++b) {
        int64_t off = 0;
        for (const auto& v : vis) {
          const int64_t ci = v.dim(1);
          std::memcpy(out.data() + (b * expect + off) * S, v.data() + b * ci * S,
                      static_cast<size_t>(ci * S) * sizeof(T));
          off += ci;
        }
        if (off != expect) throw ShapeError("channel bookkeeping mismatch");
      }
      return out;
    }
    Handle bn_relu(const BnParams& bn, const Tensor<T>& in) {
      return kern::relu_fwd(kern::batch_norm_eval_fwd(in, bn.gamma->value, bn.beta->value, bn.running_mean,
                                                      bn.running_var, m.bn_eps));
    }
    Handle lgc_eval(const LgcConv3dLayer<T>& conv, bool frozen, const GroupedConv3d<T>& packed,
                    const Tensor<T>& in) {
      if (frozen) return group_forward(in, packed, true);
      Tensor<T> u = connection_mask(SelectionMatrix<T>(conv.s_logits->value).soft(),
                                    SelectionMatrix<T>(conv.t_logits->value).soft());
      return kern::conv3d_fwd(in, masked_weights(conv.w->value, u), conv.spec);
    }
    Handle dense_layer(size_t li, Handle in) {
      const DenseLayer& d = m.dense[li];
      return lgc_eval(d.conv, d.frozen, d.packed, bn_relu(d.bn, in));
    }
    Handle transition(size_t ti, Handle in) {
      const Transition& t = m.trans[ti];
      Tensor<T> h = kern::avg_pool3d_fwd(in, t.pool);
      return lgc_eval(t.conv, t.frozen, t.packed, bn_relu(t.bn, h));
    }
    Handle pool_carry(size_t ti, Handle h) { return kern::avg_pool3d_fwd(h, m.trans[ti].pool); }
    Handle head(Handle in) {
      return kern::linear_fwd(kern::global_avg_pool_fwd(in), m.head_w->value, m.head_b->value);
    }
  };

  struct LowerBackend {
    using Handle = int64_t;
    const Model& m;
    FrozenGraph<T>* g;

    Handle stem() { return g->add_conv_plain(0, m.stem_spec, m.stem_w->value); }
    Handle concat(const std::vector<Handle>& vis, int64_t expect) {
      Handle c = vis.size() == 1 ? vis[0] : g->add_concat(vis);
      if (g->ops[static_cast<size_t>(c)].channels != expect) throw ShapeError("channel bookkeeping mismatch");
      return c;
    }
    Handle bn_relu(const BnParams& bn, Handle in) {
      Handle h = g->add_batch_norm(in, bn.gamma->value, bn.beta->value, bn.running_mean, bn.running_var, m.bn_eps);
      return g->add_relu(h);
    }
    Handle dense_layer(size_t li, Handle in) {
      const DenseLayer& d = m.dense[li];
      return g->add_conv_grouped(bn_relu(d.bn, in), d.packed);
    }
    Handle transition(size_t ti, Handle in) {
      const Transition& t = m.trans[ti];
      Handle h = g->add_avg_pool(in, t.pool);
      return g->add_conv_grouped(bn_relu(t.bn, h), t.packed);
    }
    Handle pool_carry(size_t ti, Handle h) { return g->add_avg_pool(h, m.trans[ti].pool); }
    Handle head(Handle in) {
      return g->add_linear(g->add_global_avg_pool(in), m.head_w->value, m.head_b->value);
    }
  };

  // -- public entry points ----------------------------------------------------

  ad::NodePtr<T> forward_train(const Tensor<T>& x, T temperature = T(1)) {
    check_input(x);
    AdBackend b{*this, ad::make_const(x), temperature};
    return traverse(b);
  }

  Tensor<T> forward_eval(const Tensor<T>& x) const {
    check_input(x);
    EvalBackend b{*this, x};
    return traverse(b);
  }

  ad::NodePtr<T> regularizer(T tau = T(1)) const {
    ad::NodePtr<T> total;
    auto fold = [&total, tau](const LgcConv3dLayer<T>& layer) {
      auto r = layer.regularizer(tau);
      total = total ? ad::add(total, r) : r;
    };
    for (const auto& d : dense) fold(d.conv);
    for (const auto& t : trans) fold(t.conv);
    return total;
  }

  std::vector<ad::NodePtr<T>> params() const {
    std::vector<ad::NodePtr<T>> p{stem_w};
    for (const auto& d : dense) {
      p.push_back(d.bn.gamma);
      p.push_back(d.bn.beta);
      p.push_back(d.conv.w);
      p.push_back(d.conv.s_logits);
      p.push_back(d.conv.t_logits);
    }
    for (const auto& t : trans) {
      p.push_back(t.bn.gamma);
      p.push_back(t.bn.beta);
      p.push_back(t.conv.w);
      p.push_back(t.conv.s_logits);
      p.push_back(t.conv.t_logits);
    }
    p.push_back(head_w);
    p.push_back(head_b);
    return p;
  }

  std::vector<std::pair<std::string, Tensor<T>*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    out.emplace_back("stem.w", &stem_w->value);
    for (size_t i = 0; i < dense.size(); ++i) {
      const std::string p = "dense" + std::to_string(i);
      out.emplace_back(p + ".bn.gamma", &dense[i].bn.gamma->value);
      out.emplace_back(p + ".bn.beta", &dense[i].bn.beta->value);
      out.emplace_back(p + ".bn.rmean", &dense[i].bn.running_mean);
      out.emplace_back(p + ".bn.rvar", &dense[i].bn.running_var);
      out.emplace_back(p + ".conv.w", &dense[i].conv.w->value);
      out.emplace_back(p + ".conv.s", &dense[i].conv.s_logits->value);
      out.emplace_back(p + ".conv.t", &dense[i].conv.t_logits->value);
    }
    for (size_t i = 0; i < trans.size(); ++i) {
      const std::string p = "trans" + std::to_string(i);
      out.emplace_back(p + ".bn.gamma", &trans[i].bn.gamma->value);
      out.emplace_back(p + ".bn.beta", &trans[i].bn.beta->value);
      out.emplace_back(p + ".bn.rmean", &trans[i].bn.running_mean);
      out.emplace_back(p + ".bn.rvar", &trans[i].bn.running_var);
      out.emplace_back(p + ".conv.w", &trans[i].conv.w->value);
      out.emplace_back(p + ".conv.s", &trans[i].conv.s_logits->value);
      out.emplace_back(p + ".conv.t", &trans[i].conv.t_logits->value);
    }
    out.emplace_back("head.w", &head_w->value);
    out.emplace_back("head.b", &head_b->value);
    return out;
  }

  void freeze_all() {
    for (auto& d : dense) {
      d.packed = d.conv.freeze();
      d.frozen = true;
    }
    for (auto& t : trans) {
      t.packed = t.conv.freeze();
      t.frozen = true;
    }
    frozen_ = true;
  }

  FrozenGraph<T> lower() const {
    if (!frozen_) throw CompileError("model must be frozen before lowering to an inference graph");
    FrozenGraph<T> g;
    g.add_input(1);
    LowerBackend b{*this, &g};
    traverse(b);
    return g;
  }

  CostReport cost_report() const {
    CostReport r;
    int64_t spatial = cfg.patch, spectral = cfg.bands;
    auto positions = [&]() { return spectral * spatial * spatial; };
    {
      LayerCost c;
      c.name = "stem";
      c.params = stem_w->value.numel();
      c.madds = positions() * cfg.stem_out() * 1 * 27;
      r.layers.push_back(c);
    }
    size_t li = 0, ti = 0;
    for (int64_t s = 0; s < cfg.stages(); ++s) {
      for (int64_t l = 0; l < cfg.stage_blocks[static_cast<size_t>(s)]; ++l, ++li) {
        const DenseLayer& d = dense[li];
        LayerCost c;
        c.name = "dense" + std::to_string(li);
        c.params = 2 * d.in_channels;  // bn affine
        c.params += d.frozen ? packed_weight_count(d.packed) : d.conv.w->value.numel();
        c.selection_params = d.frozen ? 0 : d.conv.s_logits->value.numel() + d.conv.t_logits->value.numel();
        c.madds = grouped_conv_madds(positions(), d.conv.spec.out_kernels, d.in_channels, 27, d.conv.groups,
                                     d.frozen ? &d.packed.kernels_per_group : nullptr,
                                     d.frozen ? &d.packed.channels_per_group : nullptr);
        r.layers.push_back(c);
      }
      if (s + 1 < cfg.stages()) {
        const Transition& t = trans[ti++];
        spatial /= 2;
        if (spectral >= 2) spectral /= 2;
        LayerCost c;
        c.name = "trans" + std::to_string(ti - 1);
        c.params = 2 * t.in_channels;
        c.params += t.frozen ? packed_weight_count(t.packed) : t.conv.w->value.numel();
        c.selection_params = t.frozen ? 0 : t.conv.s_logits->value.numel() + t.conv.t_logits->value.numel();
        c.madds = grouped_conv_madds(positions(), t.out_channels, t.in_channels, 1, t.conv.groups,
                                     t.frozen ? &t.packed.kernels_per_group : nullptr,
                                     t.frozen ? &t.packed.channels_per_group : nullptr);
        r.layers.push_back(c);
      }
    }
    {
      LayerCost c;
      c.name = "head";
      c.params = head_w->value.numel() + head_b->value.numel();
      c.madds = head_w->value.numel();
      r.layers.push_back(c);
    }
    return r;
  }

 private:
  bool frozen_ = false;

  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != cfg.bands || x.dim(3) != cfg.patch || x.dim(4) != cfg.patch)
      throw ShapeError("model input " + x.shape_string() + " does not match config (B,1," +
                       std::to_string(cfg.bands) + "," + std::to_string(cfg.patch) + "," +
                       std::to_string(cfg.patch) + ")");
  }

  static BnParams make_bn(int64_t channels, Rng&) {
    BnParams bn;
    Tensor<T> g({channels});
    g.fill(T(1));
    bn.gamma = ad::make_param(std::move(g), "bn.gamma");
    bn.beta = ad::make_param(Tensor<T>({channels}), "bn.beta");
    bn.running_mean = Tensor<T>({channels});
    bn.running_var = Tensor<T>({channels});
    bn.running_var.fill(T(1));
    return bn;
  }

  static int64_t packed_weight_count(const GroupedConv3d<T>& g) {
    int64_t n = 0;
    for (size_t i = 0; i < g.blocks.size(); ++i)
      n += g.kernels_per_group[i] * g.channels_per_group[i] *
           (g.spec.kd * g.spec.kh * g.spec.kw);
    return n;
  }
};

}  // namespace lgc3d
