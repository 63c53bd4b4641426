#include "lgc3d/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

namespace lgc3d {

uint32_t crc32(const void* data, size_t n) {
  static const std::array<uint32_t, 256> table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = 0xFFFFFFFFu;
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) crc = table[(crc ^ p[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

namespace {

constexpr char kMagic[8] = {'L', 'G', 'C', '3', 'D', 'B', 'I', 'N'};
constexpr uint16_t kVersion = 1;

void write_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::istream& in, void* p, size_t n, const char* what) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw IoError(IoError::Kind::truncated, std::string("container ends inside ") + what);
}

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

}  // namespace

void ArrayStore::add_f32(const std::string& name, const Tensor<float>& t) {
  Entry e;
  e.name = name;
  e.dtype = "f32";
  e.shape = t.shape();
  e.bytes.resize(static_cast<size_t>(t.numel()) * sizeof(float));
  std::memcpy(e.bytes.data(), t.data(), e.bytes.size());
  entries_.push_back(std::move(e));
}

void ArrayStore::add_i64(const std::string& name, const std::vector<int64_t>& v) {
  Entry e;
  e.name = name;
  e.dtype = "i64";
  e.shape = {static_cast<int64_t>(v.size())};
  e.bytes.resize(v.size() * sizeof(int64_t));
  std::memcpy(e.bytes.data(), v.data(), e.bytes.size());
  entries_.push_back(std::move(e));
}

bool ArrayStore::has(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return true;
  return false;
}

const ArrayStore::Entry& ArrayStore::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw IoError(IoError::Kind::not_found, "container has no array '" + name + "'");
}

Tensor<float> ArrayStore::f32(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype != "f32") throw IoError(IoError::Kind::parse, "array '" + name + "' is " + e.dtype + ", expected f32");
  Tensor<float> t(e.shape.empty() ? std::vector<int64_t>{1} : e.shape);
  if (static_cast<size_t>(t.numel()) * sizeof(float) != e.bytes.size())
    throw IoError(IoError::Kind::parse, "array '" + name + "' payload size mismatch");
  std::memcpy(t.data(), e.bytes.data(), e.bytes.size());
  return t;
}

std::vector<int64_t> ArrayStore::i64(const std::string& name) const {
  const Entry& e = find(name);
  if (e.dtype != "i64") throw IoError(IoError::Kind::parse, "array '" + name + "' is " + e.dtype + ", expected i64");
  std::vector<int64_t> v(e.bytes.size() / sizeof(int64_t));
  std::memcpy(v.data(), e.bytes.data(), e.bytes.size());
  return v;
}

void ArrayStore::save(const std::string& path) const {
  nlohmann::json manifest;
  manifest["meta"] = meta;
  nlohmann::json arrays = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& e : entries_) {
    arrays.push_back({{"name", e.name},
                      {"dtype", e.dtype},
                      {"shape", e.shape},
                      {"offset", offset},
                      {"nbytes", e.bytes.size()},
                      {"crc32", crc32(e.bytes.data(), e.bytes.size())}});
    offset += e.bytes.size();
  }
  manifest["arrays"] = std::move(arrays);
  const std::string text = manifest.dump();
  if (text.size() > 0xffffffffull) throw IoError(IoError::Kind::write, "manifest too large");

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(IoError::Kind::write, "cannot open '" + path + "' for writing");
  write_bytes(out, kMagic, sizeof(kMagic));
  const uint16_t version = kVersion, flags = 0;
  write_bytes(out, &version, 2);
  write_bytes(out, &flags, 2);
  const uint32_t len = static_cast<uint32_t>(text.size());
  write_bytes(out, &len, 4);
  write_bytes(out, text.data(), text.size());
  for (const auto& e : entries_) write_bytes(out, e.bytes.data(), e.bytes.size());
  if (!out) throw IoError(IoError::Kind::write, "short write to '" + path + "'");
}

ArrayStore ArrayStore::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(IoError::Kind::not_found, "container '" + path + "' not found");
  char magic[sizeof(kMagic)];
  read_bytes(in, magic, sizeof(magic), "header");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw IoError(IoError::Kind::bad_magic, "'" + path + "' is not a parameter container");
  uint16_t version = 0, flags = 0;
  read_bytes(in, &version, 2, "header");
  read_bytes(in, &flags, 2, "header");
  if (version != kVersion)
    throw IoError(IoError::Kind::bad_version, "container version " + std::to_string(version) + " unsupported");
  uint32_t len = 0;
  read_bytes(in, &len, 4, "header");
  std::string text(len, '\0');
  read_bytes(in, text.data(), len, "manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw IoError(IoError::Kind::parse, std::string("container manifest: ") + e.what());
  }

  ArrayStore store;
  if (manifest.contains("meta")) store.meta = manifest.at("meta");
  for (const auto& a : manifest.at("arrays")) {
    Entry e;
    e.name = a.at("name").get<std::string>();
    e.dtype = a.at("dtype").get<std::string>();
    e.shape = a.at("shape").get<std::vector<int64_t>>();
    const uint64_t nbytes = a.at("nbytes").get<uint64_t>();
    if (shape_numel(e.shape) < 0 || nbytes > (uint64_t{1} << 36))
      throw IoError(IoError::Kind::dim_overflow, "array '" + e.name + "' has an implausible size");
    e.bytes.resize(nbytes);
    read_bytes(in, e.bytes.data(), nbytes, e.name.c_str());
    const uint32_t expect = a.at("crc32").get<uint32_t>();
    const uint32_t got = crc32(e.bytes.data(), e.bytes.size());
    if (expect != got)
      throw IoError(IoError::Kind::parse, "array '" + e.name + "' checksum mismatch (corrupt container)");
    store.entries_.push_back(std::move(e));
  }
  return store;
}

// -- model checkpoints --------------------------------------------------------

void save_model_checkpoint(const std::string& path, Model<float>& model, const nlohmann::json& extra_meta) {
  ArrayStore store;
  store.meta["kind"] = "checkpoint";
  store.meta["model_config"] = config_to_json(model.cfg);
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) store.meta[it.key()] = it.value();
  for (auto& [name, tensor] : model.named_tensors()) store.add_f32(name, *tensor);
  store.save(path);
}

LoadedCheckpoint load_model_checkpoint(const std::string& path) {
  ArrayStore store = ArrayStore::load(path);
  if (!store.meta.contains("kind") || store.meta.at("kind") != "checkpoint")
    throw IoError(IoError::Kind::parse, "'" + path + "' is not a model checkpoint");
  ModelConfig cfg = config_from_json(store.meta.at("model_config"));
  Rng rng(0);  // initialization is immediately overwritten
  LoadedCheckpoint out{cfg, Model<float>::build(cfg, rng), store.meta};
  for (auto& [name, tensor] : out.model.named_tensors()) {
    Tensor<float> stored = store.f32(name);
    if (stored.shape() != tensor->shape())
      throw IoError(IoError::Kind::parse, "checkpoint array '" + name + "' has shape " + stored.shape_string() +
                                              ", model expects " + tensor->shape_string());
    *tensor = std::move(stored);
  }
  return out;
}

// -- compiled inference plans -------------------------------------------------

namespace {

nlohmann::json conv_spec_json(const Conv3dSpec& s) {
  return {{"c", s.in_channels}, {"n", s.out_kernels}, {"kd", s.kd}, {"kh", s.kh}, {"kw", s.kw},
          {"sd", s.sd},         {"sh", s.sh},         {"sw", s.sw}, {"pd", s.pd}, {"ph", s.ph},
          {"pw", s.pw}};
}

Conv3dSpec conv_spec_from_json(const nlohmann::json& j) {
  Conv3dSpec s;
  s.in_channels = j.at("c").get<int64_t>();
  s.out_kernels = j.at("n").get<int64_t>();
  s.kd = j.at("kd").get<int64_t>();
  s.kh = j.at("kh").get<int64_t>();
  s.kw = j.at("kw").get<int64_t>();
  s.sd = j.at("sd").get<int64_t>();
  s.sh = j.at("sh").get<int64_t>();
  s.sw = j.at("sw").get<int64_t>();
  s.pd = j.at("pd").get<int64_t>();
  s.ph = j.at("ph").get<int64_t>();
  s.pw = j.at("pw").get<int64_t>();
  return s;
}

nlohmann::json pool_spec_json(const Pool3dSpec& p) {
  return {{"wd", p.wd}, {"wh", p.wh}, {"ww", p.ww}, {"sd", p.sd}, {"sh", p.sh}, {"sw", p.sw}};
}

Pool3dSpec pool_spec_from_json(const nlohmann::json& j) {
  Pool3dSpec p;
  p.wd = j.at("wd").get<int64_t>();
  p.wh = j.at("wh").get<int64_t>();
  p.ww = j.at("ww").get<int64_t>();
  p.sd = j.at("sd").get<int64_t>();
  p.sh = j.at("sh").get<int64_t>();
  p.sw = j.at("sw").get<int64_t>();
  return p;
}

}  // namespace

void save_plan(const std::string& path, const FrozenGraph<float>& graph, const CompiledNetwork<float>& net,
               const nlohmann::json& extra_meta) {
  ArrayStore store;
  store.meta["kind"] = "plan";
  store.meta["source_digest"] = net.source_digest;
  for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) store.meta[it.key()] = it.value();

  nlohmann::json ops = nlohmann::json::array();
  for (size_t i = 0; i < graph.ops.size(); ++i) {
    const FrozenOp<float>& op = graph.ops[i];
    const std::string p = "op" + std::to_string(i);
    nlohmann::json jo{{"kind", op_kind_name(op.kind)}, {"inputs", op.inputs}, {"channels", op.channels}};
    switch (op.kind) {
      case OpKind::input:
        break;
      case OpKind::conv_plain:
        jo["conv"] = conv_spec_json(op.conv);
        store.add_f32(p + ".weight", op.weight);
        break;
      case OpKind::conv_grouped: {
        jo["conv"] = conv_spec_json(op.grouped.spec);
        jo["groups"] = op.grouped.groups;
        store.add_i64(p + ".channel_perm", op.grouped.channel_perm);
        store.add_i64(p + ".kernel_perm", op.grouped.kernel_perm);
        store.add_i64(p + ".channels_per_group", op.grouped.channels_per_group);
        store.add_i64(p + ".kernels_per_group", op.grouped.kernels_per_group);
        for (size_t g = 0; g < op.grouped.blocks.size(); ++g)
          store.add_f32(p + ".block" + std::to_string(g), op.grouped.blocks[g]);
        break;
      }
      case OpKind::batch_norm:
        jo["eps"] = op.eps;
        store.add_f32(p + ".gamma", op.gamma);
        store.add_f32(p + ".beta", op.beta);
        store.add_f32(p + ".mean", op.mean);
        store.add_f32(p + ".var", op.var);
        break;
      case OpKind::relu:
      case OpKind::global_avg_pool:
        break;
      case OpKind::avg_pool:
        jo["pool"] = pool_spec_json(op.pool);
        break;
      case OpKind::concat:
        break;
      case OpKind::linear:
        store.add_f32(p + ".lin_w", op.lin_w);
        store.add_f32(p + ".lin_b", op.lin_b);
        break;
      case OpKind::restore:
        throw CompileError("plan: restore op is not valid in the stored source graph");
    }
    ops.push_back(std::move(jo));
  }
  store.meta["graph"] = {{"ops", std::move(ops)}};

  // compiled artifacts, so the loader can prove its recompilation agrees
  for (size_t i = 0; i < net.ops.size(); ++i) {
    if (net.ops[i].kind == OpKind::conv_grouped)
      store.add_i64("compiled.op" + std::to_string(i) + ".merged", net.merged[i].perm);
    if (net.ops[i].kind == OpKind::restore)
      store.add_i64("compiled.op" + std::to_string(i) + ".restore", net.ops[i].restore_perm);
  }
  store.save(path);
}

LoadedPlan load_plan(const std::string& path) {
  ArrayStore store = ArrayStore::load(path);
  if (!store.meta.contains("kind") || store.meta.at("kind") != "plan")
    throw IoError(IoError::Kind::parse, "'" + path + "' is not an inference plan");

  FrozenGraph<float> graph;
  const nlohmann::json& ops = store.meta.at("graph").at("ops");
  for (size_t i = 0; i < ops.size(); ++i) {
    const nlohmann::json& jo = ops[i];
    const std::string p = "op" + std::to_string(i);
    FrozenOp<float> op;
    op.kind = op_kind_from_name(jo.at("kind").get<std::string>());
    op.inputs = jo.at("inputs").get<std::vector<int64_t>>();
    op.channels = jo.at("channels").get<int64_t>();
    switch (op.kind) {
      case OpKind::input:
        break;
      case OpKind::conv_plain:
        op.conv = conv_spec_from_json(jo.at("conv"));
        op.weight = store.f32(p + ".weight");
        break;
      case OpKind::conv_grouped: {
        op.conv = conv_spec_from_json(jo.at("conv"));
        op.grouped.spec = op.conv;
        op.grouped.groups = jo.at("groups").get<int64_t>();
        op.grouped.channel_perm = store.i64(p + ".channel_perm");
        op.grouped.kernel_perm = store.i64(p + ".kernel_perm");
        op.grouped.channels_per_group = store.i64(p + ".channels_per_group");
        op.grouped.kernels_per_group = store.i64(p + ".kernels_per_group");
        op.grouped.kernel_restore.assign(op.grouped.kernel_perm.size(), 0);
        for (size_t slot = 0; slot < op.grouped.kernel_perm.size(); ++slot)
          op.grouped.kernel_restore[static_cast<size_t>(op.grouped.kernel_perm[slot])] =
              static_cast<int64_t>(slot);
        for (int64_t g = 0; g < op.grouped.groups; ++g)
          op.grouped.blocks.push_back(store.f32(p + ".block" + std::to_string(g)));
        break;
      }
      case OpKind::batch_norm:
        op.eps = jo.at("eps").get<float>();
        op.gamma = store.f32(p + ".gamma");
        op.beta = store.f32(p + ".beta");
        op.mean = store.f32(p + ".mean");
        op.var = store.f32(p + ".var");
        break;
      case OpKind::relu:
      case OpKind::global_avg_pool:
      case OpKind::concat:
        break;
      case OpKind::avg_pool:
        op.pool = pool_spec_from_json(jo.at("pool"));
        break;
      case OpKind::linear:
        op.lin_w = store.f32(p + ".lin_w");
        op.lin_b = store.f32(p + ".lin_b");
        break;
      case OpKind::restore:
        throw IoError(IoError::Kind::parse, "plan: stored source graph contains a restore op");
    }
    graph.ops.push_back(std::move(op));
  }

  LoadedPlan out;
  out.graph = std::move(graph);
  out.meta = store.meta;
  out.net = compile(out.graph);

  // the plan must describe the graph it shipped with
  if (store.meta.contains("source_digest") &&
      store.meta.at("source_digest").get<std::string>() != out.net.source_digest)
    throw IoError(IoError::Kind::parse, "plan digest does not match its stored graph");
  for (size_t i = 0; i < out.net.ops.size(); ++i) {
    if (out.net.ops[i].kind == OpKind::conv_grouped) {
      const auto stored = store.i64("compiled.op" + std::to_string(i) + ".merged");
      if (stored != out.net.merged[i].perm)
        throw IoError(IoError::Kind::parse, "plan inconsistent with recompiled graph (merged index)");
    }
    if (out.net.ops[i].kind == OpKind::restore) {
      const auto stored = store.i64("compiled.op" + std::to_string(i) + ".restore");
      if (stored != out.net.ops[i].restore_perm)
        throw IoError(IoError::Kind::parse, "plan inconsistent with recompiled graph (restore index)");
    }
  }
  return out;
}

}  // namespace lgc3d
