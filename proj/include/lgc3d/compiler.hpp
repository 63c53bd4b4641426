#pragma once

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "lgc3d/lgc.hpp"
#include "lgc3d/permutation.hpp"

namespace lgc3d {

enum class OpKind : int32_t {
  input = 0,
  conv_plain,
  conv_grouped,
  batch_norm,
  relu,
  avg_pool,
  concat,
  global_avg_pool,
  linear,
  restore,  // compiled plans only: the single final re-ordering gather
};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::input: return "input";
    case OpKind::conv_plain: return "conv_plain";
    case OpKind::conv_grouped: return "conv_grouped";
    case OpKind::batch_norm: return "batch_norm";
    case OpKind::relu: return "relu";
    case OpKind::avg_pool: return "avg_pool";
    case OpKind::concat: return "concat";
    case OpKind::global_avg_pool: return "global_avg_pool";
    case OpKind::linear: return "linear";
    case OpKind::restore: return "restore";
  }
  return "?";
}

inline OpKind op_kind_from_name(const std::string& s) {
  for (int32_t i = 0; i <= static_cast<int32_t>(OpKind::restore); ++i)
    if (s == op_kind_name(static_cast<OpKind>(i))) return static_cast<OpKind>(i);
  throw ValueError("unknown op kind '" + s + "'");
}

// One node of an inference graph. Which fields are live depends on kind.
template <typename T>
struct FrozenOp {
  OpKind kind = OpKind::input;
  std::vector<int64_t> inputs;  // indices of earlier ops
  int64_t channels = 0;         // output channel / feature count

  Conv3dSpec conv;              // conv_plain, conv_grouped geometry
  Tensor<T> weight;             // conv_plain
  GroupedConv3d<T> grouped;     // conv_grouped
  Tensor<T> gamma, beta, mean, var;  // batch_norm (eval stats)
  T eps = static_cast<T>(1e-5);
  Pool3dSpec pool;              // avg_pool
  Tensor<T> lin_w, lin_b;       // linear
  std::vector<int64_t> restore_perm;  // restore
};

// Straight-line inference IR: ops in topological order, each referencing
// earlier indices. Built by hand in tests or lowered from a trained model.
template <typename T>
struct FrozenGraph {
  std::vector<FrozenOp<T>> ops;

  int64_t add(FrozenOp<T> op) {
    for (int64_t i : op.inputs)
      if (i < 0 || i >= static_cast<int64_t>(ops.size()))
        throw CompileError("graph: op input index " + std::to_string(i) + " not yet defined");
    ops.push_back(std::move(op));
    return static_cast<int64_t>(ops.size()) - 1;
  }

  int64_t add_input(int64_t channels) {
    FrozenOp<T> op;
    op.kind = OpKind::input;
    op.channels = channels;
    return add(std::move(op));
  }
  int64_t add_conv_plain(int64_t in, const Conv3dSpec& spec, Tensor<T> w) {
    FrozenOp<T> op;
    op.kind = OpKind::conv_plain;
    op.inputs = {in};
    op.conv = spec;
    op.weight = std::move(w);
    op.channels = spec.out_kernels;
    return add(std::move(op));
  }
  int64_t add_conv_grouped(int64_t in, GroupedConv3d<T> g) {
    FrozenOp<T> op;
    op.kind = OpKind::conv_grouped;
    op.inputs = {in};
    op.conv = g.spec;
    op.channels = g.spec.out_kernels;
    op.grouped = std::move(g);
    return add(std::move(op));
  }
  int64_t add_batch_norm(int64_t in, Tensor<T> gamma, Tensor<T> beta, Tensor<T> mean, Tensor<T> var, T eps) {
    FrozenOp<T> op;
    op.kind = OpKind::batch_norm;
    op.inputs = {in};
    op.channels = ops[static_cast<size_t>(in)].channels;
    op.gamma = std::move(gamma);
    op.beta = std::move(beta);
    op.mean = std::move(mean);
    op.var = std::move(var);
    op.eps = eps;
    return add(std::move(op));
  }
  int64_t add_relu(int64_t in) {
    FrozenOp<T> op;
    op.kind = OpKind::relu;
    op.inputs = {in};
    op.channels = ops[static_cast<size_t>(in)].channels;
    return add(std::move(op));
  }
  int64_t add_avg_pool(int64_t in, const Pool3dSpec& pool) {
    FrozenOp<T> op;
    op.kind = OpKind::avg_pool;
    op.inputs = {in};
    op.channels = ops[static_cast<size_t>(in)].channels;
    op.pool = pool;
    return add(std::move(op));
  }
  int64_t add_concat(std::vector<int64_t> ins) {
    FrozenOp<T> op;
    op.kind = OpKind::concat;
    op.channels = 0;
    for (int64_t i : ins) op.channels += ops[static_cast<size_t>(i)].channels;
    op.inputs = std::move(ins);
    return add(std::move(op));
  }
  int64_t add_global_avg_pool(int64_t in) {
    FrozenOp<T> op;
    op.kind = OpKind::global_avg_pool;
    op.inputs = {in};
    op.channels = ops[static_cast<size_t>(in)].channels;
    return add(std::move(op));
  }
  int64_t add_linear(int64_t in, Tensor<T> w, Tensor<T> b) {
    FrozenOp<T> op;
    op.kind = OpKind::linear;
    op.inputs = {in};
    op.channels = w.dim(0);
    op.lin_w = std::move(w);
    op.lin_b = std::move(b);
    return add(std::move(op));
  }

  int64_t input_channels() const {
    if (ops.empty() || ops[0].kind != OpKind::input) throw CompileError("graph: first op must be the input");
    return ops[0].channels;
  }

  // count of learnable-grouped conv layers, for gather accounting
  int64_t grouped_layer_count() const {
    int64_t n = 0;
    for (const auto& op : ops)
      if (op.kind == OpKind::conv_grouped) ++n;
    return n;
  }
};

namespace detail {

template <typename T>
Tensor<T> eval_op(const FrozenOp<T>& op, const std::vector<Tensor<T>>& vals,
                  const PermutationIndex* merged) {
  const auto in = [&](size_t k) -> const Tensor<T>& { return vals[static_cast<size_t>(op.inputs[k])]; };
  switch (op.kind) {
    case OpKind::input:
      throw CompileError("graph: unexpected extra input op");
    case OpKind::conv_plain:
      return kern::conv3d_fwd(in(0), op.weight, op.conv);
    case OpKind::conv_grouped:
      if (merged) {
        Tensor<T> packed = instr::counted_gather(in(0), merged->perm);
        return grouped_conv_packed(packed, op.grouped);
      }
      return group_forward(in(0), op.grouped, /*restore_output=*/true);
    case OpKind::batch_norm:
      return kern::batch_norm_eval_fwd(in(0), op.gamma, op.beta, op.mean, op.var, op.eps);
    case OpKind::relu:
      return kern::relu_fwd(in(0));
    case OpKind::avg_pool:
      return kern::avg_pool3d_fwd(in(0), op.pool);
    case OpKind::concat: {
      const Tensor<T>& first = in(0);
      const int64_t B = first.dim(0);
      int64_t C = 0, S = first.numel() / (B * first.dim(1));
      for (size_t k = 0; k < op.inputs.size(); ++k) C += in(k).dim(1);
      Tensor<T> out({B, C, first.dim(2), first.dim(3), first.dim(4)});
      for (int64_t b = 0; b < B; ++b) {
        int64_t off = 0;
        for (size_t k = 0; k < op.inputs.size(); ++k) {
          const int64_t ci = in(k).dim(1);
          std::memcpy(out.data() + (b * C + off) * S, in(k).data() + b * ci * S,
                      static_cast<size_t>(ci * S) * sizeof(T));
          off += ci;
        }
      }
      return out;
    }
    case OpKind::global_avg_pool:
      return kern::global_avg_pool_fwd(in(0));
    case OpKind::linear:
      return kern::linear_fwd(in(0), op.lin_w, op.lin_b);
    case OpKind::restore:
      return instr::counted_gather(in(0), op.restore_perm);
  }
  throw CompileError("graph: unhandled op kind");
}

}  // namespace detail

// Reference executor: every grouped layer gathers its input and restores its
// output, i.e. two reorders per layer. This is the oracle the compiled plan
// is checked against.
template <typename T>
Tensor<T> run_frozen(const FrozenGraph<T>& graph, const Tensor<T>& x) {
  if (graph.ops.empty() || graph.ops[0].kind != OpKind::input)
    throw CompileError("graph: first op must be the input");
  if (x.rank() != 5 || x.dim(1) != graph.ops[0].channels)
    throw ShapeError("graph input " + x.shape_string() + " does not carry " +
                     std::to_string(graph.ops[0].channels) + " channels");
  std::vector<Tensor<T>> vals;
  vals.reserve(graph.ops.size());
  vals.push_back(x);
  for (size_t i = 1; i < graph.ops.size(); ++i) {
    Tensor<T> v = detail::eval_op(graph.ops[i], vals, nullptr);
    if (v.dim(1) != graph.ops[i].channels && graph.ops[i].kind != OpKind::linear)
      throw CompileError("graph: op " + std::to_string(i) + " produced " + std::to_string(v.dim(1)) +
                         " channels, expected " + std::to_string(graph.ops[i].channels));
    vals.push_back(std::move(v));
  }
  return vals.back();
}

// All reordering decided offline: per grouped layer one merged input index,
// plus a single final restoration before the classifier (or at the end).
template <typename T>
struct CompiledNetwork {
  std::vector<FrozenOp<T>> ops;
  std::vector<PermutationIndex> merged;  // parallel to ops; sized only for conv_grouped
  std::string source_digest;

  int64_t gathers_per_run() const {
    int64_t n = 0;
    for (const auto& op : ops)
      if (op.kind == OpKind::conv_grouped || op.kind == OpKind::restore) ++n;
    return n;
  }
};

template <typename T>
std::string graph_digest(const FrozenGraph<T>& graph) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  for (const auto& op : graph.ops) {
    mix(static_cast<uint64_t>(op.kind));
    mix(static_cast<uint64_t>(op.channels));
    for (int64_t i : op.inputs) mix(static_cast<uint64_t>(i));
    for (int64_t p : op.grouped.channel_perm) mix(static_cast<uint64_t>(p));
    for (int64_t p : op.grouped.kernel_perm) mix(static_cast<uint64_t>(p));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

template <typename T>
CompiledNetwork<T> compile(const FrozenGraph<T>& graph) {
  if (graph.ops.empty() || graph.ops[0].kind != OpKind::input)
    throw CompileError("graph: first op must be the input");

  CompiledNetwork<T> net;
  net.source_digest = graph_digest(graph);
  // order[i][p] = logical channel sitting at physical slot p of op i's output
  std::vector<std::vector<int64_t>> order(graph.ops.size());
  bool restored = false;

  auto identity_vec = [](int64_t n) {
    std::vector<int64_t> v(static_cast<size_t>(n));
    std::iota(v.begin(), v.end(), int64_t{0});
    return v;
  };
  auto inverse_vec = [](const std::vector<int64_t>& o) {
    std::vector<int64_t> inv(o.size());
    for (size_t p = 0; p < o.size(); ++p) inv[static_cast<size_t>(o[p])] = static_cast<int64_t>(p);
    return inv;
  };
  auto is_ident = [](const std::vector<int64_t>& o) {
    for (size_t p = 0; p < o.size(); ++p)
      if (o[p] != static_cast<int64_t>(p)) return false;
    return true;
  };
  auto emit_restore_before = [&](int64_t src, const std::vector<int64_t>& src_order) -> int64_t {
    FrozenOp<T> r;
    r.kind = OpKind::restore;
    r.inputs = {src};
    r.channels = static_cast<int64_t>(src_order.size());
    r.restore_perm = inverse_vec(src_order);
    net.ops.push_back(std::move(r));
    net.merged.emplace_back();
    restored = true;
    return static_cast<int64_t>(net.ops.size()) - 1;
  };

  // graph index -> compiled index (restores may shift positions)
  std::vector<int64_t> remap(graph.ops.size());

  for (size_t i = 0; i < graph.ops.size(); ++i) {
    FrozenOp<T> op = graph.ops[i];
    for (auto& idx : op.inputs) idx = remap[static_cast<size_t>(idx)];
    PermutationIndex merged_idx;
    switch (op.kind) {
      case OpKind::input:
        order[i] = identity_vec(op.channels);
        break;
      case OpKind::conv_plain: {
        const auto& in_order = order[graph.ops[i].inputs[0]];
        if (!is_ident(in_order)) {
          // fold the reorder into the weight's channel axis: no runtime gather
          Tensor<T> w2(op.weight.shape());
          const int64_t N = op.weight.dim(0), C = op.weight.dim(1);
          const int64_t K = op.weight.numel() / (N * C);
          for (int64_t n = 0; n < N; ++n)
            for (int64_t p = 0; p < C; ++p)
              std::memcpy(w2.data() + (n * C + p) * K,
                          op.weight.data() + (n * C + in_order[static_cast<size_t>(p)]) * K,
                          static_cast<size_t>(K) * sizeof(T));
          op.weight = std::move(w2);
        }
        order[i] = identity_vec(op.channels);
        break;
      }
      case OpKind::conv_grouped: {
        const auto& in_order = order[graph.ops[i].inputs[0]];
        const auto inv = inverse_vec(in_order);
        std::vector<int64_t> m(op.grouped.channel_perm.size());
        for (size_t t = 0; t < m.size(); ++t)
          m[t] = inv[static_cast<size_t>(op.grouped.channel_perm[t])];
        merged_idx = PermutationIndex(std::move(m));
        order[i] = op.grouped.kernel_perm;  // output left packed
        break;
      }
      case OpKind::batch_norm: {
        const auto& in_order = order[graph.ops[i].inputs[0]];
        if (!is_ident(in_order)) {
          const int64_t C = op.gamma.numel();
          Tensor<T> g({C}), b({C}), mu({C}), v({C});
          for (int64_t p = 0; p < C; ++p) {
            const int64_t c = in_order[static_cast<size_t>(p)];
            g[p] = op.gamma[c];
            b[p] = op.beta[c];
            mu[p] = op.mean[c];
            v[p] = op.var[c];
          }
          op.gamma = std::move(g);
          op.beta = std::move(b);
          op.mean = std::move(mu);
          op.var = std::move(v);
        }
        order[i] = in_order;
        break;
      }
      case OpKind::relu:
      case OpKind::avg_pool:
      case OpKind::global_avg_pool:
        order[i] = order[graph.ops[i].inputs[0]];
        break;
      case OpKind::concat: {
        int64_t off = 0;
        for (int64_t gi : graph.ops[i].inputs) {
          for (int64_t c : order[static_cast<size_t>(gi)]) order[i].push_back(off + c);
          off += graph.ops[static_cast<size_t>(gi)].channels;
        }
        break;
      }
      case OpKind::linear: {
        const auto& in_order = order[graph.ops[i].inputs[0]];
        op.inputs[0] = emit_restore_before(op.inputs[0], in_order);
        order[i] = identity_vec(op.channels);
        break;
      }
      case OpKind::restore:
        throw CompileError("graph: restore op is not valid in an uncompiled graph");
    }
    net.ops.push_back(std::move(op));
    net.merged.push_back(std::move(merged_idx));
    remap[i] = static_cast<int64_t>(net.ops.size()) - 1;
  }

  if (!restored) {
    // no classifier stage: restore the network output itself
    const size_t last = graph.ops.size() - 1;
    emit_restore_before(remap[last], order[last]);
  }
  return net;
}

template <typename T>
Tensor<T> run_compiled(const CompiledNetwork<T>& net, const Tensor<T>& x) {
  if (net.ops.empty() || net.ops[0].kind != OpKind::input)
    throw CompileError("plan: first op must be the input");
  if (x.rank() != 5 || x.dim(1) != net.ops[0].channels)
    throw ShapeError("plan input " + x.shape_string() + " does not carry " +
                     std::to_string(net.ops[0].channels) + " channels");
  std::vector<Tensor<T>> vals;
  vals.reserve(net.ops.size());
  vals.push_back(x);
  for (size_t i = 1; i < net.ops.size(); ++i)
    vals.push_back(detail::eval_op(net.ops[i], vals,
                                   net.ops[i].kind == OpKind::conv_grouped ? &net.merged[i] : nullptr));
  return vals.back();
}

struct BenchReport {
  int64_t reps = 0;
  double naive_ms = 0.0;     // median wall time per inference
  double compiled_ms = 0.0;  // median wall time per inference
  int64_t naive_gathers = 0;
  int64_t compiled_gathers = 0;
  int64_t grouped_layers = 0;
  double max_abs_diff = 0.0;  // equivalence measured before timing
};

// Asserts both paths agree on the probe input, then times them interleaved.
template <typename T>
BenchReport bench(const FrozenGraph<T>& graph, const CompiledNetwork<T>& net, const Tensor<T>& x,
                  int64_t reps, double equivalence_tol) {
  BenchReport rep;
  rep.reps = reps;
  rep.grouped_layers = graph.grouped_layer_count();

  instr::reset();
  Tensor<T> a = run_frozen(graph, x);
  rep.naive_gathers = instr::gather_ops().load();
  instr::reset();
  Tensor<T> b = run_compiled(net, x);
  rep.compiled_gathers = instr::gather_ops().load();

  check_same_shape(a, b, "bench equivalence");
  for (int64_t i = 0; i < a.numel(); ++i)
    rep.max_abs_diff = std::max(rep.max_abs_diff, static_cast<double>(std::abs(a[i] - b[i])));
  if (rep.max_abs_diff > equivalence_tol)
    throw ValueError("bench: naive and compiled outputs differ by " + std::to_string(rep.max_abs_diff) +
                     " (tolerance " + std::to_string(equivalence_tol) + ")");

  std::vector<double> naive_times, compiled_times;
  naive_times.reserve(static_cast<size_t>(reps));
  compiled_times.reserve(static_cast<size_t>(reps));
  using clock = std::chrono::steady_clock;
  for (int64_t r = 0; r < reps; ++r) {
    auto t0 = clock::now();
    Tensor<T> ya = run_frozen(graph, x);
    auto t1 = clock::now();
    Tensor<T> yb = run_compiled(net, x);
    auto t2 = clock::now();
    naive_times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    compiled_times.push_back(std::chrono::duration<double, std::milli>(t2 - t1).count());
    rep.max_abs_diff = std::max(rep.max_abs_diff, static_cast<double>(std::abs(ya[0] - yb[0])));
  }
  auto median = [](std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n == 0 ? 0.0 : (n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]));
  };
  rep.naive_ms = median(naive_times);
  rep.compiled_ms = median(compiled_times);
  return rep;
}

}  // namespace lgc3d
