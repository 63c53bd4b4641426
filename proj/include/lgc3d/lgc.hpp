#pragma once

#include <string>
#include <vector>

#include "lgc3d/instr.hpp"
#include "lgc3d/ops.hpp"
#include "lgc3d/rng.hpp"
#include "lgc3d/selection.hpp"

namespace lgc3d {

// Frozen form of a learnable grouped conv: weights packed per group, with the
// recorded channel/kernel permutations. Ragged group sizes are allowed.
template <typename T>
struct GroupedConv3d {
  Conv3dSpec spec;  // original dense geometry (full C and N)
  int64_t groups = 0;
  std::vector<int64_t> channel_perm;        // packed slot -> original channel index
  std::vector<int64_t> kernel_perm;         // packed slot -> original kernel index
  std::vector<int64_t> kernel_restore;      // inverse of kernel_perm
  std::vector<int64_t> channels_per_group;  // C_g
  std::vector<int64_t> kernels_per_group;   // N_g
  std::vector<Tensor<T>> blocks;            // per group: [N_g, C_g, kd, kh, kw]
};

// Learnable grouped 3D convolution: a full kernel bank W gated by the outer
// product of two row-stochastic selection matrices. Soft mode trains the
// grouping; hard mode snaps each row to its argmax group.
template <typename T>
struct LgcConv3dLayer {
  Conv3dSpec spec;
  int64_t groups = 1;
  bool hard_mode = false;
  ad::NodePtr<T> w;         // [N, C, kd, kh, kw]
  ad::NodePtr<T> s_logits;  // [C, G] channel selection
  ad::NodePtr<T> t_logits;  // [N, G] kernel selection

  static LgcConv3dLayer init(const Conv3dSpec& spec, int64_t groups, Rng& rng) {
    spec.validate();
    if (groups < 1) throw ValueError("lgc layer: group count must be >= 1, got " + std::to_string(groups));
    const int64_t C = spec.in_channels, N = spec.out_kernels;
    if (groups > std::min(C, N))
      throw ValueError("lgc layer: " + std::to_string(groups) + " groups exceed min(C,N) = " +
                       std::to_string(std::min(C, N)));
    LgcConv3dLayer layer;
    layer.spec = spec;
    layer.groups = groups;

    Tensor<T> w({N, C, spec.kd, spec.kh, spec.kw});
    const T std_dev = std::sqrt(T(2) / static_cast<T>(C * spec.kd * spec.kh * spec.kw));
    for (int64_t i = 0; i < w.numel(); ++i) w[i] = static_cast<T>(rng.normal()) * std_dev;
    layer.w = ad::make_param(std::move(w), "lgc.w");

    Tensor<T> s({C, groups});
    for (int64_t i = 0; i < s.numel(); ++i) s[i] = static_cast<T>(rng.uniform(-0.1, 0.1));
    layer.s_logits = ad::make_param(std::move(s), "lgc.s");

    Tensor<T> t({N, groups});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(-0.1, 0.1));
    layer.t_logits = ad::make_param(std::move(t), "lgc.t");
    return layer;
  }

  SelectionMatrix<T> s_matrix() const { return SelectionMatrix<T>(s_logits->value); }
  SelectionMatrix<T> t_matrix() const { return SelectionMatrix<T>(t_logits->value); }

  // soft connection mask as a graph node; temperature sharpens the softmax
  ad::NodePtr<T> soft_mask(T temperature = T(1)) const {
    ad::NodePtr<T> sl = s_logits, tl = t_logits;
    if (temperature != T(1)) {
      sl = ad::scale(sl, temperature);
      tl = ad::scale(tl, temperature);
    }
    return ad::matmul(ad::softmax_rows(tl), ad::transpose(ad::softmax_rows(sl)));
  }

  ad::NodePtr<T> forward(ad::NodePtr<T> x, T temperature = T(1)) const {
    if (x->value.rank() != 5 || x->value.dim(1) != spec.in_channels)
      throw ShapeError("lgc forward: input " + x->value.shape_string() + " does not carry " +
                       std::to_string(spec.in_channels) + " channels");
    ad::NodePtr<T> u = hard_mode
                           ? ad::make_const(connection_mask(s_matrix().hard(), t_matrix().hard()))
                           : soft_mask(temperature);
    return ad::conv3d(x, ad::scale_nc(w, u), spec);
  }

  // penalty = sum_j max(0, tau - column mass)^2 over the soft views of S and T
  ad::NodePtr<T> regularizer(T tau = T(1)) const {
    auto rs = ad::column_mass_hinge(ad::softmax_rows(s_logits), tau);
    auto rt = ad::column_mass_hinge(ad::softmax_rows(t_logits), tau);
    return ad::add(rs, rt);
  }

  std::vector<ad::NodePtr<T>> params() const { return {w, s_logits, t_logits}; }

  GroupedConv3d<T> freeze() const {
    const int64_t C = spec.in_channels, N = spec.out_kernels;
    const std::vector<int64_t> gc = s_matrix().assignment();
    const std::vector<int64_t> gn = t_matrix().assignment();

    GroupedConv3d<T> frozen;
    frozen.spec = spec;
    frozen.groups = groups;
    frozen.channels_per_group.assign(static_cast<size_t>(groups), 0);
    frozen.kernels_per_group.assign(static_cast<size_t>(groups), 0);

    // stable pack: original order preserved inside each group
    for (int64_t g = 0; g < groups; ++g) {
      for (int64_t c = 0; c < C; ++c)
        if (gc[static_cast<size_t>(c)] == g) {
          frozen.channel_perm.push_back(c);
          ++frozen.channels_per_group[static_cast<size_t>(g)];
        }
      for (int64_t n = 0; n < N; ++n)
        if (gn[static_cast<size_t>(n)] == g) {
          frozen.kernel_perm.push_back(n);
          ++frozen.kernels_per_group[static_cast<size_t>(g)];
        }
    }
    for (int64_t g = 0; g < groups; ++g)
      if (frozen.kernels_per_group[static_cast<size_t>(g)] > 0 && frozen.channels_per_group[static_cast<size_t>(g)] == 0)
        throw FreezeError("group " + std::to_string(g) + " has " +
                          std::to_string(frozen.kernels_per_group[static_cast<size_t>(g)]) +
                          " kernels but no input channels");

    frozen.kernel_restore.assign(static_cast<size_t>(N), 0);
    for (int64_t slot = 0; slot < N; ++slot)
      frozen.kernel_restore[static_cast<size_t>(frozen.kernel_perm[static_cast<size_t>(slot)])] = slot;

    const int64_t K = spec.kd * spec.kh * spec.kw;
    const Tensor<T>& wv = w->value;
    int64_t coff = 0, noff = 0;
    for (int64_t g = 0; g < groups; ++g) {
      const int64_t Cg = frozen.channels_per_group[static_cast<size_t>(g)];
      const int64_t Ng = frozen.kernels_per_group[static_cast<size_t>(g)];
      Tensor<T> block({std::max<int64_t>(Ng, 1), std::max<int64_t>(Cg, 1), spec.kd, spec.kh, spec.kw});
      if (Ng == 0 || Cg == 0) block = Tensor<T>({1, 1, spec.kd, spec.kh, spec.kw});
      for (int64_t a = 0; a < Ng; ++a) {
        const int64_t n = frozen.kernel_perm[static_cast<size_t>(noff + a)];
        for (int64_t b = 0; b < Cg; ++b) {
          const int64_t c = frozen.channel_perm[static_cast<size_t>(coff + b)];
          std::memcpy(block.data() + (a * Cg + b) * K, wv.data() + (n * C + c) * K,
                      static_cast<size_t>(K) * sizeof(T));
        }
      }
      frozen.blocks.push_back(std::move(block));
      coff += Cg;
      noff += Ng;
    }
    return frozen;
  }
};

// value-level W[n,c,...] * U[n,c] broadcast (the soft-masked kernel bank)
template <typename T>
Tensor<T> masked_weights(const Tensor<T>& w, const Tensor<T>& u) {
  if (w.rank() != 5 || u.rank() != 2 || u.dim(0) != w.dim(0) || u.dim(1) != w.dim(1))
    throw ShapeError("masked_weights: mask " + u.shape_string() + " vs weight " + w.shape_string());
  const int64_t NC = w.dim(0) * w.dim(1), K = w.numel() / NC;
  Tensor<T> out(w.shape());
  for (int64_t nc = 0; nc < NC; ++nc) {
    const T s = u[nc];
    const T* src = w.data() + nc * K;
    T* dst = out.data() + nc * K;
    for (int64_t i = 0; i < K; ++i) dst[i] = src[i] * s;
  }
  return out;
}

// Per-group convolutions over an input already gathered into packed channel
// order; output stays in packed kernel order.
template <typename T>
Tensor<T> grouped_conv_packed(const Tensor<T>& packed_in, const GroupedConv3d<T>& frozen) {
  const int64_t B = packed_in.dim(0), D = packed_in.dim(2), H = packed_in.dim(3), W = packed_in.dim(4);
  const int64_t S = D * H * W;
  const Conv3dSpec& base = frozen.spec;
  const int64_t OD = base.out_d(D), OH = base.out_h(H), OW = base.out_w(W);
  const int64_t N = base.out_kernels, OS = OD * OH * OW;
  Tensor<T> packed_out({B, N, OD, OH, OW});

  int64_t coff = 0, noff = 0;
  for (int64_t g = 0; g < frozen.groups; ++g) {
    const int64_t Cg = frozen.channels_per_group[static_cast<size_t>(g)];
    const int64_t Ng = frozen.kernels_per_group[static_cast<size_t>(g)];
    if (Ng > 0 && Cg > 0) {
      Tensor<T> slice({B, Cg, D, H, W});
      for (int64_t b = 0; b < B; ++b)
        std::memcpy(slice.data() + b * Cg * S, packed_in.data() + (b * base.in_channels + coff) * S,
                    static_cast<size_t>(Cg * S) * sizeof(T));
      Conv3dSpec gs = base;
      gs.in_channels = Cg;
      gs.out_kernels = Ng;
      Tensor<T> y = kern::conv3d_fwd(slice, frozen.blocks[static_cast<size_t>(g)], gs);
      for (int64_t b = 0; b < B; ++b)
        std::memcpy(packed_out.data() + (b * N + noff) * OS, y.data() + b * Ng * OS,
                    static_cast<size_t>(Ng * OS) * sizeof(T));
    }
    coff += Cg;
    noff += Ng;
  }
  return packed_out;
}

// Runs the frozen layer: gather channels into packed order, convolve each
// group against its block, concatenate in packed kernel order, then restore
// the original kernel order (skippable when a compiled plan already folded
// the restore into the next layer's gather).
template <typename T>
Tensor<T> group_forward(const Tensor<T>& x, const GroupedConv3d<T>& frozen, bool restore_output = true) {
  if (x.rank() != 5 || x.dim(1) != frozen.spec.in_channels)
    throw ShapeError("group_forward: input " + x.shape_string() + " does not carry " +
                     std::to_string(frozen.spec.in_channels) + " channels");
  const Tensor<T> packed_in = instr::counted_gather(x, frozen.channel_perm);
  Tensor<T> packed_out = grouped_conv_packed(packed_in, frozen);
  if (!restore_output) return packed_out;
  return instr::counted_gather(packed_out, frozen.kernel_restore);
}

}  // namespace lgc3d
