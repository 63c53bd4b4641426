#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "lgc3d/tensor.hpp"

namespace lgc3d {

// Tensor layout everywhere: (batch, channel, depth, height, width),
// depth = spectral axis. Convolution is cross-correlation with zero padding.
struct Conv3dSpec {
  int64_t in_channels = 0;
  int64_t out_kernels = 0;
  int64_t kd = 1, kh = 1, kw = 1;
  int64_t sd = 1, sh = 1, sw = 1;
  int64_t pd = 0, ph = 0, pw = 0;

  static Conv3dSpec make(int64_t c, int64_t n, int64_t k, int64_t stride = 1, int64_t pad = 0) {
    Conv3dSpec s;
    s.in_channels = c;
    s.out_kernels = n;
    s.kd = s.kh = s.kw = k;
    s.sd = s.sh = s.sw = stride;
    s.pd = s.ph = s.pw = pad;
    return s;
  }

  void validate() const {
    if (in_channels < 1 || out_kernels < 1) throw ShapeError("conv3d: channel counts must be >= 1");
    if (kd < 1 || kh < 1 || kw < 1) throw ShapeError("conv3d: kernel dims must be >= 1");
    if (sd < 1 || sh < 1 || sw < 1) throw ShapeError("conv3d: strides must be >= 1");
    if (pd < 0 || ph < 0 || pw < 0) throw ShapeError("conv3d: padding must be >= 0");
  }

  int64_t out_d(int64_t d) const { return (d + 2 * pd - kd) / sd + 1; }
  int64_t out_h(int64_t h) const { return (h + 2 * ph - kh) / sh + 1; }
  int64_t out_w(int64_t w) const { return (w + 2 * pw - kw) / sw + 1; }

  void check_input(int64_t d, int64_t h, int64_t w) const {
    validate();
    if (d + 2 * pd < kd) throw ShapeError("conv3d: depth axis " + std::to_string(d) + " (+pad) smaller than kernel " + std::to_string(kd));
    if (h + 2 * ph < kh) throw ShapeError("conv3d: height axis " + std::to_string(h) + " (+pad) smaller than kernel " + std::to_string(kh));
    if (w + 2 * pw < kw) throw ShapeError("conv3d: width axis " + std::to_string(w) + " (+pad) smaller than kernel " + std::to_string(kw));
  }
};

struct Pool3dSpec {
  int64_t wd = 1, wh = 1, ww = 1;
  int64_t sd = 1, sh = 1, sw = 1;

  static Pool3dSpec cube(int64_t window, int64_t stride) {
    Pool3dSpec p;
    p.wd = p.wh = p.ww = window;
    p.sd = p.sh = p.sw = stride;
    return p;
  }

  int64_t out_d(int64_t d) const { return (d - wd) / sd + 1; }
  int64_t out_h(int64_t h) const { return (h - wh) / sh + 1; }
  int64_t out_w(int64_t w) const { return (w - ww) / sw + 1; }

  void check_input(int64_t d, int64_t h, int64_t w) const {
    if (wd < 1 || wh < 1 || ww < 1 || sd < 1 || sh < 1 || sw < 1)
      throw ShapeError("avg_pool3d: window/stride must be >= 1");
    if (wd > d) throw ShapeError("avg_pool3d: window depth " + std::to_string(wd) + " exceeds input depth " + std::to_string(d));
    if (wh > h) throw ShapeError("avg_pool3d: window height " + std::to_string(wh) + " exceeds input height " + std::to_string(h));
    if (ww > w) throw ShapeError("avg_pool3d: window width " + std::to_string(ww) + " exceeds input width " + std::to_string(w));
  }
};

namespace kern {

// ---------------------------------------------------------------------------
// conv3d, im2col formulation
// ---------------------------------------------------------------------------

template <typename T>
void im2col_3d(const T* x, int64_t C, int64_t D, int64_t H, int64_t W, const Conv3dSpec& s,
               int64_t OD, int64_t OH, int64_t OW, T* col) {
  const int64_t P = OD * OH * OW;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t kd = 0; kd < s.kd; ++kd) {
      for (int64_t kh = 0; kh < s.kh; ++kh) {
        for (int64_t kw = 0; kw < s.kw; ++kw) {
          T* row = col + (((c * s.kd + kd) * s.kh + kh) * s.kw + kw) * P;
          int64_t p = 0;
          for (int64_t od = 0; od < OD; ++od) {
            int64_t id = od * s.sd - s.pd + kd;
            if (id < 0 || id >= D) {
              for (int64_t i = 0; i < OH * OW; ++i) row[p++] = T(0);
              continue;
            }
            for (int64_t oh = 0; oh < OH; ++oh) {
              int64_t ih = oh * s.sh - s.ph + kh;
              if (ih < 0 || ih >= H) {
                for (int64_t i = 0; i < OW; ++i) row[p++] = T(0);
                continue;
              }
              const T* src = x + ((c * D + id) * H + ih) * W;
              for (int64_t ow = 0; ow < OW; ++ow) {
                int64_t iw = ow * s.sw - s.pw + kw;
                row[p++] = (iw >= 0 && iw < W) ? src[iw] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

// scatter-add of a col matrix back into an image (gradient of im2col)
template <typename T>
void col2im_3d(const T* col, int64_t C, int64_t D, int64_t H, int64_t W, const Conv3dSpec& s,
               int64_t OD, int64_t OH, int64_t OW, T* x) {
  const int64_t P = OD * OH * OW;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t kd = 0; kd < s.kd; ++kd) {
      for (int64_t kh = 0; kh < s.kh; ++kh) {
        for (int64_t kw = 0; kw < s.kw; ++kw) {
          const T* row = col + (((c * s.kd + kd) * s.kh + kh) * s.kw + kw) * P;
          int64_t p = 0;
          for (int64_t od = 0; od < OD; ++od) {
            int64_t id = od * s.sd - s.pd + kd;
            if (id < 0 || id >= D) {
              p += OH * OW;
              continue;
            }
            for (int64_t oh = 0; oh < OH; ++oh) {
              int64_t ih = oh * s.sh - s.ph + kh;
              if (ih < 0 || ih >= H) {
                p += OW;
                continue;
              }
              T* dst = x + ((c * D + id) * H + ih) * W;
              for (int64_t ow = 0; ow < OW; ++ow) {
                int64_t iw = ow * s.sw - s.pw + kw;
                if (iw >= 0 && iw < W) dst[iw] += row[p];
                ++p;
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Conv3dSpec& s) {
  if (x.rank() != 5) throw ShapeError("conv3d: input must be rank-5 (B,C,D,H,W), got " + x.shape_string());
  if (w.rank() != 5) throw ShapeError("conv3d: weight must be rank-5 (N,C,kd,kh,kw), got " + w.shape_string());
  if (x.dim(1) != s.in_channels)
    throw ShapeError("conv3d: channel axis of input is " + std::to_string(x.dim(1)) + ", spec expects " + std::to_string(s.in_channels));
  if (w.dim(1) != s.in_channels)
    throw ShapeError("conv3d: channel axis of weight is " + std::to_string(w.dim(1)) + ", spec expects " + std::to_string(s.in_channels));
  if (w.dim(0) != s.out_kernels)
    throw ShapeError("conv3d: kernel axis of weight is " + std::to_string(w.dim(0)) + ", spec expects " + std::to_string(s.out_kernels));
  if (w.dim(2) != s.kd || w.dim(3) != s.kh || w.dim(4) != s.kw)
    throw ShapeError("conv3d: weight kernel dims " + w.shape_string() + " do not match spec");
  s.check_input(x.dim(2), x.dim(3), x.dim(4));
}

template <typename T>
Tensor<T> conv3d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Conv3dSpec& s) {
  check_conv_args(x, w, s);
  const int64_t B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const int64_t N = s.out_kernels;
  const int64_t OD = s.out_d(D), OH = s.out_h(H), OW = s.out_w(W);
  const int64_t P = OD * OH * OW;
  const int64_t CK = C * s.kd * s.kh * s.kw;

  Tensor<T> out({B, N, OD, OH, OW});
  const T* wm = w.data();

#pragma omp parallel for schedule(static) if (B > 1)
  for (int64_t b = 0; b < B; ++b) {
    std::vector<T> col(static_cast<size_t>(CK * P));
    im2col_3d(x.data() + b * C * D * H * W, C, D, H, W, s, OD, OH, OW, col.data());
    T* ob = out.data() + b * N * P;
    for (int64_t n = 0; n < N; ++n) {
      T* orow = ob + n * P;
      for (int64_t ck = 0; ck < CK; ++ck) {
        const T a = wm[n * CK + ck];
        if (a == T(0)) continue;
        const T* crow = col.data() + ck * P;
        for (int64_t p = 0; p < P; ++p) orow[p] += a * crow[p];
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv3d_bwd_x(const Tensor<T>& gout, const Tensor<T>& w, const Conv3dSpec& s,
                       const std::vector<int64_t>& x_shape) {
  const int64_t B = x_shape[0], C = x_shape[1], D = x_shape[2], H = x_shape[3], W = x_shape[4];
  const int64_t N = s.out_kernels;
  const int64_t OD = s.out_d(D), OH = s.out_h(H), OW = s.out_w(W);
  const int64_t P = OD * OH * OW;
  const int64_t CK = C * s.kd * s.kh * s.kw;

  Tensor<T> gx(x_shape);
  const T* wm = w.data();

#pragma omp parallel for schedule(static) if (B > 1)
  for (int64_t b = 0; b < B; ++b) {
    std::vector<T> colg(static_cast<size_t>(CK * P), T(0));
    const T* gb = gout.data() + b * N * P;
    for (int64_t n = 0; n < N; ++n) {
      const T* grow = gb + n * P;
      for (int64_t ck = 0; ck < CK; ++ck) {
        const T a = wm[n * CK + ck];
        if (a == T(0)) continue;
        T* crow = colg.data() + ck * P;
        for (int64_t p = 0; p < P; ++p) crow[p] += a * grow[p];
      }
    }
    col2im_3d(colg.data(), C, D, H, W, s, OD, OH, OW, gx.data() + b * C * D * H * W);
  }
  return gx;
}

template <typename T>
Tensor<T> conv3d_bwd_w(const Tensor<T>& gout, const Tensor<T>& x, const Conv3dSpec& s,
                       const std::vector<int64_t>& w_shape) {
  const int64_t B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const int64_t N = s.out_kernels;
  const int64_t OD = s.out_d(D), OH = s.out_h(H), OW = s.out_w(W);
  const int64_t P = OD * OH * OW;
  const int64_t CK = C * s.kd * s.kh * s.kw;

  // per-sample partials, reduced in batch order so results do not depend on
  // the worker count
  std::vector<std::vector<T>> partial(static_cast<size_t>(B));

#pragma omp parallel for schedule(static) if (B > 1)
  for (int64_t b = 0; b < B; ++b) {
    std::vector<T> col(static_cast<size_t>(CK * P));
    im2col_3d(x.data() + b * C * D * H * W, C, D, H, W, s, OD, OH, OW, col.data());
    std::vector<T>& gw = partial[static_cast<size_t>(b)];
    gw.assign(static_cast<size_t>(N * CK), T(0));
    const T* gb = gout.data() + b * N * P;
    for (int64_t n = 0; n < N; ++n) {
      const T* grow = gb + n * P;
      for (int64_t ck = 0; ck < CK; ++ck) {
        const T* crow = col.data() + ck * P;
        T acc = T(0);
        for (int64_t p = 0; p < P; ++p) acc += grow[p] * crow[p];
        gw[static_cast<size_t>(n * CK + ck)] = acc;
      }
    }
  }

  Tensor<T> gw(w_shape);
  T* gwp = gw.data();
  for (int64_t b = 0; b < B; ++b) {
    const std::vector<T>& pb = partial[static_cast<size_t>(b)];
    for (int64_t i = 0; i < N * CK; ++i) gwp[i] += pb[static_cast<size_t>(i)];
  }
  return gw;
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> avg_pool3d_fwd(const Tensor<T>& x, const Pool3dSpec& p) {
  if (x.rank() != 5) throw ShapeError("avg_pool3d: input must be rank-5, got " + x.shape_string());
  const int64_t B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  p.check_input(D, H, W);
  const int64_t OD = p.out_d(D), OH = p.out_h(H), OW = p.out_w(W);
  Tensor<T> out({B, C, OD, OH, OW});
  const T inv = T(1) / static_cast<T>(p.wd * p.wh * p.ww);

#pragma omp parallel for schedule(static) if (B * C > 1)
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* src = x.data() + bc * D * H * W;
    T* dst = out.data() + bc * OD * OH * OW;
    for (int64_t od = 0; od < OD; ++od)
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          T acc = T(0);
          for (int64_t kd = 0; kd < p.wd; ++kd)
            for (int64_t kh = 0; kh < p.wh; ++kh)
              for (int64_t kw = 0; kw < p.ww; ++kw)
                acc += src[((od * p.sd + kd) * H + oh * p.sh + kh) * W + ow * p.sw + kw];
          dst[(od * OH + oh) * OW + ow] = acc * inv;
        }
  }
  return out;
}

template <typename T>
Tensor<T> avg_pool3d_bwd(const Tensor<T>& gout, const Pool3dSpec& p, const std::vector<int64_t>& x_shape) {
  const int64_t B = x_shape[0], C = x_shape[1], D = x_shape[2], H = x_shape[3], W = x_shape[4];
  const int64_t OD = p.out_d(D), OH = p.out_h(H), OW = p.out_w(W);
  Tensor<T> gx(x_shape);
  const T inv = T(1) / static_cast<T>(p.wd * p.wh * p.ww);

#pragma omp parallel for schedule(static) if (B * C > 1)
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* g = gout.data() + bc * OD * OH * OW;
    T* dst = gx.data() + bc * D * H * W;
    for (int64_t od = 0; od < OD; ++od)
      for (int64_t oh = 0; oh < OH; ++oh)
        for (int64_t ow = 0; ow < OW; ++ow) {
          const T v = g[(od * OH + oh) * OW + ow] * inv;
          for (int64_t kd = 0; kd < p.wd; ++kd)
            for (int64_t kh = 0; kh < p.wh; ++kh)
              for (int64_t kw = 0; kw < p.ww; ++kw)
                dst[((od * p.sd + kd) * H + oh * p.sh + kh) * W + ow * p.sw + kw] += v;
        }
  }
  return gx;
}

template <typename T>
Tensor<T> global_avg_pool_fwd(const Tensor<T>& x) {
  if (x.rank() != 5) throw ShapeError("global_avg_pool: input must be rank-5, got " + x.shape_string());
  const int64_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3) * x.dim(4);
  Tensor<T> out({B, C});
  const T inv = T(1) / static_cast<T>(S);
  for (int64_t bc = 0; bc < B * C; ++bc) {
    const T* src = x.data() + bc * S;
    T acc = T(0);
    for (int64_t i = 0; i < S; ++i) acc += src[i];
    out[bc] = acc * inv;
  }
  return out;
}

// ---------------------------------------------------------------------------
// batch norm (per channel over batch and all spatial axes)
// ---------------------------------------------------------------------------

template <typename T>
struct BnSaved {
  Tensor<T> mean;     // [C]
  Tensor<T> inv_std;  // [C], 1/sqrt(var + eps)
};

template <typename T>
void check_bn_args(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta) {
  if (x.rank() != 5) throw ShapeError("batch_norm: input must be rank-5, got " + x.shape_string());
  const int64_t C = x.dim(1);
  if (gamma.numel() != C || beta.numel() != C)
    throw ShapeError("batch_norm: channel axis is " + std::to_string(C) + ", gamma/beta have " +
                     std::to_string(gamma.numel()) + "/" + std::to_string(beta.numel()) + " entries");
}

template <typename T>
Tensor<T> batch_norm_train_fwd(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                               Tensor<T>& running_mean, Tensor<T>& running_var, T eps, T momentum,
                               BnSaved<T>& saved) {
  check_bn_args(x, gamma, beta);
  const int64_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3) * x.dim(4);
  const int64_t m = B * S;
  Tensor<T> out(x.shape());
  saved.mean = Tensor<T>({C});
  saved.inv_std = Tensor<T>({C});

#pragma omp parallel for schedule(static) if (C > 1)
  for (int64_t c = 0; c < C; ++c) {
    T sum = T(0);
    for (int64_t b = 0; b < B; ++b) {
      const T* src = x.data() + (b * C + c) * S;
      for (int64_t i = 0; i < S; ++i) sum += src[i];
    }
    const T mean = sum / static_cast<T>(m);
    T sq = T(0);
    for (int64_t b = 0; b < B; ++b) {
      const T* src = x.data() + (b * C + c) * S;
      for (int64_t i = 0; i < S; ++i) {
        const T d = src[i] - mean;
        sq += d * d;
      }
    }
    const T var = sq / static_cast<T>(m);
    const T inv_std = T(1) / std::sqrt(var + eps);
    saved.mean[c] = mean;
    saved.inv_std[c] = inv_std;

    const T g = gamma[c], bta = beta[c];
    for (int64_t b = 0; b < B; ++b) {
      const T* src = x.data() + (b * C + c) * S;
      T* dst = out.data() + (b * C + c) * S;
      for (int64_t i = 0; i < S; ++i) dst[i] = g * (src[i] - mean) * inv_std + bta;
    }

    // running stats track the unbiased variance
    const T unbiased = (m > 1) ? sq / static_cast<T>(m - 1) : var;
    running_mean[c] = (T(1) - momentum) * running_mean[c] + momentum * mean;
    running_var[c] = (T(1) - momentum) * running_var[c] + momentum * unbiased;
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm_eval_fwd(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              const Tensor<T>& running_mean, const Tensor<T>& running_var, T eps) {
  check_bn_args(x, gamma, beta);
  const int64_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3) * x.dim(4);
  Tensor<T> out(x.shape());
  for (int64_t c = 0; c < C; ++c) {
    const T inv_std = T(1) / std::sqrt(running_var[c] + eps);
    const T g = gamma[c], bta = beta[c], mu = running_mean[c];
    for (int64_t b = 0; b < B; ++b) {
      const T* src = x.data() + (b * C + c) * S;
      T* dst = out.data() + (b * C + c) * S;
      for (int64_t i = 0; i < S; ++i) dst[i] = g * (src[i] - mu) * inv_std + bta;
    }
  }
  return out;
}

// fused train-mode backward: fills gx, ggamma, gbeta
template <typename T>
void batch_norm_train_bwd(const Tensor<T>& gout, const Tensor<T>& x, const Tensor<T>& gamma,
                          const BnSaved<T>& saved, Tensor<T>& gx, Tensor<T>& ggamma, Tensor<T>& gbeta) {
  const int64_t B = x.dim(0), C = x.dim(1), S = x.dim(2) * x.dim(3) * x.dim(4);
  const int64_t m = B * S;
  gx = Tensor<T>(x.shape());
  ggamma = Tensor<T>({C});
  gbeta = Tensor<T>({C});

#pragma omp parallel for schedule(static) if (C > 1)
  for (int64_t c = 0; c < C; ++c) {
    const T mean = saved.mean[c], inv_std = saved.inv_std[c], g = gamma[c];
    T sum_dy = T(0), sum_dy_xhat = T(0);
    for (int64_t b = 0; b < B; ++b) {
      const T* xs = x.data() + (b * C + c) * S;
      const T* gs = gout.data() + (b * C + c) * S;
      for (int64_t i = 0; i < S; ++i) {
        const T xhat = (xs[i] - mean) * inv_std;
        sum_dy += gs[i];
        sum_dy_xhat += gs[i] * xhat;
      }
    }
    ggamma[c] = sum_dy_xhat;
    gbeta[c] = sum_dy;
    const T k = g * inv_std / static_cast<T>(m);
    for (int64_t b = 0; b < B; ++b) {
      const T* xs = x.data() + (b * C + c) * S;
      const T* gs = gout.data() + (b * C + c) * S;
      T* dst = gx.data() + (b * C + c) * S;
      for (int64_t i = 0; i < S; ++i) {
        const T xhat = (xs[i] - mean) * inv_std;
        dst[i] = k * (static_cast<T>(m) * gs[i] - sum_dy - xhat * sum_dy_xhat);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// pointwise / dense / reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu_fwd(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  const T* s = x.data();
  T* d = out.data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) d[i] = s[i] > T(0) ? s[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> softmax_rows_fwd(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_rows: input must be rank-2, got " + x.shape_string());
  const int64_t R = x.dim(0), C = x.dim(1);
  Tensor<T> out(x.shape());
  for (int64_t r = 0; r < R; ++r) {
    const T* src = x.data() + r * C;
    T* dst = out.data() + r * C;
    T mx = src[0];
    for (int64_t c = 1; c < C; ++c) mx = std::max(mx, src[c]);
    T sum = T(0);
    for (int64_t c = 0; c < C; ++c) {
      dst[c] = std::exp(src[c] - mx);
      sum += dst[c];
    }
    const T inv = T(1) / sum;
    for (int64_t c = 0; c < C; ++c) dst[c] *= inv;
  }
  return out;
}

template <typename T>
Tensor<T> matmul2d(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul: inputs must be rank-2");
  if (a.dim(1) != b.dim(0))
    throw ShapeError("matmul: inner axis " + std::to_string(a.dim(1)) + " vs " + std::to_string(b.dim(0)));
  const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  Tensor<T> out({M, N});
  for (int64_t i = 0; i < M; ++i) {
    T* orow = out.data() + i * N;
    for (int64_t k = 0; k < K; ++k) {
      const T v = a[i * K + k];
      if (v == T(0)) continue;
      const T* brow = b.data() + k * N;
      for (int64_t j = 0; j < N; ++j) orow[j] += v * brow[j];
    }
  }
  return out;
}

template <typename T>
Tensor<T> transpose2d(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: input must be rank-2");
  const int64_t R = a.dim(0), C = a.dim(1);
  Tensor<T> out({C, R});
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) out[c * R + r] = a[r * C + c];
  return out;
}

// y = x * W^T + bias, x [B,F], W [K,F], bias [K]
template <typename T>
Tensor<T> linear_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.rank() != 2 || w.rank() != 2) throw ShapeError("linear: inputs must be rank-2");
  if (x.dim(1) != w.dim(1))
    throw ShapeError("linear: feature axis " + std::to_string(x.dim(1)) + " vs weight " + std::to_string(w.dim(1)));
  if (bias.numel() != w.dim(0)) throw ShapeError("linear: bias length vs out features");
  const int64_t B = x.dim(0), F = x.dim(1), K = w.dim(0);
  Tensor<T> out({B, K});
  for (int64_t b = 0; b < B; ++b) {
    const T* xr = x.data() + b * F;
    T* orow = out.data() + b * K;
    for (int64_t k = 0; k < K; ++k) {
      const T* wr = w.data() + k * F;
      T acc = bias[k];
      for (int64_t f = 0; f < F; ++f) acc += xr[f] * wr[f];
      orow[k] = acc;
    }
  }
  return out;
}

// channel gather along axis 1 of a rank>=2 tensor: out[:, i, ...] = x[:, perm[i], ...]
template <typename T>
Tensor<T> gather_channels(const Tensor<T>& x, const std::vector<int64_t>& perm) {
  if (x.rank() < 2) throw ShapeError("gather_channels: input must be rank>=2");
  const int64_t B = x.dim(0), C = x.dim(1);
  if (static_cast<int64_t>(perm.size()) != C)
    throw ShapeError("gather_channels: permutation length " + std::to_string(perm.size()) + " vs channel axis " + std::to_string(C));
  int64_t S = 1;
  for (int i = 2; i < x.rank(); ++i) S *= x.dim(i);
  Tensor<T> out(x.shape());
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      std::memcpy(out.data() + (b * C + c) * S, x.data() + (b * C + perm[static_cast<size_t>(c)]) * S,
                  static_cast<size_t>(S) * sizeof(T));
  return out;
}

}  // namespace kern
}  // namespace lgc3d
