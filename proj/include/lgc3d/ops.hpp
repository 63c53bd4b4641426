#pragma once

#include <memory>
#include <vector>

#include "lgc3d/autodiff.hpp"
#include "lgc3d/kernels.hpp"

namespace lgc3d::ad {

template <typename T>
NodePtr<T> conv3d(NodePtr<T> x, NodePtr<T> w, const Conv3dSpec& spec) {
  Tensor<T> value = kern::conv3d_fwd(x->value, w->value, spec);
  return make_op<T>(std::move(value), {x, w}, [x, w, spec](Node<T>& self) {
    if (x->requires_grad) {
      Tensor<T> gx = kern::conv3d_bwd_x(self.grad, w->value, spec, x->value.shape());
      accumulate_grad(*x, gx);
    }
    if (w->requires_grad) {
      Tensor<T> gw = kern::conv3d_bwd_w(self.grad, x->value, spec, w->value.shape());
      accumulate_grad(*w, gw);
    }
  }, "conv3d");
}

template <typename T>
NodePtr<T> avg_pool3d(NodePtr<T> x, const Pool3dSpec& spec) {
  Tensor<T> value = kern::avg_pool3d_fwd(x->value, spec);
  return make_op<T>(std::move(value), {x}, [x, spec](Node<T>& self) {
    accumulate_grad(*x, kern::avg_pool3d_bwd(self.grad, spec, x->value.shape()));
  }, "avg_pool3d");
}

template <typename T>
NodePtr<T> relu(NodePtr<T> x) {
  Tensor<T> value = kern::relu_fwd(x->value);
  return make_op<T>(std::move(value), {x}, [x](Node<T>& self) {
    Tensor<T> gx(x->value.shape());
    const int64_t n = gx.numel();
    for (int64_t i = 0; i < n; ++i) gx[i] = x->value[i] > T(0) ? self.grad[i] : T(0);
    accumulate_grad(*x, gx);
  }, "relu");
}

// updates running stats in place while building the graph
template <typename T>
NodePtr<T> batch_norm_train(NodePtr<T> x, NodePtr<T> gamma, NodePtr<T> beta,
                            Tensor<T>& running_mean, Tensor<T>& running_var, T eps, T momentum) {
  auto saved = std::make_shared<kern::BnSaved<T>>();
  Tensor<T> value =
      kern::batch_norm_train_fwd(x->value, gamma->value, beta->value, running_mean, running_var, eps, momentum, *saved);
  return make_op<T>(std::move(value), {x, gamma, beta}, [x, gamma, beta, saved](Node<T>& self) {
    Tensor<T> gx, ggamma, gbeta;
    kern::batch_norm_train_bwd(self.grad, x->value, gamma->value, *saved, gx, ggamma, gbeta);
    if (x->requires_grad) accumulate_grad(*x, gx);
    if (gamma->requires_grad) accumulate_grad(*gamma, ggamma);
    if (beta->requires_grad) accumulate_grad(*beta, gbeta);
  }, "batch_norm");
}

template <typename T>
NodePtr<T> global_avg_pool(NodePtr<T> x) {
  Tensor<T> value = kern::global_avg_pool_fwd(x->value);
  return make_op<T>(std::move(value), {x}, [x](Node<T>& self) {
    const int64_t B = x->value.dim(0), C = x->value.dim(1);
    const int64_t S = x->value.numel() / (B * C);
    Tensor<T> gx(x->value.shape());
    const T inv = T(1) / static_cast<T>(S);
    for (int64_t bc = 0; bc < B * C; ++bc) {
      const T v = self.grad[bc] * inv;
      T* dst = gx.data() + bc * S;
      for (int64_t i = 0; i < S; ++i) dst[i] = v;
    }
    accumulate_grad(*x, gx);
  }, "global_avg_pool");
}

template <typename T>
NodePtr<T> concat_channels(const std::vector<NodePtr<T>>& xs) {
  if (xs.empty()) throw ValueError("concat_channels: no inputs");
  const auto& first = xs[0]->value;
  if (first.rank() != 5) throw ShapeError("concat_channels: inputs must be rank-5");
  int64_t C = 0;
  for (const auto& x : xs) {
    const auto& v = x->value;
    if (v.rank() != 5 || v.dim(0) != first.dim(0) || v.dim(2) != first.dim(2) ||
        v.dim(3) != first.dim(3) || v.dim(4) != first.dim(4))
      throw ShapeError("concat_channels: mismatched shapes " + first.shape_string() + " vs " + v.shape_string());
    C += v.dim(1);
  }
  const int64_t B = first.dim(0), S = first.dim(2) * first.dim(3) * first.dim(4);
  Tensor<T> value({B, C, first.dim(2), first.dim(3), first.dim(4)});
  for (int64_t b = 0; b < B; ++b) {
    int64_t off = 0;
    for (const auto& x : xs) {
      const int64_t ci = x->value.dim(1);
      std::memcpy(value.data() + (b * C + off) * S, x->value.data() + b * ci * S,
                  static_cast<size_t>(ci * S) * sizeof(T));
      off += ci;
    }
  }
  return make_op<T>(std::move(value), xs, [xs, B, C, S](Node<T>& self) {
    int64_t off = 0;
    for (const auto& x : xs) {
      const int64_t ci = x->value.dim(1);
      if (x->requires_grad) {
        Tensor<T> gx(x->value.shape());
        for (int64_t b = 0; b < B; ++b)
          std::memcpy(gx.data() + b * ci * S, self.grad.data() + (b * C + off) * S,
                      static_cast<size_t>(ci * S) * sizeof(T));
        accumulate_grad(*x, gx);
      }
      off += ci;
    }
  }, "concat_channels");
}

template <typename T>
NodePtr<T> linear(NodePtr<T> x, NodePtr<T> w, NodePtr<T> bias) {
  Tensor<T> value = kern::linear_fwd(x->value, w->value, bias->value);
  return make_op<T>(std::move(value), {x, w, bias}, [x, w, bias](Node<T>& self) {
    const int64_t B = x->value.dim(0), F = x->value.dim(1), K = w->value.dim(0);
    if (x->requires_grad) {
      Tensor<T> gx({B, F});
      for (int64_t b = 0; b < B; ++b)
        for (int64_t k = 0; k < K; ++k) {
          const T g = self.grad[b * K + k];
          if (g == T(0)) continue;
          const T* wr = w->value.data() + k * F;
          T* dst = gx.data() + b * F;
          for (int64_t f = 0; f < F; ++f) dst[f] += g * wr[f];
        }
      accumulate_grad(*x, gx);
    }
    if (w->requires_grad) {
      Tensor<T> gw({K, F});
      for (int64_t b = 0; b < B; ++b)
        for (int64_t k = 0; k < K; ++k) {
          const T g = self.grad[b * K + k];
          if (g == T(0)) continue;
          const T* xr = x->value.data() + b * F;
          T* dst = gw.data() + k * F;
          for (int64_t f = 0; f < F; ++f) dst[f] += g * xr[f];
        }
      accumulate_grad(*w, gw);
    }
    if (bias->requires_grad) {
      Tensor<T> gb({K});
      for (int64_t b = 0; b < B; ++b)
        for (int64_t k = 0; k < K; ++k) gb[k] += self.grad[b * K + k];
      accumulate_grad(*bias, gb);
    }
  }, "linear");
}

template <typename T>
NodePtr<T> matmul(NodePtr<T> a, NodePtr<T> b) {
  Tensor<T> value = kern::matmul2d(a->value, b->value);
  return make_op<T>(std::move(value), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) accumulate_grad(*a, kern::matmul2d(self.grad, kern::transpose2d(b->value)));
    if (b->requires_grad) accumulate_grad(*b, kern::matmul2d(kern::transpose2d(a->value), self.grad));
  }, "matmul");
}

template <typename T>
NodePtr<T> transpose(NodePtr<T> a) {
  Tensor<T> value = kern::transpose2d(a->value);
  return make_op<T>(std::move(value), {a}, [a](Node<T>& self) {
    accumulate_grad(*a, kern::transpose2d(self.grad));
  }, "transpose");
}

template <typename T>
NodePtr<T> softmax_rows(NodePtr<T> x) {
  Tensor<T> value = kern::softmax_rows_fwd(x->value);
  auto soft = std::make_shared<Tensor<T>>(value);
  return make_op<T>(std::move(value), {x}, [x, soft](Node<T>& self) {
    const int64_t R = soft->dim(0), C = soft->dim(1);
    Tensor<T> gx({R, C});
    for (int64_t r = 0; r < R; ++r) {
      const T* s = soft->data() + r * C;
      const T* g = self.grad.data() + r * C;
      T dot = T(0);
      for (int64_t c = 0; c < C; ++c) dot += s[c] * g[c];
      T* dst = gx.data() + r * C;
      for (int64_t c = 0; c < C; ++c) dst[c] = s[c] * (g[c] - dot);
    }
    accumulate_grad(*x, gx);
  }, "softmax_rows");
}

// out[n,c,...] = w[n,c,...] * u[n,c]; u is a rank-2 (N,C) gate over a rank-5 weight
template <typename T>
NodePtr<T> scale_nc(NodePtr<T> w, NodePtr<T> u) {
  const auto& wv = w->value;
  if (wv.rank() != 5) throw ShapeError("scale_nc: weight must be rank-5, got " + wv.shape_string());
  if (u->value.rank() != 2 || u->value.dim(0) != wv.dim(0) || u->value.dim(1) != wv.dim(1))
    throw ShapeError("scale_nc: gate " + u->value.shape_string() + " vs weight " + wv.shape_string());
  const int64_t N = wv.dim(0), C = wv.dim(1), K = wv.numel() / (N * C);
  Tensor<T> value(wv.shape());
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T s = u->value[nc];
    const T* src = wv.data() + nc * K;
    T* dst = value.data() + nc * K;
    for (int64_t i = 0; i < K; ++i) dst[i] = src[i] * s;
  }
  return make_op<T>(std::move(value), {w, u}, [w, u, N, C, K](Node<T>& self) {
    if (w->requires_grad) {
      Tensor<T> gw(w->value.shape());
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const T s = u->value[nc];
        const T* g = self.grad.data() + nc * K;
        T* dst = gw.data() + nc * K;
        for (int64_t i = 0; i < K; ++i) dst[i] = g[i] * s;
      }
      accumulate_grad(*w, gw);
    }
    if (u->requires_grad) {
      Tensor<T> gu({N, C});
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const T* g = self.grad.data() + nc * K;
        const T* src = w->value.data() + nc * K;
        T acc = T(0);
        for (int64_t i = 0; i < K; ++i) acc += g[i] * src[i];
        gu[nc] = acc;
      }
      accumulate_grad(*u, gu);
    }
  }, "scale_nc");
}

// mean over the batch of -log p[label]; logits [B,K]
template <typename T>
NodePtr<T> cross_entropy_mean(NodePtr<T> logits, const std::vector<int64_t>& labels) {
  const auto& lv = logits->value;
  if (lv.rank() != 2) throw ShapeError("cross_entropy: logits must be rank-2, got " + lv.shape_string());
  const int64_t B = lv.dim(0), K = lv.dim(1);
  if (static_cast<int64_t>(labels.size()) != B)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " + std::to_string(B));
  for (int64_t l : labels)
    if (l < 0 || l >= K) throw ValueError("cross_entropy: label " + std::to_string(l) + " outside [0," + std::to_string(K) + ")");

  auto probs = std::make_shared<Tensor<T>>(kern::softmax_rows_fwd(lv));
  Tensor<T> value({1});
  T loss = T(0);
  for (int64_t b = 0; b < B; ++b) loss -= std::log((*probs)[b * K + labels[static_cast<size_t>(b)]]);
  value[0] = loss / static_cast<T>(B);
  return make_op<T>(std::move(value), {logits}, [logits, probs, labels, B, K](Node<T>& self) {
    const T g = self.grad[0] / static_cast<T>(B);
    Tensor<T> gx({B, K});
    for (int64_t b = 0; b < B; ++b) {
      const T* p = probs->data() + b * K;
      T* dst = gx.data() + b * K;
      for (int64_t k = 0; k < K; ++k) dst[k] = g * p[k];
      dst[labels[static_cast<size_t>(b)]] -= g;
    }
    accumulate_grad(*logits, gx);
  }, "cross_entropy");
}

// sum over columns j of max(0, tau - column_mass_j)^2; soft is a rank-2 row-stochastic matrix
template <typename T>
NodePtr<T> column_mass_hinge(NodePtr<T> soft, T tau) {
  const auto& sv = soft->value;
  if (sv.rank() != 2) throw ShapeError("column_mass_hinge: input must be rank-2, got " + sv.shape_string());
  const int64_t R = sv.dim(0), C = sv.dim(1);
  auto deficit = std::make_shared<std::vector<T>>(static_cast<size_t>(C), T(0));
  Tensor<T> value({1});
  T total = T(0);
  for (int64_t c = 0; c < C; ++c) {
    T mass = T(0);
    for (int64_t r = 0; r < R; ++r) mass += sv[r * C + c];
    const T d = tau - mass;
    if (d > T(0)) {
      (*deficit)[static_cast<size_t>(c)] = d;
      total += d * d;
    }
  }
  value[0] = total;
  return make_op<T>(std::move(value), {soft}, [soft, deficit, R, C](Node<T>& self) {
    const T g = self.grad[0];
    Tensor<T> gx({R, C});
    for (int64_t c = 0; c < C; ++c) {
      const T d = (*deficit)[static_cast<size_t>(c)];
      if (d == T(0)) continue;
      const T v = T(-2) * d * g;
      for (int64_t r = 0; r < R; ++r) gx[r * C + c] = v;
    }
    accumulate_grad(*soft, gx);
  }, "column_mass_hinge");
}

template <typename T>
NodePtr<T> add(NodePtr<T> a, NodePtr<T> b) {
  check_same_shape(a->value, b->value, "add");
  Tensor<T> value(a->value.shape());
  const int64_t n = value.numel();
  for (int64_t i = 0; i < n; ++i) value[i] = a->value[i] + b->value[i];
  return make_op<T>(std::move(value), {a, b}, [a, b](Node<T>& self) {
    if (a->requires_grad) accumulate_grad(*a, self.grad);
    if (b->requires_grad) accumulate_grad(*b, self.grad);
  }, "add");
}

template <typename T>
NodePtr<T> scale(NodePtr<T> x, T factor) {
  Tensor<T> value(x->value.shape());
  const int64_t n = value.numel();
  for (int64_t i = 0; i < n; ++i) value[i] = x->value[i] * factor;
  return make_op<T>(std::move(value), {x}, [x, factor](Node<T>& self) {
    Tensor<T> gx(x->value.shape());
    const int64_t m = gx.numel();
    for (int64_t i = 0; i < m; ++i) gx[i] = self.grad[i] * factor;
    accumulate_grad(*x, gx);
  }, "scale");
}

template <typename T>
NodePtr<T> sum_all(NodePtr<T> x) {
  Tensor<T> value({1});
  T acc = T(0);
  const int64_t n = x->value.numel();
  for (int64_t i = 0; i < n; ++i) acc += x->value[i];
  value[0] = acc;
  return make_op<T>(std::move(value), {x}, [x](Node<T>& self) {
    Tensor<T> gx(x->value.shape());
    gx.fill(self.grad[0]);
    accumulate_grad(*x, gx);
  }, "sum_all");
}

}  // namespace lgc3d::ad
