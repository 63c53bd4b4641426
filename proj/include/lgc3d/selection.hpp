#pragma once

#include <vector>

#include "lgc3d/kernels.hpp"

namespace lgc3d {

// Row-wise group selection. Row r of `logits` scores the G groups for item r;
// the soft view is a row softmax, the hard view a one-hot row argmax with ties
// resolved toward the lowest group index.
template <typename T>
struct SelectionMatrix {
  Tensor<T> logits;  // [rows, G]

  SelectionMatrix() = default;
  explicit SelectionMatrix(Tensor<T> l) : logits(std::move(l)) {
    if (logits.rank() != 2) throw ShapeError("selection matrix must be rank-2, got " + logits.shape_string());
  }

  int64_t rows() const { return logits.dim(0); }
  int64_t group_count() const { return logits.dim(1); }

  Tensor<T> soft() const { return kern::softmax_rows_fwd(logits); }

  std::vector<int64_t> assignment() const {
    const int64_t R = rows(), G = group_count();
    std::vector<int64_t> out(static_cast<size_t>(R));
    for (int64_t r = 0; r < R; ++r) {
      int64_t best = 0;
      for (int64_t g = 1; g < G; ++g)
        if (logits[r * G + g] > logits[r * G + best]) best = g;
      out[static_cast<size_t>(r)] = best;
    }
    return out;
  }

  Tensor<T> hard() const {
    const int64_t R = rows(), G = group_count();
    Tensor<T> out({R, G});
    const std::vector<int64_t> a = assignment();
    for (int64_t r = 0; r < R; ++r) out[r * G + a[static_cast<size_t>(r)]] = T(1);
    return out;
  }
};

template <typename T>
SelectionMatrix<T> hard_assign(const SelectionMatrix<T>& m) {
  return SelectionMatrix<T>(m.hard());
}

// U[n,c] = sum_j t_view[n,j] * s_view[c,j]; views are soft or hard selection
// matrices over the same group count
template <typename T>
Tensor<T> connection_mask(const Tensor<T>& s_view, const Tensor<T>& t_view) {
  if (s_view.rank() != 2 || t_view.rank() != 2)
    throw ShapeError("connection_mask: selection views must be rank-2");
  if (s_view.dim(1) != t_view.dim(1))
    throw ShapeError("connection_mask: group counts differ, " + std::to_string(s_view.dim(1)) + " vs " +
                     std::to_string(t_view.dim(1)));
  const int64_t C = s_view.dim(0), N = t_view.dim(0), G = s_view.dim(1);
  Tensor<T> u({N, C});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (int64_t j = 0; j < G; ++j) acc += t_view[n * G + j] * s_view[c * G + j];
      u[n * C + c] = acc;
    }
  return u;
}

}  // namespace lgc3d
