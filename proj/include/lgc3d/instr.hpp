#pragma once

#include <atomic>
#include <cstdint>

#include "lgc3d/kernels.hpp"

// runtime instrumentation: cheap global counters the tests and the bench
// subcommand assert against
namespace lgc3d::instr {

inline std::atomic<int64_t>& gather_ops() {
  static std::atomic<int64_t> v{0};
  return v;
}

inline std::atomic<int64_t>& perm_builds() {
  static std::atomic<int64_t> v{0};
  return v;
}

inline void reset() {
  gather_ops() = 0;
  perm_builds() = 0;
}

template <typename T>
Tensor<T> counted_gather(const Tensor<T>& x, const std::vector<int64_t>& perm) {
  gather_ops().fetch_add(1, std::memory_order_relaxed);
  return kern::gather_channels(x, perm);
}

}  // namespace lgc3d::instr
