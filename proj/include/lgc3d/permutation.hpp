#pragma once

#include <numeric>
#include <vector>

#include "lgc3d/errors.hpp"
#include "lgc3d/instr.hpp"

namespace lgc3d {

// A bijection on 0..n-1 with its precomputed inverse. Gather convention
// throughout: out[i] = in[perm[i]]. Construction is counted so tests can
// assert that compiled inference builds none at runtime.
struct PermutationIndex {
  std::vector<int64_t> perm;
  std::vector<int64_t> inverse;

  PermutationIndex() = default;

  explicit PermutationIndex(std::vector<int64_t> p) : perm(std::move(p)) {
    const int64_t n = static_cast<int64_t>(perm.size());
    inverse.assign(perm.size(), -1);
    for (int64_t i = 0; i < n; ++i) {
      const int64_t v = perm[static_cast<size_t>(i)];
      if (v < 0 || v >= n) throw ValueError("permutation entry " + std::to_string(v) + " outside [0," + std::to_string(n) + ")");
      if (inverse[static_cast<size_t>(v)] != -1) throw ValueError("permutation repeats entry " + std::to_string(v));
      inverse[static_cast<size_t>(v)] = i;
    }
    instr::perm_builds().fetch_add(1, std::memory_order_relaxed);
  }

  static PermutationIndex identity(int64_t n) {
    std::vector<int64_t> p(static_cast<size_t>(n));
    std::iota(p.begin(), p.end(), int64_t{0});
    return PermutationIndex(std::move(p));
  }

  int64_t size() const { return static_cast<int64_t>(perm.size()); }

  bool is_identity() const {
    for (int64_t i = 0; i < size(); ++i)
      if (perm[static_cast<size_t>(i)] != i) return false;
    return true;
  }
};

// Stable sort by group id: items of group 0 first (original order kept), then
// group 1, and so on. assignment [1,0,1,0] -> perm [1,3,0,2].
inline PermutationIndex sort_by_group(const std::vector<int64_t>& assignment) {
  int64_t groups = 0;
  for (int64_t g : assignment) {
    if (g < 0) throw ValueError("sort_by_group: negative group id");
    groups = std::max(groups, g + 1);
  }
  std::vector<int64_t> p;
  p.reserve(assignment.size());
  for (int64_t g = 0; g < groups; ++g)
    for (size_t i = 0; i < assignment.size(); ++i)
      if (assignment[i] == g) p.push_back(static_cast<int64_t>(i));
  return PermutationIndex(std::move(p));
}

// Collapses "undo the previous layer's packing, then apply this layer's input
// sort" into one lookup: reading the previous physical output through the
// merged index yields this layer's group-sorted channel order.
// merged[t] = prev.inverse[input_sort.perm[t]]
inline PermutationIndex merge_indices(const PermutationIndex& prev_output_order, const PermutationIndex& this_input_sort) {
  if (prev_output_order.size() != this_input_sort.size())
    throw ValueError("merge_indices: length mismatch, " + std::to_string(prev_output_order.size()) + " vs " +
                     std::to_string(this_input_sort.size()));
  const int64_t n = prev_output_order.size();
  std::vector<int64_t> m(static_cast<size_t>(n));
  for (int64_t t = 0; t < n; ++t)
    m[static_cast<size_t>(t)] =
        prev_output_order.inverse[static_cast<size_t>(this_input_sort.perm[static_cast<size_t>(t)])];
  return PermutationIndex(std::move(m));
}

}  // namespace lgc3d
