#pragma once

// Random layout generators shared by the property tests and the acceptance
// run. Seeded, so every run sees the same cases.

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

#include "laysyn/layout.hpp"

namespace randlayout {

using laysyn::IntTuple;
using laysyn::Layout;
using laysyn::Leaf;

inline std::mt19937_64& rng() {
  static std::mt19937_64 r(0x5eed1234);
  return r;
}

inline int64_t pick(std::initializer_list<int64_t> xs) {
  std::uniform_int_distribution<std::size_t> d(0, xs.size() - 1);
  return *(xs.begin() + static_cast<std::ptrdiff_t>(d(rng())));
}

inline int64_t uniform(int64_t lo, int64_t hi) { return std::uniform_int_distribution<int64_t>(lo, hi)(rng()); }

// Groups a flat leaf list into random top-level modes.
inline Layout group_randomly(const std::vector<Leaf>& lv) {
  std::vector<Layout> modes;
  std::size_t i = 0;
  while (i < lv.size()) {
    const std::size_t n = static_cast<std::size_t>(uniform(1, static_cast<int64_t>(lv.size() - i)));
    std::vector<Leaf> part(lv.begin() + static_cast<std::ptrdiff_t>(i), lv.begin() + static_cast<std::ptrdiff_t>(i + n));
    if (part.size() == 1)
      modes.emplace_back(IntTuple(part[0].size), IntTuple(part[0].stride));
    else
      modes.push_back(Layout::from_leaves(part));
    i += n;
  }
  if (modes.size() == 1) return modes[0];
  return make_tuple_layout(modes);
}

// A random compact layout with permuted strides: a bijection onto [0, size).
inline Layout random_bijection(bool pow2) {
  const int64_t n = uniform(1, 4);
  std::vector<int64_t> sizes;
  for (int64_t i = 0; i < n; ++i) sizes.push_back(pow2 ? pick({1, 2, 4, 8}) : pick({1, 2, 3, 4, 5, 6}));
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng());
  std::vector<int64_t> strides(sizes.size());
  int64_t run = 1;
  for (auto k : order) {
    strides[k] = run;
    run *= sizes[k];
  }
  std::vector<Leaf> lv;
  for (std::size_t i = 0; i < sizes.size(); ++i) lv.push_back({sizes[i], strides[i]});
  return group_randomly(lv);
}

// Power-of-two leaves over disjoint bit fields of the index, with optional
// gaps and broadcast leaves. Such a B always composes with a power-of-two A.
inline Layout random_pow2_disjoint() {
  const int64_t n = uniform(1, 4);
  std::vector<Leaf> lv;
  std::vector<std::size_t> order;
  for (int64_t i = 0; i < n; ++i) {
    lv.push_back({pick({1, 2, 4, 8}), 0});
    order.push_back(static_cast<std::size_t>(i));
  }
  std::shuffle(order.begin(), order.end(), rng());
  int64_t run = 1;
  for (auto k : order) {
    if (uniform(0, 4) == 0) continue;  // broadcast
    if (uniform(0, 3) == 0) run *= 2;  // gap
    lv[k].stride = run;
    run *= lv[k].size;
  }
  return group_randomly(lv);
}

inline Layout random_layout(int64_t max_stride) {
  const int64_t n = uniform(1, 3);
  std::vector<Leaf> lv;
  for (int64_t i = 0; i < n; ++i) lv.push_back({pick({1, 2, 3, 4, 8}), uniform(0, max_stride)});
  return group_randomly(lv);
}

inline Layout random_pow2_layout(int64_t max_log_stride) {
  const int64_t n = uniform(1, 3);
  std::vector<Leaf> lv;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t s = pick({1, 2, 4, 8});
    const int64_t d = uniform(0, 5) == 0 ? 0 : int64_t{1} << uniform(0, max_log_stride);
    lv.push_back({s, d});
  }
  return group_randomly(lv);
}

}  // namespace randlayout
