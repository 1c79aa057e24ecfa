#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "laysyn/catalog.hpp"
#include "laysyn/layout.hpp"
#include "laysyn/swizzle.hpp"
#include "laysyn/tv_layout.hpp"

namespace laysyn {

/// An undetermined stride; the bound value must be a multiple of `divisor`.
struct StrideVar {
  int id = 0;
  int64_t divisor = 1;
  bool operator==(const StrideVar&) const = default;
};

using CStride = std::variant<int64_t, StrideVar>;

struct CLeaf {
  int64_t size = 1;
  CStride stride = int64_t{0};
  bool concrete() const { return std::holds_alternative<int64_t>(stride); }
  bool operator==(const CLeaf&) const = default;
};

/// A shared-memory layout with some strides left open. Leaves are grouped by
/// tensor dimension and decompose each coordinate colexicographically.
struct LayoutConstraint {
  std::vector<int64_t> extents;
  std::vector<std::vector<CLeaf>> dims;

  /// One variable per dimension.
  static LayoutConstraint open(const std::vector<int64_t>& extents, int64_t divisor = 1);
  int64_t size() const;
  /// Renumbers variables in order of appearance and merges contiguous
  /// concrete neighbours.
  LayoutConstraint canonical() const;
  bool operator==(const LayoutConstraint&) const = default;
};

std::string to_string(const LayoutConstraint& c);

/// Requires each thread's first `vector_elems` values of `f` to sit at
/// consecutive addresses; every other stride stays open and aligned.
LayoutConstraint build_constraint(const TvLayout& f, int64_t vector_elems);

/// The common refinement of two constraints; throws StrideConflict when their
/// concrete modes disagree or would alias.
LayoutConstraint unify(const LayoutConstraint& a, const LayoutConstraint& b);

/// Binds every variable so the result is a bijection onto [0, size).
Layout materialize(const LayoutConstraint& c);

struct TmaCheck {
  bool feasible = false;
  int box_dims = 0;
  std::vector<int64_t> box;  // box extents, innermost first
  std::string reason;
};

TmaCheck check_tma(const LayoutConstraint& c, int elem_bits, const TmaLimits& limits);

/// One copy touching a shared buffer.
struct SmemAccess {
  int op = -1;
  TvLayout tv;  // shared-side layout
  Instruction instruction;
  bool write = false;
};

struct AccessConflicts {
  int op = -1;
  int width = 0;
  int64_t phases = 0;
  int max_way = 0;
  int max_way_identity = 0;
};

struct SmemLayout {
  LayoutConstraint constraint;
  Layout m;
  Swizzle swizzle;
  int64_t conflicts = 0;           // summed over access phases
  int64_t identity_conflicts = 0;
  bool tma = false;
  std::vector<AccessConflicts> accesses;
};

/// Unification of the constraints of every non-bulk access.
LayoutConstraint fold_constraints(const std::vector<int64_t>& extents, int elem_bits,
                                  std::span<const SmemAccess> accesses);

/// Every thread's per-instruction elements are contiguous and vector-aligned
/// under m (enumeration).
bool access_aligned(const SmemAccess& a, const Layout& m, int elem_bits);

SmemLayout synthesize_buffer(const TensorDecl& buffer, std::span<const SmemAccess> accesses, const Catalog& cat);

/// Warp-wide byte-address patterns of one access under layout m.
std::vector<AccessPattern> access_patterns(const SmemAccess& a, const Layout& m, int elem_bits);

}  // namespace laysyn
