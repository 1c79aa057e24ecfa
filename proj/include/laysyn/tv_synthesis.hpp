#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "laysyn/catalog.hpp"
#include "laysyn/program.hpp"
#include "laysyn/smem.hpp"
#include "laysyn/tv_layout.hpp"

namespace laysyn {

enum class ConstraintKind { CopyEq, GemmM, GemmN, GemmK, ElemEq, ReduceProj };

std::string_view constraint_kind_name(ConstraintKind k);

struct TvConstraint {
  ConstraintKind kind = ConstraintKind::CopyEq;
  int op = -1;
  std::vector<int> tensors;
  int dim = -1;                            // ReduceProj only
  std::optional<std::string> instruction;  // filled once chosen
  bool solved = false;
};

/// One CopyEq per copy, three Gemm* per gemm, one ElemEq per cast or
/// elementwise op and one ReduceProj per reduce.
std::vector<TvConstraint> build_constraints(const ProgramGraph& g, const Component& c);

struct GemmTiling {
  Instruction mma;
  int64_t warps_m = 1, warps_n = 1;
  int64_t reps_m = 1, reps_n = 1, reps_k = 1;
  TvLayout c, a, b;
};

/// Tiles C with the fastest matching mma, warps along M first, and derives
/// the A and B layouts that feed the same instruction invocations.
///
/// Invocation (rm, rn, rk) of warp w uses C value block rn + RN*rm, A value
/// block rk + RK*rm and B value block rk + RK*rn.
GemmTiling init_gemm_anchor(const ProgramGraph& g, int op, const Catalog& cat);

struct CopyAnchor {
  int tensor = -1;  // the memory tensor the layout was built for
  bool src = true;  // which copy operand that is
  int64_t vector = 1;
  TvLayout tv;
};

/// Coalesced layout for the memory side of a copy: consecutive threads take
/// consecutive vectors in address order.
CopyAnchor init_copy_anchor(const ProgramGraph& g, int op);

enum class CopySide { Src, Dst };

/// Derives the other side of a copy executed with `ins` from the known side.
/// Throws LayoutIncompatible when the instruction cannot tile the layout.
TvLayout solve_copy(const TvLayout& known, const Instruction& ins, CopySide known_side);

/// Collapses dimension `dim` of every position; value leaves that only
/// walked the reduced dimension are dropped.
TvLayout reduce_projection(const TvLayout& f, int dim);

/// True when every vector of `vector` values lands on consecutive, aligned
/// addresses of `memory`.
bool vectors_contiguous(const TvLayout& f, const Layout& memory, int64_t vector);

struct CopyChoice {
  std::optional<TvLayout> src, dst;
  std::optional<Instruction> instruction;
};

/// A tensor that received two unequal layouts. The consumer's layout wins:
/// an operand edge is fixed by rearranging the operand before `op`, a result
/// edge by rearranging the result after it.
struct Conflict {
  int op = -1;
  int tensor = -1;
  bool on_result = false;
  TvLayout existing, proposed;
};

struct Assignment {
  std::map<int, TvLayout> tensors;  // register tensors
  std::map<int, CopyChoice> copies;
  std::map<int, GemmTiling> gemms;
  std::map<int, CopyAnchor> anchors;  // copy anchors by op
  std::vector<Conflict> conflicts;
};

struct SearchLimits {
  std::size_t max_candidates = 64;
};

struct Candidate {
  int index = 0;  // DFS order
  std::shared_ptr<const ProgramGraph> graph;
  Assignment assignment;
  std::map<int, SmemLayout> smem;     // shared tensor id -> layout
  std::map<int, SmemLayout> staging;  // rearrange op -> staging buffer
  std::vector<int> rearranges;        // inserted rearrange op indices
  bool fallback = false;              // the all-narrowest choice
  std::optional<int64_t> cost;
};

/// Runs anchors and the ready queue, each copy taking its first workable
/// instruction. With `strict`, the first conflict throws ConflictDetected;
/// otherwise conflicts are collected in the result.
Assignment propagate(const ProgramGraph& g, const Catalog& cat, bool strict = true);

struct Patch {
  ProgramGraph graph;
  std::vector<int> inserted;  // op indices in the patched graph
};

Patch resolve_conflicts(const ProgramGraph& g, const Assignment& a);

/// Depth-first search over per-copy instruction choices. The all-narrowest
/// candidate is always kept when it is valid.
std::vector<Candidate> expand_search(const ProgramGraph& g, const Catalog& cat, const SearchLimits& limits = {});

}  // namespace laysyn
