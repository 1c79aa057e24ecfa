#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "laysyn/layout.hpp"
#include "laysyn/program.hpp"
#include "laysyn/swizzle.hpp"

namespace laysyn {

enum class InstrCategory { Copy, Mma };

/// A collective instruction described by thread-value layouts.
///
/// Copy layouts map (thread, value) to a linear index of the instruction
/// tile, in units of `elem_bits`-wide elements. Mma layouts map (thread,
/// value) to the colex index of the A (MxK), B (NxK) and C (MxN) tiles.
struct Instruction {
  std::string name;
  InstrCategory category = InstrCategory::Copy;
  Scope src_scope = Scope::Global;
  Scope dst_scope = Scope::Register;
  std::optional<Layout> tv_src, tv_dst;
  std::optional<Layout> tv_a, tv_b, tv_c;
  int64_t m = 0, n = 0, k = 0;
  int elem_bits = 8;
  int vector_bytes = 1;
  int threads = 1;
  int issue_cycles = 1;
  int completion_cycles = 1;
  std::string arch;
  std::optional<DType> a_dtype, b_dtype, c_dtype;
  bool tma = false;

  int64_t values() const;
  /// Elements of `bits` width moved contiguously by one thread per issue.
  int64_t vector_elems(int bits) const { return static_cast<int64_t>(vector_bytes) * 8 / bits; }
};

/// Bulk-copy feasibility limits.
struct TmaLimits {
  int max_dims = 5;
  int align_bytes = 16;
  int64_t box_cap = 256;
};

struct Catalog {
  std::string arch;
  BankModel banks;
  int alu_issue_cycles = 1;
  int alu_completion_cycles = 4;
  TmaLimits tma;
  std::vector<Instruction> instructions;

  const Instruction* find(std::string_view name) const;
};

Catalog parse_catalog(std::string_view text);
Catalog load_catalog(const std::string& path);

/// Re-expresses a copy instruction over elements of `bits` width; nullopt
/// when the instruction cannot move such elements.
std::optional<Instruction> recast_copy(const Instruction& ins, int bits);

/// Copy instructions legal for src -> dst, recast to the tensors' dtype and
/// ordered widest vector first.
std::vector<Instruction> candidates_for_copy(const Catalog& cat, const TensorDecl& src, const TensorDecl& dst);

const Instruction& fastest_mma(const Catalog& cat, const DType& a, const DType& b, const DType& c);

}  // namespace laysyn
