#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "laysyn/int_tuple.hpp"
#include "laysyn/layout.hpp"

namespace laysyn {

enum class Scope { Global, Shared, Register };

std::string_view scope_name(Scope s);

struct DType {
  enum class Kind { Float, Int, UInt };
  Kind kind = Kind::Float;
  int bits = 32;
  std::string format;  // "e4m3", "e5m2", "bf" or empty

  bool operator==(const DType&) const = default;
};

std::string to_string(const DType& t);
/// float16, bfloat16, float32, float64, float8_e4m3, float8_e5m2,
/// int{1,2,4,8,16,32,64}, uint{1,2,4,8,16,32,64}.
DType parse_dtype(std::string_view name);

struct TensorDecl {
  int id = -1;
  std::string name;
  Scope scope = Scope::Register;
  DType dtype;
  IntTuple shape;
  std::optional<Layout> layout;  // user layout; Global only
  std::string buffer;            // global buffer name

  int64_t elements() const { return product(shape); }
  std::vector<int64_t> extents() const { return mode_sizes(shape); }
};

enum class OpKind { GlobalView, RegisterTensor, SharedTensor, Copy, Gemm, Cast, Rearrange, Elementwise, Reduce };

std::string_view op_kind_name(OpKind k);
bool is_declaration(OpKind k);

struct OpNode {
  OpKind kind = OpKind::Copy;
  int result = -1;            // tensor defined by an assignment, if any
  std::vector<int> operands;  // textual operand order
  std::optional<DType> cast_to;
  int reduce_dim = -1;
  std::string fn;                           // elementwise function symbol
  std::optional<Layout> target;             // rearrange target TV layout
  std::optional<Layout> thread_arrangement; // gemm warp arrangement hint
  int64_t trip = 1;                         // product of enclosing loop trip counts
  int line = 0;

  std::vector<int> reads() const;
  std::vector<int> writes() const;
};

struct LoopRegion {
  std::size_t begin = 0;  // first op index
  std::size_t end = 0;    // one past the last op index
  int64_t trip = 1;
};

class ProgramGraph {
 public:
  int threads = 128;
  std::vector<TensorDecl> tensors;
  std::vector<OpNode> ops;
  std::vector<LoopRegion> loops;

  const TensorDecl& tensor(int id) const { return tensors.at(static_cast<std::size_t>(id)); }
  int find_tensor(std::string_view name) const;
  /// Index of the op that defines tensor `id`, or -1.
  int def_op(int id) const;
  int add_tensor(TensorDecl decl);
};

/// A problem found by `validate`; never thrown.
struct Diagnostic {
  std::string kind;
  int op_index = -1;
  std::string message;
};

ProgramGraph parse_program(std::string_view text);
std::string print_program(const ProgramGraph& g);
std::vector<Diagnostic> validate(const ProgramGraph& g);
/// Removes ops whose effects never reach a Global write.
ProgramGraph eliminate_dead_code(const ProgramGraph& g);

/// A maximal set of ops connected through register tensors.
struct Component {
  std::vector<int> ops;  // indices into ProgramGraph::ops, ascending
};

std::vector<Component> partition_components(const ProgramGraph& g);

}  // namespace laysyn
