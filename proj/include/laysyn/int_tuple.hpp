#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace laysyn {

/// A nonnegative integer or an ordered list of IntTuples, nested to any depth.
/// Used for shapes, strides and coordinates.
class IntTuple {
 public:
  IntTuple() : v_(int64_t{0}) {}
  IntTuple(int64_t leaf) : v_(leaf) {}  // NOLINT: leaves convert implicitly
  explicit IntTuple(std::vector<IntTuple> elems) : v_(std::move(elems)) {}
  IntTuple(std::initializer_list<IntTuple> elems) : v_(std::vector<IntTuple>(elems)) {}

  static IntTuple tuple(std::vector<IntTuple> elems) { return IntTuple(std::move(elems)); }

  bool is_leaf() const { return std::holds_alternative<int64_t>(v_); }
  int64_t value() const;
  const std::vector<IntTuple>& elems() const;
  std::vector<IntTuple>& elems();

  /// Number of top-level elements; 1 for a leaf.
  std::size_t rank() const { return is_leaf() ? 1 : elems().size(); }
  /// Top-level element i; a leaf is its own element 0.
  const IntTuple& operator[](std::size_t i) const;

  bool operator==(const IntTuple& other) const = default;

 private:
  std::variant<int64_t, std::vector<IntTuple>> v_;
};

/// Leaves in left-to-right (colexicographic significance) order.
std::vector<int64_t> flatten(const IntTuple& t);
/// Product of all leaves with overflow checking.
int64_t product(const IntTuple& t);
/// Identical nesting structure.
bool congruent(const IntTuple& a, const IntTuple& b);
/// Rebuilds `like`'s nesting from a flat leaf list (sizes must agree).
IntTuple unflatten(const IntTuple& like, const std::vector<int64_t>& leaves);
/// Column-major (first leaf fastest) compact strides for a shape.
IntTuple compact_colex(const IntTuple& shape);

std::string to_string(const IntTuple& t);
/// Parses "8" or "((2,4),(2,2))"; whitespace-insensitive.
IntTuple parse_int_tuple(std::string_view text);

/// Checked 64-bit arithmetic; throws Errc::Overflow.
int64_t checked_mul(int64_t a, int64_t b);
int64_t checked_add(int64_t a, int64_t b);

}  // namespace laysyn
