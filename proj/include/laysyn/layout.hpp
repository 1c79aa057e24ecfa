#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "laysyn/int_tuple.hpp"

namespace laysyn {

/// One flattened (size : stride) pair of a layout.
struct Leaf {
  int64_t size;
  int64_t stride;
  bool operator==(const Leaf&) const = default;
};

/// Hierarchical (shape : stride) layout: an integer function on [0, size()).
///
/// Linear indices decompose colexicographically: the first (leftmost) leaf
/// varies fastest. Shape leaves are >= 1, strides are >= 0 and the two tuples
/// are congruent. Values are immutable after construction.
class Layout {
 public:
  Layout() : shape_(1), stride_(0), flat_{{1, 0}} {}
  Layout(IntTuple shape, IntTuple stride);

  /// Compact column-major layout over `shape`.
  static Layout colex(const IntTuple& shape);
  /// Flat layout from a leaf list; an empty list gives (1):(0).
  static Layout from_leaves(const std::vector<Leaf>& leaves);

  const IntTuple& shape() const { return shape_; }
  const IntTuple& stride() const { return stride_; }

  std::size_t rank() const { return shape_.rank(); }
  Layout mode(std::size_t i) const { return {shape_[i], stride_[i]}; }
  int64_t size() const { return size_; }
  int64_t cosize() const;
  std::vector<Leaf> leaves() const;

  int64_t operator()(int64_t index) const;
  /// Coordinate evaluation; an integer coordinate against a tuple mode is
  /// decomposed colexicographically within that mode.
  int64_t operator()(const IntTuple& coord) const;

  bool operator==(const Layout& o) const { return shape_ == o.shape_ && stride_ == o.stride_; }

 private:
  IntTuple shape_;
  IntTuple stride_;
  std::vector<Leaf> flat_;  // cached leaves()
  int64_t size_ = 1;
};

std::string to_string(const Layout& l);
/// Parses "((2,4),(2,2)):((8,1),(4,16))"; whitespace-insensitive.
Layout parse_layout(std::string_view text);

/// Canonical flat form: size-1 leaves dropped, mergeable neighbours merged.
Layout coalesce(const Layout& l);
/// Function composition a(b(x)); the result keeps b's top-level modes.
Layout compose(const Layout& a, const Layout& b);
/// Gap-filling layout so that (a, complement(a, m)) is a bijection onto [0, m).
Layout complement(const Layout& a, int64_t m);
/// Inverse of a bijection onto [0, size()).
Layout inverse(const Layout& a);
/// Mode juxtaposition: shape (a.shape, b.shape).
Layout concat(const Layout& a, const Layout& b);
/// Concatenation of any number of layouts as top-level modes.
Layout make_tuple_layout(const std::vector<Layout>& modes);
/// Shrinks the first top-level mode to its colex-fastest `n` elements.
Layout restrict_first_mode(const Layout& a, int64_t n);
/// Splits a mode's flattened leaves into a head of size n and the tail.
std::pair<std::vector<Leaf>, std::vector<Leaf>> split_leaves(const Layout& mode, int64_t n);
/// Flattens every top-level mode into a flat tuple of leaves.
Layout flatten_modes(const Layout& l);

/// Structural equality of coalesced forms.
bool equivalent(const Layout& a, const Layout& b);
/// Brute-force equality over the full domain (sizes must match).
bool pointwise_equal(const Layout& a, const Layout& b);
bool is_injective(const Layout& l);

/// Colex decomposition of `index` against per-dimension extents.
std::vector<int64_t> decode_colex(int64_t index, std::span<const int64_t> extents);
int64_t encode_colex(std::span<const int64_t> coord, std::span<const int64_t> extents);
/// Top-level mode sizes of a shape (one per tensor dimension).
std::vector<int64_t> mode_sizes(const IntTuple& shape);

/// A 1-D layout mapping one instruction-tile dimension to one tensor dimension.
using DimMap = Layout;

/// Restriction of a 2-D -> 2-D composite to a single input/output dimension:
/// the input coordinate of the other dimension is fixed to 0 and the output is
/// projected onto `out_dim`.
DimMap dim_restrict(const Layout& composite, int in_dim, int out_dim,
                    std::span<const int64_t> in_extents, std::span<const int64_t> out_extents);

}  // namespace laysyn
