#include "laysyn/layout.hpp"

#include <algorithm>
#include <numeric>

#include "laysyn/error.hpp"

namespace laysyn {

namespace {

void validate(const IntTuple& shape, const IntTuple& stride) {
  if (!congruent(shape, stride))
    fail(Errc::ShapeMismatch, "shape " + to_string(shape) + " and stride " + to_string(stride) + " are not congruent");
  for (int64_t s : flatten(shape))
    if (s < 1) fail(Errc::ShapeMismatch, "shape leaves must be >= 1 in " + to_string(shape));
  for (int64_t d : flatten(stride))
    if (d < 0) fail(Errc::ShapeMismatch, "negative stride in " + to_string(stride));
  (void)product(shape);
}

int64_t eval_linear(const std::vector<Leaf>& leaves, int64_t index) {
  int64_t out = 0;
  for (const auto& lf : leaves) {
    out = checked_add(out, checked_mul(index % lf.size, lf.stride));
    index /= lf.size;
  }
  return out;
}

int64_t eval_coord(const IntTuple& shape, const IntTuple& stride, const IntTuple& coord) {
  if (coord.is_leaf()) {
    int64_t c = coord.value();
    if (c < 0) fail(Errc::OutOfDomain, "negative coordinate");
    if (shape.is_leaf()) {
      if (c >= shape.value())
        fail(Errc::OutOfDomain, "coordinate " + std::to_string(c) + " out of range for extent " + std::to_string(shape.value()));
      return checked_mul(c, stride.value());
    }
    Layout sub(shape, stride);
    if (c >= sub.size())
      fail(Errc::OutOfDomain, "coordinate " + std::to_string(c) + " out of range for mode " + to_string(shape));
    return eval_linear(sub.leaves(), c);
  }
  if (shape.is_leaf() || shape.elems().size() != coord.elems().size())
    fail(Errc::ShapeMismatch, "coordinate " + to_string(coord) + " is not congruent to " + to_string(shape));
  int64_t out = 0;
  for (std::size_t i = 0; i < coord.elems().size(); ++i)
    out = checked_add(out, eval_coord(shape.elems()[i], stride.elems()[i], coord.elems()[i]));
  return out;
}

// Composition of `a` (flattened) with the single leaf s:d. `used` tracks the
// largest digit each leaf of `a` can receive; B's leaves add up, so a digit
// that can overflow its extent would carry and break linearity.
std::vector<Leaf> compose_leaf(const std::vector<Leaf>& a, int64_t s, int64_t d, std::vector<int64_t>& used) {
  if (s == 1) return {{1, 0}};
  if (d == 0) return {{s, 0}};
  auto claim = [&](std::size_t i, int64_t max_digit) {
    used[i] = checked_add(used[i], max_digit);
    if (used[i] >= a[i].size)
      fail(Errc::LayoutIncompatible, "modes of the right operand overlap in a digit of extent " +
                                         std::to_string(a[i].size));
  };
  std::vector<Leaf> out;
  std::size_t i = 0;
  while (s > 1) {
    if (i >= a.size()) fail(Errc::OutOfDomain, "composition escapes the left operand's domain");
    const int64_t ai = a[i].size;
    const int64_t ei = a[i].stride;
    if (checked_mul(s - 1, d) < ai) {
      claim(i, (s - 1) * d);
      out.push_back({s, checked_mul(ei, d)});
      s = 1;
    } else if (d % ai == 0) {
      d /= ai;
      ++i;
    } else if (ai % d == 0) {
      const int64_t take = ai / d;
      if (s % take != 0)
        fail(Errc::LayoutIncompatible, "mode of size " + std::to_string(s) + " cannot span leaf " +
                                           std::to_string(ai) + " at stride " + std::to_string(d));
      claim(i, ai - d);
      out.push_back({take, checked_mul(ei, d)});
      s /= take;
      d = 1;
      ++i;
    } else {
      fail(Errc::LayoutIncompatible,
           "stride " + std::to_string(d) + " does not divide or get divided by extent " + std::to_string(ai));
    }
  }
  return out;
}

IntTuple leaves_to_shape(const std::vector<Leaf>& lv) {
  if (lv.size() == 1) return IntTuple(lv[0].size);
  std::vector<IntTuple> v;
  for (const auto& l : lv) v.emplace_back(l.size);
  return IntTuple(std::move(v));
}

IntTuple leaves_to_stride(const std::vector<Leaf>& lv) {
  if (lv.size() == 1) return IntTuple(lv[0].stride);
  std::vector<IntTuple> v;
  for (const auto& l : lv) v.emplace_back(l.stride);
  return IntTuple(std::move(v));
}

std::vector<Leaf> drop_unit(std::vector<Leaf> lv) {
  std::erase_if(lv, [](const Leaf& l) { return l.size == 1; });
  if (lv.empty()) lv.push_back({1, 0});
  return lv;
}

}  // namespace

Layout::Layout(IntTuple shape, IntTuple stride) : shape_(std::move(shape)), stride_(std::move(stride)) {
  validate(shape_, stride_);
  const auto sz = flatten(shape_);
  const auto st = flatten(stride_);
  flat_.resize(sz.size());
  for (std::size_t i = 0; i < sz.size(); ++i) {
    flat_[i] = {sz[i], st[i]};
    size_ = checked_mul(size_, sz[i]);
  }
}

Layout Layout::colex(const IntTuple& shape) { return {shape, compact_colex(shape)}; }

Layout Layout::from_leaves(const std::vector<Leaf>& leaves) {
  if (leaves.empty()) return {IntTuple{IntTuple(1)}, IntTuple{IntTuple(0)}};
  std::vector<IntTuple> sh, st;
  for (const auto& l : leaves) {
    sh.emplace_back(l.size);
    st.emplace_back(l.stride);
  }
  return {IntTuple(std::move(sh)), IntTuple(std::move(st))};
}

int64_t Layout::cosize() const {
  int64_t hi = 0;
  for (const auto& l : leaves()) hi = checked_add(hi, checked_mul(l.size - 1, l.stride));
  return hi + 1;
}

std::vector<Leaf> Layout::leaves() const { return flat_; }

int64_t Layout::operator()(int64_t index) const {
  if (index < 0 || index >= size())
    fail(Errc::OutOfDomain, "index " + std::to_string(index) + " outside [0," + std::to_string(size()) + ")");
  return eval_linear(flat_, index);
}

int64_t Layout::operator()(const IntTuple& coord) const { return eval_coord(shape_, stride_, coord); }

std::string to_string(const Layout& l) { return to_string(l.shape()) + ":" + to_string(l.stride()); }

Layout parse_layout(std::string_view text) {
  int depth = 0;
  std::size_t colon = std::string_view::npos;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '(') ++depth;
    if (text[i] == ')') --depth;
    if (text[i] == ':' && depth == 0) {
      if (colon != std::string_view::npos) fail(Errc::ParseError, "multiple ':' in layout '" + std::string(text) + "'");
      colon = i;
    }
  }
  if (colon == std::string_view::npos) fail(Errc::ParseError, "missing ':' in layout '" + std::string(text) + "'");
  return {parse_int_tuple(text.substr(0, colon)), parse_int_tuple(text.substr(colon + 1))};
}

Layout coalesce(const Layout& l) {
  std::vector<Leaf> out;
  for (const auto& lf : l.leaves()) {
    if (lf.size == 1) continue;
    if (!out.empty() && lf.stride == checked_mul(out.back().size, out.back().stride)) {
      out.back().size = checked_mul(out.back().size, lf.size);
      continue;
    }
    out.push_back(lf);
  }
  if (out.empty()) out.push_back({1, 0});
  return Layout::from_leaves(out);
}

Layout compose(const Layout& a, const Layout& b) {
  if (b.cosize() > a.size())
    fail(Errc::OutOfDomain, "image of " + to_string(b) + " escapes the domain of " + to_string(a));
  const auto al = coalesce(a).leaves();
  std::vector<int64_t> used(al.size(), 0);
  if (b.shape().is_leaf()) {
    auto lv = compose_leaf(al, b.shape().value(), b.stride().value(), used);
    if (lv.size() == 1) return {IntTuple(lv[0].size), IntTuple(lv[0].stride)};
    return Layout::from_leaves(lv);
  }
  std::vector<IntTuple> sh, st;
  for (std::size_t m = 0; m < b.rank(); ++m) {
    std::vector<Leaf> mode_out;
    for (const auto& lf : b.mode(m).leaves()) {
      auto part = compose_leaf(al, lf.size, lf.stride, used);
      mode_out.insert(mode_out.end(), part.begin(), part.end());
    }
    if (mode_out.size() > 1) mode_out = drop_unit(mode_out);
    sh.push_back(leaves_to_shape(mode_out));
    st.push_back(leaves_to_stride(mode_out));
  }
  return {IntTuple(std::move(sh)), IntTuple(std::move(st))};
}

Layout complement(const Layout& a, int64_t m) {
  if (m < 1) fail(Errc::NotComplementable, "codomain size must be >= 1");
  std::vector<Leaf> lv;
  for (const auto& lf : a.leaves()) {
    if (lf.size == 1) continue;
    if (lf.stride == 0) fail(Errc::NotComplementable, to_string(a) + " is not injective (stride-0 mode)");
    lv.push_back(lf);
  }
  std::stable_sort(lv.begin(), lv.end(), [](const Leaf& x, const Leaf& y) { return x.stride < y.stride; });
  std::vector<Leaf> out;
  int64_t current = 1;
  for (const auto& lf : lv) {
    if (lf.stride % current != 0)
      fail(Errc::NotComplementable, to_string(a) + " has overlapping or non-divisible modes");
    if (lf.stride / current > 1) out.push_back({lf.stride / current, current});
    current = checked_mul(lf.stride, lf.size);
  }
  if (m % current != 0)
    fail(Errc::NotComplementable,
         "codomain " + std::to_string(m) + " is not a multiple of " + std::to_string(current) + " for " + to_string(a));
  if (m / current > 1) out.push_back({m / current, current});
  return coalesce(Layout::from_leaves(out));
}

Layout inverse(const Layout& a) {
  struct Item {
    int64_t size, stride, domain_stride;
  };
  std::vector<Item> items;
  int64_t running = 1;
  for (const auto& lf : a.leaves()) {
    if (lf.size > 1) items.push_back({lf.size, lf.stride, running});
    running = checked_mul(running, lf.size);
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& x, const Item& y) { return x.stride < y.stride; });
  std::vector<Leaf> out;
  int64_t current = 1;
  for (const auto& it : items) {
    if (it.stride != current) fail(Errc::NotInvertible, to_string(a) + " is not a bijection onto a contiguous range");
    out.push_back({it.size, it.domain_stride});
    current = checked_mul(current, it.size);
  }
  return coalesce(Layout::from_leaves(out));
}

Layout concat(const Layout& a, const Layout& b) {
  return {IntTuple{a.shape(), b.shape()}, IntTuple{a.stride(), b.stride()}};
}

Layout make_tuple_layout(const std::vector<Layout>& modes) {
  std::vector<IntTuple> sh, st;
  for (const auto& m : modes) {
    sh.push_back(m.shape());
    st.push_back(m.stride());
  }
  return {IntTuple(std::move(sh)), IntTuple(std::move(st))};
}

std::pair<std::vector<Leaf>, std::vector<Leaf>> split_leaves(const Layout& mode, int64_t n) {
  if (n < 1) fail(Errc::NotDivisible, "split size must be >= 1");
  std::vector<Leaf> head, tail;
  int64_t need = n;
  for (const auto& lf : mode.leaves()) {
    if (need == 1) {
      tail.push_back(lf);
    } else if (lf.size <= need) {
      if (need % lf.size != 0)
        fail(Errc::NotDivisible, std::to_string(n) + " does not align with the leaves of " + to_string(mode));
      head.push_back(lf);
      need /= lf.size;
    } else {
      if (lf.size % need != 0)
        fail(Errc::NotDivisible, std::to_string(n) + " does not align with the leaves of " + to_string(mode));
      head.push_back({need, lf.stride});
      tail.push_back({lf.size / need, checked_mul(lf.stride, need)});
      need = 1;
    }
  }
  if (need != 1) fail(Errc::NotDivisible, to_string(mode) + " has fewer than " + std::to_string(n) + " elements");
  return {head, tail};
}

Layout restrict_first_mode(const Layout& a, int64_t n) {
  if (a.shape().is_leaf()) fail(Errc::ShapeMismatch, "restrict_first_mode needs a tuple layout");
  auto [head, tail] = split_leaves(a.mode(0), n);
  (void)tail;
  std::vector<Layout> modes;
  if (head.size() == 1 && a.mode(0).shape().is_leaf())
    modes.emplace_back(IntTuple(head[0].size), IntTuple(head[0].stride));
  else
    modes.push_back(Layout::from_leaves(head));
  for (std::size_t i = 1; i < a.rank(); ++i) modes.push_back(a.mode(i));
  return make_tuple_layout(modes);
}

Layout flatten_modes(const Layout& l) {
  if (l.shape().is_leaf()) return l;
  std::vector<Layout> modes;
  for (std::size_t i = 0; i < l.rank(); ++i) {
    auto lv = l.mode(i).leaves();
    if (lv.size() == 1)
      modes.emplace_back(IntTuple(lv[0].size), IntTuple(lv[0].stride));
    else
      modes.push_back(Layout::from_leaves(lv));
  }
  return make_tuple_layout(modes);
}

bool equivalent(const Layout& a, const Layout& b) { return coalesce(a) == coalesce(b); }

bool pointwise_equal(const Layout& a, const Layout& b) {
  if (a.size() != b.size()) return false;
  for (int64_t i = 0; i < a.size(); ++i)
    if (a(i) != b(i)) return false;
  return true;
}

bool is_injective(const Layout& l) {
  std::vector<Leaf> lv;
  for (const auto& lf : l.leaves())
    if (lf.size > 1) lv.push_back(lf);
  std::stable_sort(lv.begin(), lv.end(), [](const Leaf& x, const Leaf& y) { return x.stride < y.stride; });
  int64_t current = 1;
  bool compact_chain = true;
  for (const auto& lf : lv) {
    if (lf.stride == 0) return false;
    if (lf.stride % current != 0) {
      compact_chain = false;
      break;
    }
    current = checked_mul(lf.stride, lf.size);
  }
  if (compact_chain) return true;
  // Irregular stride sets: fall back to enumeration.
  std::vector<int64_t> img(static_cast<std::size_t>(l.size()));
  for (int64_t i = 0; i < l.size(); ++i) img[static_cast<std::size_t>(i)] = l(i);
  std::sort(img.begin(), img.end());
  return std::adjacent_find(img.begin(), img.end()) == img.end();
}

std::vector<int64_t> decode_colex(int64_t index, std::span<const int64_t> extents) {
  std::vector<int64_t> out(extents.size());
  for (std::size_t i = 0; i < extents.size(); ++i) {
    out[i] = index % extents[i];
    index /= extents[i];
  }
  if (index != 0) fail(Errc::OutOfDomain, "index exceeds the tile extents");
  return out;
}

int64_t encode_colex(std::span<const int64_t> coord, std::span<const int64_t> extents) {
  int64_t idx = 0;
  int64_t scale = 1;
  for (std::size_t i = 0; i < extents.size(); ++i) {
    if (coord[i] < 0 || coord[i] >= extents[i]) fail(Errc::OutOfDomain, "coordinate outside the tile extents");
    idx += coord[i] * scale;
    scale *= extents[i];
  }
  return idx;
}

std::vector<int64_t> mode_sizes(const IntTuple& shape) {
  std::vector<int64_t> out;
  for (std::size_t i = 0; i < shape.rank(); ++i) out.push_back(product(shape[i]));
  return out;
}

DimMap dim_restrict(const Layout& composite, int in_dim, int out_dim, std::span<const int64_t> in_extents,
                    std::span<const int64_t> out_extents) {
  if (in_extents.size() != 2 || out_extents.size() != 2)
    fail(Errc::ShapeMismatch, "dim_restrict expects 2-D instruction and tensor spaces");
  if (in_dim < 0 || in_dim > 1 || out_dim < 0 || out_dim > 1) fail(Errc::ShapeMismatch, "dimension id must be 0 or 1");
  if (composite.size() != in_extents[0] * in_extents[1])
    fail(Errc::ShapeMismatch, "composite size does not match the instruction extents");
  // Canonical embedding of one input dimension into the 2-D colex index space.
  const Layout embed(IntTuple(in_extents[in_dim]), IntTuple(in_dim == 0 ? int64_t{1} : in_extents[0]));
  const Layout line = compose(composite, embed);
  std::vector<Leaf> projected;
  int64_t span0 = 0, span1 = 0;
  for (const auto& lf : line.leaves()) {
    const int64_t c0 = lf.stride % out_extents[0];
    const int64_t c1 = lf.stride / out_extents[0];
    span0 = checked_add(span0, checked_mul(lf.size - 1, c0));
    span1 = checked_add(span1, checked_mul(lf.size - 1, c1));
    projected.push_back({lf.size, out_dim == 0 ? c0 : c1});
  }
  if (span0 >= out_extents[0] || span1 >= out_extents[1])
    fail(Errc::LayoutIncompatible, "composite " + to_string(composite) + " does not separate into tensor dimensions");
  return coalesce(Layout::from_leaves(projected));
}

}  // namespace laysyn
