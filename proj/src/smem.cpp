#include "laysyn/smem.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "laysyn/error.hpp"

namespace laysyn {

namespace {

// Start offsets of the leaves of one dimension, plus the extent.
std::vector<int64_t> cut_points(const std::vector<CLeaf>& leaves) {
  std::vector<int64_t> cuts{1};
  for (const auto& l : leaves) cuts.push_back(checked_mul(cuts.back(), l.size));
  return cuts;
}

// Sorted union of cut sets; each cut must divide the next one.
std::vector<int64_t> refine(const std::vector<int64_t>& a, const std::vector<int64_t>& b, Errc err) {
  std::set<int64_t> all(a.begin(), a.end());
  all.insert(b.begin(), b.end());
  std::vector<int64_t> cuts(all.begin(), all.end());
  for (std::size_t i = 1; i < cuts.size(); ++i)
    if (cuts[i] % cuts[i - 1] != 0)
      fail(err, "modes of sizes cut at " + std::to_string(cuts[i - 1]) + " and " + std::to_string(cuts[i]) +
                    " have no common refinement");
  return cuts;
}

int max_var(const LayoutConstraint& c) {
  int m = 0;
  for (const auto& d : c.dims)
    for (const auto& l : d)
      if (!l.concrete()) m = std::max(m, std::get<StrideVar>(l.stride).id);
  return m;
}

// Stride of the sub-digit [pos, pos*size) carved out of a dimension's leaves.
CStride piece(const std::vector<CLeaf>& leaves, int64_t pos, int& next_var) {
  int64_t start = 1;
  for (const auto& l : leaves) {
    const int64_t end = start * l.size;
    if (pos >= start && pos < end) {
      const int64_t offset = pos / start;
      if (l.concrete()) return std::get<int64_t>(l.stride) * offset;
      StrideVar v = std::get<StrideVar>(l.stride);
      if (offset != 1) v.id = next_var++;
      return v;
    }
    start = end;
  }
  fail(Errc::InvalidArgument, "digit outside the dimension");
}

std::string stride_str(const CStride& s) {
  if (std::holds_alternative<int64_t>(s)) return std::to_string(std::get<int64_t>(s));
  return "D" + std::to_string(std::get<StrideVar>(s).id);
}

std::string dim_str(const std::vector<CLeaf>& leaves, bool shape) {
  auto item = [&](const CLeaf& l) { return shape ? std::to_string(l.size) : stride_str(l.stride); };
  if (leaves.size() == 1) return item(leaves[0]);
  std::string s = "(";
  for (std::size_t i = 0; i < leaves.size(); ++i) s += (i ? "," : "") + item(leaves[i]);
  return s + ")";
}

std::vector<Leaf> concrete_leaves(const LayoutConstraint& c) {
  std::vector<Leaf> out;
  for (const auto& d : c.dims)
    for (const auto& l : d)
      if (l.concrete() && l.size > 1) out.push_back({l.size, std::get<int64_t>(l.stride)});
  return out;
}

int log2_exact(int64_t x) {
  int b = 0;
  while ((int64_t{1} << b) < x) ++b;
  return (int64_t{1} << b) == x ? b : -1;
}

}  // namespace

LayoutConstraint LayoutConstraint::open(const std::vector<int64_t>& extents, int64_t divisor) {
  LayoutConstraint c;
  c.extents = extents;
  int id = 1;
  for (int64_t e : extents) c.dims.push_back({CLeaf{e, StrideVar{id++, divisor}}});
  return c;
}

int64_t LayoutConstraint::size() const {
  return std::accumulate(extents.begin(), extents.end(), int64_t{1}, [](int64_t a, int64_t b) { return checked_mul(a, b); });
}

LayoutConstraint LayoutConstraint::canonical() const {
  LayoutConstraint out;
  out.extents = extents;
  std::map<int, int> rename;
  for (const auto& d : dims) {
    std::vector<CLeaf> kept;
    for (const auto& l : d) {
      if (l.size == 1) continue;
      if (!kept.empty() && l.concrete() && kept.back().concrete() &&
          std::get<int64_t>(l.stride) == std::get<int64_t>(kept.back().stride) * kept.back().size) {
        kept.back().size *= l.size;
        continue;
      }
      kept.push_back(l);
    }
    if (kept.empty()) kept.push_back({1, int64_t{0}});
    for (auto& l : kept) {
      if (l.concrete()) continue;
      auto& v = std::get<StrideVar>(l.stride);
      auto [it, fresh] = rename.emplace(v.id, static_cast<int>(rename.size()) + 1);
      v.id = it->second;
    }
    out.dims.push_back(std::move(kept));
  }
  return out;
}

std::string to_string(const LayoutConstraint& c) {
  auto side = [&](bool shape) {
    if (c.dims.size() == 1) return dim_str(c.dims[0], shape);
    std::string s = "(";
    for (std::size_t i = 0; i < c.dims.size(); ++i) s += (i ? "," : "") + dim_str(c.dims[i], shape);
    return s + ")";
  };
  return side(true) + ":" + side(false);
}

LayoutConstraint build_constraint(const TvLayout& f, int64_t vector_elems) {
  if (vector_elems < 1) fail(Errc::InvalidArgument, "vector size must be >= 1");
  if (!tv_well_formed(f)) fail(Errc::LayoutIncompatible, "thread-value layout " + to_string(f) + " is not invertible");
  if (vector_elems == 1) return LayoutConstraint::open(f.tile);

  std::vector<Leaf> head;
  try {
    head = split_leaves(f.layout.mode(1), vector_elems).first;
  } catch (const Error&) {
    fail(Errc::LayoutIncompatible, "value mode of " + to_string(f) + " does not split at " + std::to_string(vector_elems));
  }
  // Dimension start offsets in the colex tile index.
  std::vector<int64_t> starts{1};
  for (int64_t e : f.tile) starts.push_back(checked_mul(starts.back(), e));

  struct Piece {
    int64_t pos, size, stride;
  };
  std::vector<std::vector<Piece>> pieces(f.tile.size());
  int64_t addr = 1;
  for (auto [s, d] : head) {
    if (s == 1) continue;
    if (d == 0) fail(Errc::LayoutIncompatible, "vector of " + to_string(f) + " repeats an element");
    while (s > 1) {
      std::size_t k = 0;
      while (k + 1 < starts.size() && starts[k + 1] <= d) ++k;
      if (k >= f.tile.size() || d % starts[k] != 0) fail(Errc::LayoutIncompatible, "vector leaf straddles a dimension");
      const int64_t pos = d / starts[k];
      const int64_t room = f.tile[k] / pos;
      const int64_t take = std::min(s, room);
      if (f.tile[k] % pos != 0 || s % take != 0) fail(Errc::LayoutIncompatible, "vector leaf straddles a dimension");
      pieces[k].push_back({pos, take, addr});
      addr *= take;
      s /= take;
      d = starts[k + 1];
    }
  }

  LayoutConstraint c;
  c.extents = f.tile;
  int next = 1;
  for (std::size_t k = 0; k < f.tile.size(); ++k) {
    std::vector<int64_t> own{1, f.tile[k]};
    for (const auto& p : pieces[k]) {
      own.push_back(p.pos);
      own.push_back(p.pos * p.size);
    }
    const auto cuts = refine(own, {}, Errc::LayoutIncompatible);
    std::vector<CLeaf> leaves;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const int64_t size = cuts[i + 1] / cuts[i];
      CStride st = StrideVar{0, vector_elems};
      for (const auto& p : pieces[k]) {
        if (p.pos == cuts[i] && p.size == size) {
          st = p.stride;
        } else if (p.pos <= cuts[i] && cuts[i] < p.pos * p.size) {
          fail(Errc::LayoutIncompatible, "overlapping vector leaves");
        }
      }
      if (!std::holds_alternative<int64_t>(st)) std::get<StrideVar>(st).id = next++;
      leaves.push_back({size, st});
    }
    if (leaves.empty()) leaves.push_back({1, int64_t{0}});
    c.dims.push_back(std::move(leaves));
  }
  return c.canonical();
}

LayoutConstraint unify(const LayoutConstraint& a, const LayoutConstraint& b) {
  if (a.extents != b.extents) fail(Errc::ShapeMismatch, "constraints cover different shapes");
  int next = std::max(max_var(a), max_var(b)) + 1;
  LayoutConstraint out;
  out.extents = a.extents;
  for (std::size_t k = 0; k < a.dims.size(); ++k) {
    const auto cuts = refine(cut_points(a.dims[k]), cut_points(b.dims[k]), Errc::StrideConflict);
    std::vector<CLeaf> leaves;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
      const int64_t size = cuts[i + 1] / cuts[i];
      const CStride sa = piece(a.dims[k], cuts[i], next);
      const CStride sb = piece(b.dims[k], cuts[i], next);
      CStride merged;
      const bool ca = std::holds_alternative<int64_t>(sa), cb = std::holds_alternative<int64_t>(sb);
      if (ca && cb) {
        if (std::get<int64_t>(sa) != std::get<int64_t>(sb) && size > 1)
          fail(Errc::StrideConflict, "mode of size " + std::to_string(size) + " has strides " + stride_str(sa) + " and " +
                                         stride_str(sb));
        merged = sa;
      } else if (ca || cb) {
        const int64_t s = std::get<int64_t>(ca ? sa : sb);
        const StrideVar& v = std::get<StrideVar>(ca ? sb : sa);
        if (size > 1 && s % v.divisor != 0)
          fail(Errc::StrideConflict, "stride " + std::to_string(s) + " breaks alignment " + std::to_string(v.divisor));
        merged = s;
      } else {
        StrideVar v = std::get<StrideVar>(sa);
        v.divisor = std::lcm(v.divisor, std::get<StrideVar>(sb).divisor);
        merged = v;
      }
      leaves.push_back({size, merged});
    }
    out.dims.push_back(std::move(leaves));
  }
  const Layout fixed = Layout::from_leaves(concrete_leaves(out));
  if (!is_injective(fixed))
    fail(Errc::StrideConflict, "determined modes " + to_string(fixed) + " map distinct elements to one address");
  return out.canonical();
}

Layout materialize(const LayoutConstraint& c) {
  const int64_t n = c.size();
  std::vector<Leaf> gaps;
  try {
    for (const auto& g : complement(Layout::from_leaves(concrete_leaves(c)), n).leaves())
      if (g.size > 1) gaps.push_back(g);
  } catch (const Error& e) {
    fail(Errc::Unsatisfiable, std::string("determined modes do not tile memory: ") + e.what());
  }
  struct Slot {
    std::size_t dim, leaf;
    int64_t size, divisor;
  };
  std::vector<Slot> vars;
  for (std::size_t k = 0; k < c.dims.size(); ++k)
    for (std::size_t i = 0; i < c.dims[k].size(); ++i)
      if (!c.dims[k][i].concrete())
        vars.push_back({k, i, c.dims[k][i].size, std::get<StrideVar>(c.dims[k][i].stride).divisor});
  std::stable_sort(vars.begin(), vars.end(), [](const Slot& x, const Slot& y) { return x.size < y.size; });

  std::vector<std::vector<Leaf>> bound(c.dims.size());
  for (std::size_t k = 0; k < c.dims.size(); ++k)
    for (const auto& l : c.dims[k]) bound[k].push_back({l.size, l.concrete() ? std::get<int64_t>(l.stride) : 0});
  std::size_t gi = 0;
  for (const auto& v : vars) {
    if (v.size == 1) continue;
    while (gi < gaps.size() && gaps[gi].size == 1) ++gi;
    if (gi == gaps.size()) fail(Errc::Unsatisfiable, "no room left for a mode of size " + std::to_string(v.size));
    Leaf& g = gaps[gi];
    if (g.size % v.size != 0)
      fail(Errc::Unsatisfiable, "mode of size " + std::to_string(v.size) + " does not divide gap " + std::to_string(g.size));
    if (g.stride % v.divisor != 0)
      fail(Errc::Unsatisfiable, "stride " + std::to_string(g.stride) + " is not a multiple of " + std::to_string(v.divisor));
    bound[v.dim][v.leaf].stride = g.stride;
    g.stride *= v.size;
    g.size /= v.size;
  }
  std::vector<Layout> modes;
  for (const auto& b : bound) {
    Layout mode = coalesce(Layout::from_leaves(b));
    const auto lv = mode.leaves();
    if (lv.size() == 1) mode = Layout(IntTuple(lv[0].size), IntTuple(lv[0].stride));
    modes.push_back(mode);
  }
  Layout m = modes.size() == 1 ? modes[0] : make_tuple_layout(modes);
  if (m.cosize() != n || !is_injective(m)) fail(Errc::Unsatisfiable, "materialized layout " + to_string(m) + " is not compact");
  return m;
}

TmaCheck check_tma(const LayoutConstraint& c, int elem_bits, const TmaLimits& limits) {
  TmaCheck out;
  Layout m;
  try {
    m = materialize(c);
  } catch (const Error& e) {
    out.reason = e.what();
    return out;
  }
  struct Digit {
    std::size_t dim;
    int64_t pos, size, stride;
  };
  std::vector<Digit> digits;
  for (std::size_t k = 0; k < c.extents.size(); ++k) {
    int64_t pos = 1;
    for (const auto& l : m.rank() == c.extents.size() && c.extents.size() > 1 ? m.mode(k).leaves() : m.leaves()) {
      if (l.size > 1) digits.push_back({k, pos, l.size, l.stride});
      pos *= l.size;
    }
  }
  std::sort(digits.begin(), digits.end(), [](const Digit& x, const Digit& y) { return x.stride < y.stride; });
  std::vector<Digit> box;
  for (const auto& d : digits) {
    if (!box.empty()) {
      Digit& b = box.back();
      if (d.dim == b.dim && d.stride == b.stride * b.size && d.pos == b.pos * b.size) {
        b.size *= d.size;
        continue;
      }
    }
    box.push_back(d);
  }
  out.box_dims = static_cast<int>(box.size());
  for (const auto& b : box) out.box.push_back(b.size);
  if (box.empty()) {
    out.reason = "empty buffer";
    return out;
  }
  if (out.box_dims > limits.max_dims) {
    out.reason = std::to_string(out.box_dims) + " box dimensions exceed " + std::to_string(limits.max_dims);
    return out;
  }
  const int64_t inner_bits = box.front().size * elem_bits;
  if (box.front().stride != 1 || inner_bits % (8 * limits.align_bytes) != 0) {
    out.reason = "innermost run of " + std::to_string(inner_bits / 8) + " bytes is not " +
                 std::to_string(limits.align_bytes) + "-byte aligned";
    return out;
  }
  for (const auto& b : box)
    if (b.size > limits.box_cap) {
      out.reason = "box extent " + std::to_string(b.size) + " exceeds " + std::to_string(limits.box_cap);
      return out;
    }
  out.feasible = true;
  return out;
}

LayoutConstraint fold_constraints(const std::vector<int64_t>& extents, int elem_bits,
                                  std::span<const SmemAccess> accesses) {
  LayoutConstraint c = LayoutConstraint::open(extents);
  for (const auto& a : accesses) {
    if (a.instruction.tma) continue;
    c = unify(c, build_constraint(a.tv, a.instruction.vector_elems(elem_bits)));
  }
  return c;
}

bool access_aligned(const SmemAccess& a, const Layout& m, int elem_bits) {
  const int64_t v = a.instruction.vector_elems(elem_bits);
  const int64_t vals = a.tv.values();
  if (v < 1 || vals % v != 0) return false;
  for (int64_t t = 0; t < a.tv.threads(); ++t)
    for (int64_t j = 0; j < vals; j += v) {
      const int64_t base = m(a.tv(t, j));
      if (base % v != 0) return false;
      for (int64_t i = 1; i < v; ++i)
        if (m(a.tv(t, j + i)) != base + i) return false;
    }
  return true;
}

std::vector<AccessPattern> access_patterns(const SmemAccess& a, const Layout& m, int elem_bits) {
  std::vector<AccessPattern> out;
  const int64_t v = std::max<int64_t>(1, a.instruction.vector_elems(elem_bits));
  const int width = static_cast<int>(std::max<int64_t>(1, v * elem_bits / 8));
  const int64_t threads = a.tv.threads();
  for (int64_t w0 = 0; w0 < threads; w0 += 32)
    for (int64_t j = 0; j < a.tv.values(); j += v) {
      AccessPattern p{{}, width};
      for (int64_t t = w0; t < std::min(threads, w0 + 32); ++t) p.addresses.push_back(m(a.tv(t, j)) * elem_bits / 8);
      out.push_back(std::move(p));
    }
  return out;
}

SmemLayout synthesize_buffer(const TensorDecl& buffer, std::span<const SmemAccess> accesses, const Catalog& cat) {
  const int bits = buffer.dtype.bits;
  const auto extents = buffer.extents();
  SmemLayout out;
  out.constraint = fold_constraints(extents, bits, accesses);
  out.m = materialize(out.constraint);
  for (const auto& a : accesses) {
    if (a.instruction.tma) {
      out.tma = true;
      continue;
    }
    if (!access_aligned(a, out.m, bits))
      fail(Errc::Unsatisfiable, "access by op " + std::to_string(a.op) + " is not contiguous under " + to_string(out.m));
  }
  if (out.tma) {
    const TmaCheck t = check_tma(out.constraint, bits, cat.tma);
    if (!t.feasible) fail(Errc::Unsatisfiable, "bulk copy infeasible: " + t.reason);
  }

  std::vector<AccessPattern> all;
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // per access [begin, end) in all
  for (const auto& a : accesses) {
    const std::size_t begin = all.size();
    if (!a.instruction.tma)
      for (auto& p : access_patterns(a, out.m, bits)) all.push_back(std::move(p));
    spans.emplace_back(begin, all.size());
  }
  std::vector<Swizzle> cands{Swizzle::identity()};
  const int64_t bytes = buffer.elements() * bits / 8;
  const int top = log2_exact(bytes);
  if (top > 0)
    for (const auto& s : default_swizzle_candidates())
      if (!s.is_identity() && s.bits + s.base + s.shift <= top) cands.push_back(s);
  const SwizzleSelection sel = score_swizzles(all, cands, cat.banks);
  out.swizzle = sel.best;
  out.conflicts = sel.best_total;
  out.identity_conflicts = sel.identity_total;

  for (std::size_t i = 0; i < accesses.size(); ++i) {
    AccessConflicts ac;
    ac.op = accesses[i].op;
    for (std::size_t p = spans[i].first; p < spans[i].second; ++p) {
      ac.width = all[p].width;
      ++ac.phases;
      AccessPattern sw{{}, all[p].width};
      for (int64_t x : all[p].addresses) sw.addresses.push_back(out.swizzle(x));
      ac.max_way = std::max(ac.max_way, bank_conflicts(sw, cat.banks));
      ac.max_way_identity = std::max(ac.max_way_identity, bank_conflicts(all[p], cat.banks));
    }
    out.accesses.push_back(ac);
  }
  return out;
}

}  // namespace laysyn
