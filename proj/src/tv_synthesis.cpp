#include "laysyn/tv_synthesis.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <set>

#include "laysyn/error.hpp"

namespace laysyn {

namespace {

bool is_memory(Scope s) { return s != Scope::Register; }

int64_t bits_moved(const TensorDecl& t) { return checked_mul(t.elements(), t.dtype.bits); }

Layout mode_of(const std::vector<Leaf>& leaves) {
  std::vector<Leaf> kept;
  for (const auto& l : leaves)
    if (l.size != 1) kept.push_back(l);
  if (kept.size() == 1) return {IntTuple(kept[0].size), IntTuple(kept[0].stride)};
  if (kept.empty()) return {IntTuple(1), IntTuple(0)};
  return Layout::from_leaves(kept);
}

std::vector<Leaf> join(std::vector<Leaf> a, const std::vector<Leaf>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Layout memory_layout(const TensorDecl& t) { return t.layout ? *t.layout : Layout::colex(t.shape); }

bool is_reg_copy(const ProgramGraph& g, const OpNode& op) {
  return op.kind == OpKind::Copy && !is_memory(g.tensor(op.operands[0]).scope) &&
         !is_memory(g.tensor(op.operands[1]).scope);
}

}  // namespace

std::string_view constraint_kind_name(ConstraintKind k) {
  switch (k) {
    case ConstraintKind::CopyEq: return "CopyEq";
    case ConstraintKind::GemmM: return "GemmM";
    case ConstraintKind::GemmN: return "GemmN";
    case ConstraintKind::GemmK: return "GemmK";
    case ConstraintKind::ElemEq: return "ElemEq";
    case ConstraintKind::ReduceProj: return "ReduceProj";
  }
  return "?";
}

std::vector<TvConstraint> build_constraints(const ProgramGraph& g, const Component& c) {
  std::vector<TvConstraint> out;
  for (int i : c.ops) {
    const OpNode& op = g.ops.at(static_cast<std::size_t>(i));
    switch (op.kind) {
      case OpKind::Copy: out.push_back({ConstraintKind::CopyEq, i, op.operands, -1, {}, false}); break;
      case OpKind::Gemm: {
        const int cc = op.operands[0], a = op.operands[1], b = op.operands[2];
        out.push_back({ConstraintKind::GemmM, i, {cc, a}, -1, {}, false});
        out.push_back({ConstraintKind::GemmN, i, {cc, b}, -1, {}, false});
        out.push_back({ConstraintKind::GemmK, i, {a, b}, -1, {}, false});
        break;
      }
      case OpKind::Cast:
      case OpKind::Elementwise: {
        auto ts = op.operands;
        ts.push_back(op.result);
        out.push_back({ConstraintKind::ElemEq, i, ts, -1, {}, false});
        break;
      }
      case OpKind::Reduce:
        out.push_back({ConstraintKind::ReduceProj, i, {op.operands[0], op.result}, op.reduce_dim, {}, false});
        break;
      default: break;
    }
  }
  return out;
}

GemmTiling init_gemm_anchor(const ProgramGraph& g, int op_index, const Catalog& cat) {
  const OpNode& op = g.ops.at(static_cast<std::size_t>(op_index));
  if (op.kind != OpKind::Gemm) fail(Errc::InvalidArgument, "op " + std::to_string(op_index) + " is not a gemm");
  const TensorDecl& tc = g.tensor(op.operands[0]);
  const TensorDecl& ta = g.tensor(op.operands[1]);
  const TensorDecl& tb = g.tensor(op.operands[2]);
  GemmTiling t;
  t.mma = fastest_mma(cat, ta.dtype, tb.dtype, tc.dtype);
  const Instruction& I = t.mma;
  const auto ce = tc.extents(), ae = ta.extents(), be = tb.extents();
  if (ce.size() != 2 || ae.size() != 2 || be.size() != 2 || ae[0] != ce[0] || be[0] != ce[1] || be[1] != ae[1])
    fail(Errc::ShapeMismatch, "gemm operands are not MxN, MxK and NxK");
  const int64_t M = ce[0], N = ce[1], K = ae[1];
  if (g.threads % I.threads != 0)
    fail(Errc::NonDivisibleTile, std::to_string(g.threads) + " threads do not form whole " + I.name + " groups");
  const int64_t W = g.threads / I.threads;
  if (M % I.m != 0 || N % I.n != 0 || K % I.k != 0)
    fail(Errc::NonDivisibleTile, "gemm " + std::to_string(M) + "x" + std::to_string(N) + "x" + std::to_string(K) +
                                     " is not a multiple of the " + I.name + " tile");
  if (op.thread_arrangement) {
    const Layout& w = *op.thread_arrangement;
    t.warps_m = w.mode(0).size();
    t.warps_n = w.rank() > 1 ? w.mode(1).size() : 1;
    if (t.warps_m * t.warps_n != W)
      fail(Errc::InvalidArgument, "thread arrangement " + to_string(w) + " does not hold " + std::to_string(W) + " warps");
  } else {
    t.warps_m = std::gcd(W, M / I.m);
    t.warps_n = W / t.warps_m;
  }
  if ((M / I.m) % t.warps_m != 0 || (N / I.n) % t.warps_n != 0)
    fail(Errc::NonDivisibleTile, "warp grid " + std::to_string(t.warps_m) + "x" + std::to_string(t.warps_n) +
                                     " does not divide the " + std::to_string(M) + "x" + std::to_string(N) + " tile");
  t.reps_m = M / (I.m * t.warps_m);
  t.reps_n = N / (I.n * t.warps_n);
  t.reps_k = K / I.k;
  const int64_t Wm = t.warps_m, Wn = t.warps_n;

  // Instruction tile to tensor index for the first invocation: each
  // instruction dimension lands on the matching tensor dimension unscaled.
  auto tile_map = [](int64_t r, int64_t c, int64_t ld) {
    return make_tuple_layout({Layout(IntTuple(r), IntTuple(1)), Layout(IntTuple(c), IntTuple(ld))});
  };
  const Layout fc = compose(tile_map(I.m, I.n, M), *I.tv_c);
  const Layout fa = compose(tile_map(I.m, I.k, M), *I.tv_a);
  const Layout fb = compose(tile_map(I.n, I.k, N), *I.tv_b);

  t.c = make_tv(join(fc.mode(0).leaves(), {{Wm, I.m}, {Wn, M * I.n}}),
                join(fc.mode(1).leaves(), {{t.reps_n, M * I.n * Wn}, {t.reps_m, I.m * Wm}}), ce);
  t.a = make_tv(join(fa.mode(0).leaves(), {{Wm, I.m}, {Wn, 0}}),
                join(fa.mode(1).leaves(), {{t.reps_k, M * I.k}, {t.reps_m, I.m * Wm}}), ae);
  t.b = make_tv(join(fb.mode(0).leaves(), {{Wm, 0}, {Wn, I.n}}),
                join(fb.mode(1).leaves(), {{t.reps_k, N * I.k}, {t.reps_n, I.n * Wn}}), be);
  return t;
}

CopyAnchor init_copy_anchor(const ProgramGraph& g, int op_index) {
  const OpNode& op = g.ops.at(static_cast<std::size_t>(op_index));
  if (op.kind != OpKind::Copy) fail(Errc::InvalidArgument, "op " + std::to_string(op_index) + " is not a copy");
  const TensorDecl& s = g.tensor(op.operands[0]);
  const TensorDecl& d = g.tensor(op.operands[1]);
  CopyAnchor out;
  if (s.scope == Scope::Global || (d.scope != Scope::Global && is_memory(s.scope))) {
    out.tensor = s.id;
    out.src = true;
  } else if (is_memory(d.scope)) {
    out.tensor = d.id;
    out.src = false;
  } else {
    fail(Errc::InvalidArgument, "copy " + std::to_string(op_index) + " touches no memory tensor");
  }
  const TensorDecl& t = g.tensor(out.tensor);
  const Layout mem = memory_layout(t);
  const auto ext = t.extents();

  struct Item {
    int64_t size, stride, logical;
    std::size_t dim;
  };
  std::vector<Item> items;
  int64_t logical = 1;
  for (std::size_t k = 0; k < ext.size(); ++k) {
    const Layout mode = ext.size() == 1 ? mem : mem.mode(k);
    for (const auto& l : mode.leaves()) {
      if (l.size > 1) items.push_back({l.size, l.stride, logical, k});
      logical *= l.size;
    }
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return std::tie(a.stride, a.dim) < std::tie(b.stride, b.dim);
  });
  int64_t run = 1;
  for (const auto& it : items) {
    if (it.stride != run) break;
    run *= it.size;
  }
  // Peels `v` consecutive elements off the front of the address order; the
  // remaining leaves are counted in vectors. Empty when the vector would cut
  // a leaf unevenly.
  auto peel = [&](int64_t v, std::vector<Leaf>& vec, std::vector<Leaf>& rest) {
    vec.clear();
    rest.clear();
    int64_t need = v;
    for (const auto& it : items) {
      const int64_t g = std::gcd(it.size, need);
      if (need > 1 && g < need && g < it.size) return false;
      if (g > 1) vec.push_back({g, it.logical});
      if (it.size / g > 1) rest.push_back({it.size / g, it.logical * g});
      need /= g;
    }
    return need == 1;
  };
  const int bits = t.dtype.bits;
  std::vector<Leaf> vec, rest;
  out.vector = 1;
  for (int64_t cand = std::max<int64_t>(1, 128 / bits); cand >= 1; cand /= 2) {
    if (run % cand != 0 || (cand * bits) % 8 != 0) continue;
    bool aligned = true;
    for (const auto& it : items)
      if (it.stride >= cand && it.stride % cand != 0) aligned = false;
    if (aligned && peel(cand, vec, rest)) {
      out.vector = cand;
      break;
    }
  }
  if (out.vector == 1) peel(1, vec, rest);

  // Threads take vectors in address order, as many as divide evenly; what is
  // left over repeats as values.
  std::vector<Leaf> thread, value = vec;
  int64_t free_threads = g.threads;
  for (const auto& l : rest) {
    const int64_t k = std::gcd(l.size, free_threads);
    if (k > 1) thread.push_back({k, l.stride});
    if (l.size / k > 1) value.push_back({l.size / k, l.stride * k});
    free_threads /= k;
  }
  if (free_threads > 1) thread.push_back({free_threads, 0});
  out.tv = make_tv(thread, value, ext);
  return out;
}

TvLayout solve_copy(const TvLayout& known, const Instruction& ins, CopySide known_side) {
  if (!ins.tv_src || !ins.tv_dst) fail(Errc::InvalidArgument, ins.name + " is not a copy instruction");
  const Layout& kin = known_side == CopySide::Src ? *ins.tv_src : *ins.tv_dst;
  const Layout& kout = known_side == CopySide::Src ? *ins.tv_dst : *ins.tv_src;
  const int64_t ti = kin.mode(0).size(), vi = kin.mode(1).size();
  std::pair<std::vector<Leaf>, std::vector<Leaf>> th, va;
  try {
    th = split_leaves(known.layout.mode(0), ti);
    va = split_leaves(known.layout.mode(1), vi);
  } catch (const Error& e) {
    fail(Errc::LayoutIncompatible, ins.name + " does not tile " + to_string(known) + ": " + e.what());
  }
  for (const auto& l : th.first)
    if (l.size > 1 && l.stride == 0)
      fail(Errc::LayoutIncompatible, ins.name + " cannot be issued by replicated threads of " + to_string(known));
  const Layout head = make_tuple_layout({mode_of(th.first), mode_of(va.first)});
  Layout r;
  try {
    r = compose(compose(head, inverse(kin)), kout);
  } catch (const Error& e) {
    fail(Errc::LayoutIncompatible, ins.name + " does not compose with " + to_string(known) + ": " + e.what());
  }
  return make_tv(join(r.mode(0).leaves(), th.second), join(r.mode(1).leaves(), va.second), known.tile);
}

TvLayout reduce_projection(const TvLayout& f, int dim) {
  if (dim < 0 || static_cast<std::size_t>(dim) >= f.tile.size()) fail(Errc::InvalidArgument, "reduce dimension out of range");
  auto out_ext = f.tile;
  out_ext[static_cast<std::size_t>(dim)] = 1;
  std::vector<Leaf> mu;
  int64_t stride = 1;
  for (std::size_t k = 0; k < f.tile.size(); ++k) {
    mu.push_back({f.tile[k], static_cast<int>(k) == dim ? 0 : stride});
    stride *= out_ext[k];
  }
  const Layout m = Layout::from_leaves(mu);
  const Layout th = compose(m, f.layout.mode(0));
  const Layout va = compose(m, f.layout.mode(1));
  std::vector<Leaf> values;
  for (const auto& l : va.leaves())
    if (l.stride != 0) values.push_back(l);
  return make_tv(th.leaves(), values, out_ext);
}

bool vectors_contiguous(const TvLayout& f, const Layout& memory, int64_t vector) {
  if (vector < 1 || f.values() % vector != 0) return false;
  for (int64_t t = 0; t < f.threads(); ++t)
    for (int64_t j = 0; j < f.values(); j += vector) {
      const int64_t base = memory(f(t, j));
      if (base % vector != 0) return false;
      for (int64_t i = 1; i < vector; ++i)
        if (memory(f(t, j + i)) != base + i) return false;
    }
  return true;
}

namespace {

struct State {
  Assignment asg;
  std::size_t comp = 0;
  bool seeded = false;
  bool dead = false;
  std::vector<char> solved, queued;
  std::deque<int> ready;
  std::map<int, std::vector<SmemAccess>> access;
  std::map<int, LayoutConstraint> constraint;
};

class Engine {
 public:
  Engine(std::shared_ptr<const ProgramGraph> g, const Catalog& cat, bool narrowest, std::size_t limit, bool keep_conflicts)
      : gp_(std::move(g)), g_(*gp_), cat_(cat), narrowest_(narrowest), limit_(limit), keep_(keep_conflicts) {
    comps_ = partition_components(g_);
  }

  std::vector<Candidate> run() {
    State s;
    s.solved.assign(g_.ops.size(), 0);
    s.queued.assign(g_.ops.size(), 0);
    if (limit_ > 0) search(std::move(s));
    return std::move(leaves_);
  }

 private:
  std::shared_ptr<const ProgramGraph> gp_;
  const ProgramGraph& g_;
  const Catalog& cat_;
  bool narrowest_;
  std::size_t limit_;
  bool keep_;
  std::vector<Component> comps_;
  std::map<int, std::vector<Instruction>> cands_;
  std::vector<Candidate> leaves_;

  const OpNode& op(int i) const { return g_.ops[static_cast<std::size_t>(i)]; }

  bool assign(State& s, int tensor, const TvLayout& tv, int op_index, bool on_result) {
    auto it = s.asg.tensors.find(tensor);
    if (it == s.asg.tensors.end()) {
      s.asg.tensors.emplace(tensor, tv);
      return true;
    }
    if (tv_equal(it->second, tv)) return true;
    s.asg.conflicts.push_back({op_index, tensor, on_result, it->second, tv});
    if (!keep_) s.dead = true;
    return false;
  }

  std::optional<TvLayout> side(const State& s, int op_index, CopySide which) const {
    const int t = op(op_index).operands[which == CopySide::Src ? 0 : 1];
    if (!is_memory(g_.tensor(t).scope)) {
      auto it = s.asg.tensors.find(t);
      return it == s.asg.tensors.end() ? std::nullopt : std::optional<TvLayout>(it->second);
    }
    auto it = s.asg.copies.find(op_index);
    if (it == s.asg.copies.end()) return std::nullopt;
    return which == CopySide::Src ? it->second.src : it->second.dst;
  }

  void seed(State& s) {
    const Component& c = comps_[s.comp];
    bool has_gemm = false;
    for (int i : c.ops) {
      const OpNode& o = op(i);
      if (o.kind == OpKind::Rearrange) {
        if (o.target) assign(s, o.result, TvLayout{*o.target, g_.tensor(o.result).extents()}, i, true);
        s.solved[static_cast<std::size_t>(i)] = 1;
      }
    }
    for (int i : c.ops) {
      const OpNode& o = op(i);
      if (o.kind != OpKind::Gemm) continue;
      has_gemm = true;
      GemmTiling t = init_gemm_anchor(g_, i, cat_);
      assign(s, o.operands[0], t.c, i, false);
      assign(s, o.operands[1], t.a, i, false);
      assign(s, o.operands[2], t.b, i, false);
      s.asg.gemms.emplace(i, std::move(t));
      s.solved[static_cast<std::size_t>(i)] = 1;
    }
    if (has_gemm) return;
    int best = -1;
    int64_t best_bits = -1;
    bool best_global = false;
    for (int i : c.ops) {
      const OpNode& o = op(i);
      if (o.kind != OpKind::Copy || is_reg_copy(g_, o)) continue;
      const TensorDecl& a = g_.tensor(o.operands[0]);
      const TensorDecl& b = g_.tensor(o.operands[1]);
      const bool global = a.scope == Scope::Global || b.scope == Scope::Global;
      const int64_t bits = bits_moved(a);
      if ((global && !best_global) || (global == best_global && bits > best_bits)) {
        best = i;
        best_bits = bits;
        best_global = global;
      }
    }
    if (best < 0) return;
    CopyAnchor a = init_copy_anchor(g_, best);
    auto& choice = s.asg.copies[best];
    (a.src ? choice.src : choice.dst) = a.tv;
    s.asg.anchors.emplace(best, std::move(a));
  }

  bool ready(const State& s, int i) const {
    const OpNode& o = op(i);
    auto known = [&](int t) { return s.asg.tensors.count(t) > 0; };
    switch (o.kind) {
      case OpKind::Copy:
        if (is_reg_copy(g_, o)) return known(o.operands[0]) || known(o.operands[1]);
        return side(s, i, CopySide::Src).has_value() || side(s, i, CopySide::Dst).has_value();
      case OpKind::Cast:
      case OpKind::Elementwise:
        return known(o.result) || std::any_of(o.operands.begin(), o.operands.end(), known);
      case OpKind::Reduce: return known(o.operands[0]);
      default: return false;
    }
  }

  void update_ready(State& s) {
    for (int i : comps_[s.comp].ops) {
      const auto k = static_cast<std::size_t>(i);
      if (s.solved[k] || s.queued[k] || !ready(s, i)) continue;
      s.queued[k] = 1;
      s.ready.push_back(i);
    }
  }

  // ElemEq: the result's layout wins when known, else the first known operand.
  void solve_elementwise(State& s, int i, const std::vector<int>& operands, int result) {
    std::optional<TvLayout> target;
    if (auto it = s.asg.tensors.find(result); it != s.asg.tensors.end()) target = it->second;
    for (int x : operands)
      if (!target)
        if (auto it = s.asg.tensors.find(x); it != s.asg.tensors.end()) target = it->second;
    for (int x : operands) assign(s, x, *target, i, false);
    assign(s, result, *target, i, true);
  }

  void solve_fixed(State& s, int i) {
    const OpNode& o = op(i);
    if (o.kind == OpKind::Reduce) {
      assign(s, o.result, reduce_projection(s.asg.tensors.at(o.operands[0]), o.reduce_dim), i, true);
    } else if (o.kind == OpKind::Copy) {
      solve_elementwise(s, i, {o.operands[0]}, o.operands[1]);
    } else {
      solve_elementwise(s, i, o.operands, o.result);
    }
  }

  const std::vector<Instruction>& candidates(int i) {
    auto it = cands_.find(i);
    if (it != cands_.end()) return it->second;
    const OpNode& o = op(i);
    auto list = candidates_for_copy(cat_, g_.tensor(o.operands[0]), g_.tensor(o.operands[1]));
    if (narrowest_) std::reverse(list.begin(), list.end());
    return cands_.emplace(i, std::move(list)).first->second;
  }

  bool admit_memory_side(State& s, int i, int tensor, const TvLayout& tv, const Instruction& ins, bool write) {
    const TensorDecl& t = g_.tensor(tensor);
    const int64_t v = ins.vector_elems(t.dtype.bits);
    if (t.scope == Scope::Global) return vectors_contiguous(tv, memory_layout(t), v);
    SmemAccess acc{i, tv, ins, write};
    if (!ins.tma) {
      try {
        auto it = s.constraint.find(tensor);
        const LayoutConstraint base = it == s.constraint.end() ? LayoutConstraint::open(t.extents()) : it->second;
        LayoutConstraint c = unify(base, build_constraint(tv, v));
        const Layout m = materialize(c);
        if (!access_aligned(acc, m, t.dtype.bits)) return false;
        for (const auto& a : s.access[tensor])
          if (!a.instruction.tma && !access_aligned(a, m, t.dtype.bits)) return false;
        s.constraint[tensor] = std::move(c);
      } catch (const Error&) {
        return false;
      }
    }
    s.access[tensor].push_back(std::move(acc));
    return true;
  }

  std::optional<State> try_copy(const State& base, int i, const Instruction& ins) {
    const OpNode& o = op(i);
    State s = base;
    const auto src = side(s, i, CopySide::Src), dst = side(s, i, CopySide::Dst);
    const CopySide from = src ? CopySide::Src : CopySide::Dst;
    TvLayout other;
    try {
      other = solve_copy(from == CopySide::Src ? *src : *dst, ins, from);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (!tv_well_formed(other)) return std::nullopt;
    const int other_tensor = o.operands[from == CopySide::Src ? 1 : 0];
    const TvLayout src_tv = from == CopySide::Src ? *src : other;
    const TvLayout dst_tv = from == CopySide::Src ? other : *dst;
    if ((from == CopySide::Src && dst) || (from == CopySide::Dst && src)) {
      if (!tv_equal(other, from == CopySide::Src ? *dst : *src)) return std::nullopt;
    }
    for (int k = 0; k < 2; ++k) {
      const int t = o.operands[static_cast<std::size_t>(k)];
      if (!is_memory(g_.tensor(t).scope)) continue;
      if (!admit_memory_side(s, i, t, k == 0 ? src_tv : dst_tv, ins, k == 1)) return std::nullopt;
    }
    if (!is_memory(g_.tensor(other_tensor).scope)) assign(s, other_tensor, other, i, from == CopySide::Src);
    auto& choice = s.asg.copies[i];
    choice.src = src_tv;
    choice.dst = dst_tv;
    choice.instruction = ins;
    return s;
  }

  void finish(State& s) {
    Candidate c;
    c.graph = gp_;
    for (auto& [tensor, acc] : s.access) {
      try {
        c.smem.emplace(tensor, synthesize_buffer(g_.tensor(tensor), acc, cat_));
      } catch (const Error&) {
        return;
      }
    }
    for (std::size_t i = 0; i < g_.ops.size(); ++i) {
      const OpNode& o = g_.ops[i];
      if (o.kind != OpKind::Rearrange) continue;
      auto in = s.asg.tensors.find(o.operands[0]);
      auto out = s.asg.tensors.find(o.result);
      if (in == s.asg.tensors.end() || out == s.asg.tensors.end()) continue;
      TensorDecl buf = g_.tensor(o.result);
      buf.scope = Scope::Shared;
      try {
        TensorDecl reg = buf;
        reg.scope = Scope::Register;
        const Instruction st = candidates_for_copy(cat_, reg, buf).back();
        const Instruction ld = candidates_for_copy(cat_, buf, reg).back();
        std::vector<SmemAccess> acc{{static_cast<int>(i), in->second, st, true},
                                    {static_cast<int>(i), out->second, ld, false}};
        c.staging.emplace(static_cast<int>(i), synthesize_buffer(buf, acc, cat_));
      } catch (const Error&) {
      }
    }
    c.assignment = std::move(s.asg);
    leaves_.push_back(std::move(c));
  }

  void search(State s) {
    while (true) {
      if (leaves_.size() >= limit_ || s.dead) return;
      if (s.comp == comps_.size()) {
        finish(s);
        return;
      }
      if (!s.seeded) {
        seed(s);
        s.seeded = true;
        if (s.dead) return;
        update_ready(s);
      }
      if (s.ready.empty()) {
        std::string left;
        for (int i : comps_[s.comp].ops)
          if (!s.solved[static_cast<std::size_t>(i)]) left += " " + std::to_string(i);
        if (!left.empty()) fail(Errc::UnsolvedResidual, "ops without a reachable anchor:" + left);
        ++s.comp;
        s.seeded = false;
        continue;
      }
      const int i = s.ready.front();
      s.ready.pop_front();
      const OpNode& o = op(i);
      if (o.kind == OpKind::Copy && !is_reg_copy(g_, o)) {
        for (const auto& ins : candidates(i)) {
          auto next = try_copy(s, i, ins);
          if (!next || next->dead) continue;
          next->solved[static_cast<std::size_t>(i)] = 1;
          update_ready(*next);
          search(std::move(*next));
          if (leaves_.size() >= limit_) return;
        }
        return;
      }
      solve_fixed(s, i);
      s.solved[static_cast<std::size_t>(i)] = 1;
      update_ready(s);
    }
  }
};

std::vector<Candidate> run_engine(const ProgramGraph& g, const Catalog& cat, bool narrowest, std::size_t limit,
                                  bool keep_conflicts) {
  return Engine(std::make_shared<const ProgramGraph>(g), cat, narrowest, limit, keep_conflicts).run();
}

std::map<int, std::string> choice_key(const Assignment& a) {
  std::map<int, std::string> k;
  for (const auto& [i, c] : a.copies)
    if (c.instruction) k[i] = c.instruction->name;
  return k;
}

// Inserts `node` at `pos`; loop membership follows the op at index `member`.
void insert_op(ProgramGraph& g, std::size_t pos, OpNode node, std::size_t member) {
  for (auto& l : g.loops) {
    if (l.begin <= member && member < l.end) {
      ++l.end;
    } else if (l.begin >= pos) {
      ++l.begin;
      ++l.end;
    }
  }
  g.ops.insert(g.ops.begin() + static_cast<std::ptrdiff_t>(pos), std::move(node));
}

std::string fresh_name(const ProgramGraph& g, const std::string& base) {
  std::string name = base;
  for (int k = 2; g.find_tensor(name) >= 0; ++k) name = base + std::to_string(k);
  return name;
}

}  // namespace

Assignment propagate(const ProgramGraph& g, const Catalog& cat, bool strict) {
  auto leaves = run_engine(g, cat, false, 1, true);
  if (leaves.empty()) fail(Errc::NoInstructionAvailable, "no instruction choice satisfies every copy");
  Assignment a = std::move(leaves.front().assignment);
  if (strict && !a.conflicts.empty()) {
    const Conflict& c = a.conflicts.front();
    fail(Errc::ConflictDetected, "op " + std::to_string(c.op) + " (" + std::string(op_kind_name(g.ops[static_cast<std::size_t>(c.op)].kind)) +
                                     "): tensor '" + g.tensor(c.tensor).name + "' has layout " + to_string(c.existing) +
                                     " but needs " + to_string(c.proposed));
  }
  return a;
}

Patch resolve_conflicts(const ProgramGraph& g, const Assignment& a) {
  Patch p{g, {}};
  std::vector<Conflict> cs = a.conflicts;
  std::stable_sort(cs.begin(), cs.end(), [](const Conflict& x, const Conflict& y) { return x.op > y.op; });
  std::set<std::tuple<int, int, bool>> seen;
  std::map<int, std::size_t> shift;  // original op -> ops inserted before it
  std::set<int> fresh;
  for (const auto& c : cs) {
    if (!seen.insert({c.op, c.tensor, c.on_result}).second) continue;
    const std::size_t at = static_cast<std::size_t>(c.op) + shift[c.op];
    TensorDecl d = p.graph.tensor(c.tensor);
    d.scope = Scope::Register;
    d.layout.reset();
    d.buffer.clear();
    OpNode r;
    r.kind = OpKind::Rearrange;
    r.trip = p.graph.ops[at].trip;
    r.line = p.graph.ops[at].line;
    if (!c.on_result) {
      d.name = fresh_name(p.graph, d.name + "_r");
      const int nt = p.graph.add_tensor(d);
      fresh.insert(nt);
      for (int& x : p.graph.ops[at].operands)
        if (x == c.tensor) x = nt;
      r.result = nt;
      r.operands = {c.tensor};
      r.target = c.proposed.layout;
      insert_op(p.graph, at, std::move(r), at);
      ++shift[c.op];
    } else {
      d.name = fresh_name(p.graph, d.name + "_p");
      const int nt = p.graph.add_tensor(d);
      fresh.insert(nt);
      p.graph.ops[at].result = nt;
      r.result = c.tensor;
      r.operands = {nt};
      r.target = c.existing.layout;
      insert_op(p.graph, at + 1, std::move(r), at);
    }
  }
  for (std::size_t i = 0; i < p.graph.ops.size(); ++i) {
    const OpNode& o = p.graph.ops[i];
    if (o.kind == OpKind::Rearrange && (fresh.count(o.result) || fresh.count(o.operands[0])))
      p.inserted.push_back(static_cast<int>(i));
  }
  return p;
}

std::vector<Candidate> expand_search(const ProgramGraph& g, const Catalog& cat, const SearchLimits& limits) {
  ProgramGraph work = eliminate_dead_code(g);
  const std::size_t original_tensors = work.tensors.size();
  for (int round = 0; round < 4; ++round) {
    auto probe = run_engine(work, cat, false, 1, true);
    if (probe.empty() || probe.front().assignment.conflicts.empty()) break;
    work = resolve_conflicts(work, probe.front().assignment).graph;
  }
  auto graph = std::make_shared<const ProgramGraph>(work);
  std::vector<Candidate> leaves = Engine(graph, cat, false, limits.max_candidates, false).run();
  if (limits.max_candidates > 0) {
    auto fb = Engine(graph, cat, true, 1, false).run();
    if (!fb.empty()) {
      const auto key = choice_key(fb.front().assignment);
      auto hit = std::find_if(leaves.begin(), leaves.end(), [&](const Candidate& c) { return choice_key(c.assignment) == key; });
      if (hit != leaves.end()) {
        hit->fallback = true;
      } else if (leaves.size() < limits.max_candidates) {
        fb.front().fallback = true;
        leaves.push_back(std::move(fb.front()));
      } else if (limits.max_candidates >= 2) {
        fb.front().fallback = true;
        leaves.back() = std::move(fb.front());
      }
    }
  }
  std::vector<int> inserted;
  for (std::size_t i = 0; i < work.ops.size(); ++i) {
    const OpNode& o = work.ops[i];
    if (o.kind == OpKind::Rearrange &&
        (static_cast<std::size_t>(o.result) >= original_tensors || static_cast<std::size_t>(o.operands[0]) >= original_tensors))
      inserted.push_back(static_cast<int>(i));
  }
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    leaves[i].index = static_cast<int>(i);
    leaves[i].rearranges = inserted;
  }
  return leaves;
}

}  // namespace laysyn
