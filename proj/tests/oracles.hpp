#pragma once

// Brute-force reference checks. They enumerate element tables directly and
// never go through compose, inverse or complement.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "laysyn/catalog.hpp"
#include "laysyn/cost_model.hpp"
#include "laysyn/tv_layout.hpp"
#include "laysyn/tv_synthesis.hpp"

namespace oracle {

using laysyn::Instruction;
using laysyn::Layout;
using laysyn::TvLayout;

// Tile index -> the (thread, value) of a two-mode layout that addresses it.
inline std::map<int64_t, std::pair<int64_t, int64_t>> invert_table(const Layout& l) {
  std::map<int64_t, std::pair<int64_t, int64_t>> out;
  const int64_t T = l.mode(0).size(), V = l.mode(1).size();
  for (int64_t v = 0; v < V; ++v)
    for (int64_t t = 0; t < T; ++t) out.emplace(l(t + T * v), std::make_pair(t, v));
  return out;
}

// Empty when executing `ins` over `src` puts every element where `dst` says.
// Thread t = ti + TI*tr and value v = vi + VI*vr belong to invocation (tr, vr).
inline std::string copy_mismatch(const TvLayout& src, const TvLayout& dst, const Instruction& ins) {
  const Layout& p = *ins.tv_src;
  const Layout& q = *ins.tv_dst;
  const int64_t TI = p.mode(0).size(), VI = p.mode(1).size();
  if (src.threads() != dst.threads() || src.values() != dst.values()) return "thread or value counts differ";
  if (src.threads() % TI != 0 || src.values() % VI != 0) return "instruction does not tile the layout";
  const auto qinv = invert_table(q);
  for (int64_t tr = 0; tr < src.threads() / TI; ++tr)
    for (int64_t vr = 0; vr < src.values() / VI; ++vr)
      for (int64_t vi = 0; vi < VI; ++vi)
        for (int64_t ti = 0; ti < TI; ++ti) {
          const auto hit = qinv.find(p(ti + TI * vi));
          if (hit == qinv.end()) return "instruction tile index missing from destination";
          const auto [td, vd] = hit->second;
          const int64_t x = src(ti + TI * tr, vi + VI * vr);
          const int64_t y = dst(td + TI * tr, vd + VI * vr);
          if (x != y)
            return "thread " + std::to_string(ti + TI * tr) + " value " + std::to_string(vi + VI * vr) + " moves element " +
                   std::to_string(x) + " to a slot holding " + std::to_string(y);
        }
  return {};
}

// Empty when the three gemm layouts describe whole mma invocations: for each
// warp and (rm, rn, rk) the C, A and B blocks are the instruction fragments
// at a common (m0, n0, k0), every C element is owned exactly once and each
// (warp, rm, rn) sweeps all of K.
inline std::string gemm_mismatch(const laysyn::GemmTiling& t, int64_t M, int64_t N, int64_t K, int64_t threads) {
  const Instruction& I = t.mma;
  const int64_t lanes = I.threads;
  const int64_t vc = I.tv_c->mode(1).size(), va = I.tv_a->mode(1).size(), vb = I.tv_b->mode(1).size();
  if (t.c.threads() != threads || t.a.threads() != threads || t.b.threads() != threads) return "thread count";
  if (t.c.values() != vc * t.reps_m * t.reps_n) return "C value count";
  if (t.a.values() != va * t.reps_m * t.reps_k) return "A value count";
  if (t.b.values() != vb * t.reps_n * t.reps_k) return "B value count";

  std::vector<int> owned(static_cast<std::size_t>(M * N), 0);
  for (int64_t th = 0; th < threads; ++th)
    for (int64_t v = 0; v < t.c.values(); ++v) ++owned.at(static_cast<std::size_t>(t.c(th, v)));
  for (int c : owned)
    if (c != 1) return "C element owned " + std::to_string(c) + " times";

  // Origin of one fragment block; -1 when inconsistent.
  auto origin = [&](const TvLayout& f, const Layout& frag, int64_t rows, int64_t frag_rows, int64_t th0, int64_t block,
                    int64_t vals) -> std::pair<int64_t, int64_t> {
    std::set<std::pair<int64_t, int64_t>> seen;
    for (int64_t l = 0; l < lanes; ++l)
      for (int64_t i = 0; i < vals; ++i) {
        const int64_t pos = f(th0 + l, i + vals * block);
        const int64_t fi = frag(l + lanes * i);
        seen.emplace(pos % rows - fi % frag_rows, pos / rows - fi / frag_rows);
      }
    if (seen.size() != 1) return {-1, -1};
    return *seen.begin();
  };
  const int64_t RM = t.reps_m, RN = t.reps_n, RK = t.reps_k;
  for (int64_t w = 0; w < threads / lanes; ++w)
    for (int64_t rm = 0; rm < RM; ++rm)
      for (int64_t rn = 0; rn < RN; ++rn) {
        std::set<int64_t> ks;
        const auto [m0, n0] = origin(t.c, *I.tv_c, M, I.m, w * lanes, rn + RN * rm, vc);
        if (m0 < 0 || m0 % I.m != 0 || n0 % I.n != 0) return "C block is not one fragment";
        for (int64_t rk = 0; rk < RK; ++rk) {
          const auto [am, ak] = origin(t.a, *I.tv_a, M, I.m, w * lanes, rk + RK * rm, va);
          const auto [bn, bk] = origin(t.b, *I.tv_b, N, I.n, w * lanes, rk + RK * rn, vb);
          if (am != m0 || bn != n0) return "A or B block is not aligned with C";
          if (ak != bk || ak < 0 || ak % I.k != 0) return "A and B blocks disagree on k";
          ks.insert(ak / I.k);
        }
        if (static_cast<int64_t>(ks.size()) != K / I.k) return "K not swept";
      }
  return {};
}

// Each thread holds exactly the reduced coordinates of what it held before,
// once each.
inline bool reduce_matches(const TvLayout& f, const TvLayout& proj, int dim) {
  std::vector<int64_t> out_ext = f.tile;
  out_ext[static_cast<std::size_t>(dim)] = 1;
  if (proj.tile != out_ext || proj.threads() != f.threads()) return false;
  for (int64_t t = 0; t < f.threads(); ++t) {
    std::set<int64_t> want, got;
    for (int64_t v = 0; v < f.values(); ++v) {
      int64_t idx = f(t, v), enc = 0, scale = 1;
      for (std::size_t k = 0; k < f.tile.size(); ++k) {
        const int64_t c = idx % f.tile[k];
        idx /= f.tile[k];
        if (static_cast<int>(k) != dim) enc += c * scale;
        scale *= out_ext[k];
      }
      want.insert(enc);
    }
    for (int64_t v = 0; v < proj.values(); ++v) got.insert(proj(t, v));
    if (want != got || static_cast<int64_t>(got.size()) != proj.values()) return false;
  }
  return true;
}

// Cycle-stepped reference: one issue stream; the next op may start at cycle
// t once the stream is free and every op it reads from has completed.
inline int64_t simulate(const std::vector<laysyn::SeqOp>& seq) {
  std::vector<int64_t> done(seq.size(), -1);
  int64_t t = 0, stream_free = 0, last = 0;
  std::size_t next = 0;
  while (next < seq.size()) {
    bool ok = t >= stream_free;
    for (int d : seq[next].deps)
      if (done[static_cast<std::size_t>(d)] > t) ok = false;
    if (ok) {
      stream_free = t + seq[next].issue;
      done[next] = stream_free + seq[next].completion;
      last = std::max(last, done[next]);
      ++next;
    } else {
      ++t;
    }
  }
  return std::max(last, stream_free);
}

// Every layout constraint of a candidate checked pointwise: copies move each
// element where both sides say, gemm layouts form whole mma invocations,
// elementwise members agree and reductions project. Empty when sound.
inline std::vector<std::string> candidate_violations(const laysyn::Candidate& c) {
  using namespace laysyn;
  std::vector<std::string> out;
  const ProgramGraph& g = *c.graph;
  const Assignment& a = c.assignment;
  auto tv = [&](int t) -> const TvLayout* {
    auto it = a.tensors.find(t);
    return it == a.tensors.end() ? nullptr : &it->second;
  };
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    const OpNode& o = g.ops[i];
    const int op = static_cast<int>(i);
    const std::string where = "op " + std::to_string(op) + ": ";
    switch (o.kind) {
      case OpKind::Copy: {
        auto it = a.copies.find(op);
        const TvLayout *s = tv(o.operands[0]), *d = tv(o.operands[1]);
        if (it == a.copies.end() || !it->second.instruction) {
          if (!s || !d || !tv_equal(*s, *d)) out.push_back(where + "register copy sides differ");
          break;
        }
        const auto& ch = it->second;
        if (!ch.src || !ch.dst) {
          out.push_back(where + "copy side missing");
          break;
        }
        if (auto m = copy_mismatch(*ch.src, *ch.dst, *ch.instruction); !m.empty()) out.push_back(where + m);
        if (s && !tv_equal(*s, *ch.src)) out.push_back(where + "source register layout differs from copy");
        if (d && !tv_equal(*d, *ch.dst)) out.push_back(where + "destination register layout differs from copy");
        for (int k = 0; k < 2; ++k) {
          const TensorDecl& t = g.tensor(o.operands[static_cast<std::size_t>(k)]);
          if (t.scope != Scope::Global || !t.layout) continue;
          const TvLayout& f = k == 0 ? *ch.src : *ch.dst;
          const Layout& mem = *t.layout;
          const int64_t v = ch.instruction->vector_elems(t.dtype.bits);
          for (int64_t th = 0; th < f.threads(); ++th)
            for (int64_t j = 0; j + v <= f.values(); j += v)
              for (int64_t e = 1; e < v; ++e)
                if (mem(f(th, j + e)) != mem(f(th, j)) + e) {
                  out.push_back(where + "global vector not contiguous");
                  th = f.threads();
                  j = f.values();
                  break;
                }
        }
        break;
      }
      case OpKind::Gemm: {
        const GemmTiling& t = a.gemms.at(op);
        const auto ce = t.c.tile;
        if (auto m = gemm_mismatch(t, ce[0], ce[1], t.a.tile[1], g.threads); !m.empty()) out.push_back(where + m);
        const TvLayout *cc = tv(o.operands[0]), *aa = tv(o.operands[1]), *bb = tv(o.operands[2]);
        if (!cc || !tv_equal(*cc, t.c) || !aa || !tv_equal(*aa, t.a) || !bb || !tv_equal(*bb, t.b))
          out.push_back(where + "operand layouts differ from the gemm tiling");
        break;
      }
      case OpKind::Cast:
      case OpKind::Elementwise: {
        const TvLayout* r = tv(o.result);
        for (int x : o.operands)
          if (!r || !tv(x) || !tv_equal(*tv(x), *r)) out.push_back(where + "elementwise members differ");
        break;
      }
      case OpKind::Reduce: {
        const TvLayout *x = tv(o.operands[0]), *z = tv(o.result);
        if (!x || !z || !reduce_matches(*x, *z, o.reduce_dim)) out.push_back(where + "reduction is not a projection");
        break;
      }
      case OpKind::Rearrange: {
        const TvLayout* z = tv(o.result);
        if (o.target && (!z || z->layout != *o.target)) {
          if (!z || !tv_equal(*z, TvLayout{*o.target, z->tile})) out.push_back(where + "rearrange target not honoured");
        }
        break;
      }
      default: break;
    }
  }
  if (!a.conflicts.empty()) out.push_back("unresolved conflicts");
  return out;
}

}  // namespace oracle
