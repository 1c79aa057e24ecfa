#include "laysyn/pipeline.hpp"

#include <algorithm>
#include <json.hpp>
#include <sstream>

#include "laysyn/error.hpp"

namespace laysyn {

using nlohmann::json;

namespace {

std::string diag_kind(const Error& e) { return std::string(errc_name(e.code())); }

json swizzle_json(const Swizzle& s) { return json{{"bits", s.bits}, {"base", s.base}, {"shift", s.shift}}; }

json smem_json(const SmemLayout& s) {
  json acc = json::array();
  for (const auto& a : s.accesses)
    acc.push_back({{"op", a.op},
                   {"width_bytes", a.width},
                   {"phases", a.phases},
                   {"max_way", a.max_way},
                   {"max_way_identity", a.max_way_identity}});
  return json{{"constraint", to_string(s.constraint)},
              {"layout", to_string(s.m)},
              {"swizzle", swizzle_json(s.swizzle)},
              {"conflicts", s.conflicts},
              {"identity_conflicts", s.identity_conflicts},
              {"tma", s.tma},
              {"accesses", acc}};
}

int max_way_for(const Candidate& c, int op) {
  int w = 0;
  for (const auto& [t, s] : c.smem)
    for (const auto& a : s.accesses)
      if (a.op == op) w = std::max(w, a.max_way);
  return w;
}

json cost_json(const ProgramGraph& g, const CostEstimate& e) {
  json ops = json::array();
  for (const auto& o : e.ops)
    ops.push_back({{"op", o.op},
                   {"kind", op_kind_name(g.ops[static_cast<std::size_t>(o.op)].kind)},
                   {"invocations", o.invocations},
                   {"issue", o.issue},
                   {"stall", o.stall},
                   {"start", o.start},
                   {"issued", o.issued},
                   {"done", o.done},
                   {"in_flight", o.in_flight}});
  return json{{"total_cycles", e.total_cycles}, {"ops", ops}};
}

json candidate_json(const Candidate& c, const CostEstimate& e) {
  const ProgramGraph& g = *c.graph;
  const Assignment& a = c.assignment;
  auto name = [&](int t) { return g.tensor(t).name; };
  json tensors = json::object();
  for (const auto& [t, tv] : a.tensors) tensors[name(t)] = to_string(tv);
  json shared = json::object();
  for (const auto& [t, s] : c.smem) shared[name(t)] = smem_json(s);
  json copies = json::array();
  for (const auto& [op, ch] : a.copies) {
    const OpNode& o = g.ops[static_cast<std::size_t>(op)];
    json j{{"op", op}, {"src", name(o.operands[0])}, {"dst", name(o.operands[1])}};
    if (ch.instruction) {
      j["instruction"] = ch.instruction->name;
      j["vector_bytes"] = ch.instruction->vector_bytes;
    }
    if (ch.src) j["src_layout"] = to_string(*ch.src);
    if (ch.dst) j["dst_layout"] = to_string(*ch.dst);
    const bool shared_side = g.tensor(o.operands[0]).scope == Scope::Shared || g.tensor(o.operands[1]).scope == Scope::Shared;
    if (shared_side) j["max_way_conflict"] = max_way_for(c, op);
    copies.push_back(j);
  }
  json gemms = json::array();
  for (const auto& [op, t] : a.gemms)
    gemms.push_back({{"op", op},
                     {"mma", t.mma.name},
                     {"warps", {t.warps_m, t.warps_n}},
                     {"reps", {t.reps_m, t.reps_n, t.reps_k}}});
  json staging = json::object();
  for (const auto& [op, s] : c.staging) staging[std::to_string(op)] = smem_json(s);
  return json{{"index", c.index},
              {"fallback", c.fallback},
              {"cost_cycles", c.cost ? json(*c.cost) : json(nullptr)},
              {"tensors", tensors},
              {"shared", shared},
              {"copies", copies},
              {"gemms", gemms},
              {"staging", staging},
              {"cost", cost_json(g, e)}};
}

}  // namespace

PipelineResult run_pipeline(const ProgramGraph& g, const Catalog& cat, const PipelineOptions& opts) {
  PipelineResult r;
  r.program = g;
  r.arch = cat.arch;
  r.diagnostics = validate(g);
  if (!r.diagnostics.empty()) return r;
  try {
    r.ranked = expand_search(g, cat, {opts.max_candidates});
    const LatencyTable table = LatencyTable::from_catalog(cat);
    rank(r.ranked, table);
    for (const auto& c : r.ranked) r.costs.push_back(estimate(c, table));
    if (r.ranked.empty() && opts.max_candidates > 0)
      r.diagnostics.push_back({"NoInstructionAvailable", -1, "no candidate satisfies every constraint"});
  } catch (const Error& e) {
    r.ranked.clear();
    r.costs.clear();
    r.diagnostics.push_back({diag_kind(e), -1, e.detail()});
  }
  return r;
}

std::string report_json(const PipelineResult& r, const PipelineOptions& opts) {
  json diags = json::array();
  for (const auto& d : r.diagnostics) diags.push_back({{"kind", d.kind}, {"op", d.op_index}, {"message", d.message}});
  int compute = 0;
  for (const auto& o : r.program.ops)
    if (!is_declaration(o.kind)) ++compute;
  json j{{"schema", "laysyn-report"},
         {"version", kReportVersion},
         {"arch", r.arch},
         {"program", {{"threads", r.program.threads}, {"ops", r.program.ops.size()}, {"compute_ops", compute}}},
         {"candidate_count", r.ranked.size()},
         {"diagnostics", diags},
         {"best", nullptr},
         {"rearranges", json::array()},
         {"program_after_rearranges", nullptr},
         {"ranking", json::array()}};
  if (!r.ranked.empty()) {
    const Candidate& best = r.ranked.front();
    j["best"] = candidate_json(best, r.costs.front());
    json rs = json::array();
    for (int i : best.rearranges) {
      const OpNode& o = best.graph->ops[static_cast<std::size_t>(i)];
      rs.push_back({{"op", i},
                    {"source", best.graph->tensor(o.operands[0]).name},
                    {"result", best.graph->tensor(o.result).name},
                    {"target", o.target ? to_string(*o.target) : ""}});
    }
    j["rearranges"] = rs;
    j["program_after_rearranges"] = print_program(*best.graph);
    json ranking = json::array();
    for (const auto& c : r.ranked) ranking.push_back({{"index", c.index}, {"cost_cycles", *c.cost}, {"fallback", c.fallback}});
    j["ranking"] = ranking;
    if (opts.all_candidates) {
      json all = json::array();
      for (std::size_t i = 0; i < r.ranked.size(); ++i) all.push_back(candidate_json(r.ranked[i], r.costs[i]));
      j["candidates"] = all;
    }
  }
  return j.dump(2) + "\n";
}

std::string report_text(const PipelineResult& r, const PipelineOptions& opts) {
  std::ostringstream os;
  os << "arch " << r.arch << ", " << r.program.threads << " threads, " << r.ranked.size() << " candidates\n";
  for (const auto& d : r.diagnostics)
    os << "diagnostic " << d.kind << (d.op_index >= 0 ? " at op " + std::to_string(d.op_index) : "") << ": " << d.message << "\n";
  auto one = [&](const Candidate& c, const CostEstimate& e) {
    const ProgramGraph& g = *c.graph;
    os << "candidate " << c.index << (c.fallback ? " (fallback)" : "") << ": " << e.total_cycles << " cycles\n";
    for (const auto& [t, tv] : c.assignment.tensors) os << "  register " << g.tensor(t).name << " " << to_string(tv) << "\n";
    for (const auto& [t, s] : c.smem)
      os << "  shared " << g.tensor(t).name << " " << to_string(s.m) << " swizzle " << to_string(s.swizzle) << ", conflicts "
         << s.conflicts << " (identity " << s.identity_conflicts << ")" << (s.tma ? ", bulk copy" : "") << "\n";
    for (const auto& [op, ch] : c.assignment.copies) {
      const OpNode& o = g.ops[static_cast<std::size_t>(op)];
      os << "  op " << op << " copy " << g.tensor(o.operands[0]).name << " -> " << g.tensor(o.operands[1]).name << ": "
         << (ch.instruction ? ch.instruction->name : std::string("register move"));
      if (ch.instruction) os << ", " << ch.instruction->vector_bytes << "B";
      const bool shared = g.tensor(o.operands[0]).scope == Scope::Shared || g.tensor(o.operands[1]).scope == Scope::Shared;
      if (shared) os << ", " << max_way_for(c, op) << "-way";
      os << "\n";
    }
    for (const auto& [op, t] : c.assignment.gemms)
      os << "  op " << op << " gemm: " << t.mma.name << ", warps " << t.warps_m << "x" << t.warps_n << ", reps " << t.reps_m
         << "x" << t.reps_n << "x" << t.reps_k << "\n";
    for (int i : c.rearranges) os << "  op " << i << " rearrange inserted\n";
  };
  if (!r.ranked.empty()) {
    os << "best ";
    one(r.ranked.front(), r.costs.front());
    if (opts.all_candidates)
      for (std::size_t i = 1; i < r.ranked.size(); ++i) one(r.ranked[i], r.costs[i]);
  }
  return os.str();
}

std::string explain(const ProgramGraph& g, const Catalog& cat, int index) {
  if (index < 0 || static_cast<std::size_t>(index) >= g.ops.size())
    fail(Errc::UnknownOp, "op " + std::to_string(index) + " does not exist (program has " + std::to_string(g.ops.size()) + " ops)");
  const OpNode& op = g.ops[static_cast<std::size_t>(index)];
  std::ostringstream os;
  auto name = [&](int t) { return g.tensor(t).name; };
  os << "op " << index << " (line " << op.line << "): " << op_kind_name(op.kind) << "\n";
  if (is_declaration(op.kind)) {
    os << "declaration of " << name(op.result) << "; no layout constraints\n";
    return os.str();
  }
  for (const auto& comp : partition_components(g)) {
    if (std::find(comp.ops.begin(), comp.ops.end(), index) == comp.ops.end()) continue;
    for (const auto& c : build_constraints(g, comp)) {
      if (c.op != index) continue;
      os << "constraint " << constraint_kind_name(c.kind) << " over";
      for (int t : c.tensors) os << " " << name(t);
      if (c.dim >= 0) os << " (dim " << c.dim << ")";
      os << "\n";
    }
  }
  Assignment a;
  try {
    a = propagate(g, cat, false);
  } catch (const Error& e) {
    os << "propagation failed: " << e.what() << "\n";
    return os.str();
  }
  for (int t : op.reads())
    if (auto it = a.tensors.find(t); it != a.tensors.end()) os << "  " << name(t) << " = " << to_string(it->second) << "\n";
  for (int t : op.writes())
    if (auto it = a.tensors.find(t); it != a.tensors.end() && std::find(op.reads().begin(), op.reads().end(), t) == op.reads().end())
      os << "  " << name(t) << " = " << to_string(it->second) << "\n";
  for (const auto& c : a.conflicts)
    if (c.op == index)
      os << "  conflict on " << name(c.tensor) << ": has " << to_string(c.existing) << ", needs " << to_string(c.proposed) << "\n";

  if (op.kind == OpKind::Gemm) {
    const GemmTiling& t = a.gemms.at(index);
    const Instruction& I = t.mma;
    os << "  mma " << I.name << ", warps " << t.warps_m << "x" << t.warps_n << ", reps " << t.reps_m << "x" << t.reps_n << "x"
       << t.reps_k << "\n";
    // Instruction tile -> tensor index for the first invocation of warp 0.
    auto composite = [&](const TvLayout& f, const Layout& frag) {
      const auto th = split_leaves(f.layout.mode(0), frag.mode(0).size());
      const auto va = split_leaves(f.layout.mode(1), frag.mode(1).size());
      const Layout head = make_tuple_layout({Layout::from_leaves(th.first), Layout::from_leaves(va.first)});
      return compose(head, inverse(frag));
    };
    const Layout cc = composite(t.c, *I.tv_c), ca = composite(t.a, *I.tv_a), cb = composite(t.b, *I.tv_b);
    const std::vector<int64_t> ic{I.m, I.n}, ia{I.m, I.k}, ib{I.n, I.k};
    auto dm = [](const Layout& l, int in, int out, const std::vector<int64_t>& ie, const std::vector<int64_t>& oe) {
      return to_string(dim_restrict(l, in, out, ie, oe));
    };
    os << "  M: C|M " << dm(cc, 0, 0, ic, t.c.tile) << " = A|M " << dm(ca, 0, 0, ia, t.a.tile) << "\n";
    os << "  N: C|N " << dm(cc, 1, 1, ic, t.c.tile) << " = B|N " << dm(cb, 0, 0, ib, t.b.tile) << "\n";
    os << "  K: A|K " << dm(ca, 1, 1, ia, t.a.tile) << " = B|K " << dm(cb, 1, 1, ib, t.b.tile) << "\n";
  }
  if (op.kind == OpKind::Copy) {
    auto it = a.copies.find(index);
    if (it == a.copies.end() || !it->second.instruction) {
      os << "  register move; both sides share one layout\n";
      return os.str();
    }
    const CopyChoice& ch = it->second;
    const Instruction& I = *ch.instruction;
    const bool anchored = a.anchors.count(index) > 0;
    // Without an anchor the register side was the one already known.
    const bool from_src = anchored ? a.anchors.at(index).src : g.tensor(op.operands[0]).scope == Scope::Register;
    os << "  instruction " << I.name << " (" << I.vector_bytes << "B)\n";
    if (anchored) os << "  anchor: coalesced layout on " << name(a.anchors.at(index).tensor) << "\n";
    const TvLayout& known = from_src ? *ch.src : *ch.dst;
    const Layout& p = from_src ? *I.tv_src : *I.tv_dst;
    const Layout& q = from_src ? *I.tv_dst : *I.tv_src;
    os << "  known " << (from_src ? "source" : "destination") << " g = " << to_string(known) << "\n";
    os << "  p = " << to_string(p) << ", q = " << to_string(q) << "\n";
    os << "  f = g o p^-1 o q with p^-1 = " << to_string(inverse(p)) << "\n";
    os << "  solved " << (from_src ? "destination" : "source") << " f = " << to_string(from_src ? *ch.dst : *ch.src) << "\n";
    for (int k = 0; k < 2; ++k) {
      const int t = op.operands[static_cast<std::size_t>(k)];
      const TensorDecl& d = g.tensor(t);
      if (d.scope != Scope::Shared || I.tma) continue;
      std::vector<SmemAccess> before;
      for (const auto& [o2, c2] : a.copies) {
        if (o2 >= index || !c2.instruction) continue;
        const OpNode& other = g.ops[static_cast<std::size_t>(o2)];
        for (int k2 = 0; k2 < 2; ++k2)
          if (other.operands[static_cast<std::size_t>(k2)] == t)
            before.push_back({o2, k2 == 0 ? *c2.src : *c2.dst, *c2.instruction, k2 == 1});
      }
      const LayoutConstraint prior = fold_constraints(d.extents(), d.dtype.bits, before);
      const LayoutConstraint built = build_constraint(k == 0 ? *ch.src : *ch.dst, I.vector_elems(d.dtype.bits));
      os << "  " << d.name << " constraint before " << to_string(prior) << "\n";
      os << "  " << d.name << " constraint from this copy " << to_string(built) << "\n";
      try {
        os << "  " << d.name << " unified " << to_string(unify(prior, built)) << "\n";
      } catch (const Error& e) {
        os << "  " << d.name << " unification failed: " << e.what() << "\n";
      }
    }
  }
  return os.str();
}

}  // namespace laysyn
