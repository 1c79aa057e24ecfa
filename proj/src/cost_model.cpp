#include "laysyn/cost_model.hpp"

#include <algorithm>

#include "laysyn/error.hpp"

namespace laysyn {

LatencyTable LatencyTable::from_catalog(const Catalog& cat) {
  LatencyTable t;
  t.alu = {cat.alu_issue_cycles, cat.alu_completion_cycles};
  int store_bytes = 1 << 30, load_bytes = 1 << 30;
  for (const auto& ins : cat.instructions) {
    t.instructions[ins.name] = {ins.issue_cycles, ins.completion_cycles};
    if (ins.category != InstrCategory::Copy || ins.tma) continue;
    if (ins.src_scope == Scope::Register && ins.dst_scope == Scope::Shared && ins.vector_bytes < store_bytes) {
      store_bytes = ins.vector_bytes;
      t.shared_store = {ins.issue_cycles, ins.completion_cycles};
    }
    if (ins.src_scope == Scope::Shared && ins.dst_scope == Scope::Register && ins.vector_bytes < load_bytes) {
      load_bytes = ins.vector_bytes;
      t.shared_load = {ins.issue_cycles, ins.completion_cycles};
    }
  }
  return t;
}

Latency LatencyTable::of(const Instruction& ins) const {
  auto it = instructions.find(ins.name);
  return it != instructions.end() ? it->second : Latency{ins.issue_cycles, ins.completion_cycles};
}

LatencyTable LatencyTable::scaled(int64_t k) const {
  if (k <= 0) fail(Errc::InvalidArgument, "latency scale must be positive");
  LatencyTable t = *this;
  auto s = [k](Latency& l) {
    l.issue *= k;
    l.completion *= k;
  };
  for (auto& [name, l] : t.instructions) s(l);
  s(t.alu);
  s(t.shared_store);
  s(t.shared_load);
  return t;
}

int64_t count_invocations(const OpNode& op, const TvLayout& src, const Instruction& ins) {
  if (!ins.tv_src) fail(Errc::InvalidArgument, ins.name + " is not a copy instruction");
  const int64_t per = ins.tv_src->mode(1).size();
  if (src.values() % per != 0)
    fail(Errc::NonDivisibleTile, std::to_string(src.values()) + " values per thread are not a multiple of " + ins.name +
                                     "'s " + std::to_string(per));
  return checked_mul(src.values() / per, op.trip);
}

int64_t count_invocations(const OpNode& op, const GemmTiling& t) {
  return checked_mul(checked_mul(t.reps_m * t.reps_n, t.reps_k), op.trip);
}

std::vector<SeqOp> lower(const Candidate& c, const LatencyTable& table) {
  const ProgramGraph& g = *c.graph;
  const Assignment& a = c.assignment;
  std::vector<SeqOp> seq;
  std::map<int, int> writer;  // tensor -> position of its latest writer
  auto values_of = [&](int tensor) -> int64_t {
    auto it = a.tensors.find(tensor);
    return it == a.tensors.end() ? 1 : it->second.values();
  };
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    const OpNode& o = g.ops[i];
    if (is_declaration(o.kind)) continue;
    SeqOp s;
    s.op = static_cast<int>(i);
    Latency lat = table.alu;
    switch (o.kind) {
      case OpKind::Copy: {
        auto it = a.copies.find(s.op);
        if (it != a.copies.end() && it->second.instruction) {
          lat = table.of(*it->second.instruction);
          s.invocations = count_invocations(o, *it->second.src, *it->second.instruction);
        } else {
          s.invocations = values_of(o.operands[0]) * o.trip;
        }
        break;
      }
      case OpKind::Gemm: {
        const GemmTiling& t = a.gemms.at(s.op);
        lat = table.of(t.mma);
        s.invocations = count_invocations(o, t);
        break;
      }
      case OpKind::Rearrange:
        // One narrow store and one narrow load per element through shared memory.
        lat = {table.shared_store.issue + table.shared_load.issue, table.shared_store.completion + table.shared_load.completion};
        s.invocations = values_of(o.result) * o.trip;
        break;
      default: s.invocations = values_of(o.operands[0]) * o.trip; break;
    }
    s.issue = checked_mul(s.invocations, lat.issue);
    s.completion = lat.completion;
    std::vector<int> deps;
    for (int t : o.reads())
      if (auto w = writer.find(t); w != writer.end()) deps.push_back(w->second);
    std::sort(deps.begin(), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
    s.deps = std::move(deps);
    for (int t : o.writes()) writer[t] = static_cast<int>(seq.size());
    seq.push_back(std::move(s));
  }
  return seq;
}

CostEstimate schedule(const std::vector<SeqOp>& seq) {
  CostEstimate e;
  int64_t L = 0, tail = 0;
  std::vector<int> flight;  // positions not yet known to be complete
  for (std::size_t k = 0; k < seq.size(); ++k) {
    const SeqOp& s = seq[k];
    OpCost c;
    c.op = s.op;
    c.invocations = s.invocations;
    c.issue = s.issue;
    int64_t ready = L;
    for (int d : s.deps) ready = std::max(ready, e.ops.at(static_cast<std::size_t>(d)).done);
    c.stall = ready - L;
    c.start = ready;
    std::erase_if(flight, [&](int p) { return e.ops[static_cast<std::size_t>(p)].done <= c.start; });
    for (int p : flight) c.in_flight.push_back(e.ops[static_cast<std::size_t>(p)].op);
    L = c.start + s.issue;
    c.issued = L;
    c.done = L + s.completion;
    tail = std::max(tail, c.done);
    flight.push_back(static_cast<int>(k));
    e.ops.push_back(std::move(c));
  }
  e.total_cycles = std::max(L, tail);
  return e;
}

CostEstimate estimate(const Candidate& c, const LatencyTable& table) { return schedule(lower(c, table)); }

void rank(std::vector<Candidate>& cands, const LatencyTable& table) {
  for (auto& c : cands) c.cost = estimate(c, table).total_cycles;
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tie(*a.cost, a.index) < std::tie(*b.cost, b.index);
  });
}

}  // namespace laysyn
