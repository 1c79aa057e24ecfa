#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "laysyn/catalog.hpp"
#include "laysyn/tv_synthesis.hpp"

namespace laysyn {

struct Latency {
  int64_t issue = 1;
  int64_t completion = 1;
};

struct LatencyTable {
  std::map<std::string, Latency> instructions;
  Latency alu{1, 4};
  Latency shared_store{1, 1};  // narrowest register -> shared copy
  Latency shared_load{1, 1};   // narrowest shared -> register copy

  static LatencyTable from_catalog(const Catalog& cat);
  Latency of(const Instruction& ins) const;
  /// Multiplies every entry by k > 0.
  LatencyTable scaled(int64_t k) const;
};

/// Issues of `ins` per thread for a copy whose source side is `src`,
/// times the op's loop trip count.
int64_t count_invocations(const OpNode& op, const TvLayout& src, const Instruction& ins);
/// Mma issues per warp for a gemm, times the loop trip count.
int64_t count_invocations(const OpNode& op, const GemmTiling& t);

/// One step of the scanned sequence. `deps` are earlier positions whose
/// results this step reads.
struct SeqOp {
  int op = -1;
  int64_t invocations = 0;
  int64_t issue = 0;       // total issue cycles
  int64_t completion = 0;  // latency after the last issue
  std::vector<int> deps;
};

struct OpCost {
  int op = -1;
  int64_t invocations = 0;
  int64_t issue = 0;
  int64_t stall = 0;
  int64_t start = 0;  // first issue cycle
  int64_t issued = 0; // L after this op
  int64_t done = 0;   // completion cycle
  std::vector<int> in_flight;  // ops still running when this one starts
};

struct CostEstimate {
  int64_t total_cycles = 0;
  std::vector<OpCost> ops;
};

/// Lowers a candidate to its issue sequence: declarations are skipped and
/// every read depends on the latest earlier writer of that tensor.
std::vector<SeqOp> lower(const Candidate& c, const LatencyTable& table);

/// Single issue stream; an op waits for the completion of any in-flight op
/// it reads from. The total includes completions still pending at the end.
CostEstimate schedule(const std::vector<SeqOp>& seq);

CostEstimate estimate(const Candidate& c, const LatencyTable& table);

/// Fills each candidate's cost and sorts by (cost, index).
void rank(std::vector<Candidate>& cands, const LatencyTable& table);

}  // namespace laysyn
