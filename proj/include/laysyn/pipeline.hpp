#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "laysyn/catalog.hpp"
#include "laysyn/cost_model.hpp"
#include "laysyn/program.hpp"
#include "laysyn/tv_synthesis.hpp"

namespace laysyn {

inline constexpr int kReportVersion = 1;

struct PipelineOptions {
  std::size_t max_candidates = 64;
  bool all_candidates = false;
};

struct PipelineResult {
  ProgramGraph program;
  std::string arch;
  std::vector<Diagnostic> diagnostics;  // validation problems and thrown errors
  std::vector<Candidate> ranked;        // cheapest first
  std::vector<CostEstimate> costs;      // parallel to ranked
  bool ok() const { return diagnostics.empty() && !ranked.empty(); }
};

/// validate, dead-code elimination, search, shared layouts and ranking. Errors
/// raised by any stage become diagnostics; nothing is thrown.
PipelineResult run_pipeline(const ProgramGraph& g, const Catalog& cat, const PipelineOptions& opts = {});

std::string report_json(const PipelineResult& r, const PipelineOptions& opts = {});
std::string report_text(const PipelineResult& r, const PipelineOptions& opts = {});

/// Constraints touching op `index`, the layouts solved for its tensors and,
/// for copies, the derivation of the solved side. Throws UnknownOp.
std::string explain(const ProgramGraph& g, const Catalog& cat, int index);

}  // namespace laysyn
