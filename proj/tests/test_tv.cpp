#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "laysyn/error.hpp"
#include "laysyn/tv_synthesis.hpp"
#include "oracles.hpp"

using namespace laysyn;

namespace {

std::string path(const std::string& rel) { return std::string(LAYSYN_SOURCE_DIR) + "/" + rel; }

std::string slurp(const std::string& rel) {
  std::ifstream in(path(rel));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const Catalog& sm80() {
  static const Catalog c = load_catalog(path("data/sm80.catalog"));
  return c;
}

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return Errc::InvalidArgument;
}

int op_of(const ProgramGraph& g, OpKind k, int nth = 0) {
  for (std::size_t i = 0; i < g.ops.size(); ++i)
    if (g.ops[i].kind == k && nth-- == 0) return static_cast<int>(i);
  return -1;
}

const TvLayout& layout_of(const ProgramGraph& g, const Assignment& a, const std::string& name) {
  return a.tensors.at(g.find_tensor(name));
}

ProgramGraph gemm_program(int64_t M, int64_t N, int64_t K, int64_t threads, const std::string& annotation = {}) {
  auto d = [](int64_t r, int64_t c) { return "(" + std::to_string(r) + "," + std::to_string(c) + ")"; };
  std::string text = "threads " + std::to_string(threads) + "\n" +
                     "ga = global_view a float16 " + d(M, K) + ":(" + std::to_string(K) + ",1)\n" +
                     "gb = global_view b float16 " + d(N, K) + ":(" + std::to_string(K) + ",1)\n" +
                     "gc = global_view c float32 " + d(M, N) + ":(" + std::to_string(N) + ",1)\n" +
                     "ra = register_tensor float16 " + d(M, K) + "\n" + "rb = register_tensor float16 " + d(N, K) + "\n" +
                     "rc = register_tensor float32 " + d(M, N) + "\n" +
                     "copy ga ra\ncopy gb rb\ngemm rc ra rb\ncopy rc gc\n" + annotation;
  return parse_program(text);
}

// Two gemms consume the f16 accumulator of a third under different warp grids.
const char* kTwoConsumers = R"(threads 128
ga = global_view a float16 (64,64):(64,1)
gb = global_view b float16 (64,64):(64,1)
gd = global_view d float16 (64,64):(64,1)
ge = global_view e float16 (64,64):(64,1)
gy = global_view y float32 (64,64):(64,1)
gz = global_view z float32 (64,64):(64,1)
ra = register_tensor float16 (64,64)
rb = register_tensor float16 (64,64)
rd = register_tensor float16 (64,64)
re = register_tensor float16 (64,64)
c0 = register_tensor float16 (64,64)
y = register_tensor float32 (64,64)
z = register_tensor float32 (64,64)
copy ga ra
copy gb rb
copy gd rd
copy ge re
gemm c0 ra rb
gemm y c0 rd
gemm z c0 re
copy y gy
copy z gz
annotate 18 thread_arrangement (2,2):(1,2)
annotate 19 thread_arrangement (1,4):(1,1)
)";

}  // namespace

TEST(Constraints, CountsPerOpKind) {
  auto g = parse_program(slurp("samples/flash_attn.prog"));
  std::size_t n = 0;
  std::map<ConstraintKind, int> kinds;
  for (const auto& c : partition_components(g))
    for (const auto& k : build_constraints(g, c)) {
      ++n;
      ++kinds[k.kind];
    }
  EXPECT_EQ(kinds[ConstraintKind::CopyEq], 8);
  EXPECT_EQ(kinds[ConstraintKind::GemmM], 2);
  EXPECT_EQ(kinds[ConstraintKind::GemmK], 2);
  EXPECT_EQ(kinds[ConstraintKind::ElemEq], 3);
  EXPECT_EQ(kinds[ConstraintKind::ReduceProj], 1);
  EXPECT_EQ(n, 8u + 6 + 3 + 1);
}

TEST(GemmAnchor, OracleAcrossShapes) {
  struct Case {
    int64_t M, N, K, T;
    std::string ann;
  };
  const std::vector<Case> cases{{64, 64, 32, 128, ""},   {128, 128, 32, 128, ""}, {64, 64, 64, 128, "annotate 8 thread_arrangement (2,2):(1,2)\n"},
                                {32, 64, 16, 256, ""},   {16, 8, 16, 32, ""},     {64, 128, 64, 128, "annotate 8 thread_arrangement (1,4):(1,1)\n"},
                                {128, 16, 48, 64, ""}};
  for (const auto& c : cases) {
    auto g = gemm_program(c.M, c.N, c.K, c.T, c.ann);
    auto t = init_gemm_anchor(g, op_of(g, OpKind::Gemm), sm80());
    EXPECT_EQ(t.mma.name, "mma.m16n8k16.f32.f16");
    EXPECT_EQ(oracle::gemm_mismatch(t, c.M, c.N, c.K, c.T), "") << c.M << "x" << c.N << "x" << c.K << " T=" << c.T;
    EXPECT_TRUE(tv_well_formed(t.c));
  }
}

TEST(GemmAnchor, SingleTileIsTheFragment) {
  auto g = gemm_program(16, 8, 16, 32);
  auto t = init_gemm_anchor(g, op_of(g, OpKind::Gemm), sm80());
  EXPECT_TRUE(tv_equal(t.c, TvLayout{*t.mma.tv_c, {16, 8}}));
  EXPECT_TRUE(tv_equal(t.a, TvLayout{*t.mma.tv_a, {16, 16}}));
  EXPECT_TRUE(tv_equal(t.b, TvLayout{*t.mma.tv_b, {8, 16}}));
}

TEST(GemmAnchor, WarpGrid) {
  auto g = gemm_program(64, 64, 32, 128);
  auto t = init_gemm_anchor(g, op_of(g, OpKind::Gemm), sm80());
  EXPECT_EQ(t.warps_m, 4);
  EXPECT_EQ(t.warps_n, 1);
  EXPECT_EQ(t.reps_m, 1);
  EXPECT_EQ(t.reps_n, 8);
  EXPECT_EQ(t.reps_k, 2);
  auto h = gemm_program(64, 64, 32, 128, "annotate 8 thread_arrangement (2,2):(1,2)\n");
  auto u = init_gemm_anchor(h, op_of(h, OpKind::Gemm), sm80());
  EXPECT_EQ(u.warps_m, 2);
  EXPECT_EQ(u.reps_m, 2);
  EXPECT_EQ(u.reps_n, 4);
}

TEST(GemmAnchor, Rejections) {
  auto g = gemm_program(100, 100, 32, 128);
  EXPECT_EQ(code_of([&] { init_gemm_anchor(g, op_of(g, OpKind::Gemm), sm80()); }), Errc::NonDivisibleTile);
  auto h = gemm_program(64, 64, 32, 128, "annotate 8 thread_arrangement (3,1):(1,0)\n");
  EXPECT_EQ(code_of([&] { init_gemm_anchor(h, op_of(h, OpKind::Gemm), sm80()); }), Errc::InvalidArgument);
  auto k = gemm_program(64, 64, 32, 96);  // 3 warps along 4 m-tiles
  EXPECT_EQ(code_of([&] { init_gemm_anchor(k, op_of(k, OpKind::Gemm), sm80()); }), Errc::NonDivisibleTile);
  EXPECT_EQ(code_of([&] { init_gemm_anchor(g, 0, sm80()); }), Errc::InvalidArgument);
}

TEST(GemmAnchor, AccumulatorFeedsNextGemm) {
  // With matching warp grids the C layout of one gemm is the A layout of a
  // gemm whose K is the first gemm's N.
  auto g = gemm_program(64, 64, 32, 128);
  auto h = gemm_program(64, 32, 64, 128);
  auto first = init_gemm_anchor(g, op_of(g, OpKind::Gemm), sm80());
  auto second = init_gemm_anchor(h, op_of(h, OpKind::Gemm), sm80());
  EXPECT_TRUE(tv_equal(first.c, second.a)) << to_string(first.c) << " vs " << to_string(second.a);
}

TEST(CopyAnchor, RowMajorHalf) {
  auto g = parse_program(
      "threads 128\ng = global_view x float16 (64,64):(64,1)\nr = register_tensor float16 (64,64)\ncopy g r\n");
  auto a = init_copy_anchor(g, 2);
  EXPECT_EQ(a.vector, 8);
  EXPECT_TRUE(a.src);
  EXPECT_EQ(a.tv.threads(), 128);
  EXPECT_EQ(a.tv.values(), 32);
  EXPECT_TRUE(tv_well_formed(a.tv));
  EXPECT_TRUE(vectors_contiguous(a.tv, *g.tensor(0).layout, 8));
  // Consecutive threads take consecutive 16-byte vectors.
  const Layout& mem = *g.tensor(0).layout;
  for (int64_t t = 0; t + 1 < 128; ++t) EXPECT_EQ(mem(a.tv(t + 1, 0)), mem(a.tv(t, 0)) + 8);
}

TEST(CopyAnchor, FlatFloat) {
  auto g = parse_program("threads 32\ng = global_view x float32 128:1\nr = register_tensor float32 128\ncopy r g\n");
  auto a = init_copy_anchor(g, 2);
  EXPECT_EQ(a.vector, 4);
  EXPECT_FALSE(a.src);
  EXPECT_EQ(a.tv.threads(), 32);
  EXPECT_EQ(a.tv.values(), 4);
  for (int64_t t = 0; t < 32; ++t)
    for (int64_t v = 0; v < 4; ++v) EXPECT_EQ(a.tv(t, v), 4 * t + v);
}

TEST(CopyAnchor, ColumnMajorAndStrided) {
  auto g = parse_program(
      "threads 64\ng = global_view x float16 (64,32):(1,64)\nr = register_tensor float16 (64,32)\ncopy g r\n");
  auto a = init_copy_anchor(g, 2);
  EXPECT_EQ(a.vector, 8);
  EXPECT_TRUE(vectors_contiguous(a.tv, *g.tensor(0).layout, 8));
  // Rows of 6 elements: only pairs stay aligned.
  auto h = parse_program(
      "threads 32\ng = global_view x float16 (8,6):(6,1)\nr = register_tensor float16 (8,6)\ncopy g r\n");
  auto b = init_copy_anchor(h, 2);
  EXPECT_EQ(b.vector, 2);
  EXPECT_TRUE(vectors_contiguous(b.tv, *h.tensor(0).layout, 2));
}

TEST(SolveCopy, MatchesTableOracle) {
  auto g = parse_program(slurp("samples/gemm.prog"));
  auto a = propagate(g, sm80());
  const TvLayout& ra = layout_of(g, a, "ra");
  const TvLayout& rb = layout_of(g, a, "rb");
  const Instruction* ldm = sm80().find("ldmatrix.x4");
  for (const TvLayout* reg : {&ra, &rb}) {
    auto shared = solve_copy(*reg, *ldm, CopySide::Dst);
    EXPECT_EQ(oracle::copy_mismatch(shared, *reg, *ldm), "");
    EXPECT_TRUE(tv_well_formed(shared));
  }
  TensorDecl s = g.tensor(g.find_tensor("sa"));
  TensorDecl r = g.tensor(g.find_tensor("ra"));
  for (const auto& ins : candidates_for_copy(sm80(), s, r)) {
    auto shared = solve_copy(ra, ins, CopySide::Dst);
    EXPECT_EQ(oracle::copy_mismatch(shared, ra, ins), "") << ins.name;
    auto back = solve_copy(shared, ins, CopySide::Src);
    EXPECT_TRUE(tv_equal(back, ra)) << ins.name;
  }
}

TEST(SolveCopy, VectorCopiesKeepTheLayout) {
  auto g = parse_program(
      "threads 128\ng = global_view x float16 (64,64):(64,1)\nr = register_tensor float16 (64,64)\ncopy g r\n");
  auto a = init_copy_anchor(g, 2);
  for (const auto& ins : candidates_for_copy(sm80(), g.tensor(0), g.tensor(1))) {
    auto r = solve_copy(a.tv, ins, CopySide::Src);
    EXPECT_TRUE(tv_equal(r, a.tv)) << ins.name;
    EXPECT_EQ(oracle::copy_mismatch(a.tv, r, ins), "");
  }
}

TEST(SolveCopy, Rejections) {
  const Instruction* ldm = sm80().find("ldmatrix.x4");
  // Lanes 0 and 1 hold the same elements: they cannot issue distinct rows.
  TvLayout bcast{parse_layout("((2,16),(8)):((0,8),(1))"), {128}};
  EXPECT_EQ(code_of([&] { solve_copy(bcast, *ldm, CopySide::Src); }), Errc::LayoutIncompatible);
  TvLayout few{parse_layout("((32),(4)):((4),(1))"), {128}};
  EXPECT_EQ(code_of([&] { solve_copy(few, *ldm, CopySide::Src); }), Errc::LayoutIncompatible);
}

TEST(Reduce, ProjectionOracle) {
  auto g = gemm_program(64, 64, 32, 128);
  auto t = init_gemm_anchor(g, op_of(g, OpKind::Gemm), sm80());
  for (int dim : {0, 1}) {
    auto p = reduce_projection(t.c, dim);
    EXPECT_TRUE(oracle::reduce_matches(t.c, p, dim)) << dim << " " << to_string(p);
  }
  TvLayout flat{parse_layout("((4,8),(2,8)):((16,1),(8,64))"), {64, 8}};
  EXPECT_TRUE(oracle::reduce_matches(flat, reduce_projection(flat, 1), 1));
  EXPECT_EQ(code_of([&] { reduce_projection(flat, 2); }), Errc::InvalidArgument);
}

TEST(Propagate, GemmSample) {
  auto g = parse_program(slurp("samples/gemm.prog"));
  auto a = propagate(g, sm80());
  EXPECT_TRUE(a.conflicts.empty());
  ASSERT_EQ(a.gemms.size(), 1u);
  const auto& t = a.gemms.begin()->second;
  EXPECT_TRUE(tv_equal(layout_of(g, a, "ra"), t.a));
  EXPECT_TRUE(tv_equal(layout_of(g, a, "rc16"), t.c));
  EXPECT_EQ(a.copies.size(), 5u);
  for (const auto& [op, c] : a.copies) {
    ASSERT_TRUE(c.instruction.has_value());
    ASSERT_TRUE(c.src && c.dst);
    EXPECT_EQ(oracle::copy_mismatch(*c.src, *c.dst, *c.instruction), "") << op;
  }
  EXPECT_EQ(a.copies.at(10).instruction->name, "ldmatrix.x4");
  EXPECT_EQ(a.copies.at(8).instruction->name, "cp.async.b128");
  EXPECT_EQ(a.anchors.size(), 2u);  // the two cp.async components
}

TEST(Propagate, ElementwiseAndReduce) {
  auto g = parse_program(slurp("samples/flash_attn.prog"));
  auto a = propagate(g, sm80());
  EXPECT_TRUE(a.conflicts.empty());
  EXPECT_TRUE(tv_equal(layout_of(g, a, "p"), layout_of(g, a, "s")));
  EXPECT_TRUE(tv_equal(layout_of(g, a, "p16"), layout_of(g, a, "p")));
  EXPECT_TRUE(oracle::reduce_matches(layout_of(g, a, "s"), layout_of(g, a, "m"), 1));
  EXPECT_EQ(oracle::gemm_mismatch(a.gemms.at(op_of(g, OpKind::Gemm, 1)), 64, 64, 64, 128), "");
}

TEST(Propagate, ConflictIsReported) {
  auto g = parse_program(slurp("samples/flash_attn_conflict.prog"));
  EXPECT_EQ(code_of([&] { propagate(g, sm80()); }), Errc::ConflictDetected);
  auto a = propagate(g, sm80(), false);
  ASSERT_EQ(a.conflicts.size(), 1u);
  const auto& c = a.conflicts[0];
  EXPECT_EQ(g.ops[static_cast<std::size_t>(c.op)].kind, OpKind::Cast);
  EXPECT_EQ(g.tensor(c.tensor).name, "p");
  EXPECT_FALSE(c.on_result);
  EXPECT_TRUE(tv_equal(c.proposed, layout_of(g, a, "p16")));
}

TEST(Propagate, OrderOfIndependentOpsDoesNotMatter) {
  std::string text = slurp("samples/gemm.prog");
  auto swap = [&](const std::string& x, const std::string& y) {
    const auto i = text.find(x), j = text.find(y);
    ASSERT_NE(i, std::string::npos);
    ASSERT_NE(j, std::string::npos);
    text.replace(j, y.size(), x);
    text.replace(i, x.size(), y);
  };
  auto g = parse_program(text);
  swap("copy ga sa", "copy gb sb");
  swap("copy sa ra", "copy sb rb");
  auto h = parse_program(text);
  auto a = propagate(g, sm80()), b = propagate(h, sm80());
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (const auto& [id, tv] : a.tensors) EXPECT_TRUE(tv_equal(tv, layout_of(h, b, g.tensor(id).name))) << g.tensor(id).name;
}

TEST(Propagate, UnreachableOpsAreResidual) {
  auto g = parse_program(
      "threads 32\na = register_tensor float32 (8,8)\nb = elementwise neg a\nc = elementwise exp b\n");
  EXPECT_EQ(code_of([&] { propagate(g, sm80()); }), Errc::UnsolvedResidual);
}

TEST(Resolve, OperandEdgeInsideLoop) {
  auto g = parse_program(slurp("samples/gemm.prog"));
  auto a = propagate(g, sm80());
  const int gemm = op_of(g, OpKind::Gemm);
  const int ra = g.find_tensor("ra");
  Assignment bad;
  TvLayout other{parse_layout("((128),(16)):((1),(128))"), {64, 32}};
  bad.conflicts.push_back({gemm, ra, false, a.tensors.at(ra), other});
  auto p = resolve_conflicts(g, bad);
  ASSERT_EQ(p.inserted, std::vector<int>{gemm});
  const OpNode& r = p.graph.ops[static_cast<std::size_t>(gemm)];
  EXPECT_EQ(r.kind, OpKind::Rearrange);
  EXPECT_EQ(r.operands, std::vector<int>{ra});
  EXPECT_EQ(r.trip, 8);
  EXPECT_TRUE(r.target.has_value() && *r.target == other.layout);
  const OpNode& gm = p.graph.ops[static_cast<std::size_t>(gemm + 1)];
  EXPECT_EQ(gm.kind, OpKind::Gemm);
  EXPECT_EQ(gm.operands[1], r.result);
  EXPECT_EQ(p.graph.tensor(r.result).name, "ra_r");
  ASSERT_EQ(p.graph.loops.size(), 1u);
  EXPECT_EQ(p.graph.loops[0].begin, 8u);
  EXPECT_EQ(p.graph.loops[0].end, 14u);
  EXPECT_TRUE(validate(p.graph).empty());
}

TEST(Resolve, ResultEdgeAfterProducer) {
  auto g = parse_program(slurp("samples/gemm.prog"));
  auto a = propagate(g, sm80());
  const int cast = op_of(g, OpKind::Cast);
  const int rc16 = g.find_tensor("rc16");
  TvLayout other{parse_layout("((128),(32)):((1),(128))"), {64, 64}};
  Assignment bad;
  bad.conflicts.push_back({cast, rc16, true, a.tensors.at(rc16), other});
  auto p = resolve_conflicts(g, bad);
  ASSERT_EQ(p.inserted, std::vector<int>{cast + 1});
  EXPECT_EQ(p.graph.ops[static_cast<std::size_t>(cast)].result, p.graph.find_tensor("rc16_p"));
  const OpNode& r = p.graph.ops[static_cast<std::size_t>(cast + 1)];
  EXPECT_EQ(r.result, rc16);
  EXPECT_TRUE(*r.target == a.tensors.at(rc16).layout);
  EXPECT_EQ(p.graph.loops[0].end, 13u);
  EXPECT_TRUE(validate(p.graph).empty());
}

TEST(Search, GemmSampleLimitsAndFallback) {
  auto g = parse_program(slurp("samples/gemm.prog"));
  auto all = expand_search(g, sm80());
  ASSERT_EQ(all.size(), 64u);
  std::set<std::map<int, std::string>> keys;
  for (std::size_t i = 0; i < all.size(); ++i) {
    EXPECT_EQ(all[i].index, static_cast<int>(i));
    EXPECT_TRUE(all[i].assignment.conflicts.empty());
    std::map<int, std::string> k;
    for (const auto& [op, c] : all[i].assignment.copies) k[op] = c.instruction->name;
    keys.insert(k);
  }
  EXPECT_EQ(keys.size(), all.size());
  EXPECT_EQ(std::count_if(all.begin(), all.end(), [](const Candidate& c) { return c.fallback; }), 1);
  EXPECT_TRUE(all.back().fallback);
  for (const auto& [op, c] : all.back().assignment.copies) {
    const auto& n = c.instruction->name;
    EXPECT_TRUE(n.ends_with(".b16")) << n;
  }
  // The first candidate is the one propagate settles on.
  auto a = propagate(g, sm80());
  for (const auto& [op, c] : a.copies) EXPECT_EQ(all[0].assignment.copies.at(op).instruction->name, c.instruction->name);

  EXPECT_EQ(expand_search(g, sm80(), {5}).size(), 5u);
  EXPECT_TRUE(expand_search(g, sm80(), {5}).back().fallback);
  EXPECT_EQ(expand_search(g, sm80(), {1}).size(), 1u);
  EXPECT_TRUE(expand_search(g, sm80(), {0}).empty());
}

TEST(Search, SharedLayoutsAreSynthesized) {
  auto g = parse_program(slurp("samples/gemm.prog"));
  auto best = expand_search(g, sm80(), {1});
  ASSERT_EQ(best.size(), 1u);
  const auto& s = best[0].smem.at(g.find_tensor("sa"));
  EXPECT_FALSE(s.swizzle.is_identity());
  for (const auto& ac : s.accesses) EXPECT_EQ(ac.max_way, 1) << ac.op;
  EXPECT_GT(s.identity_conflicts, s.conflicts);
}

TEST(Search, ConflictBecomesOneRearrange) {
  auto g = parse_program(slurp("samples/flash_attn_conflict.prog"));
  auto cs = expand_search(g, sm80(), {4});
  ASSERT_FALSE(cs.empty());
  const auto& pg = *cs[0].graph;
  ASSERT_EQ(cs[0].rearranges.size(), 1u);
  const int r = cs[0].rearranges[0];
  EXPECT_EQ(pg.ops[static_cast<std::size_t>(r)].kind, OpKind::Rearrange);
  EXPECT_EQ(pg.ops[static_cast<std::size_t>(r + 1)].kind, OpKind::Cast);
  for (const auto& c : cs) {
    EXPECT_TRUE(c.assignment.conflicts.empty());
    EXPECT_EQ(c.staging.count(r), 1u);
  }
  EXPECT_TRUE(validate(pg).empty());

  auto ok = parse_program(slurp("samples/flash_attn.prog"));
  auto cs2 = expand_search(ok, sm80(), {4});
  ASSERT_FALSE(cs2.empty());
  EXPECT_TRUE(cs2[0].rearranges.empty());
}

TEST(Search, TwoConsumersTwoRearranges) {
  auto g = parse_program(kTwoConsumers);
  auto a = propagate(g, sm80(), false);
  EXPECT_EQ(a.conflicts.size(), 2u);
  auto cs = expand_search(g, sm80(), {2});
  ASSERT_FALSE(cs.empty());
  EXPECT_EQ(cs[0].rearranges.size(), 2u);
  const auto& pg = *cs[0].graph;
  for (int r : cs[0].rearranges) EXPECT_EQ(pg.ops[static_cast<std::size_t>(r + 1)].kind, OpKind::Gemm);
  EXPECT_TRUE(cs[0].assignment.conflicts.empty());
}
