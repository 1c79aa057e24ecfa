#include "laysyn/catalog.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "laysyn/error.hpp"

namespace laysyn {

int64_t Instruction::values() const {
  const Layout& l = category == InstrCategory::Copy ? *tv_src : *tv_c;
  return l.mode(1).size();
}

const Instruction* Catalog::find(std::string_view name) const {
  for (const auto& i : instructions)
    if (i.name == name) return &i;
  return nullptr;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void format_error(int line, const std::string& msg) {
  fail(Errc::CatalogFormatError, "line " + std::to_string(line) + ": " + msg);
}

int to_int(const std::string& v, int line, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long x = std::stoll(v, &used);
    if (used != v.size() || x < 0 || x > (1 << 30)) throw std::invalid_argument(v);
    return static_cast<int>(x);
  } catch (const std::exception&) {
    format_error(line, "'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
}

Scope parse_scope(const std::string& s, int line) {
  if (s == "global") return Scope::Global;
  if (s == "shared") return Scope::Shared;
  if (s == "register") return Scope::Register;
  format_error(line, "unknown scope '" + s + "'");
}

struct Record {
  int line = 0;
  std::map<std::string, std::pair<std::string, int>> kv;  // key -> (value, line)

  const std::string* get(const std::string& k) const {
    auto it = kv.find(k);
    return it == kv.end() ? nullptr : &it->second.first;
  }
  int line_of(const std::string& k) const {
    auto it = kv.find(k);
    return it == kv.end() ? line : it->second.second;
  }
};

// Bijective onto [0, size): its inverse exists.
void require_bijective(const Layout& l, const std::string& entry, const std::string& key) {
  bool ok = l.rank() == 2 && l.cosize() == l.size();
  if (ok) {
    try {
      const Layout inv = inverse(l);
      ok = coalesce(compose(l, inv)) == coalesce(Layout::colex(IntTuple(l.size())));
    } catch (const Error&) {
      ok = false;
    }
  }
  if (!ok) fail(Errc::NonBijectiveLayout, "instruction '" + entry + "': " + key + " = " + to_string(l) + " is not a bijection");
}

Layout layout_field(const Record& r, const std::string& key, const std::string& entry) {
  const std::string* v = r.get(key);
  if (!v) format_error(r.line, "instruction '" + entry + "' lacks '" + key + "'");
  try {
    return parse_layout(*v);
  } catch (const Error& e) {
    format_error(r.line_of(key), "bad layout for '" + key + "': " + e.what());
  }
}

Instruction build_instruction(const Record& r, const std::string& default_arch) {
  static const std::set<std::string> known = {
      "name",   "category",     "scopes",       "tv_src",       "tv_dst",           "tv_a",    "tv_b",    "tv_c",
      "tile",   "elem_bits",    "vector_bytes", "threads",      "issue_cycles",     "completion_cycles",
      "arch",   "a_dtype",      "b_dtype",      "c_dtype",      "tma"};
  for (const auto& [k, v] : r.kv)
    if (!known.count(k)) format_error(v.second, "unknown instruction key '" + k + "'");
  Instruction ins;
  const std::string* name = r.get("name");
  if (!name || name->empty()) format_error(r.line, "instruction without a name");
  ins.name = *name;
  auto req = [&](const std::string& k) -> const std::string& {
    const std::string* v = r.get(k);
    if (!v) format_error(r.line, "instruction '" + ins.name + "' lacks '" + k + "'");
    return *v;
  };
  auto num = [&](const std::string& k) { return to_int(req(k), r.line_of(k), k); };
  const std::string& cat = req("category");
  if (cat == "copy")
    ins.category = InstrCategory::Copy;
  else if (cat == "mma")
    ins.category = InstrCategory::Mma;
  else
    format_error(r.line_of("category"), "unknown category '" + cat + "'");
  ins.threads = num("threads");
  ins.issue_cycles = num("issue_cycles");
  ins.completion_cycles = num("completion_cycles");
  if (ins.threads < 1 || ins.issue_cycles < 1 || ins.completion_cycles < 1)
    format_error(r.line, "instruction '" + ins.name + "': threads and cycle counts must be >= 1");
  ins.arch = r.get("arch") ? *r.get("arch") : default_arch;
  if (const std::string* t = r.get("tma")) ins.tma = to_int(*t, r.line_of("tma"), "tma") != 0;

  auto thread_count = [&](const Layout& l, const std::string& key) {
    if (l.rank() != 2) fail(Errc::NonBijectiveLayout, "instruction '" + ins.name + "': " + key + " needs (thread, value) modes");
    if (l.mode(0).size() != ins.threads)
      format_error(r.line_of(key), "instruction '" + ins.name + "': " + key + " thread mode size " +
                                       std::to_string(l.mode(0).size()) + " differs from threads = " +
                                       std::to_string(ins.threads));
  };

  if (ins.category == InstrCategory::Copy) {
    for (const char* k : {"tv_a", "tv_b", "tv_c", "tile", "a_dtype", "b_dtype", "c_dtype"})
      if (r.get(k)) format_error(r.line_of(k), "copy instruction '" + ins.name + "' cannot set '" + k + "'");
    const std::string& sc = req("scopes");
    const auto arrow = sc.find("->");
    if (arrow == std::string::npos) format_error(r.line_of("scopes"), "scopes must read 'src->dst'");
    ins.src_scope = parse_scope(trim(sc.substr(0, arrow)), r.line_of("scopes"));
    ins.dst_scope = parse_scope(trim(sc.substr(arrow + 2)), r.line_of("scopes"));
    ins.elem_bits = num("elem_bits");
    ins.vector_bytes = num("vector_bytes");
    if (ins.elem_bits < 1 || ins.elem_bits > 64 || (ins.elem_bits & (ins.elem_bits - 1)) != 0)
      format_error(r.line_of("elem_bits"), "elem_bits must be a power of two up to 64");
    if (ins.vector_bytes != 1 && ins.vector_bytes != 2 && ins.vector_bytes != 4 && ins.vector_bytes != 8 &&
        ins.vector_bytes != 16)
      format_error(r.line_of("vector_bytes"), "vector_bytes must be one of 1, 2, 4, 8, 16");
    ins.tv_src = layout_field(r, "tv_src", ins.name);
    ins.tv_dst = layout_field(r, "tv_dst", ins.name);
    thread_count(*ins.tv_src, "tv_src");
    thread_count(*ins.tv_dst, "tv_dst");
    require_bijective(*ins.tv_src, ins.name, "tv_src");
    require_bijective(*ins.tv_dst, ins.name, "tv_dst");
    if (ins.tv_src->size() != ins.tv_dst->size() || ins.tv_src->mode(1).size() != ins.tv_dst->mode(1).size())
      format_error(r.line, "instruction '" + ins.name + "': tv_src and tv_dst cover different tiles");
    if (static_cast<int64_t>(ins.vector_bytes) * 8 > ins.tv_src->mode(1).size() * ins.elem_bits)
      format_error(r.line, "instruction '" + ins.name + "': vector wider than the per-thread values");
  } else {
    for (const char* k : {"tv_src", "tv_dst", "scopes", "vector_bytes", "elem_bits"})
      if (r.get(k)) format_error(r.line_of(k), "mma instruction '" + ins.name + "' cannot set '" + k + "'");
    IntTuple tile;
    try {
      tile = parse_int_tuple(req("tile"));
    } catch (const Error& e) {
      format_error(r.line_of("tile"), e.what());
    }
    if (tile.is_leaf() || tile.rank() != 3) format_error(r.line_of("tile"), "mma tile must be (M,N,K)");
    ins.m = tile[0].value();
    ins.n = tile[1].value();
    ins.k = tile[2].value();
    ins.src_scope = ins.dst_scope = Scope::Register;
    auto dt = [&](const std::string& k) {
      try {
        return parse_dtype(req(k));
      } catch (const Error& e) {
        format_error(r.line_of(k), e.what());
      }
    };
    ins.a_dtype = dt("a_dtype");
    ins.b_dtype = dt("b_dtype");
    ins.c_dtype = dt("c_dtype");
    ins.tv_a = layout_field(r, "tv_a", ins.name);
    ins.tv_b = layout_field(r, "tv_b", ins.name);
    ins.tv_c = layout_field(r, "tv_c", ins.name);
    const std::vector<std::pair<const char*, int64_t>> sizes = {
        {"tv_a", ins.m * ins.k}, {"tv_b", ins.n * ins.k}, {"tv_c", ins.m * ins.n}};
    for (const auto& [key, expect] : sizes) {
      const Layout& l = key == std::string("tv_a") ? *ins.tv_a : key == std::string("tv_b") ? *ins.tv_b : *ins.tv_c;
      thread_count(l, key);
      if (l.size() != expect)
        format_error(r.line_of(key), "instruction '" + ins.name + "': " + key + " covers " + std::to_string(l.size()) +
                                         " elements, tile needs " + std::to_string(expect));
      require_bijective(l, ins.name, key);
    }
  }
  return ins;
}

}  // namespace

Catalog parse_catalog(std::string_view text) {
  static const std::set<std::string> header_keys = {
      "arch",          "bank_count",   "bank_bytes",     "alu_issue_cycles", "alu_completion_cycles",
      "tma_max_dims",  "tma_align_bytes", "tma_box_cap"};
  Catalog cat;
  std::istringstream in{std::string(text)};
  std::string raw;
  int lineno = 0;
  Record header;
  std::deque<Record> records;
  Record* current = &header;
  while (std::getline(in, raw)) {
    ++lineno;
    if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line != "[instruction]") format_error(lineno, "unknown section " + line);
      records.push_back({lineno, {}});
      current = &records.back();
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) format_error(lineno, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) format_error(lineno, "empty key");
    if (current == &header && !header_keys.count(key)) format_error(lineno, "unknown header key '" + key + "'");
    if (!current->kv.emplace(key, std::make_pair(value, lineno)).second)
      format_error(lineno, "duplicate key '" + key + "'");
  }
  if (records.empty()) fail(Errc::CatalogFormatError, "catalog defines no instructions");
  const std::string* arch = header.get("arch");
  if (!arch) fail(Errc::CatalogFormatError, "catalog header lacks 'arch'");
  cat.arch = *arch;
  auto hnum = [&](const char* k, int& dst) {
    if (const std::string* v = header.get(k)) dst = to_int(*v, header.line_of(k), k);
  };
  hnum("bank_count", cat.banks.banks);
  hnum("bank_bytes", cat.banks.bank_bytes);
  hnum("alu_issue_cycles", cat.alu_issue_cycles);
  hnum("alu_completion_cycles", cat.alu_completion_cycles);
  hnum("tma_max_dims", cat.tma.max_dims);
  hnum("tma_align_bytes", cat.tma.align_bytes);
  int cap = static_cast<int>(cat.tma.box_cap);
  hnum("tma_box_cap", cap);
  cat.tma.box_cap = cap;
  if (cat.banks.banks < 1 || cat.banks.bank_bytes < 1 || cat.alu_issue_cycles < 1 || cat.alu_completion_cycles < 1)
    fail(Errc::CatalogFormatError, "bank and ALU parameters must be >= 1");
  std::set<std::string> names;
  for (const auto& r : records) {
    Instruction ins = build_instruction(r, cat.arch);
    if (!names.insert(ins.name).second) format_error(r.line, "duplicate instruction name '" + ins.name + "'");
    cat.instructions.push_back(std::move(ins));
  }
  return cat;
}

Catalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::CatalogFormatError, "cannot open catalog '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_catalog(ss.str());
}

namespace {

// Splits every element into k sub-elements: strides scale by k and a (k):(1)
// leaf becomes the fastest value digit.
Layout refine(const Layout& tv, int64_t k) {
  std::vector<Leaf> t, v{{k, 1}};
  for (const auto& lf : tv.mode(0).leaves()) t.push_back({lf.size, lf.stride * k});
  for (const auto& lf : tv.mode(1).leaves()) v.push_back({lf.size, lf.stride * k});
  return make_tuple_layout({Layout::from_leaves(t), Layout::from_leaves(v)});
}

// Merges groups of r consecutive elements; the fastest value digit must be a
// contiguous run divisible by r.
std::optional<Layout> coarsen(const Layout& tv, int64_t r) {
  auto t = tv.mode(0).leaves();
  auto v = tv.mode(1).leaves();
  std::erase_if(v, [](const Leaf& l) { return l.size == 1; });
  if (v.empty() || v[0].stride != 1 || v[0].size % r != 0) return std::nullopt;
  v[0].size /= r;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i].stride % r != 0) return std::nullopt;
    v[i].stride /= r;
  }
  for (auto& lf : t) {
    if (lf.stride % r != 0) return std::nullopt;
    lf.stride /= r;
  }
  std::erase_if(v, [](const Leaf& l) { return l.size == 1; });
  return make_tuple_layout({Layout::from_leaves(t), Layout::from_leaves(v)});
}

}  // namespace

std::optional<Instruction> recast_copy(const Instruction& ins, int bits) {
  if (ins.category != InstrCategory::Copy || bits < 1) return std::nullopt;
  if (static_cast<int64_t>(ins.vector_bytes) * 8 < bits) return std::nullopt;
  Instruction out = ins;
  if (bits == ins.elem_bits) return out;
  if (bits < ins.elem_bits) {
    if (ins.elem_bits % bits != 0) return std::nullopt;
    const int64_t k = ins.elem_bits / bits;
    out.tv_src = refine(*ins.tv_src, k);
    out.tv_dst = refine(*ins.tv_dst, k);
  } else {
    if (bits % ins.elem_bits != 0) return std::nullopt;
    const int64_t r = bits / ins.elem_bits;
    auto s = coarsen(*ins.tv_src, r);
    auto d = coarsen(*ins.tv_dst, r);
    if (!s || !d) return std::nullopt;
    out.tv_src = *s;
    out.tv_dst = *d;
  }
  out.elem_bits = bits;
  return out;
}

std::vector<Instruction> candidates_for_copy(const Catalog& cat, const TensorDecl& src, const TensorDecl& dst) {
  if (src.scope == Scope::Register && dst.scope == Scope::Register) return {};
  std::vector<std::pair<std::size_t, Instruction>> found;
  for (std::size_t i = 0; i < cat.instructions.size(); ++i) {
    const auto& ins = cat.instructions[i];
    if (ins.category != InstrCategory::Copy || ins.src_scope != src.scope || ins.dst_scope != dst.scope) continue;
    if (auto r = recast_copy(ins, src.dtype.bits)) found.emplace_back(i, std::move(*r));
  }
  if (found.empty())
    fail(Errc::NoInstructionAvailable, "no " + std::string(scope_name(src.scope)) + " -> " +
                                           std::string(scope_name(dst.scope)) + " copy for " + to_string(src.dtype) +
                                           " in catalog " + cat.arch);
  std::stable_sort(found.begin(), found.end(), [](const auto& x, const auto& y) {
    const auto& a = x.second;
    const auto& b = y.second;
    return std::make_tuple(!a.tma, -a.vector_bytes, -a.threads, x.first) <
           std::make_tuple(!b.tma, -b.vector_bytes, -b.threads, y.first);
  });
  std::vector<Instruction> out;
  for (auto& [i, ins] : found) out.push_back(std::move(ins));
  return out;
}

const Instruction& fastest_mma(const Catalog& cat, const DType& a, const DType& b, const DType& c) {
  const Instruction* best = nullptr;
  for (const auto& ins : cat.instructions) {
    if (ins.category != InstrCategory::Mma) continue;
    if (*ins.a_dtype != a || *ins.b_dtype != b || *ins.c_dtype != c) continue;
    if (!best) {
      best = &ins;
      continue;
    }
    // Lower issue cycles per multiply-accumulate wins: compare
    // issue/(m n k) by cross-multiplication.
    const int64_t lhs = static_cast<int64_t>(ins.issue_cycles) * best->m * best->n * best->k;
    const int64_t rhs = static_cast<int64_t>(best->issue_cycles) * ins.m * ins.n * ins.k;
    if (lhs < rhs || (lhs == rhs && ins.name < best->name)) best = &ins;
  }
  if (!best)
    fail(Errc::NoInstructionAvailable, "no mma for " + to_string(a) + " x " + to_string(b) + " -> " + to_string(c) +
                                           " in catalog " + cat.arch);
  return *best;
}

}  // namespace laysyn
