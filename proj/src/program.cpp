#include "laysyn/program.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "laysyn/error.hpp"

namespace laysyn {

std::string_view scope_name(Scope s) {
  switch (s) {
    case Scope::Global: return "global";
    case Scope::Shared: return "shared";
    case Scope::Register: return "register";
  }
  return "?";
}

std::string to_string(const DType& t) {
  if (t.kind == DType::Kind::Float) {
    if (t.format == "bf") return "bfloat" + std::to_string(t.bits);
    if (!t.format.empty()) return "float" + std::to_string(t.bits) + "_" + t.format;
    return "float" + std::to_string(t.bits);
  }
  return (t.kind == DType::Kind::Int ? "int" : "uint") + std::to_string(t.bits);
}

DType parse_dtype(std::string_view name) {
  static const std::map<std::string, DType, std::less<>> table = [] {
    std::map<std::string, DType, std::less<>> m;
    m["float16"] = {DType::Kind::Float, 16, ""};
    m["float32"] = {DType::Kind::Float, 32, ""};
    m["float64"] = {DType::Kind::Float, 64, ""};
    m["bfloat16"] = {DType::Kind::Float, 16, "bf"};
    m["float8_e4m3"] = {DType::Kind::Float, 8, "e4m3"};
    m["float8_e5m2"] = {DType::Kind::Float, 8, "e5m2"};
    for (int b : {1, 2, 4, 8, 16, 32, 64}) {
      m["int" + std::to_string(b)] = {DType::Kind::Int, b, ""};
      m["uint" + std::to_string(b)] = {DType::Kind::UInt, b, ""};
    }
    return m;
  }();
  auto it = table.find(name);
  if (it == table.end()) fail(Errc::ParseError, "unknown dtype '" + std::string(name) + "'");
  return it->second;
}

std::string_view op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::GlobalView: return "global_view";
    case OpKind::RegisterTensor: return "register_tensor";
    case OpKind::SharedTensor: return "shared_tensor";
    case OpKind::Copy: return "copy";
    case OpKind::Gemm: return "gemm";
    case OpKind::Cast: return "cast";
    case OpKind::Rearrange: return "rearrange";
    case OpKind::Elementwise: return "elementwise";
    case OpKind::Reduce: return "reduce";
  }
  return "?";
}

bool is_declaration(OpKind k) {
  return k == OpKind::GlobalView || k == OpKind::RegisterTensor || k == OpKind::SharedTensor;
}

std::vector<int> OpNode::reads() const {
  switch (kind) {
    case OpKind::Copy: return {operands.at(0)};
    case OpKind::Gemm: return operands;
    default: return is_declaration(kind) ? std::vector<int>{} : operands;
  }
}

std::vector<int> OpNode::writes() const {
  if (kind == OpKind::Copy) return {operands.at(1)};
  if (kind == OpKind::Gemm) return {operands.at(0)};
  if (result >= 0) return {result};
  return {};
}

int ProgramGraph::find_tensor(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.id;
  return -1;
}

int ProgramGraph::def_op(int id) const {
  for (std::size_t i = 0; i < ops.size(); ++i)
    if (ops[i].result == id) return static_cast<int>(i);
  return -1;
}

int ProgramGraph::add_tensor(TensorDecl decl) {
  decl.id = static_cast<int>(tensors.size());
  tensors.push_back(std::move(decl));
  return tensors.back().id;
}

namespace {

struct Token {
  std::string text;
  int col = 0;
};

[[noreturn]] void parse_error(int line, int col, const std::string& msg) {
  fail(Errc::ParseError, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
}

// Splits a statement into words; parenthesised groups (and "group : group")
// stay together so layouts may contain spaces.
std::vector<Token> tokenize(const std::string& line, int lineno) {
  std::vector<Token> out;
  std::size_t i = 0;
  auto skip_ws = [&] {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
  };
  auto read_unit = [&](std::string& buf) {
    if (line[i] == '(') {
      int depth = 0;
      const std::size_t start = i;
      while (i < line.size()) {
        if (line[i] == '(') ++depth;
        if (line[i] == ')') --depth;
        buf += line[i++];
        if (depth == 0) return;
      }
      parse_error(lineno, static_cast<int>(start) + 1, "unbalanced parentheses");
    }
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i])) && line[i] != '(' && line[i] != ':')
      buf += line[i++];
  };
  skip_ws();
  while (i < line.size()) {
    Token t;
    t.col = static_cast<int>(i) + 1;
    read_unit(t.text);
    if (t.text.empty()) parse_error(lineno, t.col, std::string("unexpected '") + line[i] + "'");
    while (true) {
      std::size_t save = i;
      skip_ws();
      if (i < line.size() && line[i] == ':') {
        t.text += line[i++];
        skip_ws();
        if (i >= line.size()) parse_error(lineno, static_cast<int>(i) + 1, "expected a tuple after ':'");
        read_unit(t.text);
        continue;
      }
      i = save;
      break;
    }
    out.push_back(std::move(t));
    skip_ws();
  }
  return out;
}

struct Statement {
  int line = 0;
  std::vector<Token> tokens;
};

class Parser {
 public:
  ProgramGraph run(std::string_view text) {
    split(text);
    declare_names();
    build();
    infer_derived();
    return std::move(g_);
  }

 private:
  void split(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
      auto toks = tokenize(raw, lineno);
      if (!toks.empty()) stmts_.push_back({lineno, std::move(toks)});
    }
  }

  static bool is_assignment(const Statement& s) { return s.tokens.size() >= 2 && s.tokens[1].text == "="; }

  static bool is_identifier(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; });
  }

  // First pass: every assigned name gets an id, so uses may precede
  // definitions textually (validate reports that).
  void declare_names() {
    for (const auto& s : stmts_) {
      if (!is_assignment(s)) continue;
      const auto& name = s.tokens[0];
      if (!is_identifier(name.text)) parse_error(s.line, name.col, "invalid tensor name '" + name.text + "'");
      if (g_.find_tensor(name.text) >= 0) parse_error(s.line, name.col, "tensor '" + name.text + "' assigned twice");
      TensorDecl d;
      d.name = name.text;
      g_.add_tensor(std::move(d));
    }
  }

  int tensor_ref(const Statement& s, const Token& t) {
    int id = g_.find_tensor(t.text);
    if (id < 0)
      fail(Errc::UnknownTensor,
           "line " + std::to_string(s.line) + ", column " + std::to_string(t.col) + ": unknown tensor '" + t.text + "'");
    return id;
  }

  static void arity(const Statement& s, std::size_t first, std::size_t lo, std::size_t hi, std::string_view what) {
    const std::size_t n = s.tokens.size() - first;
    if (n < lo || n > hi)
      fail(Errc::ArityError, "line " + std::to_string(s.line) + ": '" + std::string(what) + "' takes " +
                                 (lo == hi ? std::to_string(lo) : std::to_string(lo) + ".." + std::to_string(hi)) +
                                 " operands, got " + std::to_string(n));
  }

  template <class F>
  auto guarded(const Statement& s, const Token& t, F&& f) {
    try {
      return f();
    } catch (const Error& e) {
      if (e.code() == Errc::ParseError || e.code() == Errc::ShapeMismatch || e.code() == Errc::Overflow)
        parse_error(s.line, t.col, e.what());
      throw;
    }
  }

  int64_t integer(const Statement& s, const Token& t) {
    return guarded(s, t, [&] {
      IntTuple v = parse_int_tuple(t.text);
      if (!v.is_leaf()) parse_error(s.line, t.col, "expected an integer");
      return v.value();
    });
  }

  void build() {
    std::vector<std::pair<std::size_t, int64_t>> open;  // (first op, trip)
    std::map<std::size_t, const Statement*> annotations;
    std::vector<std::pair<const Statement*, int64_t>> pending_annotations;
    for (const auto& s : stmts_) {
      const auto& head = s.tokens[0].text;
      if (head == "threads" && !is_assignment(s)) {
        arity(s, 1, 1, 1, "threads");
        const int64_t n = integer(s, s.tokens[1]);
        if (n < 1 || n % 32 != 0) parse_error(s.line, s.tokens[1].col, "thread count must be a positive multiple of 32");
        g_.threads = static_cast<int>(n);
        continue;
      }
      if (head == "loop" && !is_assignment(s)) {
        arity(s, 1, 1, 1, "loop");
        const int64_t trip = integer(s, s.tokens[1]);
        if (trip < 1) parse_error(s.line, s.tokens[1].col, "trip count must be >= 1");
        open.emplace_back(g_.ops.size(), trip);
        continue;
      }
      if (head == "endloop" && !is_assignment(s)) {
        arity(s, 1, 0, 0, "endloop");
        if (open.empty()) parse_error(s.line, s.tokens[0].col, "endloop without loop");
        g_.loops.push_back({open.back().first, g_.ops.size(), open.back().second});
        open.pop_back();
        continue;
      }
      if (head == "annotate" && !is_assignment(s)) {
        arity(s, 1, 3, 3, "annotate");
        if (s.tokens[2].text != "thread_arrangement")
          parse_error(s.line, s.tokens[2].col, "unknown annotation '" + s.tokens[2].text + "'");
        pending_annotations.emplace_back(&s, integer(s, s.tokens[1]));
        continue;
      }
      g_.ops.push_back(statement_op(s));
    }
    if (!open.empty()) fail(Errc::ParseError, "unterminated loop opened before op " + std::to_string(open.back().first));
    std::sort(g_.loops.begin(), g_.loops.end(),
              [](const LoopRegion& a, const LoopRegion& b) { return std::tie(a.begin, b.end) < std::tie(b.begin, a.end); });
    for (const auto& lr : g_.loops)
      for (std::size_t i = lr.begin; i < lr.end; ++i) g_.ops[i].trip = checked_mul(g_.ops[i].trip, lr.trip);
    for (const auto& [s, idx] : pending_annotations) {
      if (idx < 0 || idx >= static_cast<int64_t>(g_.ops.size()))
        fail(Errc::UnknownOp, "line " + std::to_string(s->line) + ": annotate refers to op " + std::to_string(idx));
      auto& op = g_.ops[static_cast<std::size_t>(idx)];
      if (op.kind != OpKind::Gemm)
        parse_error(s->line, s->tokens[1].col, "thread_arrangement applies to gemm ops only");
      op.thread_arrangement = guarded(*s, s->tokens[3], [&] { return parse_layout(s->tokens[3].text); });
    }
  }

  OpNode statement_op(const Statement& s) {
    OpNode op;
    op.line = s.line;
    std::size_t k = 0;
    if (is_assignment(s)) {
      op.result = g_.find_tensor(s.tokens[0].text);
      k = 2;
      if (s.tokens.size() < 3) parse_error(s.line, s.tokens[1].col, "missing operator after '='");
    }
    const Token& kw = s.tokens[k];
    const std::size_t a = k + 1;  // first argument
    auto need_result = [&](bool yes) {
      if (yes && op.result < 0) parse_error(s.line, kw.col, "'" + kw.text + "' must be assigned to a tensor");
      if (!yes && op.result >= 0) parse_error(s.line, kw.col, "'" + kw.text + "' produces no tensor");
    };
    TensorDecl* decl = op.result >= 0 ? &g_.tensors[static_cast<std::size_t>(op.result)] : nullptr;
    if (kw.text == "global_view") {
      need_result(true);
      op.kind = OpKind::GlobalView;
      arity(s, a, 3, 3, kw.text);
      decl->scope = Scope::Global;
      decl->buffer = s.tokens[a].text;
      decl->dtype = guarded(s, s.tokens[a + 1], [&] { return parse_dtype(s.tokens[a + 1].text); });
      decl->layout = guarded(s, s.tokens[a + 2], [&] { return parse_layout(s.tokens[a + 2].text); });
      decl->shape = decl->layout->shape();
    } else if (kw.text == "register_tensor" || kw.text == "shared_tensor") {
      need_result(true);
      op.kind = kw.text == "register_tensor" ? OpKind::RegisterTensor : OpKind::SharedTensor;
      arity(s, a, 2, 2, kw.text);
      decl->scope = op.kind == OpKind::RegisterTensor ? Scope::Register : Scope::Shared;
      decl->dtype = guarded(s, s.tokens[a], [&] { return parse_dtype(s.tokens[a].text); });
      decl->shape = guarded(s, s.tokens[a + 1], [&] {
        IntTuple sh = parse_int_tuple(s.tokens[a + 1].text);
        for (int64_t v : flatten(sh))
          if (v < 1) parse_error(s.line, s.tokens[a + 1].col, "shape leaves must be >= 1");
        return sh;
      });
    } else if (kw.text == "copy") {
      need_result(false);
      op.kind = OpKind::Copy;
      arity(s, a, 2, 2, kw.text);
      op.operands = {tensor_ref(s, s.tokens[a]), tensor_ref(s, s.tokens[a + 1])};
    } else if (kw.text == "gemm") {
      need_result(false);
      op.kind = OpKind::Gemm;
      arity(s, a, 3, 3, kw.text);
      for (std::size_t j = 0; j < 3; ++j) op.operands.push_back(tensor_ref(s, s.tokens[a + j]));
    } else if (kw.text == "cast") {
      need_result(true);
      op.kind = OpKind::Cast;
      arity(s, a, 2, 2, kw.text);
      op.operands = {tensor_ref(s, s.tokens[a])};
      op.cast_to = guarded(s, s.tokens[a + 1], [&] { return parse_dtype(s.tokens[a + 1].text); });
    } else if (kw.text == "rearrange") {
      need_result(true);
      op.kind = OpKind::Rearrange;
      arity(s, a, 1, 2, kw.text);
      op.operands = {tensor_ref(s, s.tokens[a])};
      if (s.tokens.size() > a + 1)
        op.target = guarded(s, s.tokens[a + 1], [&] { return parse_layout(s.tokens[a + 1].text); });
    } else if (kw.text == "elementwise") {
      need_result(true);
      op.kind = OpKind::Elementwise;
      if (s.tokens.size() < a + 2) arity(s, a, 2, 1 << 20, kw.text);
      op.fn = s.tokens[a].text;
      if (!is_identifier(op.fn)) parse_error(s.line, s.tokens[a].col, "invalid function name '" + op.fn + "'");
      for (std::size_t j = a + 1; j < s.tokens.size(); ++j) op.operands.push_back(tensor_ref(s, s.tokens[j]));
    } else if (kw.text == "reduce") {
      need_result(true);
      op.kind = OpKind::Reduce;
      arity(s, a, 2, 2, kw.text);
      op.operands = {tensor_ref(s, s.tokens[a])};
      op.reduce_dim = static_cast<int>(integer(s, s.tokens[a + 1]));
    } else {
      parse_error(s.line, kw.col, "unknown statement '" + kw.text + "'");
    }
    return op;
  }

  // Derived tensors take scope/dtype/shape from their input; inputs may be
  // defined later in the text, so iterate to a fixpoint.
  void infer_derived() {
    std::vector<bool> known(g_.tensors.size(), false);
    for (const auto& op : g_.ops)
      if (is_declaration(op.kind)) known[static_cast<std::size_t>(op.result)] = true;
    bool changed = true;
    while (changed) {
      changed = false;
      for (const auto& op : g_.ops) {
        if (is_declaration(op.kind) || op.result < 0) continue;
        const auto r = static_cast<std::size_t>(op.result);
        if (known[r] || op.operands.empty()) continue;
        const auto src = static_cast<std::size_t>(op.operands[0]);
        if (!known[src]) continue;
        auto& out = g_.tensors[r];
        const auto& in = g_.tensors[src];
        out.scope = Scope::Register;
        out.dtype = op.kind == OpKind::Cast ? *op.cast_to : in.dtype;
        out.shape = in.shape;
        if (op.kind == OpKind::Reduce && op.reduce_dim >= 0 && static_cast<std::size_t>(op.reduce_dim) < in.shape.rank()) {
          std::vector<IntTuple> modes;
          for (std::size_t i = 0; i < in.shape.rank(); ++i)
            modes.push_back(static_cast<int>(i) == op.reduce_dim ? IntTuple(1) : in.shape[i]);
          out.shape = in.shape.is_leaf() ? IntTuple(1) : IntTuple(std::move(modes));
        }
        known[r] = true;
        changed = true;
      }
    }
    for (std::size_t i = 0; i < known.size(); ++i)
      if (!known[i]) fail(Errc::UnknownTensor, "tensor '" + g_.tensors[i].name + "' is defined in terms of itself");
  }

  std::vector<Statement> stmts_;
  ProgramGraph g_;
};

std::string shape_text(const IntTuple& t) { return t.is_leaf() ? "(" + to_string(t) + ")" : to_string(t); }

}  // namespace

ProgramGraph parse_program(std::string_view text) { return Parser().run(text); }

std::string print_program(const ProgramGraph& g) {
  std::ostringstream os;
  os << "threads " << g.threads << "\n";
  auto name = [&](int id) { return g.tensor(id).name; };
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    for (const auto& lr : g.loops)
      if (lr.begin == i && lr.end > lr.begin) os << "loop " << lr.trip << "\n";
    const auto& op = g.ops[i];
    if (op.result >= 0) os << name(op.result) << " = ";
    os << op_kind_name(op.kind);
    switch (op.kind) {
      case OpKind::GlobalView: {
        const auto& t = g.tensor(op.result);
        os << " " << t.buffer << " " << to_string(t.dtype) << " " << to_string(*t.layout);
        break;
      }
      case OpKind::RegisterTensor:
      case OpKind::SharedTensor: {
        const auto& t = g.tensor(op.result);
        os << " " << to_string(t.dtype) << " " << shape_text(t.shape);
        break;
      }
      case OpKind::Cast: os << " " << name(op.operands[0]) << " " << to_string(*op.cast_to); break;
      case OpKind::Rearrange:
        os << " " << name(op.operands[0]);
        if (op.target) os << " " << to_string(*op.target);
        break;
      case OpKind::Elementwise:
        os << " " << op.fn;
        for (int id : op.operands) os << " " << name(id);
        break;
      case OpKind::Reduce: os << " " << name(op.operands[0]) << " " << op.reduce_dim; break;
      default:
        for (int id : op.operands) os << " " << name(id);
    }
    os << "\n";
    // Loops closing after this op, innermost first.
    std::vector<const LoopRegion*> closing;
    for (const auto& lr : g.loops)
      if (lr.end == i + 1 && lr.end > lr.begin) closing.push_back(&lr);
    for (std::size_t j = 0; j < closing.size(); ++j) os << "endloop\n";
  }
  for (std::size_t i = 0; i < g.ops.size(); ++i)
    if (g.ops[i].thread_arrangement)
      os << "annotate " << i << " thread_arrangement " << to_string(*g.ops[i].thread_arrangement) << "\n";
  return os.str();
}

namespace {

bool pack_compatible(const TensorDecl& t) {
  if (t.dtype.bits >= 8 || !t.layout) return true;
  // Innermost contiguous run (elements at stride 1, merged) times width.
  const auto c = coalesce(*t.layout);
  int64_t run = 1;
  for (const auto& lf : c.leaves())
    if (lf.stride == 1) run = lf.size;
  return run * t.dtype.bits >= 8;
}

}  // namespace

std::vector<Diagnostic> validate(const ProgramGraph& g) {
  std::vector<Diagnostic> out;
  auto diag = [&](std::string kind, std::size_t op, std::string msg) {
    out.push_back({std::move(kind), static_cast<int>(op), std::move(msg)});
  };
  auto nm = [&](int id) { return "'" + g.tensor(id).name + "'"; };
  std::vector<int> def(g.tensors.size(), -1);
  for (std::size_t i = 0; i < g.ops.size(); ++i)
    if (g.ops[i].result >= 0) def[static_cast<std::size_t>(g.ops[i].result)] = static_cast<int>(i);

  for (const auto& t : g.tensors) {
    if (t.scope == Scope::Global && !t.layout)
      out.push_back({"MissingLayout", def[static_cast<std::size_t>(t.id)], "global tensor '" + t.name + "' has no layout"});
    if (t.scope == Scope::Global && !pack_compatible(t))
      out.push_back({"PackIncompatible", def[static_cast<std::size_t>(t.id)],
                     "sub-byte tensor '" + t.name + "' has no innermost contiguous run of at least 8 bits"});
  }

  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    const auto& op = g.ops[i];
    std::set<int> seen;
    for (int id : op.operands) {
      if (!seen.insert(id).second) continue;
      const int d = def[static_cast<std::size_t>(id)];
      if (d < 0 || d >= static_cast<int>(i))
        diag("UseBeforeDef", i, "tensor " + nm(id) + " is used by op " + std::to_string(i) + " before its definition");
    }
    auto extents = [&](int id) { return g.tensor(id).extents(); };
    auto scope = [&](int id) { return g.tensor(id).scope; };
    switch (op.kind) {
      case OpKind::Copy: {
        const int s = op.operands[0], d = op.operands[1];
        if (g.tensor(s).elements() != g.tensor(d).elements() || extents(s) != extents(d))
          diag("ShapeMismatch", i, "copy " + nm(s) + " -> " + nm(d) + ": shapes " + to_string(g.tensor(s).shape) +
                                       " and " + to_string(g.tensor(d).shape) + " differ");
        if (g.tensor(s).dtype != g.tensor(d).dtype)
          diag("DTypeMismatch", i, "copy " + nm(s) + " -> " + nm(d) + " changes dtype; use cast");
        break;
      }
      case OpKind::Gemm: {
        const int c = op.operands[0], a = op.operands[1], b = op.operands[2];
        bool ranks_ok = true;
        for (int id : {c, a, b}) {
          if (scope(id) != Scope::Register) diag("ScopeError", i, "gemm operand " + nm(id) + " must be a register tensor");
          if (extents(id).size() != 2) {
            diag("RankError", i, "gemm operand " + nm(id) + " must have rank 2");
            ranks_ok = false;
          }
        }
        if (!ranks_ok) break;
        const auto ec = extents(c), ea = extents(a), eb = extents(b);
        if (ea[1] != eb[1])
          diag("ShapeMismatch", i, "gemm K extent of " + nm(a) + " (" + std::to_string(ea[1]) + ") differs from " + nm(b) +
                                       " (" + std::to_string(eb[1]) + ")");
        if (ec[0] != ea[0])
          diag("ShapeMismatch", i, "gemm M extent of " + nm(c) + " differs from " + nm(a));
        if (ec[1] != eb[0])
          diag("ShapeMismatch", i, "gemm N extent of " + nm(c) + " differs from " + nm(b));
        break;
      }
      case OpKind::Cast: {
        const int s = op.operands[0];
        if (scope(s) != Scope::Register) diag("ScopeError", i, "cast source " + nm(s) + " must be a register tensor");
        const int from = g.tensor(s).dtype.bits, to = op.cast_to->bits;
        if (from < 8 && to < 8 && from != to)
          diag("CastWidth", i, "cast between sub-byte widths " + std::to_string(from) + " and " + std::to_string(to) +
                                   " bits is not supported");
        if (*op.cast_to == g.tensor(s).dtype) diag("CastWidth", i, "cast of " + nm(s) + " to its own dtype");
        break;
      }
      case OpKind::Rearrange: {
        const int s = op.operands[0];
        if (scope(s) != Scope::Register) diag("ScopeError", i, "rearrange source " + nm(s) + " must be a register tensor");
        if (op.target && (op.target->rank() != 2 || op.target->size() % g.tensor(s).elements() != 0 ||
                          op.target->cosize() > g.tensor(s).elements()))
          diag("ShapeMismatch", i, "rearrange target must be a (thread, value) layout onto " +
                                       std::to_string(g.tensor(s).elements()) + " elements");
        break;
      }
      case OpKind::Elementwise: {
        for (int id : op.operands) {
          if (scope(id) != Scope::Register)
            diag("ScopeError", i, "elementwise operand " + nm(id) + " must be a register tensor");
          if (extents(id) != extents(op.operands[0]))
            diag("ShapeMismatch", i, "elementwise operands " + nm(op.operands[0]) + " and " + nm(id) + " differ in shape");
        }
        break;
      }
      case OpKind::Reduce: {
        const int s = op.operands[0];
        if (scope(s) != Scope::Register) diag("ScopeError", i, "reduce source " + nm(s) + " must be a register tensor");
        if (op.reduce_dim < 0 || op.reduce_dim >= static_cast<int>(extents(s).size()))
          diag("ReduceDim", i, "reduce dimension " + std::to_string(op.reduce_dim) + " outside rank " +
                                   std::to_string(extents(s).size()) + " of " + nm(s));
        break;
      }
      default: break;
    }
  }
  return out;
}

ProgramGraph eliminate_dead_code(const ProgramGraph& g) {
  std::vector<bool> live_op(g.ops.size(), false), live_tensor(g.tensors.size(), false);
  for (std::size_t i = 0; i < g.ops.size(); ++i)
    for (int w : g.ops[i].writes())
      if (!is_declaration(g.ops[i].kind) && g.tensor(w).scope == Scope::Global) live_op[i] = true;
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < g.ops.size(); ++i) {
      if (!live_op[i]) continue;
      for (int r : g.ops[i].operands) {
        if (live_tensor[static_cast<std::size_t>(r)]) continue;
        live_tensor[static_cast<std::size_t>(r)] = true;
        changed = true;
      }
    }
    for (std::size_t i = 0; i < g.ops.size(); ++i) {
      if (live_op[i]) continue;
      for (int w : g.ops[i].writes()) {
        if (live_tensor[static_cast<std::size_t>(w)]) {
          live_op[i] = true;
          changed = true;
        }
      }
    }
  }
  // Remap op indices; loops shrink to their surviving members.
  ProgramGraph out;
  out.threads = g.threads;
  out.tensors = g.tensors;
  std::vector<std::size_t> new_index(g.ops.size() + 1, 0);
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    new_index[i] = out.ops.size();
    if (live_op[i]) out.ops.push_back(g.ops[i]);
  }
  new_index[g.ops.size()] = out.ops.size();
  for (const auto& lr : g.loops) {
    LoopRegion n{new_index[lr.begin], new_index[lr.end], lr.trip};
    if (n.end > n.begin) out.loops.push_back(n);
  }
  return out;
}

std::vector<Component> partition_components(const ProgramGraph& g) {
  const std::size_t n = g.ops.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::map<int, std::size_t> first_touch;  // register tensor -> an op using it
  for (std::size_t i = 0; i < n; ++i) {
    const auto& op = g.ops[i];
    if (is_declaration(op.kind)) continue;
    std::vector<int> touched = op.operands;
    if (op.result >= 0) touched.push_back(op.result);
    for (int id : touched) {
      if (g.tensor(id).scope != Scope::Register) continue;
      auto [it, fresh] = first_touch.emplace(id, i);
      if (!fresh) {
        const std::size_t a = find(it->second), b = find(i);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::map<std::size_t, Component> groups;
  for (std::size_t i = 0; i < n; ++i) {
    if (is_declaration(g.ops[i].kind)) continue;
    groups[find(i)].ops.push_back(static_cast<int>(i));
  }
  std::vector<Component> out;
  for (auto& [root, c] : groups) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(), [](const Component& a, const Component& b) { return a.ops.front() < b.ops.front(); });
  return out;
}

}  // namespace laysyn
