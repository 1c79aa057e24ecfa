#include "laysyn/int_tuple.hpp"

#include <cctype>
#include <sstream>

#include "laysyn/error.hpp"

namespace laysyn {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::OutOfDomain: return "OutOfDomain";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::LayoutIncompatible: return "LayoutIncompatible";
    case Errc::NotComplementable: return "NotComplementable";
    case Errc::NotInvertible: return "NotInvertible";
    case Errc::NotDivisible: return "NotDivisible";
    case Errc::Overflow: return "Overflow";
    case Errc::MisalignedAccess: return "MisalignedAccess";
    case Errc::ParseError: return "ParseError";
    case Errc::UnknownTensor: return "UnknownTensor";
    case Errc::ArityError: return "ArityError";
    case Errc::CatalogFormatError: return "CatalogFormatError";
    case Errc::NonBijectiveLayout: return "NonBijectiveLayout";
    case Errc::NoInstructionAvailable: return "NoInstructionAvailable";
    case Errc::NonDivisibleTile: return "NonDivisibleTile";
    case Errc::UnsolvedResidual: return "UnsolvedResidual";
    case Errc::ConflictDetected: return "ConflictDetected";
    case Errc::StrideConflict: return "StrideConflict";
    case Errc::Unsatisfiable: return "Unsatisfiable";
    case Errc::UnknownOp: return "UnknownOp";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

int64_t IntTuple::value() const {
  if (!is_leaf()) fail(Errc::ShapeMismatch, "expected an integer, got tuple " + to_string(*this));
  return std::get<int64_t>(v_);
}

const std::vector<IntTuple>& IntTuple::elems() const {
  if (is_leaf()) fail(Errc::ShapeMismatch, "expected a tuple, got integer " + to_string(*this));
  return std::get<std::vector<IntTuple>>(v_);
}

std::vector<IntTuple>& IntTuple::elems() {
  if (is_leaf()) fail(Errc::ShapeMismatch, "expected a tuple");
  return std::get<std::vector<IntTuple>>(v_);
}

const IntTuple& IntTuple::operator[](std::size_t i) const {
  if (is_leaf()) {
    if (i != 0) fail(Errc::ShapeMismatch, "mode index out of range");
    return *this;
  }
  const auto& e = elems();
  if (i >= e.size()) fail(Errc::ShapeMismatch, "mode index out of range");
  return e[i];
}

int64_t checked_mul(int64_t a, int64_t b) {
  int64_t r = 0;
  if (__builtin_mul_overflow(a, b, &r)) fail(Errc::Overflow, "64-bit multiply overflow");
  return r;
}

int64_t checked_add(int64_t a, int64_t b) {
  int64_t r = 0;
  if (__builtin_add_overflow(a, b, &r)) fail(Errc::Overflow, "64-bit add overflow");
  return r;
}

namespace {

void flatten_into(const IntTuple& t, std::vector<int64_t>& out) {
  if (t.is_leaf()) {
    out.push_back(t.value());
    return;
  }
  for (const auto& e : t.elems()) flatten_into(e, out);
}

IntTuple unflatten_from(const IntTuple& like, const std::vector<int64_t>& leaves, std::size_t& pos) {
  if (like.is_leaf()) {
    if (pos >= leaves.size()) fail(Errc::ShapeMismatch, "too few leaves to unflatten");
    return IntTuple(leaves[pos++]);
  }
  std::vector<IntTuple> out;
  out.reserve(like.elems().size());
  for (const auto& e : like.elems()) out.push_back(unflatten_from(e, leaves, pos));
  return IntTuple(std::move(out));
}

void print(const IntTuple& t, std::ostringstream& os) {
  if (t.is_leaf()) {
    os << t.value();
    return;
  }
  os << '(';
  bool first = true;
  for (const auto& e : t.elems()) {
    if (!first) os << ',';
    first = false;
    print(e, os);
  }
  os << ')';
}

class TupleParser {
 public:
  explicit TupleParser(std::string_view s) : s_(s) {}

  IntTuple parse_all() {
    IntTuple t = parse();
    skip_ws();
    if (pos_ != s_.size()) error("trailing characters");
    return t;
  }

 private:
  IntTuple parse() {
    skip_ws();
    if (pos_ >= s_.size()) error("unexpected end of input");
    if (s_[pos_] == '(') {
      ++pos_;
      std::vector<IntTuple> elems;
      skip_ws();
      if (pos_ < s_.size() && s_[pos_] == ')') error("empty tuple");
      while (true) {
        elems.push_back(parse());
        skip_ws();
        if (pos_ >= s_.size()) error("unterminated tuple");
        if (s_[pos_] == ',') {
          ++pos_;
          continue;
        }
        if (s_[pos_] == ')') {
          ++pos_;
          break;
        }
        error("expected ',' or ')'");
      }
      return IntTuple(std::move(elems));
    }
    if (!std::isdigit(static_cast<unsigned char>(s_[pos_]))) error("expected integer");
    int64_t v = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      v = checked_add(checked_mul(v, 10), s_[pos_] - '0');
      ++pos_;
    }
    return IntTuple(v);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  [[noreturn]] void error(const std::string& msg) const {
    fail(Errc::ParseError, msg + " at offset " + std::to_string(pos_) + " in '" + std::string(s_) + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<int64_t> flatten(const IntTuple& t) {
  std::vector<int64_t> out;
  flatten_into(t, out);
  return out;
}

int64_t product(const IntTuple& t) {
  int64_t p = 1;
  for (int64_t v : flatten(t)) p = checked_mul(p, v);
  return p;
}

bool congruent(const IntTuple& a, const IntTuple& b) {
  if (a.is_leaf() || b.is_leaf()) return a.is_leaf() && b.is_leaf();
  if (a.elems().size() != b.elems().size()) return false;
  for (std::size_t i = 0; i < a.elems().size(); ++i)
    if (!congruent(a.elems()[i], b.elems()[i])) return false;
  return true;
}

IntTuple unflatten(const IntTuple& like, const std::vector<int64_t>& leaves) {
  std::size_t pos = 0;
  IntTuple out = unflatten_from(like, leaves, pos);
  if (pos != leaves.size()) fail(Errc::ShapeMismatch, "too many leaves to unflatten");
  return out;
}

IntTuple compact_colex(const IntTuple& shape) {
  auto leaves = flatten(shape);
  std::vector<int64_t> strides(leaves.size());
  int64_t running = 1;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    strides[i] = running;
    running = checked_mul(running, leaves[i]);
  }
  return unflatten(shape, strides);
}

std::string to_string(const IntTuple& t) {
  std::ostringstream os;
  print(t, os);
  return os.str();
}

IntTuple parse_int_tuple(std::string_view text) { return TupleParser(text).parse_all(); }

}  // namespace laysyn
