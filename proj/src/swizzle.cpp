#include "laysyn/swizzle.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <set>
#include <tuple>

#include "laysyn/error.hpp"

namespace laysyn {

int64_t Swizzle::operator()(int64_t addr) const {
  if (bits == 0) return addr;
  const int64_t mask = (int64_t{1} << bits) - 1;
  return addr ^ (((addr >> (base + shift)) & mask) << base);
}

Swizzle make_swizzle(int bits, int base, int shift) {
  if (bits < 0 || base < 0 || shift < bits)
    fail(Errc::InvalidArgument, "invalid swizzle SW(" + std::to_string(bits) + "," + std::to_string(base) + "," +
                                    std::to_string(shift) + "): need B >= 0, M >= 0, S >= B");
  if (bits == 0) return Swizzle::identity();
  return {bits, base, shift};
}

std::string to_string(const Swizzle& s) {
  return "SW(" + std::to_string(s.bits) + "," + std::to_string(s.base) + "," + std::to_string(s.shift) + ")";
}

Swizzle parse_swizzle(std::string_view text) {
  static const std::regex re(R"(\s*SW\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)\s*)");
  std::cmatch m;
  if (!std::regex_match(text.begin(), text.end(), m, re))
    fail(Errc::ParseError, "bad swizzle '" + std::string(text) + "'");
  return make_swizzle(std::stoi(m[1]), std::stoi(m[2]), std::stoi(m[3]));
}

std::vector<Swizzle> default_swizzle_candidates(int min_base) {
  std::vector<Swizzle> out{Swizzle::identity()};
  for (int b = 1; b <= 3; ++b)
    for (int m = std::max(min_base, 0); m <= 4; ++m)
      for (int s = b; s <= 5; ++s) out.push_back({b, m, s});
  return out;
}

int bank_conflicts(const AccessPattern& p, const BankModel& model) {
  const int w = p.width;
  if (w != 1 && w != 2 && w != 4 && w != 8 && w != 16)
    fail(Errc::MisalignedAccess, "access width " + std::to_string(w) + " is not a power of two up to 16");
  for (int64_t a : p.addresses)
    if (a < 0 || a % w != 0)
      fail(Errc::MisalignedAccess, "address " + std::to_string(a) + " is not " + std::to_string(w) + "-byte aligned");
  if (p.addresses.empty()) return 0;
  const int line = model.banks * model.bank_bytes;
  const int per_phase = std::max(1, line / std::max(w, model.bank_bytes));
  const int words = std::max(1, w / model.bank_bytes);
  int worst = 0;
  std::vector<std::pair<int64_t, int64_t>> touched;  // (bank, word)
  for (std::size_t start = 0; start < p.addresses.size(); start += static_cast<std::size_t>(per_phase)) {
    touched.clear();
    const std::size_t stop = std::min(p.addresses.size(), start + static_cast<std::size_t>(per_phase));
    for (std::size_t t = start; t < stop; ++t) {
      const int64_t first_word = p.addresses[t] / model.bank_bytes;
      for (int j = 0; j < words; ++j) touched.emplace_back((first_word + j) % model.banks, first_word + j);
    }
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    for (std::size_t i = 0; i < touched.size();) {
      std::size_t j = i;
      while (j < touched.size() && touched[j].first == touched[i].first) ++j;
      worst = std::max(worst, static_cast<int>(j - i));
      i = j;
    }
  }
  return worst;
}

SwizzleSelection score_swizzles(std::span<const AccessPattern> patterns, std::span<const Swizzle> candidates,
                                const BankModel& model) {
  auto total_for = [&](const Swizzle& sw) {
    int64_t total = 0;
    for (const auto& p : patterns) {
      AccessPattern q{{}, p.width};
      q.addresses.reserve(p.addresses.size());
      for (int64_t a : p.addresses) q.addresses.push_back(sw(a));
      total += bank_conflicts(q, model);
    }
    return total;
  };
  SwizzleSelection sel;
  sel.identity_total = total_for(Swizzle::identity());
  sel.best = Swizzle::identity();
  sel.best_total = sel.identity_total;
  auto key = [](const Swizzle& s) { return std::make_tuple(s.bits, s.base, s.shift); };
  sel.scores.push_back({Swizzle::identity(), sel.identity_total});
  int min_base = 0;
  for (const auto& p : patterns)
    while ((1 << min_base) < p.width) ++min_base;
  for (const auto& c : candidates) {
    // A base below the vector width would split vectors across rows.
    if (c.is_identity() || c.base < min_base) continue;
    const int64_t t = total_for(c);
    sel.scores.push_back({c, t});
    if (t < sel.best_total || (t == sel.best_total && key(c) < key(sel.best))) {
      sel.best = c;
      sel.best_total = t;
    }
  }
  return sel;
}

}  // namespace laysyn
