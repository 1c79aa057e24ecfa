#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace laysyn {

/// XOR swizzle on byte addresses: bits [M+S, M+S+B) are folded onto [M, M+B).
struct Swizzle {
  int bits = 0;
  int base = 0;
  int shift = 0;

  static Swizzle identity() { return {}; }
  bool is_identity() const { return bits == 0; }
  int64_t operator()(int64_t addr) const;
  bool operator==(const Swizzle&) const = default;
};

Swizzle make_swizzle(int bits, int base, int shift);
std::string to_string(const Swizzle& s);
/// Parses "SW(B,M,S)".
Swizzle parse_swizzle(std::string_view text);

/// Identity plus every (B,M,S) with 1 <= B <= 3, min_base <= M <= 4, B <= S <= 5.
std::vector<Swizzle> default_swizzle_candidates(int min_base = 2);

/// Shared-memory bank geometry.
struct BankModel {
  int banks = 32;
  int bank_bytes = 4;
};

/// Byte addresses touched by the threads of one warp-wide access.
struct AccessPattern {
  std::vector<int64_t> addresses;
  int width = 4;
};

/// Maximum number of distinct words mapped to one bank within a transaction
/// phase; 1 means conflict-free. Wide accesses are split into phases of
/// banks*bank_bytes/width threads.
int bank_conflicts(const AccessPattern& p, const BankModel& model = {});

struct SwizzleScore {
  Swizzle swizzle;
  int64_t total_conflicts = 0;
};

struct SwizzleSelection {
  Swizzle best;
  int64_t best_total = 0;
  int64_t identity_total = 0;
  std::vector<SwizzleScore> scores;
};

/// Picks the candidate minimising the summed max-way conflicts over patterns
/// (addresses are pre-swizzle byte addresses). Ties go to smaller (B, M, S).
SwizzleSelection score_swizzles(std::span<const AccessPattern> patterns, std::span<const Swizzle> candidates,
                                const BankModel& model = {});

}  // namespace laysyn
