#include "laysyn/tv_layout.hpp"

#include <numeric>

#include "laysyn/error.hpp"

namespace laysyn {

namespace {

Layout mode_from(const std::vector<Leaf>& leaves) {
  std::vector<Leaf> kept;
  for (const auto& l : leaves)
    if (l.size != 1) kept.push_back(l);
  if (kept.size() == 1) return {IntTuple(kept[0].size), IntTuple(kept[0].stride)};
  if (kept.empty()) return {IntTuple(1), IntTuple(0)};
  return Layout::from_leaves(kept);
}

}  // namespace

int64_t TvLayout::tile_size() const {
  return std::accumulate(tile.begin(), tile.end(), int64_t{1}, [](int64_t a, int64_t b) { return checked_mul(a, b); });
}

std::vector<int64_t> TvLayout::coord(int64_t thread, int64_t value) const {
  return decode_colex((*this)(thread, value), tile);
}

TvLayout make_tv(const std::vector<Leaf>& thread, const std::vector<Leaf>& value, std::vector<int64_t> tile) {
  return {make_tuple_layout({mode_from(thread), mode_from(value)}), std::move(tile)};
}

std::string to_string(const TvLayout& tv) { return to_string(tv.layout); }

bool tv_equal(const TvLayout& a, const TvLayout& b) {
  if (a.tile != b.tile || a.threads() != b.threads() || a.values() != b.values()) return false;
  if (a.layout == b.layout) return true;
  return pointwise_equal(a.layout, b.layout);
}

bool tv_well_formed(const TvLayout& tv) {
  if (tv.layout.rank() != 2) return false;
  const int64_t n = tv.tile_size();
  std::vector<Leaf> live;
  for (const auto& l : tv.layout.mode(0).leaves())
    if (l.stride != 0) live.push_back(l);
  for (const auto& l : tv.layout.mode(1).leaves()) live.push_back(l);
  const Layout core = Layout::from_leaves(live);
  if (core.size() != n || !is_injective(core)) return false;
  for (int64_t x = 0; x < core.size(); ++x)
    if (core(x) >= n) return false;
  return true;
}

TvLayout tv_simplify(const TvLayout& tv) {
  return make_tv(tv.layout.mode(0).leaves(), tv.layout.mode(1).leaves(), tv.tile);
}

}  // namespace laysyn
