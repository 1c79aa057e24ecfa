#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laysyn/layout.hpp"

namespace laysyn {

/// Thread-value layout: ((thread...),(value...)) -> colex index of a tile.
///
/// Thread leaves of stride 0 replicate data across threads (a broadcast);
/// apart from those the map is a bijection onto the tile.
struct TvLayout {
  Layout layout;
  std::vector<int64_t> tile;

  int64_t threads() const { return product(layout.shape()[0]); }
  int64_t values() const { return product(layout.shape()[1]); }
  int64_t tile_size() const;
  int64_t operator()(int64_t thread, int64_t value) const { return layout(thread + threads() * value); }
  std::vector<int64_t> coord(int64_t thread, int64_t value) const;
};

TvLayout make_tv(const std::vector<Leaf>& thread, const std::vector<Leaf>& value, std::vector<int64_t> tile);
std::string to_string(const TvLayout& tv);

/// Same mode sizes and the same image at every (thread, value).
bool tv_equal(const TvLayout& a, const TvLayout& b);

/// Every tile element is reached and only broadcast thread leaves alias.
bool tv_well_formed(const TvLayout& tv);

/// Drops size-1 leaves inside each mode, keeping two modes.
TvLayout tv_simplify(const TvLayout& tv);

}  // namespace laysyn
