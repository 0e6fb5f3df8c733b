#pragma once

// Shared generators and oracles for the tests.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "gazetrack/random.hpp"
#include "gazetrack/spatial_index.hpp"

namespace testing_support {

using gazetrack::Rng;
using gazetrack::Widget;

inline Widget random_widget(Rng& rng, std::uint64_t id, double max_edge = 0.3) {
  Widget w;
  w.id = id;
  w.dx = rng.uniform(1e-3, max_edge);
  w.dy = rng.uniform(1e-3, max_edge);
  w.x = rng.uniform(0.0, 1.0 - w.dx);
  w.y = rng.uniform(0.0, 1.0 - w.dy);
  w.z = static_cast<std::int64_t>(rng.index(5));
  return w;
}

inline std::vector<Widget> random_widgets(Rng& rng, std::size_t n, double max_edge = 0.3) {
  std::vector<Widget> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_widget(rng, i, max_edge));
  return out;
}

// Points that land exactly on widget edges and quadrant lines as well as
// uniform ones.
inline gazetrack::GazePoint random_point(Rng& rng, const std::vector<Widget>& widgets) {
  const auto kind = rng.index(4);
  if (kind == 0 && !widgets.empty()) {
    const Widget& w = widgets[rng.index(widgets.size())];
    const double xs[] = {w.x, w.x + w.dx, w.x + 0.5 * w.dx};
    const double ys[] = {w.y, w.y + w.dy, w.y + 0.5 * w.dy};
    return {xs[rng.index(3)], ys[rng.index(3)], 0};
  }
  if (kind == 1) {
    const double grid = static_cast<double>(rng.index(257)) / 256.0;
    return {grid, rng.uniform(), 0};
  }
  return {rng.uniform(), rng.uniform(), 0};
}

// Plain containment test, written out independently of Widget::contains.
inline std::vector<std::uint64_t> oracle_hits(const std::vector<Widget>& widgets, double px, double py) {
  std::vector<std::uint64_t> ids;
  for (const auto& w : widgets)
    if (px >= w.x && px <= w.x + w.dx && py >= w.y && py <= w.y + w.dy) ids.push_back(w.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// Tie-break applied by hand: max z, then min area, then min id.
inline std::optional<std::uint64_t> oracle_target(const std::vector<Widget>& widgets, double px, double py) {
  std::optional<Widget> best;
  for (const auto& w : widgets) {
    if (!(px >= w.x && px <= w.x + w.dx && py >= w.y && py <= w.y + w.dy)) continue;
    if (!best) {
      best = w;
      continue;
    }
    if (w.z != best->z) {
      if (w.z > best->z) best = w;
      continue;
    }
    const double a = w.dx * w.dy, b = best->dx * best->dy;
    if (a != b) {
      if (a < b) best = w;
      continue;
    }
    if (w.id < best->id) best = w;
  }
  if (!best) return std::nullopt;
  return best->id;
}

inline std::vector<std::uint64_t> sorted_ids(const std::vector<Widget>& hits) {
  std::vector<std::uint64_t> ids;
  for (const auto& w : hits) ids.push_back(w.id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace testing_support
