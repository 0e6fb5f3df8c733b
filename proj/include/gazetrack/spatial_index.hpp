#pragma once

// Dynamic quadtree over the normalized display [0,1]^2 resolving gaze points
// to the (possibly overlapping) widgets beneath them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/container/small_vector.hpp>

#include "gazetrack/error.hpp"

namespace gazetrack {

using WidgetId = std::uint64_t;

/// Axis-aligned widget rectangle in normalized display coordinates.
/// (x, y) is the top-left corner; larger z is nearer to the viewer.
struct Widget {
  WidgetId id = 0;
  double x = 0.0;
  double y = 0.0;
  double dx = 0.0;
  double dy = 0.0;
  std::int64_t z = 0;

  double area() const noexcept { return dx * dy; }

  /// Closed-rectangle containment.
  bool contains(double px, double py) const noexcept {
    return px >= x && px <= x + dx && py >= y && py <= y + dy;
  }

  friend bool operator==(const Widget&, const Widget&) = default;
};

struct GazePoint {
  double gx = 0.0;
  double gy = 0.0;
  std::uint64_t t = 0;
};

struct QuadtreeConfig {
  /// Maximum widgets per leaf before it subdivides.
  std::size_t capacity = 1;
  /// Minimum quadrant edge; must be a power of 1/2.
  double min_size = 1.0 / 256.0;
};

inline void validate(const Widget& w) {
  auto fail = [&](const char* why) {
    throw InvalidWidget("widget " + std::to_string(w.id) + ": " + why);
  };
  if (!std::isfinite(w.x) || !std::isfinite(w.y) || !std::isfinite(w.dx) || !std::isfinite(w.dy))
    fail("non-finite coordinate");
  if (!(w.dx > 0.0) || !(w.dy > 0.0)) fail("non-positive extent");
  if (w.dx > 1.0 || w.dy > 1.0) fail("extent larger than the display");
  if (w.x < 0.0 || w.y < 0.0 || w.x + w.dx > 1.0 || w.y + w.dy > 1.0)
    fail("rectangle outside the display");
}

inline void validate(const GazePoint& g) {
  if (!(g.gx >= 0.0 && g.gx <= 1.0 && g.gy >= 0.0 && g.gy <= 1.0))
    throw PointOutOfBounds("gaze point (" + std::to_string(g.gx) + ", " + std::to_string(g.gy) +
                           ") outside [0,1]^2");
}

/// Depth at which quadrants reach min_size, i.e. log2(1 / min_size).
inline int max_depth(const QuadtreeConfig& cfg) {
  int exponent = 0;
  std::frexp(cfg.min_size, &exponent);
  return 1 - exponent;
}

inline void validate(const QuadtreeConfig& cfg) {
  if (cfg.capacity < 1) throw InvalidConfig("capacity must be >= 1");
  if (!(cfg.min_size > 0.0) || cfg.min_size > 1.0)
    throw InvalidConfig("min_size must lie in (0, 1]");
  int exponent = 0;
  if (std::frexp(cfg.min_size, &exponent) != 0.5)
    throw InvalidConfig("min_size must be a power of 1/2");
}

/// Total target order: higher z, then smaller area, then smaller id.
inline bool ranks_above(const Widget& a, const Widget& b) noexcept {
  if (a.z != b.z) return a.z > b.z;
  const double area_a = a.area();
  const double area_b = b.area();
  if (area_a != area_b) return area_a < area_b;
  return a.id < b.id;
}

/// Picks the gaze target among query hits; none when nothing was hit.
inline std::optional<Widget> resolve_target(std::span<const Widget> hits) {
  if (hits.empty()) return std::nullopt;
  return *std::min_element(hits.begin(), hits.end(), ranks_above);
}

inline void sort_by_rank(std::vector<Widget>& widgets) {
  std::sort(widgets.begin(), widgets.end(), ranks_above);
}

/// Linear scan over a widget set; the ground truth for simulated scenarios.
inline std::vector<Widget> scan_point(std::span<const Widget> widgets, GazePoint g) {
  validate(g);
  std::vector<Widget> hits;
  for (const auto& w : widgets)
    if (w.contains(g.gx, g.gy)) hits.push_back(w);
  sort_by_rank(hits);
  return hits;
}

class Quadtree {
 public:
  explicit Quadtree(QuadtreeConfig cfg = {}) : config_(cfg) {
    validate(config_);
    depth_limit_ = max_depth(config_);
    nodes_.push_back(Node{0.0, 0.0, 1.0, 0, kLeaf, {}});
  }

  /// Top-down bulk construction; the result is structurally identical to
  /// inserting the widgets one by one.
  static Quadtree build(std::span<const Widget> widgets, QuadtreeConfig cfg = {}) {
    Quadtree tree(cfg);
    std::vector<const Widget*> scratch;
    scratch.reserve(widgets.size() * 8);
    tree.widgets_.reserve(widgets.size());
    for (const auto& w : widgets) {
      validate(w);
      if (!tree.widgets_.emplace(w.id, w).second)
        throw DuplicateWidget("widget " + std::to_string(w.id) + " already present");
      scratch.push_back(&w);
    }
    tree.build_node(0, scratch, 0, scratch.size());
    return tree;
  }

  void insert(const Widget& w) {
    validate(w);
    if (widgets_.contains(w.id))
      throw DuplicateWidget("widget " + std::to_string(w.id) + " already present");
    widgets_.emplace(w.id, w);
    insert_into(0, w);
  }

  void remove(WidgetId id) {
    const auto it = widgets_.find(id);
    if (it == widgets_.end()) throw UnknownWidget("widget " + std::to_string(id) + " not present");
    const Widget w = it->second;
    widgets_.erase(it);
    remove_from(0, w);
  }

  /// Replaces the rectangle (and z) of an existing widget.
  void move(const Widget& w) {
    validate(w);
    if (!widgets_.contains(w.id))
      throw UnknownWidget("widget " + std::to_string(w.id) + " not present");
    remove(w.id);
    insert(w);
  }

  /// Widgets whose closed rectangle contains g, deduplicated and sorted by
  /// target rank (best first).
  std::vector<Widget> query_point(GazePoint g) const {
    validate(g);
    std::vector<WidgetId> ids;
    collect(0, g.gx, g.gy, ids);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<Widget> hits;
    hits.reserve(ids.size());
    for (WidgetId id : ids) hits.push_back(widgets_.at(id));
    sort_by_rank(hits);
    return hits;
  }

  bool contains(WidgetId id) const { return widgets_.contains(id); }
  const Widget& widget(WidgetId id) const { return widgets_.at(id); }
  std::size_t size() const noexcept { return widgets_.size(); }
  bool empty() const noexcept { return widgets_.empty(); }
  const QuadtreeConfig& config() const noexcept { return config_; }

  std::vector<Widget> widgets() const {
    std::vector<Widget> out;
    out.reserve(widgets_.size());
    for (const auto& [id, w] : widgets_) out.push_back(w);
    std::sort(out.begin(), out.end(), [](const Widget& a, const Widget& b) { return a.id < b.id; });
    return out;
  }

  /// Depth of the deepest reachable node (root = 0).
  int depth() const { return depth_below(0); }

  std::size_t node_count() const { return count_nodes(0); }

  bool root_is_leaf() const noexcept { return nodes_[0].first_child == kLeaf; }

  /// Ids referenced by the root when it is a leaf.
  std::vector<WidgetId> root_ids() const { return {nodes_[0].ids.begin(), nodes_[0].ids.end()}; }

  /// Visits reachable leaves as (x, y, size, depth, ids).
  template <class Visitor>
  void for_each_leaf(Visitor&& visit) const {
    walk_leaves(0, visit);
  }

  /// Canonical form: sorted (depth, x, y, sorted ids) per leaf. Two trees with
  /// equal canonical forms have identical structure and references.
  std::vector<std::string> canonical_form() const {
    std::vector<std::string> out;
    for_each_leaf([&](double x, double y, double, int depth, std::span<const WidgetId> ids) {
      std::vector<WidgetId> sorted(ids.begin(), ids.end());
      std::sort(sorted.begin(), sorted.end());
      std::string line = std::to_string(depth) + ":" + std::to_string(x) + "," + std::to_string(y) + ":";
      for (WidgetId id : sorted) line += std::to_string(id) + ";";
      out.push_back(std::move(line));
    });
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Throws std::logic_error describing the first violated structural invariant.
  void check_invariants() const {
    std::vector<WidgetId> seen;
    check_node(0, 0.0, 0.0, 1.0, 0, seen);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    if (seen.size() != widgets_.size()) throw std::logic_error("leaf references do not cover the widget set");
    for (WidgetId id : seen)
      if (!widgets_.contains(id)) throw std::logic_error("leaf references unknown widget " + std::to_string(id));
  }

 private:
  static constexpr std::int32_t kLeaf = -1;
  // Most leaves reference one or two widgets.
  using IdList = boost::container::small_vector<WidgetId, 2>;

  struct Node {
    double x;
    double y;
    double size;
    int depth;
    std::int32_t first_child;  // kLeaf, or index of four contiguous children
    IdList ids;
  };

  static bool overlaps(const Node& n, const Widget& w) noexcept {
    return w.x <= n.x + n.size && w.x + w.dx >= n.x && w.y <= n.y + n.size && w.y + w.dy >= n.y;
  }

  static bool region_contains(const Node& n, double px, double py) noexcept {
    return px >= n.x && px <= n.x + n.size && py >= n.y && py <= n.y + n.size;
  }

  bool is_leaf(std::int32_t idx) const noexcept { return nodes_[idx].first_child == kLeaf; }

  void insert_into(std::int32_t idx, const Widget& w) {
    if (!overlaps(nodes_[idx], w)) return;
    if (!is_leaf(idx)) {
      const std::int32_t first = nodes_[idx].first_child;
      for (std::int32_t c = 0; c < 4; ++c) insert_into(first + c, w);
      return;
    }
    nodes_[idx].ids.push_back(w.id);
    maybe_split(idx);
  }

  // Candidates for node idx are scratch[begin, end); each child's candidates
  // are appended past the end and dropped after recursing.
  void build_node(std::int32_t idx, std::vector<const Widget*>& scratch, std::size_t begin, std::size_t end) {
    if (end - begin <= config_.capacity || nodes_[idx].depth >= depth_limit_) {
      auto& ids = nodes_[idx].ids;
      ids.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) ids.push_back(scratch[i]->id);
      return;
    }
    const std::int32_t first = allocate_children();
    const Node parent = {nodes_[idx].x, nodes_[idx].y, nodes_[idx].size, nodes_[idx].depth, first, {}};
    nodes_[idx].first_child = first;
    const double half = parent.size * 0.5;
    for (std::int32_t c = 0; c < 4; ++c) {
      Node& child = nodes_[first + c];
      child.x = parent.x + (c & 1 ? half : 0.0);
      child.y = parent.y + (c & 2 ? half : 0.0);
      child.size = half;
      child.depth = parent.depth + 1;
      child.first_child = kLeaf;
      child.ids.clear();
    }
    for (std::int32_t c = 0; c < 4; ++c) {
      const std::size_t mark = scratch.size();
      for (std::size_t i = begin; i < end; ++i) {
        const Widget* w = scratch[i];
        if (overlaps(nodes_[first + c], *w)) scratch.push_back(w);
      }
      build_node(first + c, scratch, mark, scratch.size());
      scratch.resize(mark);
    }
  }

  void maybe_split(std::int32_t idx) {
    if (nodes_[idx].ids.size() <= config_.capacity || nodes_[idx].depth >= depth_limit_) return;
    const std::int32_t first = allocate_children();
    Node& parent = nodes_[idx];
    const double half = parent.size * 0.5;
    const int child_depth = parent.depth + 1;
    const double px = parent.x;
    const double py = parent.y;
    IdList ids = std::move(parent.ids);
    parent.ids.clear();
    parent.first_child = first;
    for (std::int32_t c = 0; c < 4; ++c) {
      Node& child = nodes_[first + c];
      child.x = px + (c & 1 ? half : 0.0);
      child.y = py + (c & 2 ? half : 0.0);
      child.size = half;
      child.depth = child_depth;
      child.first_child = kLeaf;
      child.ids.clear();
      for (WidgetId id : ids)
        if (overlaps(child, widgets_.at(id))) child.ids.push_back(id);
    }
    for (std::int32_t c = 0; c < 4; ++c) maybe_split(first + c);
  }

  std::int32_t allocate_children() {
    if (!free_blocks_.empty()) {
      const std::int32_t first = free_blocks_.back();
      free_blocks_.pop_back();
      return first;
    }
    const auto first = static_cast<std::int32_t>(nodes_.size());
    nodes_.resize(nodes_.size() + 4, Node{0.0, 0.0, 0.0, 0, kLeaf, {}});
    return first;
  }

  void remove_from(std::int32_t idx, const Widget& w) {
    if (!overlaps(nodes_[idx], w)) return;
    if (is_leaf(idx)) {
      auto& ids = nodes_[idx].ids;
      ids.erase(std::remove(ids.begin(), ids.end(), w.id), ids.end());
      return;
    }
    const std::int32_t first = nodes_[idx].first_child;
    for (std::int32_t c = 0; c < 4; ++c) remove_from(first + c, w);
    maybe_collapse(idx);
  }

  // Children are collapsed bottom-up, so an internal node always has more
  // than `capacity` distinct widgets below it.
  void maybe_collapse(std::int32_t idx) {
    const std::int32_t first = nodes_[idx].first_child;
    std::vector<WidgetId> merged;
    for (std::int32_t c = 0; c < 4; ++c) {
      if (!is_leaf(first + c)) return;
      const auto& ids = nodes_[first + c].ids;
      merged.insert(merged.end(), ids.begin(), ids.end());
    }
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    if (merged.size() > config_.capacity) return;
    for (std::int32_t c = 0; c < 4; ++c) nodes_[first + c].ids.clear();
    free_blocks_.push_back(first);
    nodes_[idx].first_child = kLeaf;
    nodes_[idx].ids.assign(merged.begin(), merged.end());
  }

  void collect(std::int32_t idx, double px, double py, std::vector<WidgetId>& out) const {
    const Node& n = nodes_[idx];
    if (n.first_child != kLeaf) {
      for (std::int32_t c = 0; c < 4; ++c)
        if (region_contains(nodes_[n.first_child + c], px, py)) collect(n.first_child + c, px, py, out);
      return;
    }
    for (WidgetId id : n.ids)
      if (widgets_.at(id).contains(px, py)) out.push_back(id);
  }

  int depth_below(std::int32_t idx) const {
    const Node& n = nodes_[idx];
    if (n.first_child == kLeaf) return n.depth;
    int d = n.depth;
    for (std::int32_t c = 0; c < 4; ++c) d = std::max(d, depth_below(n.first_child + c));
    return d;
  }

  std::size_t count_nodes(std::int32_t idx) const {
    const Node& n = nodes_[idx];
    if (n.first_child == kLeaf) return 1;
    std::size_t total = 1;
    for (std::int32_t c = 0; c < 4; ++c) total += count_nodes(n.first_child + c);
    return total;
  }

  template <class Visitor>
  void walk_leaves(std::int32_t idx, Visitor& visit) const {
    const Node& n = nodes_[idx];
    if (n.first_child == kLeaf) {
      visit(n.x, n.y, n.size, n.depth, std::span<const WidgetId>(n.ids.data(), n.ids.size()));
      return;
    }
    for (std::int32_t c = 0; c < 4; ++c) walk_leaves(n.first_child + c, visit);
  }

  // Appends every leaf reference in the subtree to `seen`.
  void check_node(std::int32_t idx, double x, double y, double size, int depth,
                  std::vector<WidgetId>& seen) const {
    const Node& n = nodes_[idx];
    if (n.x != x || n.y != y || n.size != size || n.depth != depth)
      throw std::logic_error("node region is not the exact quadrant of its parent");
    if (depth > depth_limit_) throw std::logic_error("node deeper than the min-size bound");
    if (n.first_child != kLeaf) {
      if (!n.ids.empty()) throw std::logic_error("internal node holds references");
      const std::size_t before = seen.size();
      const double half = size * 0.5;
      for (std::int32_t c = 0; c < 4; ++c)
        check_node(n.first_child + c, x + (c & 1 ? half : 0.0), y + (c & 2 ? half : 0.0), half, depth + 1,
                   seen);
      std::vector<WidgetId> below(seen.begin() + static_cast<std::ptrdiff_t>(before), seen.end());
      std::sort(below.begin(), below.end());
      below.erase(std::unique(below.begin(), below.end()), below.end());
      if (below.size() <= config_.capacity)
        throw std::logic_error("internal node with no more than capacity widgets below it");
      return;
    }
    std::vector<WidgetId> ids(n.ids.begin(), n.ids.end());
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw std::logic_error("leaf references a widget twice");
    if (ids.size() > config_.capacity && depth < depth_limit_)
      throw std::logic_error("over-capacity leaf above the min-size bound");
    for (WidgetId id : ids) {
      const auto it = widgets_.find(id);
      if (it == widgets_.end()) throw std::logic_error("leaf references unknown widget");
      if (!overlaps(n, it->second)) throw std::logic_error("leaf references a widget outside its region");
    }
    for (const auto& [id, w] : widgets_)
      if (overlaps(n, w) && !std::binary_search(ids.begin(), ids.end(), id))
        throw std::logic_error("widget " + std::to_string(id) + " missing from an overlapping leaf");
    seen.insert(seen.end(), ids.begin(), ids.end());
  }

  QuadtreeConfig config_;
  int depth_limit_ = 0;
  std::vector<Node> nodes_;
  std::vector<std::int32_t> free_blocks_;
  std::unordered_map<WidgetId, Widget> widgets_;
};

/// Single-writer / multi-reader holder. Readers take an immutable snapshot;
/// a writer publishes a complete new tree, so readers never observe a
/// half-applied rebuild.
class SharedQuadtree {
 public:
  explicit SharedQuadtree(QuadtreeConfig cfg = {}) : current_(std::make_shared<Quadtree>(cfg)) {}

  std::shared_ptr<const Quadtree> snapshot() const {
    std::lock_guard lock(snapshot_mutex_);
    return current_;
  }

  void publish(Quadtree tree) {
    auto next = std::make_shared<Quadtree>(std::move(tree));
    std::lock_guard lock(snapshot_mutex_);
    current_ = std::move(next);
  }

  /// Applies a mutation atomically. Mutates in place while no reader holds a
  /// snapshot; otherwise copies, mutates and publishes.
  template <class Mutation>
  void update(Mutation&& mutate) {
    std::lock_guard writer(writer_mutex_);
    {
      std::lock_guard lock(snapshot_mutex_);
      if (current_.use_count() == 1) {
        mutate(*current_);
        return;
      }
    }
    Quadtree next = *snapshot();
    mutate(next);
    publish(std::move(next));
  }

  void rebuild(std::span<const Widget> widgets, QuadtreeConfig cfg) {
    std::lock_guard writer(writer_mutex_);
    publish(Quadtree::build(widgets, cfg));
  }

 private:
  mutable std::mutex snapshot_mutex_;
  std::mutex writer_mutex_;
  std::shared_ptr<Quadtree> current_;
};

}  // namespace gazetrack
