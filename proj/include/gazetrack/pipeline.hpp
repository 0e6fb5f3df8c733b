#pragma once

// Real-time gaze monitoring loop: consumes an ordered stream of gaze samples
// and widget updates, keeps the quadtree current under an update policy, and
// emits one output record per gaze sample carrying the resolved target and the
// depth-level distribution.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gazetrack/depth_model.hpp"
#include "gazetrack/error.hpp"
#include "gazetrack/gaze_geometry.hpp"
#include "gazetrack/spatial_index.hpp"

namespace gazetrack {

struct GazeInput {
  GazePoint point;
  std::array<double, kNumFeatures> features{};
};

enum class DeltaOp { Add, Remove, Move };

struct WidgetDelta {
  DeltaOp op = DeltaOp::Add;
  Widget widget;  // only widget.id is meaningful for Remove
};

using WidgetSet = std::vector<Widget>;

struct InputEvent {
  std::uint64_t t = 0;
  std::variant<GazeInput, WidgetSet, WidgetDelta> payload;
  /// 1-based source line, 0 when the event was built in memory.
  std::size_t line = 0;

  bool is_gaze() const { return std::holds_alternative<GazeInput>(payload); }
};

enum class PolicyKind { Static, EventBased, Realtime };

struct UpdatePolicy {
  PolicyKind kind = PolicyKind::EventBased;
  double tick_hz = 60.0;

  static UpdatePolicy fixed() { return {PolicyKind::Static, 60.0}; }
  static UpdatePolicy event_based() { return {PolicyKind::EventBased, 60.0}; }
  static UpdatePolicy realtime(double hz = 60.0) { return {PolicyKind::Realtime, hz}; }
};

inline const char* policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Static: return "static";
    case PolicyKind::EventBased: return "event";
    case PolicyKind::Realtime: return "realtime";
  }
  return "?";
}

inline PolicyKind parse_policy(const std::string& name) {
  if (name == "static") return PolicyKind::Static;
  if (name == "event" || name == "event-based" || name == "eventbased") return PolicyKind::EventBased;
  if (name == "realtime") return PolicyKind::Realtime;
  throw InvalidArgument("unknown update policy '" + name + "'");
}

/// Timestamp (ms) of the k-th tick of a rate_hz clock started at t0. Shared by
/// the realtime policy and the scenario generator so both agree exactly.
inline std::uint64_t tick_time(std::uint64_t t0, std::uint64_t k, double rate_hz) {
  return t0 + static_cast<std::uint64_t>(std::floor(static_cast<double>(k) * 1000.0 / rate_hz));
}

struct PipelineConfig {
  QuadtreeConfig tree;
  UpdatePolicy policy;
  bool ablate_intra = false;
};

struct OutputRecord {
  std::uint64_t t = 0;
  std::optional<WidgetId> target;
  std::vector<WidgetId> hits;  // best first
  Probabilities probs{};
  DepthLabel label = DepthLabel::OnPlane;
  double latency_us = 0.0;
  std::optional<double> tree_update_us;
};

struct RunSummary {
  std::string policy;
  std::size_t events = 0;
  std::size_t gaze_events = 0;
  std::size_t widget_events = 0;
  double mean_latency_us = 0.0;
  double std_latency_us = 0.0;
  double max_latency_us = 0.0;
  std::size_t rebuilds = 0;
  std::size_t incremental_updates = 0;
  std::size_t ticks = 0;
  std::size_t missed_ticks = 0;
  double mean_tree_update_us = 0.0;
};

class Pipeline {
 public:
  using Clock = std::chrono::steady_clock;

  Pipeline(const DepthModelParams& weights, PipelineConfig cfg)
      : weights_(weights), cfg_(cfg), tree_(cfg.tree) {
    validate(cfg_.tree);
    if (cfg_.policy.kind == PolicyKind::Realtime && !(cfg_.policy.tick_hz > 0.0))
      throw InvalidArgument("realtime policy needs a positive tick rate");
    if (!cfg_.ablate_intra && !weights_.has_intra)
      throw InvalidArgument("weights were trained without intra-stream attention; enable ablation");
  }

  /// Processes one event; returns a record for gaze events.
  std::optional<OutputRecord> process(const InputEvent& event) {
    const auto start = Clock::now();
    if (seen_any_ && event.t < last_t_)
      throw OutOfOrder(location(event) + "timestamp " + std::to_string(event.t) + " precedes " +
                       std::to_string(last_t_));
    if (!seen_any_) {
      seen_any_ = true;
      t0_ = event.t;
    }
    last_t_ = event.t;
    ++events_;

    std::optional<double> tree_us;
    std::optional<OutputRecord> record;
    if (const auto* gaze = std::get_if<GazeInput>(&event.payload)) {
      tree_us = fire_ticks(event.t, /*inclusive=*/true);
      if (cfg_.policy.kind == PolicyKind::Static && !static_built_) {
        tree_us = add_opt(tree_us, rebuild());
        static_built_ = true;
      }
      record = resolve(event.t, *gaze);
    } else {
      const auto tick_us = fire_ticks(event.t, /*inclusive=*/false);
      ++widget_events_;
      tree_us = apply_update(event);
      if (tick_us) tree_us = add_opt(tree_us, *tick_us);
    }
    const double elapsed = micros(Clock::now() - start);
    interval_work_us_ += elapsed;
    if (tree_us) {
      tree_update_total_us_ += *tree_us;
      ++tree_updates_;
    }
    if (record) {
      record->latency_us = elapsed;
      record->tree_update_us = tree_us;
      latencies_.push_back(elapsed);
    }
    return record;
  }

  /// Closes the last tick interval; call once after the final event.
  void finish() {
    if (cfg_.policy.kind == PolicyKind::Realtime && ticks_ > 0) close_interval();
  }

  RunSummary summary() const {
    RunSummary s;
    s.policy = policy_name(cfg_.policy.kind);
    s.events = events_;
    s.gaze_events = latencies_.size();
    s.widget_events = widget_events_;
    if (!latencies_.empty()) {
      double sum = 0.0;
      for (double v : latencies_) {
        sum += v;
        s.max_latency_us = std::max(s.max_latency_us, v);
      }
      s.mean_latency_us = sum / static_cast<double>(latencies_.size());
      double ss = 0.0;
      for (double v : latencies_) ss += (v - s.mean_latency_us) * (v - s.mean_latency_us);
      s.std_latency_us = latencies_.size() > 1 ? std::sqrt(ss / static_cast<double>(latencies_.size() - 1)) : 0.0;
    }
    s.rebuilds = rebuilds_;
    s.incremental_updates = incremental_;
    s.ticks = ticks_;
    s.missed_ticks = missed_ticks_;
    s.mean_tree_update_us = tree_updates_ ? tree_update_total_us_ / static_cast<double>(tree_updates_) : 0.0;
    return s;
  }

  /// Widget set the next rebuild would use.
  std::vector<Widget> current_widgets() const {
    std::vector<Widget> out;
    out.reserve(latest_.size());
    for (const auto& [id, w] : latest_) out.push_back(w);
    return out;
  }

  const SharedQuadtree& tree() const { return tree_; }

 private:
  static double micros(Clock::duration d) { return std::chrono::duration<double, std::micro>(d).count(); }

  static std::optional<double> add_opt(std::optional<double> a, double b) { return a.value_or(0.0) + b; }

  static std::string location(const InputEvent& e) {
    return e.line ? "line " + std::to_string(e.line) + ": " : std::string();
  }

  OutputRecord resolve(std::uint64_t t, const GazeInput& gaze) {
    OutputRecord rec;
    rec.t = t;
    const auto snapshot = tree_.snapshot();
    const auto hits = snapshot->query_point(gaze.point);
    if (const auto target = resolve_target(hits)) rec.target = target->id;
    rec.hits.reserve(hits.size());
    for (const auto& w : hits) rec.hits.push_back(w.id);
    rec.probs = predict(weights_, gaze.features, cfg_.ablate_intra);
    rec.label = static_cast<DepthLabel>(argmax(rec.probs));
    return rec;
  }

  // Realtime ticks due at or before t (strictly before for widget events, so
  // a tick sees every update stamped with its own time).
  std::optional<double> fire_ticks(std::uint64_t t, bool inclusive) {
    if (cfg_.policy.kind != PolicyKind::Realtime) return std::nullopt;
    bool due = false;
    for (;;) {
      const std::uint64_t when = tick_time(t0_, next_tick_, cfg_.policy.tick_hz);
      if (inclusive ? when > t : when >= t) break;
      if (ticks_ > 0) close_interval();
      ++ticks_;
      ++next_tick_;
      due = true;
    }
    if (!due) return std::nullopt;
    return rebuild();
  }

  void close_interval() {
    const double budget_us = 1e6 / cfg_.policy.tick_hz;
    if (interval_work_us_ > budget_us) ++missed_ticks_;
    interval_work_us_ = 0.0;
  }

  double rebuild() {
    const auto start = Clock::now();
    const auto widgets = current_widgets();
    tree_.rebuild(widgets, cfg_.tree);
    ++rebuilds_;
    return micros(Clock::now() - start);
  }

  std::optional<double> apply_update(const InputEvent& event) {
    try {
      if (const auto* set = std::get_if<WidgetSet>(&event.payload)) {
        std::map<WidgetId, Widget> next;
        for (const auto& w : *set) {
          validate(w);
          if (!next.emplace(w.id, w).second)
            throw DuplicateWidget("widget " + std::to_string(w.id) + " appears twice in the update");
        }
        latest_ = std::move(next);
        if (cfg_.policy.kind == PolicyKind::EventBased) return rebuild();
        return std::nullopt;
      }
      const auto& delta = std::get<WidgetDelta>(event.payload);
      const WidgetId id = delta.widget.id;
      switch (delta.op) {
        case DeltaOp::Add:
          validate(delta.widget);
          if (latest_.contains(id)) throw DuplicateWidget("widget " + std::to_string(id) + " already present");
          latest_.emplace(id, delta.widget);
          break;
        case DeltaOp::Remove:
          if (!latest_.erase(id)) throw UnknownWidget("widget " + std::to_string(id) + " not present");
          break;
        case DeltaOp::Move:
          validate(delta.widget);
          if (!latest_.contains(id)) throw UnknownWidget("widget " + std::to_string(id) + " not present");
          latest_[id] = delta.widget;
          break;
      }
      if (cfg_.policy.kind != PolicyKind::EventBased) return std::nullopt;
      const auto start = Clock::now();
      tree_.update([&](Quadtree& tree) {
        switch (delta.op) {
          case DeltaOp::Add: tree.insert(delta.widget); break;
          case DeltaOp::Remove: tree.remove(id); break;
          case DeltaOp::Move: tree.move(delta.widget); break;
        }
      });
      ++incremental_;
      return micros(Clock::now() - start);
    } catch (const Error& e) {
      if (event.line) throw ParseError("line " + std::to_string(event.line), e.what());
      throw;
    }
  }

  const DepthModelParams& weights_;
  PipelineConfig cfg_;
  SharedQuadtree tree_;
  std::map<WidgetId, Widget> latest_;
  bool static_built_ = false;

  bool seen_any_ = false;
  std::uint64_t t0_ = 0;
  std::uint64_t last_t_ = 0;
  std::uint64_t next_tick_ = 0;

  std::size_t events_ = 0;
  std::size_t widget_events_ = 0;
  std::size_t rebuilds_ = 0;
  std::size_t incremental_ = 0;
  std::size_t ticks_ = 0;
  std::size_t missed_ticks_ = 0;
  double interval_work_us_ = 0.0;
  double tree_update_total_us_ = 0.0;
  std::size_t tree_updates_ = 0;
  std::vector<double> latencies_;
};

struct RunResult {
  std::vector<OutputRecord> records;
  RunSummary summary;
};

/// Runs the whole stream. `sink`, when set, receives each record as it is
/// emitted and the returned vector stays empty.
inline RunResult run(std::span<const InputEvent> events, const DepthModelParams& weights, PipelineConfig cfg,
                     const std::function<void(const OutputRecord&)>& sink = {}) {
  Pipeline pipeline(weights, cfg);
  RunResult result;
  for (const auto& e : events) {
    if (auto rec = pipeline.process(e)) {
      if (sink)
        sink(*rec);
      else
        result.records.push_back(std::move(*rec));
    }
  }
  pipeline.finish();
  result.summary = pipeline.summary();
  return result;
}

/// Brute-force reference for the policy semantics: replays the stream over a
/// plain widget list and answers every gaze event by linear scan.
struct ExpectedOutput {
  std::uint64_t t = 0;
  std::optional<WidgetId> target;
  std::vector<WidgetId> hits;

  friend bool operator==(const ExpectedOutput&, const ExpectedOutput&) = default;
};

inline std::vector<ExpectedOutput> expected_outputs(std::span<const InputEvent> events, UpdatePolicy policy) {
  std::map<WidgetId, Widget> latest;
  std::vector<Widget> visible;
  bool frozen = false;
  std::uint64_t t0 = events.empty() ? 0 : events.front().t;
  std::uint64_t next_tick = 0;
  std::vector<ExpectedOutput> out;
  auto snapshot = [&] {
    visible.clear();
    for (const auto& [id, w] : latest) visible.push_back(w);
  };
  auto ticks_through = [&](std::uint64_t t, bool inclusive) {
    bool due = false;
    for (;;) {
      const auto when = tick_time(t0, next_tick, policy.tick_hz);
      if (inclusive ? when > t : when >= t) break;
      ++next_tick;
      due = true;
    }
    if (due) snapshot();
  };
  for (const auto& e : events) {
    if (const auto* gaze = std::get_if<GazeInput>(&e.payload)) {
      if (policy.kind == PolicyKind::Realtime) ticks_through(e.t, true);
      if (policy.kind == PolicyKind::Static && !frozen) {
        snapshot();
        frozen = true;
      }
      ExpectedOutput x;
      x.t = e.t;
      for (const auto& w : scan_point(visible, gaze->point)) x.hits.push_back(w.id);
      if (!x.hits.empty()) x.target = x.hits.front();
      out.push_back(std::move(x));
      continue;
    }
    if (policy.kind == PolicyKind::Realtime) ticks_through(e.t, false);
    if (const auto* set = std::get_if<WidgetSet>(&e.payload)) {
      latest.clear();
      for (const auto& w : *set) latest[w.id] = w;
    } else {
      const auto& d = std::get<WidgetDelta>(e.payload);
      if (d.op == DeltaOp::Remove)
        latest.erase(d.widget.id);
      else
        latest[d.widget.id] = d.widget;
    }
    if (policy.kind == PolicyKind::EventBased) snapshot();
  }
  return out;
}

}  // namespace gazetrack
