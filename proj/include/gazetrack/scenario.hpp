#pragma once

// Seeded scenario generator for the simulate and bench commands: moving,
// resizing and churning widgets plus a gaze path, with brute-force expected
// targets for every gaze event.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "gazetrack/error.hpp"
#include "gazetrack/gaze_geometry.hpp"
#include "gazetrack/pipeline.hpp"
#include "gazetrack/random.hpp"
#include "gazetrack/spatial_index.hpp"

namespace gazetrack {

enum class MotionModel { Drift, Resize, Churn };
enum class GazePath { Sweep, Seek };

inline MotionModel parse_motion(const std::string& name) {
  if (name == "drift") return MotionModel::Drift;
  if (name == "resize") return MotionModel::Resize;
  if (name == "churn") return MotionModel::Churn;
  throw InvalidArgument("unknown motion model '" + name + "'");
}

inline const char* motion_name(MotionModel m) {
  switch (m) {
    case MotionModel::Drift: return "drift";
    case MotionModel::Resize: return "resize";
    case MotionModel::Churn: return "churn";
  }
  return "?";
}

inline GazePath parse_gaze_path(const std::string& name) {
  if (name == "sweep") return GazePath::Sweep;
  if (name == "seek") return GazePath::Seek;
  throw InvalidArgument("unknown gaze path '" + name + "'");
}

inline const char* gaze_path_name(GazePath g) { return g == GazePath::Sweep ? "sweep" : "seek"; }

struct ScenarioSpec {
  PolicyKind policy = PolicyKind::Realtime;
  std::size_t widgets = 12;
  double duration_s = 1.0;
  double rate_hz = 60.0;
  MotionModel motion = MotionModel::Drift;
  GazePath gaze = GazePath::Seek;
  std::uint64_t seed = 1;
  /// Event-based scenarios emit one widget delta every this many frames.
  std::size_t event_interval_frames = 15;
  GeneratorConfig geometry;
};

inline void validate(const ScenarioSpec& s) {
  if (!(s.duration_s > 0.0)) throw InvalidArgument("scenario duration must be positive");
  if (!(s.rate_hz > 0.0) || s.rate_hz > 1000.0) throw InvalidArgument("scenario rate must lie in (0, 1000] Hz");
  if (s.event_interval_frames == 0) throw InvalidArgument("event interval must be at least one frame");
  if (s.widgets > 100000) throw InvalidArgument("too many widgets");
}

inline std::size_t frame_count(const ScenarioSpec& s) {
  return static_cast<std::size_t>(std::llround(s.duration_s * s.rate_hz));
}

struct Scenario {
  std::vector<InputEvent> events;
  std::vector<ExpectedOutput> expected;
  UpdatePolicy policy;
};

namespace detail {

// Positions a rectangle inside the display with x + dx <= 1 holding exactly.
inline void keep_inside(Widget& w) {
  w.dx = std::clamp(w.dx, 1e-3, 1.0);
  w.dy = std::clamp(w.dy, 1e-3, 1.0);
  w.x = std::clamp(w.x, 0.0, 1.0 - w.dx);
  w.y = std::clamp(w.y, 0.0, 1.0 - w.dy);
  while (w.x + w.dx > 1.0) w.x = std::nextafter(w.x, 0.0);
  while (w.y + w.dy > 1.0) w.y = std::nextafter(w.y, 0.0);
}

struct MovingWidget {
  Widget w;
  double vx = 0.0;
  double vy = 0.0;
  double base_dx = 0.0;
  double base_dy = 0.0;
  double phase = 0.0;
  double freq_hz = 0.0;
};

class WidgetWorld {
 public:
  WidgetWorld(std::size_t count, MotionModel motion, Rng& rng) : motion_(motion), rng_(rng) {
    for (std::size_t i = 0; i < count; ++i) spawn();
  }

  void step(double t, double dt) {
    for (auto& m : live_) {
      if (motion_ == MotionModel::Resize) {
        const double cx = m.w.x + 0.5 * m.w.dx;
        const double cy = m.w.y + 0.5 * m.w.dy;
        const double scale = 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * m.freq_hz * t + m.phase);
        m.w.dx = m.base_dx * scale;
        m.w.dy = m.base_dy * scale;
        m.w.x = cx - 0.5 * m.w.dx;
        m.w.y = cy - 0.5 * m.w.dy;
      } else {
        m.w.x += m.vx * dt;
        m.w.y += m.vy * dt;
        if (m.w.x < 0.0 || m.w.x + m.w.dx > 1.0) m.vx = -m.vx;
        if (m.w.y < 0.0 || m.w.y + m.w.dy > 1.0) m.vy = -m.vy;
      }
      keep_inside(m.w);
    }
    if (motion_ == MotionModel::Churn && !live_.empty()) {
      // About one despawn/spawn pair per widget every 4 seconds.
      const double p = std::min(1.0, 0.25 * dt * static_cast<double>(live_.size()));
      if (rng_.uniform() < p) {
        removed_.push_back(live_[rng_.index(live_.size())].w.id);
        live_.erase(std::find_if(live_.begin(), live_.end(), [&](const MovingWidget& m) { return m.w.id == removed_.back(); }));
        spawn();
      }
    }
  }

  std::vector<Widget> snapshot() const {
    std::vector<Widget> out;
    out.reserve(live_.size());
    for (const auto& m : live_) out.push_back(m.w);
    return out;
  }

  const std::vector<MovingWidget>& live() const { return live_; }

  /// Ids despawned since the last call, and ids spawned since the last call.
  std::vector<WidgetId> take_removed() { return std::exchange(removed_, {}); }
  std::vector<WidgetId> take_added() { return std::exchange(added_, {}); }

 private:
  void spawn() {
    MovingWidget m;
    m.w.id = next_id_++;
    m.w.dx = rng_.uniform(0.05, 0.25);
    m.w.dy = rng_.uniform(0.05, 0.25);
    m.w.x = rng_.uniform(0.0, 1.0 - m.w.dx);
    m.w.y = rng_.uniform(0.0, 1.0 - m.w.dy);
    m.w.z = static_cast<std::int64_t>(rng_.index(4));
    m.vx = rng_.uniform(-0.3, 0.3);
    m.vy = rng_.uniform(-0.3, 0.3);
    m.base_dx = m.w.dx;
    m.base_dy = m.w.dy;
    m.phase = rng_.uniform(0.0, 2.0 * std::numbers::pi);
    m.freq_hz = rng_.uniform(0.2, 1.0);
    keep_inside(m.w);
    live_.push_back(m);
    added_.push_back(m.w.id);
  }

  MotionModel motion_;
  Rng& rng_;
  WidgetId next_id_ = 0;
  std::vector<MovingWidget> live_;
  std::vector<WidgetId> removed_;
  std::vector<WidgetId> added_;
};

inline GazePoint clamp_point(double gx, double gy, std::uint64_t t) {
  return {std::clamp(gx, 0.0, 1.0), std::clamp(gy, 0.0, 1.0), t};
}

}  // namespace detail

/// Builds the event stream and the linear-scan expected targets.
///
/// Every scenario opens with the full widget set at t = 0. Afterwards:
/// static scenes never change; event-based scenes emit one delta (move, or
/// remove + add under churn) every `event_interval_frames`; realtime scenes
/// emit the full set every frame. Frame k is stamped tick_time(0, k, rate).
inline Scenario simulate(const ScenarioSpec& spec) {
  validate(spec);
  const std::size_t frames = frame_count(spec);
  if (frames == 0) throw InvalidArgument("scenario has no frames");
  Rng rng(spec.seed);
  detail::WidgetWorld world(spec.widgets, spec.motion, rng);
  world.take_added();
  const auto samples = generate_dataset(frames, spec.seed ^ 0x5bd1e995ULL, spec.geometry);

  Scenario scenario;
  scenario.policy = {spec.policy, spec.rate_hz};
  auto& events = scenario.events;
  events.push_back({0, world.snapshot(), 0});

  std::vector<Widget> emitted = world.snapshot();
  std::size_t round_robin = 0;
  const double dt = 1.0 / spec.rate_hz;
  for (std::size_t k = 0; k < frames; ++k) {
    const std::uint64_t t = tick_time(0, k, spec.rate_hz);
    const double seconds = static_cast<double>(k) * dt;
    if (k > 0 && spec.policy != PolicyKind::Static) {
      world.step(seconds, dt);
      if (spec.policy == PolicyKind::Realtime) {
        events.push_back({t, world.snapshot(), 0});
        emitted = world.snapshot();
      } else if (k % spec.event_interval_frames == 0) {
        for (WidgetId id : world.take_removed()) {
          // A widget spawned and despawned between two emissions was never announced.
          if (std::erase_if(emitted, [&](const Widget& w) { return w.id == id; }) == 0) continue;
          events.push_back({t, WidgetDelta{DeltaOp::Remove, Widget{id}}, 0});
        }
        const auto added = world.take_added();
        for (const auto& m : world.live()) {
          if (std::find(added.begin(), added.end(), m.w.id) == added.end()) continue;
          events.push_back({t, WidgetDelta{DeltaOp::Add, m.w}, 0});
          emitted.push_back(m.w);
        }
        if (!world.live().empty()) {
          const Widget moved = world.live()[round_robin++ % world.live().size()].w;
          const auto it = std::find_if(emitted.begin(), emitted.end(), [&](const Widget& w) { return w.id == moved.id; });
          if (it != emitted.end() && !(*it == moved)) {
            events.push_back({t, WidgetDelta{DeltaOp::Move, moved}, 0});
            *it = moved;
          }
        }
      }
    }

    GazePoint point;
    if (spec.gaze == GazePath::Sweep) {
      point = detail::clamp_point(0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * 0.37 * seconds),
                                  0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * 0.23 * seconds + 0.5), t);
    } else if (k % 2 == 0 && !emitted.empty()) {
      const Widget& w = emitted[(k / 2) % emitted.size()];
      point = detail::clamp_point(w.x + 0.5 * w.dx, w.y + 0.5 * w.dy, t);
    } else {
      point = {rng.uniform(), rng.uniform(), t};
      for (int attempt = 0; attempt < 64; ++attempt) {
        const bool covered =
            std::any_of(emitted.begin(), emitted.end(), [&](const Widget& w) { return w.contains(point.gx, point.gy); });
        if (!covered) break;
        point = {rng.uniform(), rng.uniform(), t};
      }
    }
    GazeInput gaze;
    gaze.point = point;
    gaze.features = samples[k].features;
    events.push_back({t, gaze, 0});
  }
  scenario.expected = expected_outputs(events, scenario.policy);
  return scenario;
}

}  // namespace gazetrack
