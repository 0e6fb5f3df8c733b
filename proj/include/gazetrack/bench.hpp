#pragma once

// Latency sweep over widget counts for each update policy.

#include <cmath>
#include <fstream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazetrack/depth_model.hpp"
#include "gazetrack/error.hpp"
#include "gazetrack/pipeline.hpp"
#include "gazetrack/scenario.hpp"

namespace gazetrack {

inline std::vector<std::size_t> default_widget_sweep() {
  std::vector<std::size_t> counts;
  for (std::size_t n = 1; n <= 12; ++n) counts.push_back(n);
  for (std::size_t n : {25, 50, 100, 200}) counts.push_back(n);
  return counts;
}

/// Default measurement window: 30 s for static and event-based scenes, 1 s
/// for realtime.
inline double default_duration_s(PolicyKind kind) { return kind == PolicyKind::Realtime ? 1.0 : 30.0; }

struct BenchSpec {
  std::vector<PolicyKind> policies = {PolicyKind::Static, PolicyKind::EventBased, PolicyKind::Realtime};
  std::vector<std::size_t> widget_counts = default_widget_sweep();
  /// Overrides default_duration_s when positive.
  double duration_s = 0.0;
  double rate_hz = 60.0;
  MotionModel motion = MotionModel::Drift;
  GazePath gaze = GazePath::Seek;
  std::uint64_t seed = 1;
  std::size_t warmup_events = 100;
  /// Repeat each measured run and keep the per-event latencies of all repeats.
  std::size_t repeats = 1;
};

inline void validate(const BenchSpec& s) {
  if (s.policies.empty()) throw InvalidArgument("bench needs at least one scenario");
  if (s.widget_counts.empty()) throw InvalidArgument("bench needs at least one widget count");
  if (s.duration_s < 0.0) throw InvalidArgument("bench duration must be positive");
  if (!(s.rate_hz > 0.0)) throw InvalidArgument("bench rate must be positive");
  if (s.repeats == 0) throw InvalidArgument("bench repeats must be >= 1");
}

struct BenchRow {
  std::string scenario;
  std::size_t widgets = 0;
  std::size_t samples = 0;
  double mean_us = 0.0;
  double std_us = 0.0;
  double max_us = 0.0;
  std::size_t rebuilds = 0;
  std::size_t ticks = 0;
  std::size_t missed_ticks = 0;
  double mean_tree_update_us = 0.0;
};

struct ScalingFit {
  std::string scenario;
  /// Least-squares slope of log(mean latency) against log(widgets).
  double exponent = 0.0;
  bool super_linear = false;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<ScalingFit> scaling;
  nlohmann::json machine;
  nlohmann::json config;
};

inline nlohmann::json machine_descriptor() {
  nlohmann::json m;
  std::string cpu = "unknown";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  m["cpu"] = cpu;
  m["hardware_threads"] = std::thread::hardware_concurrency();
#if defined(__clang__)
  m["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  m["compiler"] = std::string("gcc ") + __VERSION__;
#else
  m["compiler"] = "unknown";
#endif
#ifdef NDEBUG
  m["build"] = "release";
#else
  m["build"] = "debug";
#endif
  return m;
}

/// Threshold on the fitted exponent above which scaling is flagged.
inline constexpr double kSuperLinearExponent = 1.1;

inline ScalingFit fit_scaling(const std::string& scenario, const std::vector<BenchRow>& rows) {
  ScalingFit fit;
  fit.scenario = scenario;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.scenario != scenario || r.widgets == 0 || !(r.mean_us > 0.0)) continue;
    const double x = std::log(static_cast<double>(r.widgets));
    const double y = std::log(r.mean_us);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  const double denom = static_cast<double>(n) * sxx - sx * sx;
  if (n >= 2 && denom > 0.0) fit.exponent = (static_cast<double>(n) * sxy - sx * sy) / denom;
  fit.super_linear = fit.exponent > kSuperLinearExponent;
  return fit;
}

/// Measures one (policy, widget count) cell. The first `warmup_events`
/// events are replayed once on a throwaway pipeline before the measured run.
inline BenchRow bench_one(PolicyKind policy, std::size_t widgets, const BenchSpec& spec,
                          const DepthModelParams& weights) {
  ScenarioSpec sc;
  sc.policy = policy;
  sc.widgets = widgets;
  sc.duration_s = spec.duration_s > 0.0 ? spec.duration_s : default_duration_s(policy);
  sc.rate_hz = spec.rate_hz;
  sc.motion = spec.motion;
  sc.gaze = spec.gaze;
  sc.seed = spec.seed + widgets;
  const Scenario scenario = simulate(sc);

  PipelineConfig cfg;
  cfg.policy = scenario.policy;
  cfg.ablate_intra = !weights.has_intra;

  {
    Pipeline warm(weights, cfg);
    const std::size_t n = std::min(spec.warmup_events, scenario.events.size());
    for (std::size_t i = 0; i < n; ++i) warm.process(scenario.events[i]);
  }

  BenchRow row;
  row.scenario = policy_name(policy);
  row.widgets = widgets;
  std::vector<double> latencies;
  for (std::size_t rep = 0; rep < spec.repeats; ++rep) {
    Pipeline pipeline(weights, cfg);
    for (const auto& e : scenario.events)
      if (auto rec = pipeline.process(e)) latencies.push_back(rec->latency_us);
    pipeline.finish();
    const RunSummary s = pipeline.summary();
    row.rebuilds += s.rebuilds;
    row.ticks += s.ticks;
    row.missed_ticks += s.missed_ticks;
    row.mean_tree_update_us += s.mean_tree_update_us / static_cast<double>(spec.repeats);
  }
  row.samples = latencies.size();
  if (!latencies.empty()) {
    double sum = 0.0;
    for (double v : latencies) {
      sum += v;
      row.max_us = std::max(row.max_us, v);
    }
    row.mean_us = sum / static_cast<double>(latencies.size());
    double ss = 0.0;
    for (double v : latencies) ss += (v - row.mean_us) * (v - row.mean_us);
    row.std_us = latencies.size() > 1 ? std::sqrt(ss / static_cast<double>(latencies.size() - 1)) : 0.0;
  }
  return row;
}

inline BenchReport run_bench(const BenchSpec& spec, const DepthModelParams& weights) {
  validate(spec);
  BenchReport report;
  report.machine = machine_descriptor();
  for (PolicyKind policy : spec.policies) {
    for (std::size_t n : spec.widget_counts) report.rows.push_back(bench_one(policy, n, spec, weights));
    report.scaling.push_back(fit_scaling(policy_name(policy), report.rows));
  }
  return report;
}

inline const char* bench_csv_header() {
  return "scenario,widgets,samples,mean_us,std_us,max_us,rebuilds,ticks,missed_ticks,mean_tree_update_us";
}

inline void write_bench_csv(std::ostream& out, const BenchReport& report) {
  out << bench_csv_header() << '\n';
  for (const auto& r : report.rows)
    out << r.scenario << ',' << r.widgets << ',' << r.samples << ',' << r.mean_us << ',' << r.std_us << ','
        << r.max_us << ',' << r.rebuilds << ',' << r.ticks << ',' << r.missed_ticks << ',' << r.mean_tree_update_us
        << '\n';
}

inline nlohmann::json bench_to_json(const BenchReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows)
    rows.push_back({{"scenario", r.scenario},
                    {"widgets", r.widgets},
                    {"samples", r.samples},
                    {"mean_us", r.mean_us},
                    {"std_us", r.std_us},
                    {"max_us", r.max_us},
                    {"rebuilds", r.rebuilds},
                    {"ticks", r.ticks},
                    {"missed_ticks", r.missed_ticks},
                    {"mean_tree_update_us", r.mean_tree_update_us}});
  nlohmann::json scaling = nlohmann::json::array();
  for (const auto& s : report.scaling)
    scaling.push_back({{"scenario", s.scenario}, {"exponent", s.exponent}, {"super_linear", s.super_linear}});
  return {{"rows", rows}, {"scaling", scaling}, {"machine", report.machine}, {"config", report.config}};
}

}  // namespace gazetrack
