#pragma once

// Event and output-record files, JSON Lines.
//
//   {"t":u64,"gaze":{"features":{"rlx":..,...,"dv":..},"gx":..,"gy":..}}
//   {"t":u64,"widgets":[{"id":..,"x":..,"y":..,"dx":..,"dy":..,"z":..},...]}
//   {"t":u64,"delta":{"op":"add"|"move","id":..,"x":..,"y":..,"dx":..,"dy":..,"z":..}}
//   {"t":u64,"delta":{"op":"remove","id":..}}
//
// The screen point gx, gy sits beside the feature object because two of the
// features share those names.
//
// Output: one record object per gaze event, then {"summary":{...}}.

#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazetrack/error.hpp"
#include "gazetrack/pipeline.hpp"
#include "gazetrack/widget_io.hpp"

namespace gazetrack {

inline nlohmann::json event_to_json(const InputEvent& e) {
  nlohmann::json j;
  j["t"] = e.t;
  if (const auto* gaze = std::get_if<GazeInput>(&e.payload)) {
    nlohmann::json features = nlohmann::json::object();
    for (std::size_t f = 0; f < kNumFeatures; ++f) features[kFeatureNames[f]] = gaze->features[f];
    nlohmann::json g = {{"features", std::move(features)}};
    g["gx"] = gaze->point.gx;
    g["gy"] = gaze->point.gy;
    j["gaze"] = std::move(g);
  } else if (const auto* set = std::get_if<WidgetSet>(&e.payload)) {
    j["widgets"] = *set;
  } else {
    const auto& d = std::get<WidgetDelta>(e.payload);
    nlohmann::json delta;
    if (d.op == DeltaOp::Remove) {
      delta = {{"op", "remove"}, {"id", d.widget.id}};
    } else {
      delta = d.widget;
      delta["op"] = d.op == DeltaOp::Add ? "add" : "move";
    }
    j["delta"] = std::move(delta);
  }
  return j;
}

inline InputEvent event_from_json(const nlohmann::json& j) {
  InputEvent e;
  e.t = j.at("t").get<std::uint64_t>();
  const int kinds = static_cast<int>(j.contains("gaze")) + static_cast<int>(j.contains("widgets")) +
                    static_cast<int>(j.contains("delta"));
  if (kinds != 1) throw FormatError("event must carry exactly one of gaze, widgets, delta");
  if (j.contains("gaze")) {
    const auto& g = j.at("gaze");
    GazeInput gaze;
    const auto& features = g.at("features");
    for (std::size_t f = 0; f < kNumFeatures; ++f) gaze.features[f] = features.at(kFeatureNames[f]).get<double>();
    gaze.point = {g.at("gx").get<double>(), g.at("gy").get<double>(), e.t};
    validate(gaze.point);
    e.payload = gaze;
  } else if (j.contains("widgets")) {
    e.payload = j.at("widgets").get<WidgetSet>();
  } else {
    const auto& d = j.at("delta");
    const auto op = d.at("op").get<std::string>();
    WidgetDelta delta;
    if (op == "remove") {
      delta.op = DeltaOp::Remove;
      delta.widget.id = d.at("id").get<WidgetId>();
    } else if (op == "add" || op == "move") {
      delta.op = op == "add" ? DeltaOp::Add : DeltaOp::Move;
      delta.widget = d.get<Widget>();
    } else {
      throw FormatError("unknown delta op '" + op + "'");
    }
    e.payload = delta;
  }
  return e;
}

/// Parses an event stream; every error names the offending line.
inline std::vector<InputEvent> read_events_jsonl(std::istream& in, const std::string& source = "events") {
  std::vector<InputEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    try {
      InputEvent e = event_from_json(nlohmann::json::parse(line));
      e.line = line_no;
      if (!events.empty() && e.t < events.back().t)
        throw OutOfOrder("timestamp " + std::to_string(e.t) + " precedes " + std::to_string(events.back().t));
      events.push_back(std::move(e));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(where, e.what());
    }
  }
  return events;
}

inline std::vector<InputEvent> read_events_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open event file " + path);
  return read_events_jsonl(in, path);
}

inline void write_events_jsonl(std::ostream& out, const std::vector<InputEvent>& events) {
  for (const auto& e : events) out << event_to_json(e).dump() << '\n';
}

/// Record as JSON; latency fields are dropped when `with_timing` is false so
/// the remainder is deterministic.
inline nlohmann::json record_to_json(const OutputRecord& r, bool with_timing = true) {
  nlohmann::json j;
  j["t"] = r.t;
  j["target"] = r.target ? nlohmann::json(*r.target) : nlohmann::json(nullptr);
  j["hits"] = r.hits;
  j["probs"] = r.probs;
  j["label"] = static_cast<int>(r.label);
  if (with_timing) {
    j["latency_us"] = r.latency_us;
    if (r.tree_update_us) j["tree_update_us"] = *r.tree_update_us;
  }
  return j;
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  return {{"policy", s.policy},
          {"events", s.events},
          {"gaze_events", s.gaze_events},
          {"widget_events", s.widget_events},
          {"mean_latency_us", s.mean_latency_us},
          {"std_latency_us", s.std_latency_us},
          {"max_latency_us", s.max_latency_us},
          {"rebuilds", s.rebuilds},
          {"incremental_updates", s.incremental_updates},
          {"ticks", s.ticks},
          {"missed_ticks", s.missed_ticks},
          {"mean_tree_update_us", s.mean_tree_update_us}};
}

inline nlohmann::json expected_to_json(const ExpectedOutput& x) {
  return {{"t", x.t}, {"target", x.target ? nlohmann::json(*x.target) : nlohmann::json(nullptr)}, {"hits", x.hits}};
}

inline ExpectedOutput expected_from_json(const nlohmann::json& j) {
  ExpectedOutput x;
  x.t = j.at("t").get<std::uint64_t>();
  if (!j.at("target").is_null()) x.target = j.at("target").get<WidgetId>();
  x.hits = j.at("hits").get<std::vector<WidgetId>>();
  return x;
}

inline std::vector<ExpectedOutput> read_expected_jsonl(std::istream& in, const std::string& source = "expected") {
  std::vector<ExpectedOutput> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(expected_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source + ":" + std::to_string(line_no), e.what());
    }
  }
  return out;
}

inline ExpectedOutput as_expected(const OutputRecord& r) { return {r.t, r.target, r.hits}; }

/// FNV-1a over the timing-free serialization of every record.
inline std::uint64_t records_fingerprint(const std::vector<OutputRecord>& records) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const auto& r : records) {
    for (char c : record_to_json(r, false).dump()) {
      hash ^= static_cast<unsigned char>(c);
      hash *= 0x100000001b3ULL;
    }
    hash ^= '\n';
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

/// Parses an event file and runs it; identical to run() on the parsed stream.
inline RunResult replay_from_file(const std::string& path, const DepthModelParams& weights, PipelineConfig cfg,
                                  const std::function<void(const OutputRecord&)>& sink = {}) {
  const auto events = read_events_jsonl(path);
  return run(events, weights, cfg, sink);
}

}  // namespace gazetrack
