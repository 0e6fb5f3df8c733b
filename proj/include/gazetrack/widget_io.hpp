#pragma once

// Widget-set files: JSON Lines, one {"id","x","y","dx","dy","z"} object per line.

#include <istream>
#include <ostream>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazetrack/error.hpp"
#include "gazetrack/spatial_index.hpp"

namespace gazetrack {

inline void to_json(nlohmann::json& j, const Widget& w) {
  j = nlohmann::json{{"id", w.id}, {"x", w.x}, {"y", w.y}, {"dx", w.dx}, {"dy", w.dy}, {"z", w.z}};
}

inline void from_json(const nlohmann::json& j, Widget& w) {
  w.id = j.at("id").get<WidgetId>();
  w.x = j.at("x").get<double>();
  w.y = j.at("y").get<double>();
  w.dx = j.at("dx").get<double>();
  w.dy = j.at("dy").get<double>();
  w.z = j.value("z", std::int64_t{0});
}

/// Parses and validates a widget set. Errors carry the 1-based line number.
inline std::vector<Widget> read_widgets_jsonl(std::istream& in, const std::string& source = "widgets") {
  std::vector<Widget> widgets;
  std::unordered_set<WidgetId> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    Widget w;
    try {
      w = nlohmann::json::parse(line).get<Widget>();
      validate(w);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where, e.what());
    } catch (const InvalidWidget& e) {
      throw ParseError(where, e.what());
    }
    if (!ids.insert(w.id).second) throw ParseError(where, "duplicate widget id " + std::to_string(w.id));
    widgets.push_back(w);
  }
  return widgets;
}

inline void write_widgets_jsonl(std::ostream& out, const std::vector<Widget>& widgets) {
  for (const auto& w : widgets) out << nlohmann::json(w).dump() << '\n';
}

}  // namespace gazetrack
