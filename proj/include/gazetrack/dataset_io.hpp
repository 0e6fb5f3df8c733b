#pragma once

// Dataset CSV: header rlx,...,dv,label; floats with 9 significant digits.

#include <charconv>
#include <cstdio>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gazetrack/error.hpp"
#include "gazetrack/gaze_geometry.hpp"

namespace gazetrack {

inline std::string dataset_csv_header() {
  std::string header;
  for (const char* name : kFeatureNames) {
    header += name;
    header += ',';
  }
  return header + "label";
}

inline std::string format_g9(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", value);
  return buf;
}

inline void write_dataset_csv(std::ostream& out, const std::vector<LabeledSample>& samples) {
  out << dataset_csv_header() << '\n';
  for (const auto& s : samples) {
    for (double f : s.features) out << format_g9(f) << ',';
    out << static_cast<int>(s.label) << '\n';
  }
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline double parse_double(std::string_view cell, const std::string& where) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc{} || ptr != cell.data() + cell.size())
    throw ParseError(where, "not a number: '" + std::string(cell) + "'");
  return value;
}

}  // namespace detail

inline std::vector<LabeledSample> read_dataset_csv(std::istream& in, const std::string& source = "dataset") {
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ":1", "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != dataset_csv_header()) throw ParseError(source + ":1", "unexpected header '" + line + "'");
  std::vector<LabeledSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto cells = detail::split_csv(line);
    if (cells.size() != kNumFeatures + 1)
      throw ParseError(where, "expected " + std::to_string(kNumFeatures + 1) + " columns, got " +
                                  std::to_string(cells.size()));
    LabeledSample s;
    for (std::size_t i = 0; i < kNumFeatures; ++i) s.features[i] = detail::parse_double(cells[i], where);
    const std::string_view label = cells[kNumFeatures];
    if (label != "0" && label != "1" && label != "2") throw ParseError(where, "label must be 0, 1 or 2");
    s.label = label_from_index(label[0] - '0');
    samples.push_back(s);
  }
  return samples;
}

}  // namespace gazetrack
