#pragma once

// Report helpers: training-history CSV and a small reader for the CSV and
// JSON reports the CLI writes.

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazetrack/dataset_io.hpp"
#include "gazetrack/error.hpp"
#include "gazetrack/training.hpp"

namespace gazetrack {

inline void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : history)
    out << r.epoch << ',' << format_g9(r.train_loss) << ',' << format_g9(r.train_acc) << ',' << format_g9(r.val_loss)
        << ',' << format_g9(r.val_acc) << '\n';
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw FormatError("csv has no column '" + name + "'");
  }

  double number(std::size_t row, const std::string& name) const {
    const std::string& cell = rows.at(row).at(column(name));
    double v = 0.0;
    const auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || end != cell.data() + cell.size())
      throw FormatError("csv cell '" + cell + "' in column " + name + " is not a number");
    return v;
  }
};

/// Splits one CSV record; double-quoted fields may contain commas and "".
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (quoted) throw FormatError("unterminated quoted csv field");
  out.push_back(std::move(cell));
  return out;
}

/// Reads a header plus rows; every row must have the header's width.
inline CsvTable read_csv(std::istream& in, const std::string& source = "csv") {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    try {
      auto cells = split_csv_line(line);
      if (table.header.empty()) {
        table.header = std::move(cells);
        continue;
      }
      if (cells.size() != table.header.size())
        throw FormatError("expected " + std::to_string(table.header.size()) + " fields, got " +
                          std::to_string(cells.size()));
      table.rows.push_back(std::move(cells));
    } catch (const FormatError& e) {
      throw ParseError(source + ":" + std::to_string(line_no), e.what());
    }
  }
  if (table.header.empty()) throw ParseError(source, "empty csv");
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_csv(in, path);
}

inline CsvTable read_csv_string(const std::string& text) {
  std::istringstream in(text);
  return read_csv(in);
}

/// Parses a JSON report; a JSON Lines file yields an array of its lines.
inline nlohmann::json read_json_report(std::istream& in, const std::string& source = "json") {
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception&) {
  }
  nlohmann::json lines = nlohmann::json::array();
  std::istringstream stream(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      lines.push_back(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source + ":" + std::to_string(line_no), e.what());
    }
  }
  return lines;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path);
  return read_json_report(in, path);
}

}  // namespace gazetrack
