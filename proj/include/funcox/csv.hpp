#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "funcox/errors.hpp"

namespace funcox::csv {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline bool is_missing_token(std::string_view s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan" || s == "null";
}

// Parses a finite double; nullopt for anything else.
inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

// Shortest representation that parses back to the identical double.
inline std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, ptr);
}

struct Table {
  std::vector<std::vector<std::string>> rows;  // raw trimmed cells
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_failure, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Table parse(std::string_view text) {
  Table table;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!trim(line).empty()) {
      std::vector<std::string> cells;
      std::size_t c = 0;
      for (;;) {
        std::size_t comma = line.find(',', c);
        std::string_view cell = line.substr(c, comma == std::string_view::npos ? std::string_view::npos : comma - c);
        cells.emplace_back(trim(cell));
        if (comma == std::string_view::npos) break;
        c = comma + 1;
      }
      table.rows.push_back(std::move(cells));
    }
    if (end == text.size()) break;
    pos = end + 1;
  }
  return table;
}

inline Table read(const std::string& path) {
  Table t = parse(read_file(path));
  if (t.rows.empty()) fail(errc::empty_file, "'" + path + "' contains no rows");
  return t;
}

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) fail(errc::io_failure, "cannot write '" + path + "'");
  }

  template <class Range>
  void header(const Range& names) {
    bool first = true;
    for (const auto& n : names) {
      if (!first) out_ << ',';
      out_ << n;
      first = false;
    }
    out_ << '\n';
  }

  template <class Range>
  void row(const Range& values) {
    bool first = true;
    for (double v : values) {
      if (!first) out_ << ',';
      out_ << format_double(v);
      first = false;
    }
    out_ << '\n';
  }

  void raw_line(const std::string& line) { out_ << line << '\n'; }

  ~Writer() = default;

  void close() {
    out_.close();
    if (!out_) fail(errc::io_failure, "failed writing '" + path_ + "'");
  }

 private:
  std::string path_;
  std::ofstream out_;
};

}  // namespace funcox::csv
