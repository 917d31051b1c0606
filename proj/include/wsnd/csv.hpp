#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <variant>
#include <vector>

#include "wsnd/error.hpp"

namespace wsnd {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw ConfigError("csv: cannot parse number '" + s + "'");
  }
  return v;
}

using CsvCell = std::variant<std::string, double, long long>;

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Comma-separated, LF-terminated. Cells never contain commas, quotes or
/// newlines, so no quoting is needed.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) { table_.header = std::move(header); }

  void row(const std::vector<CsvCell>& cells) {
    if (cells.size() != table_.header.size()) throw ConfigError("csv: row width does not match header");
    std::vector<std::string> text;
    text.reserve(cells.size());
    for (const CsvCell& c : cells) {
      if (const auto* s = std::get_if<std::string>(&c)) {
        if (s->find_first_of(",\"\n\r") != std::string::npos) {
          throw ConfigError("csv: cell contains a separator: " + *s);
        }
        text.push_back(*s);
      } else if (const auto* d = std::get_if<double>(&c)) {
        text.push_back(format_double(*d));
      } else {
        text.push_back(std::to_string(std::get<long long>(c)));
      }
    }
    table_.rows.push_back(std::move(text));
  }

  std::string str() const {
    std::string out;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
      }
      out += '\n';
    };
    line(table_.header);
    for (const auto& r : table_.rows) line(r);
    return out;
  }

  const CsvTable& table() const { return table_; }

 private:
  CsvTable table_;
};

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::size_t pos = 0;
  bool first = true;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (first) {
      t.header = std::move(cells);
      first = false;
    } else {
      if (cells.size() != t.header.size()) throw ConfigError("csv: ragged row");
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes into a sibling temporary file, then renames it over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw ConfigError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw ConfigError("cannot rename '" + tmp.string() + "': " + ec.message());
}

}  // namespace wsnd
