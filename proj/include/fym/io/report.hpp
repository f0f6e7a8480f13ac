#pragma once

// CSV reports. Every number is printed with six decimals so re-emission is byte-identical.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "fym/io/pgm.hpp"

namespace fym::io {

inline std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) {
    if (row.size() != header.size()) {
      throw std::invalid_argument("csv: row has " + std::to_string(row.size()) + " fields, header has " +
                                  std::to_string(header.size()));
    }
    rows.push_back(std::move(row));
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
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path, "cannot open for writing");
  out << text;
  if (!out) throw IoError(path, "write failed");
}

inline void write_report(const fs::path& path, const CsvTable& table) { write_text(path, table.str()); }

/// pair, m_render, m_edit, abs_diff rows plus a total row. The total is the sum of the printed
/// abs_diff cells, so the file is self-consistent to the last digit.
inline CsvTable consistency_report(std::span<const double> reference, std::span<const double> edited) {
  if (reference.size() != edited.size()) throw std::invalid_argument("consistency report: series lengths differ");
  CsvTable t{{"pair", "m_render", "m_edit", "abs_diff"}, {}};
  long long total_micro = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const std::string d = fixed6(std::abs(edited[i] - reference[i]));
    total_micro += std::llround(std::stod(d) * 1e6);
    t.add({std::to_string(i + 1), fixed6(reference[i]), fixed6(edited[i]), d});
  }
  t.add({"total", "", "", fixed6(static_cast<double>(total_micro) / 1e6)});
  return t;
}

inline CsvTable loss_report(std::span<const double> losses) {
  CsvTable t{{"step", "loss"}, {}};
  for (std::size_t i = 0; i < losses.size(); ++i) t.add({std::to_string(i), fixed6(losses[i])});
  return t;
}

}  // namespace fym::io
