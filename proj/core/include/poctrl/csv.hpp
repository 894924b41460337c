#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace poctrl {

// 17 significant digits: enough for exact IEEE-754 double round-trips, and a
// stable byte representation for determinism checks.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Minimal CSV assembler writing into an in-memory string.
struct CsvWriter {
  std::string text;
  bool at_line_start = true;

  void cell(const std::string& s) {
    if (!at_line_start) text += ',';
    text += s;
    at_line_start = false;
  }
  void cell(const char* s) { cell(std::string(s)); }
  void cell(double v) { cell(fmt17(v)); }
  void cell(int v) { cell(std::to_string(v)); }
  void cell(long long v) { cell(std::to_string(v)); }
  void cell(unsigned long long v) { cell(std::to_string(v)); }
  void endrow() {
    text += '\n';
    at_line_start = true;
  }
  void header(const std::vector<std::string>& names) {
    for (const auto& n : names) cell(n);
    endrow();
  }
};

}  // namespace poctrl
