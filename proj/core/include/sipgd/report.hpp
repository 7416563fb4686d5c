#pragma once

#include <string>
#include <utility>
#include <vector>

namespace sipgd {

// Shortest decimal string that round-trips the double; deterministic.
std::string fmt_double(double v);

// Tabular experiment output. Serialized as CSV with '#'-prefixed metadata
// lines before the header row:
//   # key = value
//   col_a,col_b
//   1,2
struct ExperimentReport {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells);
  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

}  // namespace sipgd
