#include "sipgd/report.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sipgd {

std::string fmt_double(double v) {
  // Try increasing precision until the value round-trips.
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void ExperimentReport::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns.size()) {
    throw std::invalid_argument("report row has " + std::to_string(cells.size()) +
                                " cells, expected " + std::to_string(columns.size()));
  }
  rows.push_back(std::move(cells));
}

std::string ExperimentReport::to_csv() const {
  std::ostringstream os;
  for (const auto& [k, v] : metadata) os << "# " << k << " = " << v << "\n";
  for (size_t i = 0; i < columns.size(); ++i) {
    if (i) os << ",";
    os << columns[i];
  }
  os << "\n";
  for (const auto& row : rows) {
    for (size_t i = 0; i < row.size(); ++i) {
      if (i) os << ",";
      os << row[i];
    }
    os << "\n";
  }
  return os.str();
}

void ExperimentReport::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << to_csv();
  if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace sipgd
