#pragma once

#include <string>
#include <vector>

#include "stablefield/errors.hpp"

namespace stablefield {

// Shortest decimal string that round-trips to the same double.
std::string format_number(double v);

// Numeric table with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t col(const std::string& name) const;  // IoError when missing
};

void write_csv_file(const std::string& path, const CsvTable& t);
CsvTable read_csv_file(const std::string& path);

}  // namespace stablefield
