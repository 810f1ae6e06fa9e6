#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "hoctl/types.hpp"

namespace hoctl::csv {

/// Shortest-safe round-trip text for a double: 17 significant digits.
std::string format(double v);

/// "# key: value" header lines.
void write_header(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& fields);

void write_row(std::ostream& out, const std::vector<std::string>& cells);

/// Matrix as CSV rows, one matrix row per line.
void write_matrix(std::ostream& out, const Matrix& m);

}  // namespace hoctl::csv
