#pragma once

#include <optional>
#include <string>
#include <vector>

namespace raingraph::csv {

// Comma-split with surrounding-whitespace trim. No quoting support: none of
// the emitted or expected files contain quoted fields.
std::vector<std::string> split_row(const std::string& line);

// Whole-file read as rows of cells. Skips completely empty lines.
std::vector<std::vector<std::string>> read_file(const std::string& path);

std::optional<double> parse_double(const std::string& cell);
std::optional<long> parse_long(const std::string& cell);

// Shortest repr that round-trips a double exactly; used by every emitter so
// artifacts are byte-stable.
std::string format_double(double v);

}  // namespace raingraph::csv
