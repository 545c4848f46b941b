#pragma once

#include <iosfwd>
#include <optional>

#include "slmm/types.hpp"

namespace slmm {

struct ColumnRoles {
  // Column names used as fixed effects (beyond the implicit intercept) and as
  // random-effect candidates. Empty means "by prefix": x_* fixed, s_* random.
  std::vector<std::string> fixed;
  std::vector<std::string> random;
};

// Loads delimited text with a header row: id, y, then covariate columns.
// Rows for one individual are grouped on load and need not be contiguous;
// individuals keep first-appearance order. The intercept column of X is
// synthesized. Delimiter is sniffed from the header (comma, tab, semicolon,
// else whitespace).
Dataset load_dataset(std::istream& in, const ColumnRoles& roles = {});
Dataset load_dataset_file(const std::string& path,
                          const ColumnRoles& roles = {});

void write_dataset_csv(std::ostream& out, const Dataset& data);

}  // namespace slmm
