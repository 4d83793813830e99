#pragma once

#include "balancekit/types.hpp"

#include <string>
#include <vector>

namespace balancekit {

// Column mapping for CSV input. Files carry a header row, '.' decimals and
// UTF-8 text. When covariate_columns is empty every non-treatment,
// non-outcome column is used in file order. When treatment_levels is given,
// labels are encoded against it and any label outside the list is an error;
// otherwise labels are encoded 1..J by first appearance.
struct CsvSchema {
  std::string treatment_column;
  std::string outcome_column;  // empty => no outcome
  std::vector<std::string> covariate_columns;
  std::vector<std::string> treatment_levels;
};

ObservationalSample load_sample(const std::string& path, const CsvSchema& schema);

// Writes a sample back out with original treatment labels. Numeric fields
// use shortest round-trip formatting so load(save(x)) == x bit-for-bit.
void save_sample(const std::string& path, const ObservationalSample& sample);

// JSON echo of the validated schema: column roles, encoded level mapping,
// group sizes.
std::string schema_echo_json(const ObservationalSample& sample, const CsvSchema& schema);

}  // namespace balancekit
