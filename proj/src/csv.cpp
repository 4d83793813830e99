#include "balancekit/csv.hpp"

#include "balancekit/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace balancekit {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(field);
      field.clear();
    } else {
      field += c;
    }
  }
  fields.push_back(field);
  return fields;
}

std::string trim_ws(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return s.substr(b, e - b);
}

double parse_number(const std::string& text, Eigen::Index row, const std::string& column) {
  const std::string t = trim_ws(text);
  double value = 0.0;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end) {
    throw ValidationError("non-numeric value '" + text + "' at row " + std::to_string(row + 1) +
                          ", column '" + column + "'");
  }
  return value;
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    out += c;
  }
  out += "\"";
  return out;
}

}  // namespace

ObservationalSample load_sample(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open input file '" + path + "'");

  std::string header_line;
  if (!std::getline(in, header_line)) throw ValidationError("file '" + path + "' is empty");
  std::vector<std::string> header = split_csv_line(header_line);
  for (auto& h : header) h = trim_ws(h);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t j = 0; j < header.size(); ++j) index[header[j]] = j;

  const auto find_column = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end())
      throw ValidationError("missing column '" + name + "' in '" + path + "'");
    return it->second;
  };

  if (schema.treatment_column.empty()) throw ValidationError("schema names no treatment column");
  const std::size_t treat_idx = find_column(schema.treatment_column);
  const bool has_outcome = !schema.outcome_column.empty();
  const std::size_t outcome_idx = has_outcome ? find_column(schema.outcome_column) : 0;

  std::vector<std::string> covariate_names = schema.covariate_columns;
  if (covariate_names.empty()) {
    for (const auto& name : header) {
      if (name == schema.treatment_column) continue;
      if (has_outcome && name == schema.outcome_column) continue;
      covariate_names.push_back(name);
    }
  }
  std::vector<std::size_t> covariate_idx;
  covariate_idx.reserve(covariate_names.size());
  for (const auto& name : covariate_names) covariate_idx.push_back(find_column(name));

  std::vector<std::vector<double>> rows;
  std::vector<double> outcomes;
  std::vector<std::string> labels;
  std::string line;
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (trim_ws(line).empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError("row " + std::to_string(row + 1) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
    std::vector<double> values(covariate_idx.size());
    for (std::size_t j = 0; j < covariate_idx.size(); ++j)
      values[j] = parse_number(fields[covariate_idx[j]], row, covariate_names[j]);
    rows.push_back(std::move(values));
    if (has_outcome) outcomes.push_back(parse_number(fields[outcome_idx], row, schema.outcome_column));
    labels.push_back(trim_ws(fields[treat_idx]));
    ++row;
  }
  if (rows.empty()) throw ValidationError("file '" + path + "' has no data rows");

  // Encode labels: explicit level list when given, first appearance otherwise.
  std::vector<std::string> levels = schema.treatment_levels;
  std::unordered_map<std::string, int> level_of;
  for (std::size_t j = 0; j < levels.size(); ++j) level_of[levels[j]] = static_cast<int>(j) + 1;
  Eigen::VectorXi treatment(row);
  for (Eigen::Index i = 0; i < row; ++i) {
    const auto it = level_of.find(labels[i]);
    if (it != level_of.end()) {
      treatment[i] = it->second;
    } else if (schema.treatment_levels.empty()) {
      levels.push_back(labels[i]);
      const int code = static_cast<int>(levels.size());
      level_of[labels[i]] = code;
      treatment[i] = code;
    } else {
      throw ValidationError("unknown treatment label '" + labels[i] + "' at row " +
                            std::to_string(i + 1));
    }
  }

  Eigen::MatrixXd covariates(row, static_cast<Eigen::Index>(covariate_names.size()));
  for (Eigen::Index i = 0; i < row; ++i)
    for (std::size_t j = 0; j < covariate_names.size(); ++j)
      covariates(i, static_cast<Eigen::Index>(j)) = rows[i][j];
  Eigen::VectorXd outcome;
  if (has_outcome) outcome = Eigen::Map<Eigen::VectorXd>(outcomes.data(), row);

  return make_sample(std::move(covariates), std::move(treatment), std::move(outcome),
                     std::move(covariate_names), std::move(levels));
}

void save_sample(const std::string& path, const ObservationalSample& sample) {
  std::ostringstream out;
  out << "treatment";
  if (sample.has_outcome()) out << ",outcome";
  for (Eigen::Index j = 0; j < sample.covariate_count(); ++j) {
    const std::string name = j < static_cast<Eigen::Index>(sample.covariate_names.size())
                                 ? sample.covariate_names[j]
                                 : "x" + std::to_string(j + 1);
    out << "," << csv_escape(name);
  }
  out << "\n";
  for (Eigen::Index i = 0; i < sample.size(); ++i) {
    const int z = sample.treatment[i];
    const std::string label = z <= static_cast<int>(sample.treatment_levels.size())
                                  ? sample.treatment_levels[z - 1]
                                  : std::to_string(z);
    out << csv_escape(label);
    if (sample.has_outcome()) out << "," << format_double(sample.outcome[i]);
    for (Eigen::Index j = 0; j < sample.covariate_count(); ++j)
      out << "," << format_double(sample.covariates(i, j));
    out << "\n";
  }
  write_text_file(path, out.str());
}

std::string schema_echo_json(const ObservationalSample& sample, const CsvSchema& schema) {
  nlohmann::json j;
  j["treatment_column"] = schema.treatment_column;
  if (!schema.outcome_column.empty()) j["outcome_column"] = schema.outcome_column;
  j["covariate_columns"] = sample.covariate_names;
  nlohmann::json mapping = nlohmann::json::object();
  for (std::size_t g = 0; g < sample.treatment_levels.size(); ++g)
    mapping[sample.treatment_levels[g]] = g + 1;
  j["treatment_mapping"] = mapping;
  const Eigen::VectorXi sizes = sample.group_sizes();
  j["group_sizes"] = std::vector<int>(sizes.data(), sizes.data() + sizes.size());
  j["n"] = sample.size();
  j["has_outcome"] = sample.has_outcome();
  return j.dump(2);
}

}  // namespace balancekit
