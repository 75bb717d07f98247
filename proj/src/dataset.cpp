#include "tpm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string_view>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "tpm/error.hpp"

namespace tpm {

void Dataset::validate() const {
  const std::size_t n = watch_time.size();
  if (features.rows() != n) {
    throw Error(ErrorKind::kData,
                fmt::format("{} feature rows for {} watch times",
                            features.rows(), n));
  }
  if (duration && duration->size() != n) {
    throw Error(ErrorKind::kData, "duration column length mismatch");
  }
  if (!feature_names.empty() && feature_names.size() != features.cols()) {
    throw Error(ErrorKind::kData, "feature name count mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(watch_time[i]) || watch_time[i] < 0.0) {
      throw Error(ErrorKind::kData,
                  fmt::format("row {}: watch time must be finite and >= 0", i));
    }
    if (duration && !(std::isfinite((*duration)[i]) && (*duration)[i] > 0.0)) {
      throw Error(ErrorKind::kData,
                  fmt::format("row {}: duration must be finite and > 0", i));
    }
    for (double v : features.row(i)) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::kData,
                    fmt::format("row {}: non-finite feature value", i));
      }
    }
  }
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.feature_names = data.feature_names;
  out.features = Matrix(indices.size(), data.num_features());
  out.watch_time.reserve(indices.size());
  if (data.duration) out.duration.emplace().reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices.at(r);
    const auto src = data.features.row(i);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.watch_time.push_back(data.watch_time[i]);
    if (data.duration) out.duration->push_back((*data.duration)[i]);
  }
  return out;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    cells.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

// Reads up to and including the first non-blank line; returns its cells.
std::vector<std::string> read_header(std::istream& in,
                                     const std::filesystem::path& path,
                                     std::size_t& line_no) {
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) {
    throw Error(ErrorKind::kData,
                fmt::format("'{}' has no header row", path.string()));
  }
  std::vector<std::string> header;
  for (auto cell : split(line)) header.emplace_back(cell);
  return header;
}

std::ifstream open_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::kData,
                fmt::format("cannot open '{}'", path.string()));
  }
  return in;
}

}  // namespace

std::vector<std::string> read_csv_header(const std::filesystem::path& path) {
  std::ifstream in = open_csv(path);
  std::size_t line_no = 0;
  return read_header(in, path, line_no);
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in = open_csv(path);
  std::size_t line_no = 0;
  const std::vector<std::string> header = read_header(in, path, line_no);
  std::string line;

  std::optional<std::size_t> label_col;
  std::optional<std::size_t> duration_col;
  std::vector<std::size_t> feature_cols;
  Dataset data;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto& name = header[c];
    if (name == schema.label_column) {
      label_col = c;
    } else if (name == schema.duration_column) {
      duration_col = c;
    } else if (std::find(schema.ignore_columns.begin(),
                         schema.ignore_columns.end(),
                         name) == schema.ignore_columns.end()) {
      feature_cols.push_back(c);
      data.feature_names.push_back(name);
    }
  }
  std::vector<std::string> missing;
  if (!label_col && schema.require_label) {
    missing.push_back(schema.label_column);
  }
  if (schema.require_duration && !duration_col) {
    missing.push_back(schema.duration_column);
  }
  if (!missing.empty()) {
    throw Error(ErrorKind::kData,
                fmt::format("'{}': missing column(s): {}", path.string(),
                            fmt::join(missing, ", ")));
  }
  if (feature_cols.empty()) {
    throw Error(ErrorKind::kData,
                fmt::format("'{}' has no feature columns", path.string()));
  }

  std::vector<double> features;
  if (duration_col) data.duration.emplace();
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorKind::kData,
                  fmt::format("{}:{}: expected {} cells, found {}",
                              path.string(), line_no, header.size(),
                              cells.size()));
    }
    auto parse = [&](std::size_t c) {
      const auto cell = cells[c];
      double value = 0.0;
      const auto [ptr, ec] =
          std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (ec != std::errc() || ptr != cell.data() + cell.size() ||
          cell.empty()) {
        throw Error(ErrorKind::kData,
                    fmt::format("{}:{}: column '{}' is not numeric: '{}'",
                                path.string(), line_no, header[c], cell));
      }
      if (!std::isfinite(value)) {
        throw Error(ErrorKind::kData,
                    fmt::format("{}:{}: column '{}' is not finite",
                                path.string(), line_no, header[c]));
      }
      return value;
    };
    const double label = label_col ? parse(*label_col) : 0.0;
    if (label < 0.0) {
      throw Error(ErrorKind::kData,
                  fmt::format("{}:{}: column '{}' is negative", path.string(),
                              line_no, header[*label_col]));
    }
    data.watch_time.push_back(label);
    if (duration_col) {
      const double d = parse(*duration_col);
      if (d <= 0.0) {
        throw Error(ErrorKind::kData,
                    fmt::format("{}:{}: column '{}' must be > 0",
                                path.string(), line_no,
                                header[*duration_col]));
      }
      data.duration->push_back(d);
    }
    for (std::size_t c : feature_cols) features.push_back(parse(c));
  }
  data.features = Matrix(data.watch_time.size(), feature_cols.size(),
                         std::move(features));
  return data;
}

void write_csv(const std::filesystem::path& path, const Dataset& data,
               const std::vector<std::pair<std::string, std::vector<double>>>&
                   extra_columns) {
  std::ofstream out(path);
  if (!out) {
    throw Error(ErrorKind::kData,
                fmt::format("cannot write '{}'", path.string()));
  }
  std::vector<std::string> header;
  for (std::size_t j = 0; j < data.num_features(); ++j) {
    header.push_back(j < data.feature_names.size() ? data.feature_names[j]
                                                   : fmt::format("f{}", j));
  }
  if (data.duration) header.emplace_back("duration");
  header.emplace_back("watch_time");
  for (const auto& [name, values] : extra_columns) header.push_back(name);
  out << fmt::format("{}\n", fmt::join(header, ","));

  for (std::size_t i = 0; i < data.size(); ++i) {
    std::string row;
    for (double v : data.features.row(i)) row += fmt::format("{},", v);
    if (data.duration) row += fmt::format("{},", (*data.duration)[i]);
    row += fmt::format("{}", data.watch_time[i]);
    for (const auto& [name, values] : extra_columns) {
      row += fmt::format(",{}", values.at(i));
    }
    out << row << '\n';
  }
}

}  // namespace tpm
