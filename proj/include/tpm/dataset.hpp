#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tpm/matrix.hpp"

namespace tpm {

struct Dataset {
  Matrix features;
  std::vector<double> watch_time;
  std::optional<std::vector<double>> duration;
  std::vector<std::string> feature_names;

  std::size_t size() const { return watch_time.size(); }
  std::size_t num_features() const { return features.cols(); }
  bool has_duration() const { return duration.has_value(); }

  // Throws Error(kData) on inconsistent lengths, non-finite values,
  // negative watch times or non-positive durations.
  void validate() const;
};

// Rows selected by `indices`, in that order.
Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);

struct CsvSchema {
  std::string label_column = "watch_time";
  std::string duration_column = "duration";
  bool require_duration = false;
  // Without a label column every watch time reads as 0.
  bool require_label = true;
  // Columns neither used as label, duration nor feature.
  std::vector<std::string> ignore_columns;
};

// Header row required. Every column other than label, duration and the
// ignored ones is a numeric feature, in file order.
Dataset load_csv(const std::filesystem::path& path,
                 const CsvSchema& schema = {});

// Column names of the first non-blank line.
std::vector<std::string> read_csv_header(const std::filesystem::path& path);

// Writes features, then duration (if present), then watch_time.
void write_csv(const std::filesystem::path& path, const Dataset& data,
               const std::vector<std::pair<std::string, std::vector<double>>>&
                   extra_columns = {});

}  // namespace tpm
