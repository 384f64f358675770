#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmfa/model.hpp"

namespace dmfa {

enum class HeaderMode { Auto, Present, Absent };

struct CsvOptions {
  HeaderMode header = HeaderMode::Auto;
  /// Column split off as truth labels when the header names it.
  std::string label_column = "label";
  char delimiter = ',';
};

/// RFC-4180 records: quoted fields, doubled quotes, CRLF or LF line ends.
std::vector<std::vector<std::string>> parse_csv_records(const std::string &text, char delimiter = ',');

/// Quotes a field only when it contains the delimiter, a quote or a line break.
std::string csv_escape(const std::string &field, char delimiter = ',');

Dataset parse_dataset_csv(const std::string &text, const CsvOptions &options = {}, const std::string &source = "<input>");
Dataset load_csv(const std::filesystem::path &path, const CsvOptions &options = {});

/// Header x1..xd (plus label when present); values with 17 significant digits.
std::string dataset_to_csv(const Dataset &data);
void save_csv(const std::filesystem::path &path, const Dataset &data);

/// Labels CSV with header row,label (1-based rows).
std::string labels_to_csv(const PartitionLabels &labels);
/// Accepts a `row,label` file, a single `label` column, or a dataset CSV with a label column.
PartitionLabels parse_labels_csv(const std::string &text, const std::string &source = "<input>");
PartitionLabels load_labels(const std::filesystem::path &path);

} // namespace dmfa
