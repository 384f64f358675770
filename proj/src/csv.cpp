#include "dmfa/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "dmfa/checkpoint.hpp"

namespace dmfa {

namespace {

std::string where(const std::string &source, std::size_t row, std::size_t col) {
  std::ostringstream os;
  os << source << ": row " << row << ", column " << col;
  return os.str();
}

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string &cell, double &out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const char *first = t.data();
  if (*first == '+') ++first;
  const auto res = std::from_chars(first, t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

bool parse_int(const std::string &cell, int &out) {
  const std::string t = trim(cell);
  if (t.empty()) return false;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  if (res.ec == std::errc() && res.ptr == t.data() + t.size()) return true;
  // integral values written as floats, e.g. "3.0"
  double d = 0.0;
  if (!parse_double(t, d) || d != std::floor(d) || std::abs(d) > 1e9) return false;
  out = static_cast<int>(d);
  return true;
}

std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

std::vector<std::vector<std::string>> parse_csv_records(const std::string &text, char delimiter) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_record = [&] {
    record.push_back(std::move(field));
    field.clear();
    // skip blank lines
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
    field_started = false;
  };
  // tolerate a UTF-8 byte order mark
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) i = 3;
  for (; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (ch == delimiter) {
      record.push_back(std::move(field));
      field.clear();
      field_started = false;
    } else if (ch == '\n') {
      end_record();
    } else if (ch == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_record();
    } else {
      field += ch;
      field_started = true;
    }
  }
  if (quoted) throw Error("csv: unterminated quoted field");
  if (field_started || !field.empty() || !record.empty()) end_record();
  return records;
}

std::string csv_escape(const std::string &field, char delimiter) {
  if (field.find_first_of(std::string("\"\r\n") + delimiter) == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

Dataset parse_dataset_csv(const std::string &text, const CsvOptions &options, const std::string &source) {
  const auto records = parse_csv_records(text, options.delimiter);
  if (records.empty()) throw Error(source + ": file is empty");

  bool header = options.header == HeaderMode::Present;
  if (options.header == HeaderMode::Auto) {
    double tmp = 0.0;
    for (const auto &cell : records[0])
      if (!parse_double(cell, tmp)) header = true;
  }
  const std::size_t width = records[0].size();
  int label_col = -1;
  if (header) {
    for (std::size_t c = 0; c < width; ++c)
      if (trim(records[0][c]) == options.label_column) label_col = static_cast<int>(c);
  }
  const std::size_t first = header ? 1 : 0;
  const auto n = static_cast<Eigen::Index>(records.size() - first);
  const auto d = static_cast<Eigen::Index>(width) - (label_col >= 0 ? 1 : 0);
  if (n == 0) throw Error(source + ": no data rows");
  if (d < 1) throw Error(source + ": no numeric columns");

  Dataset data;
  data.y.resize(n, d);
  PartitionLabels labels;
  for (std::size_t r = first; r < records.size(); ++r) {
    const auto &rec = records[r];
    const std::size_t line = r + 1;
    if (rec.size() != width) {
      std::ostringstream os;
      os << source << ": row " << line << " has " << rec.size() << " fields, expected " << width;
      throw Error(os.str());
    }
    Eigen::Index j = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (static_cast<int>(c) == label_col) {
        int label = 0;
        if (!parse_int(rec[c], label)) throw Error(where(source, line, c + 1) + ": label '" + rec[c] + "' is not an integer");
        labels.push_back(label);
        continue;
      }
      double v = 0.0;
      if (!parse_double(rec[c], v)) throw Error(where(source, line, c + 1) + ": '" + rec[c] + "' is not numeric");
      if (!std::isfinite(v)) throw Error(where(source, line, c + 1) + ": non-finite value '" + trim(rec[c]) + "'");
      data.y(static_cast<Eigen::Index>(r - first), j++) = v;
    }
  }
  if (label_col >= 0) data.labels = std::move(labels);
  return data;
}

Dataset load_csv(const std::filesystem::path &path, const CsvOptions &options) {
  return parse_dataset_csv(read_text_file(path), options, path.string());
}

std::string dataset_to_csv(const Dataset &data) {
  std::string out;
  for (Eigen::Index j = 0; j < data.cols(); ++j) out += (j ? ",x" : "x") + std::to_string(j + 1);
  if (data.labels) out += data.cols() ? ",label" : "label";
  out += '\n';
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      if (j) out += ',';
      out += format17(data.y(i, j));
    }
    if (data.labels) out += ',' + std::to_string((*data.labels)[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

void save_csv(const std::filesystem::path &path, const Dataset &data) { write_text_file(path, dataset_to_csv(data)); }

std::string labels_to_csv(const PartitionLabels &labels) {
  std::string out = "row,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) out += std::to_string(i + 1) + ',' + std::to_string(labels[i]) + '\n';
  return out;
}

PartitionLabels parse_labels_csv(const std::string &text, const std::string &source) {
  const auto records = parse_csv_records(text);
  if (records.empty()) throw Error(source + ": file is empty");
  std::size_t col = 0;
  std::size_t first = 0;
  double tmp = 0.0;
  bool header = false;
  for (const auto &cell : records[0])
    if (!parse_double(cell, tmp)) header = true;
  if (header) {
    first = 1;
    bool found = false;
    for (std::size_t c = 0; c < records[0].size(); ++c)
      if (trim(records[0][c]) == "label") {
        col = c;
        found = true;
      }
    if (!found) throw Error(source + ": no 'label' column in header");
  } else if (records[0].size() == 2) {
    col = 1; // row,label without header
  } else if (records[0].size() != 1) {
    throw Error(source + ": expected a 'label' column");
  }
  PartitionLabels labels;
  for (std::size_t r = first; r < records.size(); ++r) {
    if (col >= records[r].size()) throw Error(where(source, r + 1, col + 1) + ": missing label");
    int v = 0;
    if (!parse_int(records[r][col], v)) throw Error(where(source, r + 1, col + 1) + ": label is not an integer");
    labels.push_back(v);
  }
  if (labels.empty()) throw Error(source + ": no labels");
  return labels;
}

PartitionLabels load_labels(const std::filesystem::path &path) {
  return parse_labels_csv(read_text_file(path), path.string());
}

} // namespace dmfa
