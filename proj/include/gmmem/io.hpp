#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "gmmem/model.hpp"

namespace gmmem::io {

/// 17 significant digits; parses back to the identical double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

/// Short form for labels and titles.
inline std::string format_short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": cannot parse '" + std::string(s) + "'");
  }
  return v;
}

/// A rectangular numeric table with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
      if (header[j] == name) return j;
    fail(ErrorCode::ParseError, "missing column '" + std::string(name) + "'");
  }
};

inline Table read_table(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (t.header.empty()) {
      for (auto f : fields) t.header.emplace_back(f);
      continue;
    }
    if (fields.size() != t.header.size()) {
      fail(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": expected " +
                                      std::to_string(t.header.size()) + " columns, found " +
                                      std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_double(f, line_no));
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) fail(ErrorCode::ParseError, "empty file: header row required");
  return t;
}

inline Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open " + path);
  return read_table(in);
}

inline void write_table(std::ostream& out, const Table& t) {
  for (std::size_t j = 0; j < t.header.size(); ++j) out << (j ? "," : "") << t.header[j];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t j = 0; j < row.size(); ++j) out << (j ? "," : "") << format_double(row[j]);
    out << '\n';
  }
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::ConfigError, "cannot write " + path);
  out << text;
  if (!out) fail(ErrorCode::ConfigError, "failed writing " + path);
}

inline void write_table(const std::string& path, const Table& t) {
  std::ostringstream os;
  write_table(os, t);
  write_text(path, os.str());
}

/// Observations (and optional labels) from a data file.
///
/// One observation per row; when the last header field is `label` that
/// column holds 1-based integer labels.
struct DataFile {
  Matrix observations;
  std::vector<int> labels;  // 0-based; empty when the file has none
  bool has_labels() const { return !labels.empty(); }
};

inline DataFile parse_data(std::istream& in) {
  const Table t = read_table(in);
  const bool labelled = !t.header.empty() && t.header.back() == "label";
  const std::size_t d = t.header.size() - (labelled ? 1 : 0);
  if (d == 0) fail(ErrorCode::ParseError, "no observation columns");
  if (t.rows.empty()) fail(ErrorCode::ParseError, "no observations");
  DataFile f;
  f.observations.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) f.observations(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = t.rows[i][j];
    if (labelled) {
      const double y = t.rows[i][d];
      if (y != std::floor(y) || y < 1) {
        fail(ErrorCode::ParseError, "row " + std::to_string(i + 1) + ": labels must be positive integers");
      }
      f.labels.push_back(static_cast<int>(y) - 1);
    }
  }
  return f;
}

inline DataFile read_data(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ParseError, "cannot open " + path);
  return parse_data(in);
}

inline void write_data(std::ostream& out, const Matrix& x, const std::vector<int>* labels) {
  Table t;
  for (Eigen::Index j = 0; j < x.cols(); ++j) t.header.push_back("x" + std::to_string(j + 1));
  if (labels) t.header.emplace_back("label");
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    std::vector<double> row;
    row.reserve(static_cast<std::size_t>(x.cols()) + 1);
    for (Eigen::Index j = 0; j < x.cols(); ++j) row.push_back(x(i, j));
    if (labels) row.push_back(static_cast<double>((*labels)[static_cast<std::size_t>(i)] + 1));
    t.rows.push_back(std::move(row));
  }
  write_table(out, t);
}

inline void write_data(const std::string& path, const LabeledDataset& data) {
  std::ostringstream os;
  write_data(os, data.observations, &data.labels);
  write_text(path, os.str());
}

// ----- parameters as JSON ---------------------------------------------------

using Json = nlohmann::ordered_json;

inline Json matrix_rows(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

/// {"weights": [...], "means": [[mu_1], ..., [mu_L]], "covariance": [[row], ...]}
inline Json params_to_json(const MixtureParams& p) {
  Json j;
  j["weights"] = std::vector<double>(p.weights.data(), p.weights.data() + p.weights.size());
  j["means"] = matrix_rows(p.means.transpose());
  j["covariance"] = matrix_rows(p.covariance);
  return j;
}

inline Matrix matrix_from_rows(const Json& rows, const std::string& what) {
  if (!rows.is_array() || rows.empty() || !rows.front().is_array()) {
    fail(ErrorCode::ConfigError, what + " must be a nonempty array of rows");
  }
  const std::size_t cols = rows.front().size();
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].size() != cols) fail(ErrorCode::ConfigError, what + " rows differ in length");
    for (std::size_t j = 0; j < cols; ++j) {
      if (!rows[i][j].is_number()) fail(ErrorCode::ConfigError, what + " entries must be numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
    }
  }
  return m;
}

inline MixtureParams params_from_json(const Json& j) {
  MixtureParams p;
  const auto w = j.at("weights").get<std::vector<double>>();
  p.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  p.means = matrix_from_rows(j.at("means"), "means").transpose();
  p.covariance = matrix_from_rows(j.at("covariance"), "covariance");
  return p;
}

}  // namespace gmmem::io
