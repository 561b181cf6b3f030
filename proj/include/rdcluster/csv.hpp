#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rdcluster/errors.hpp"
#include "rdcluster/report.hpp"
#include "rdcluster/sample.hpp"
#include "rdcluster/weights.hpp"

namespace rdcluster {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_number(const std::string& s, std::size_t row, const char* col) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc{} || res.ptr != e) {
    fail(errc::schema_error,
         "row " + std::to_string(row) + ": cannot parse " + col + " value '" + s + "'");
  }
  return v;
}

}  // namespace detail

//! Reads the `cluster,x,y` schema. The header is required; columns are
//! matched by name and may appear in any order, extra columns are ignored.
inline std::vector<Row> read_csv_rows(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(errc::schema_error, "empty file");
  const std::vector<std::string> header = detail::split_csv_line(line);
  int col_cluster = -1, col_x = -1, col_y = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    std::string name = header[c];
    while (!name.empty() && (name.back() == ' ' || name.back() == '\t')) name.pop_back();
    std::size_t start = 0;
    while (start < name.size() && (name[start] == ' ' || name[start] == '\t')) ++start;
    name = name.substr(start);
    if (name == "cluster") col_cluster = static_cast<int>(c);
    else if (name == "x") col_x = static_cast<int>(c);
    else if (name == "y") col_y = static_cast<int>(c);
  }
  if (col_cluster < 0 || col_x < 0 || col_y < 0) {
    fail(errc::schema_error, "header must contain cluster, x and y columns");
  }

  std::vector<Row> rows;
  std::size_t rownum = 0;
  while (std::getline(in, line)) {
    ++rownum;
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv_line(line);
    const auto need = static_cast<std::size_t>(std::max({col_cluster, col_x, col_y})) + 1;
    if (fields.size() < need) {
      fail(errc::schema_error, "row " + std::to_string(rownum) + ": too few fields");
    }
    Row r;
    r.cluster = fields[static_cast<std::size_t>(col_cluster)];
    r.x = detail::parse_number(fields[static_cast<std::size_t>(col_x)], rownum, "x");
    r.y = detail::parse_number(fields[static_cast<std::size_t>(col_y)], rownum, "y");
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<Row> read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(errc::schema_error, "cannot open '" + path + "'");
  return read_csv_rows(in);
}

//! Plot-ready binned means of y by x: `bin_left,bin_right,mean_y,count`
//! per side over [-h, h]; empty bins are skipped.
inline std::string plot_data_csv(const ClusteredSample& sample, double h, int bins_per_side) {
  if (bins_per_side < 1) fail(errc::invalid_config, "need at least one bin per side");
  const int nb = bins_per_side;
  std::vector<double> sum(static_cast<std::size_t>(2 * nb), 0.0);
  std::vector<long> count(static_cast<std::size_t>(2 * nb), 0);
  const double width = h / static_cast<double>(nb);
  for (std::size_t g = 0; g < sample.num_clusters(); ++g) {
    for (std::size_t i = 0; i < sample.size(g); ++i) {
      const double x = sample.x(g, i);
      if (x < -h || x > h) continue;
      int bin = static_cast<int>(std::floor((x + h) / width));
      if (bin < 0) bin = 0;
      if (bin >= 2 * nb) bin = 2 * nb - 1;
      sum[static_cast<std::size_t>(bin)] += sample.y(g, i);
      ++count[static_cast<std::size_t>(bin)];
    }
  }
  std::string out = "bin_left,bin_right,mean_y,count\n";
  for (int bin = 0; bin < 2 * nb; ++bin) {
    if (count[static_cast<std::size_t>(bin)] == 0) continue;
    const double left = -h + bin * width;
    const double right = left + width;
    out += format_double(left);
    out += ',';
    out += format_double(right);
    out += ',';
    out += format_double(sum[static_cast<std::size_t>(bin)] /
                         static_cast<double>(count[static_cast<std::size_t>(bin)]));
    out += ',';
    out += std::to_string(count[static_cast<std::size_t>(bin)]);
    out += '\n';
  }
  return out;
}

}  // namespace rdcluster
