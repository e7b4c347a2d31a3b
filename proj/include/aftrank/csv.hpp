#pragma once

// CSV ingestion for clustered survival data. Times arrive on the raw
// scale and are log-transformed here, once; cluster ids may be arbitrary
// strings and are assigned dense indices by first appearance.

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "aftrank/dataset.hpp"

namespace aftrank {

struct CsvSchema {
  std::string cluster_col;
  std::string time_col;   // raw time, not log
  std::string event_col;
  std::vector<std::string> covariate_cols;
  char delimiter = ',';
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delim)) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

inline double parse_double(const std::string& cell, int line_no, const std::string& col) {
  try {
    size_t pos = 0;
    double v = std::stod(cell, &pos);
    if (pos != cell.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw DataError("unparseable value '" + cell + "' in column '" + col +
                    "' at line " + std::to_string(line_no));
  }
}

}  // namespace detail

inline ClusteredDataset read_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open file: " + path);

  std::string header;
  if (!std::getline(in, header)) throw DataError("empty file: " + path);
  auto cols = detail::split_line(header, schema.delimiter);
  auto col_index = [&](const std::string& name) {
    for (size_t j = 0; j < cols.size(); ++j)
      if (cols[j] == name) return static_cast<int>(j);
    throw DataError("missing column '" + name + "' in " + path);
  };
  const int ci = col_index(schema.cluster_col);
  const int ti = col_index(schema.time_col);
  const int ei = col_index(schema.event_col);
  std::vector<int> xi;
  for (const auto& c : schema.covariate_cols) xi.push_back(col_index(c));
  const int p = static_cast<int>(xi.size());

  std::vector<std::vector<Observation>> clusters;
  std::vector<std::string> ids;
  std::map<std::string, int> id_index;

  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto cells = detail::split_line(line, schema.delimiter);
    if (static_cast<int>(cells.size()) <= std::max({ci, ti, ei})) {
      throw DataError("too few cells at line " + std::to_string(line_no));
    }
    Observation o;
    double t = detail::parse_double(cells[ti], line_no, schema.time_col);
    if (t <= 0.0)
      throw DataError("nonpositive time at line " + std::to_string(line_no));
    o.log_time = std::log(t);
    double ev = detail::parse_double(cells[ei], line_no, schema.event_col);
    if (ev != 0.0 && ev != 1.0)
      throw DataError("event indicator not 0/1 at line " + std::to_string(line_no));
    o.event = static_cast<int>(ev);
    o.covariates.resize(p);
    for (int j = 0; j < p; ++j) {
      if (xi[j] >= static_cast<int>(cells.size()))
        throw DataError("too few cells at line " + std::to_string(line_no));
      o.covariates[j] =
          detail::parse_double(cells[xi[j]], line_no, schema.covariate_cols[j]);
    }
    const std::string& id = cells[ci];
    auto it = id_index.find(id);
    if (it == id_index.end()) {
      it = id_index.emplace(id, static_cast<int>(clusters.size())).first;
      clusters.emplace_back();
      ids.push_back(id);
    }
    clusters[it->second].push_back(std::move(o));
  }
  return ClusteredDataset::build(clusters, std::move(ids));
}

inline void write_csv(const std::string& path, const ClusteredDataset& data,
                      const CsvSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open file for writing: " + path);
  const char d = schema.delimiter;
  out << schema.cluster_col << d << schema.time_col << d << schema.event_col;
  for (const auto& c : schema.covariate_cols) out << d << c;
  out << "\n";
  out << std::setprecision(17);
  for (int i = 0; i < data.num_clusters(); ++i) {
    for (int m = data.cluster_begin(i); m < data.cluster_end(i); ++m) {
      out << data.cluster_ids()[i] << d << std::exp(data.log_times()[m]) << d
          << data.events()[m];
      for (int j = 0; j < data.dim(); ++j) out << d << data.covariates()(m, j);
      out << "\n";
    }
  }
}

}  // namespace aftrank
