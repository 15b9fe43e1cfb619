#pragma once

// CSV and JSON serialization for datasets, draws and bound records.
// CSV dialect: comma separated, dot decimal, mandatory header row; lines
// starting with '#' before the header carry metadata and are skipped on read.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "mtsens/bounds.hpp"
#include "mtsens/errors.hpp"
#include "mtsens/posterior.hpp"
#include "mtsens/sim.hpp"

namespace mtsens::io {

using nlohmann::json;

/// Shortest round-trip decimal representation.
inline std::string fmt(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct Table {
  std::vector<std::string> header;
  MatrixXd values;  // rows x header.size()
  std::vector<std::string> comments;

  Index column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return static_cast<Index>(i);
    }
    throw InvalidArgument("column '" + name + "' not found");
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& s, std::size_t line_no) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != last) {
    throw IoError("line " + std::to_string(line_no) + ": cannot parse '" + s + "' as a number");
  }
  return v;
}

inline Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!have_header) {
      if (line.front() == '#') {
        t.comments.push_back(line);
        continue;
      }
      t.header = split_csv_line(line);
      have_header = true;
      continue;
    }
    const auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw IoError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                    " fields, got " + std::to_string(cells.size()));
    }
    std::vector<double> r;
    r.reserve(cells.size());
    for (const auto& c : cells) r.push_back(parse_number(c, line_no));
    rows.push_back(std::move(r));
  }
  if (!have_header) throw IoError("CSV input has no header row");
  t.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.values(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return t;
}

inline Table read_csv_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return read_csv(in);
}

/// Splits a table into the outcome column and the remaining treatment columns.
inline Dataset dataset_from_table(const Table& t, const std::string& outcome_col) {
  const Index yc = t.column(outcome_col);
  Dataset ds;
  ds.outcome = t.values.col(yc);
  ds.treatments.data.resize(t.values.rows(), t.values.cols() - 1);
  Index j = 0;
  for (Index c = 0; c < t.values.cols(); ++c) {
    if (c == yc) continue;
    ds.treatments.data.col(j++) = t.values.col(c);
    ds.treatments.column_names.push_back(t.header[static_cast<std::size_t>(c)]);
  }
  if (ds.treatments.data.cols() < 1) throw InvalidArgument("dataset needs at least one treatment column");
  ds.validate();
  return ds;
}

/// Treatments only, optionally dropping a named column if present.
inline TreatmentMatrix treatments_from_table(const Table& t, const std::optional<std::string>& drop) {
  TreatmentMatrix tm;
  std::vector<Index> keep;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (drop && t.header[c] == *drop) continue;
    keep.push_back(static_cast<Index>(c));
    tm.column_names.push_back(t.header[c]);
  }
  tm.data.resize(t.values.rows(), static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) tm.data.col(static_cast<Index>(j)) = t.values.col(keep[j]);
  return tm;
}

/// Writes to a temporary sibling and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move output into '" + path.string() + "': " + ec.message());
}

inline std::string dataset_csv(const Dataset& ds) {
  std::ostringstream os;
  const Index k = ds.treatment_count();
  for (Index j = 0; j < k; ++j) os << "t_" << (j + 1) << ',';
  os << "y\n";
  for (Index i = 0; i < ds.rows(); ++i) {
    for (Index j = 0; j < k; ++j) os << fmt(ds.treatments.data(i, j)) << ',';
    os << fmt(ds.outcome(i)) << '\n';
  }
  return os.str();
}

inline json to_json(const VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

inline json to_json(const MatrixXd& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline json truth_json(const GroundTruth& t) {
  return json{{"B", to_json(t.loadings)},
              {"gamma", to_json(t.gamma)},
              {"beta", to_json(t.beta)},
              {"beta_check", to_json(t.observed.beta_check)},
              {"sigma2_y_tu", t.sigma2_y_tu},
              {"sigma2_y_t", t.observed.sigma2_y_t},
              {"sigma2_t_u", t.sigma2_t_u}};
}

inline std::string scree_csv(const ScreeResult& s) {
  std::ostringstream os;
  os << "rank,eigenvalue,cumulative_fraction\n";
  for (Index i = 0; i < s.eigenvalues.size(); ++i) {
    os << (i + 1) << ',' << fmt(s.eigenvalues(i)) << ',' << fmt(s.cumulative_fraction(i)) << '\n';
  }
  return os.str();
}

inline std::string draws_csv(const PosteriorDraws& d) {
  std::ostringstream os;
  for (Index j = 0; j < d.beta.cols(); ++j) os << "beta_" << (j + 1) << ',';
  for (Index j = 0; j < d.gamma.cols(); ++j) os << "gamma_" << (j + 1) << ',';
  os << "r2,sigma2,chain,iter\n";
  for (Index i = 0; i < d.size(); ++i) {
    for (Index j = 0; j < d.beta.cols(); ++j) os << fmt(d.beta(i, j)) << ',';
    for (Index j = 0; j < d.gamma.cols(); ++j) os << fmt(d.gamma(i, j)) << ',';
    os << fmt(d.r2(i)) << ',' << fmt(d.sigma2_y_t(i)) << ',' << d.chain[static_cast<std::size_t>(i)] << ','
       << d.iteration[static_cast<std::size_t>(i)] << '\n';
  }
  return os.str();
}

inline std::string loglik_csv(const MatrixXd& ll) {
  std::ostringstream os;
  for (Index j = 0; j < ll.cols(); ++j) os << (j ? "," : "") << "obs_" << (j + 1);
  os << '\n';
  for (Index i = 0; i < ll.rows(); ++i) {
    for (Index j = 0; j < ll.cols(); ++j) os << (j ? "," : "") << fmt(ll(i, j));
    os << '\n';
  }
  return os.str();
}

inline json summary_json(const std::vector<ParamSummary>& s) {
  json out = json::array();
  for (const auto& p : s) {
    out.push_back({{"name", p.name}, {"mean", p.mean}, {"q2.5", p.q025}, {"q50", p.q50}, {"q97.5", p.q975},
                   {"significant", p.significant}});
  }
  return out;
}

inline std::string bias_sample_csv(const BiasSample& s, int m, double r2, const std::string& contrast_id,
                                   std::uint64_t seed) {
  std::ostringstream os;
  os << "# m=" << m << ",r2=" << fmt(r2) << ",contrast_id=" << contrast_id << ",seed=" << seed << '\n';
  os << "bias\n";
  for (double v : s.draws) os << fmt(v) << '\n';
  return os.str();
}

/// A named contrast parsed from JSON.
struct NamedContrast {
  std::string id;
  Contrast contrast;
  std::optional<Index> coordinate;  // set when the contrast is a unit change of one treatment
};

/// Accepts {"id", "t1", "t2"} or the shorthand {"id", "treatment" (1-based),
/// "delta"}: treatment i at delta versus the all-zero baseline. Unknown keys
/// are rejected.
inline NamedContrast parse_contrast(const json& j, Index k, std::size_t position) {
  if (!j.is_object()) throw InvalidArgument("contrast entries must be JSON objects");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key != "id" && key != "t1" && key != "t2" && key != "treatment" && key != "delta") {
      throw InvalidArgument("unknown contrast key '" + key + "'");
    }
  }
  NamedContrast nc;
  nc.id = j.contains("id") ? j.at("id").get<std::string>() : "c" + std::to_string(position + 1);
  if (j.contains("treatment")) {
    if (j.contains("t1") || j.contains("t2")) throw InvalidArgument("contrast mixes 'treatment' and 't1'/'t2'");
    const auto i = j.at("treatment").get<long long>();
    if (i < 1 || i > k) throw InvalidArgument("contrast treatment index out of range (1-based)");
    const double x = j.value("delta", 1.0);
    nc.contrast = Contrast::unit(k, static_cast<Index>(i - 1), x);
    if (x != 0.0) nc.coordinate = static_cast<Index>(i - 1);
    return nc;
  }
  if (!j.contains("t1") || !j.contains("t2")) throw InvalidArgument("contrast needs 't1' and 't2' or 'treatment'");
  if (j.contains("delta")) throw InvalidArgument("'delta' is only valid with 'treatment'");
  const auto t1 = j.at("t1").get<std::vector<double>>();
  const auto t2 = j.at("t2").get<std::vector<double>>();
  if (static_cast<Index>(t1.size()) != k || static_cast<Index>(t2.size()) != k) {
    throw DimensionMismatch("contrast vectors must have one entry per treatment");
  }
  nc.contrast.t1 = Eigen::Map<const VectorXd>(t1.data(), k);
  nc.contrast.t2 = Eigen::Map<const VectorXd>(t2.data(), k);
  const VectorXd d = nc.contrast.delta();
  Index nz = 0, at = -1;
  for (Index i = 0; i < k; ++i) {
    if (d(i) != 0.0) {
      ++nz;
      at = i;
    }
  }
  if (nz == 1) nc.coordinate = at;
  return nc;
}

/// A contrast file is either an array of contrasts or {"<key>": [...]}.
inline std::vector<NamedContrast> parse_contrasts(const json& j, Index k, const std::string& key = "contrasts") {
  const json* arr = &j;
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() != key) throw InvalidArgument("unknown key '" + it.key() + "' in contrast spec");
    }
    if (!j.contains(key)) throw InvalidArgument("contrast spec needs a '" + key + "' array");
    arr = &j.at(key);
  }
  if (!arr->is_array()) throw InvalidArgument("contrast spec must be an array");
  std::vector<NamedContrast> out;
  for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(parse_contrast((*arr)[i], k, i));
  return out;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InvalidArgument("invalid JSON in '" + path.string() + "': " + e.what());
  }
}

}  // namespace mtsens::io
