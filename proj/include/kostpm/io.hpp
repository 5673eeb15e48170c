#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "kostpm/dynamics.hpp"
#include "kostpm/error.hpp"
#include "kostpm/koopman.hpp"
#include "kostpm/reduce.hpp"
#include "kostpm/updf.hpp"

namespace kostpm::io {

using json = nlohmann::json;

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row.push_back(m(r, c));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json complex_matrix_rows(const ComplexMatrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      row.push_back({m(r, c).real(), m(r, c).imag()});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << text;
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json basis_json(const BasisSet& basis) {
  json indices = json::array();
  for (const auto& m : basis.indices()) {
    indices.push_back(m.exponents);
  }
  return {{"dimension", basis.dimension()},
          {"order", basis.order()},
          {"size", basis.size()},
          {"lower", to_std(basis.domain().lower())},
          {"upper", to_std(basis.domain().upper())},
          {"family", "normalized_legendre_total_degree"},
          {"indices", std::move(indices)}};
}

/// Model document: basis metadata, K (rows), Lambda (re/im), V (re/im rows), H, provenance.
inline json model_json(const KoopmanModel& model) {
  json eigenvalues = json::array();
  for (Eigen::Index k = 0; k < model.eigenvalues().size(); ++k) {
    eigenvalues.push_back({model.eigenvalues()[k].real(), model.eigenvalues()[k].imag()});
  }
  json prov = {{"kind", model.provenance().name()}};
  if (model.provenance().kind == Provenance::Kind::edmd) {
    prov["snapshots"] = model.provenance().snapshots;
    prov["dt"] = model.provenance().dt;
    prov["seed"] = model.provenance().seed;
  }
  return {{"basis", basis_json(model.basis())},
          {"K", matrix_rows(model.generator())},
          {"eigenvalues", std::move(eigenvalues)},
          {"V", complex_matrix_rows(model.eigen().left)},
          {"H", matrix_rows(model.observables())},
          {"eigenvector_condition", model.eigen().condition},
          {"eigen_residual", model.eigen().residual},
          {"provenance", std::move(prov)}};
}

/// `re,im,source` rows (header included).
inline std::string eigenvalues_csv(const ComplexVector& values, const std::string& source) {
  std::string out = "re,im,source\n";
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    out += format_double(values[k].real()) + "," + format_double(values[k].imag()) + "," + source + "\n";
  }
  return out;
}

/// `x1,...,xn,y1,...,yn`
inline std::string snapshots_csv(const SnapshotSet& snap) {
  const auto n = snap.X.rows();
  std::string out;
  for (Eigen::Index d = 0; d < n; ++d) {
    out += (d ? ",x" : "x") + std::to_string(d + 1);
  }
  for (Eigen::Index d = 0; d < n; ++d) {
    out += ",y" + std::to_string(d + 1);
  }
  out += "\n";
  for (Eigen::Index m = 0; m < snap.X.cols(); ++m) {
    for (Eigen::Index d = 0; d < n; ++d) {
      out += (d ? "," : "") + format_double(snap.X(d, m));
    }
    for (Eigen::Index d = 0; d < n; ++d) {
      out += "," + format_double(snap.Y(d, m));
    }
    out += "\n";
  }
  return out;
}

inline json snapshots_metadata(const SnapshotSet& snap) {
  return {{"dt", snap.dt},
          {"seed", snap.seed},
          {"count", snap.size()},
          {"dimension", snap.X.rows()},
          {"lower", to_std(snap.domain.lower())},
          {"upper", to_std(snap.domain.upper())}};
}

namespace detail {

inline std::vector<double> parse_csv_row(const std::string& line, std::size_t expected, std::size_t line_no) {
  std::vector<double> out;
  out.reserve(expected);
  const char* p = line.data();
  const char* end = line.data() + line.size();
  while (p <= end) {
    const char* comma = std::find(p, end, ',');
    double v = 0.0;
    const auto res = std::from_chars(p, comma, v);
    if (res.ec != std::errc() || res.ptr != comma) {
      throw IoError("CSV line " + std::to_string(line_no) + ": cannot parse a number");
    }
    out.push_back(v);
    p = comma + 1;
  }
  if (out.size() != expected) {
    throw IoError("CSV line " + std::to_string(line_no) + ": expected " + std::to_string(expected) + " fields");
  }
  return out;
}

}  // namespace detail

/// Reads a snapshot CSV plus its metadata record.
inline SnapshotSet read_snapshots(const std::filesystem::path& csv_path, const json& meta) {
  const auto n = meta.at("dimension").get<Eigen::Index>();
  const auto count = meta.at("count").get<Eigen::Index>();
  std::istringstream in(read_text(csv_path));
  std::string line;
  std::getline(in, line);
  SnapshotSet snap;
  snap.X.resize(n, count);
  snap.Y.resize(n, count);
  Eigen::Index m = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    if (m >= count) {
      throw IoError("snapshot CSV has more rows than its metadata count");
    }
    const auto row = detail::parse_csv_row(line, static_cast<std::size_t>(2 * n), line_no);
    for (Eigen::Index d = 0; d < n; ++d) {
      snap.X(d, m) = row[static_cast<std::size_t>(d)];
      snap.Y(d, m) = row[static_cast<std::size_t>(n + d)];
    }
    ++m;
  }
  if (m != count) {
    throw IoError("snapshot CSV row count does not match its metadata");
  }
  snap.dt = meta.at("dt").get<double>();
  snap.seed = meta.at("seed").get<std::uint64_t>();
  const auto lower = meta.at("lower").get<std::vector<double>>();
  const auto upper = meta.at("upper").get<std::vector<double>>();
  snap.domain = BoxDomain(Eigen::Map<const Vector>(lower.data(), n), Eigen::Map<const Vector>(upper.data(), n));
  return snap;
}

/// `x1,...,xn,density` rows in row-major grid order.
inline std::string grid_csv(const GridEvaluation& grid) {
  const Matrix pts = grid_points(grid.axes);
  std::string out;
  for (std::size_t d = 0; d < grid.dimension(); ++d) {
    out += (d ? ",x" : "x") + std::to_string(d + 1);
  }
  out += ",density\n";
  for (Eigen::Index k = 0; k < pts.cols(); ++k) {
    for (Eigen::Index d = 0; d < pts.rows(); ++d) {
      out += (d ? "," : "") + format_double(pts(d, k));
    }
    out += "," + format_double(grid.values[k]) + "\n";
  }
  return out;
}

inline json grid_metadata(const GridEvaluation& grid, const std::string& provenance, double dt) {
  return {{"axes", grid.axes}, {"normalized", grid.normalized}, {"provenance", provenance}, {"dt", dt},
          {"mass", grid_integral(grid.axes, grid.values)}};
}

inline json polylog_json(const PolyLogPdf& pdf) {
  json terms = json::array();
  for (std::size_t k = 0; k < pdf.monomials.size(); ++k) {
    terms.push_back({{"exponents", pdf.monomials[k].exponents},
                     {"coefficient", pdf.coefficients[static_cast<Eigen::Index>(k)]}});
  }
  json out = {{"order", pdf.order()},
              {"terms", std::move(terms)},
              {"region", {{"lower", to_std(pdf.region.lower())}, {"upper", to_std(pdf.region.upper())}}},
              {"modulo_constant", pdf.modulo_constant}};
  out["floor"] = pdf.floor ? json(*pdf.floor) : json(nullptr);
  return out;
}

inline json reduction_json(const ReductionResult& r) {
  json out = polylog_json(r.pdf);
  out["diagnostics"] = {{"train_rms", r.train_rms},       {"holdout_rms", r.holdout_rms},
                        {"holdout_relative_rms", r.holdout_relative_rms},
                        {"value_range", r.value_range},   {"train_count", r.train_count},
                        {"holdout_count", r.holdout_count}, {"candidates", r.candidates},
                        {"rank", r.rank},                 {"condition", r.condition}};
  return out;
}

}  // namespace kostpm::io
