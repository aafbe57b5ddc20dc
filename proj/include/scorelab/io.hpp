#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "scorelab/network.hpp"

namespace scorelab {

// All numeric text output goes through one formatter (round-trip precision)
// so artifacts are byte-stable for identical values.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a_string(const std::string& s) {
  return detail::fnv1a_bytes(s.data(), s.size());
}

inline std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

// CSV with a header row; one row per record.
inline void write_csv(const std::filesystem::path& path,
                      const std::vector<std::string>& columns,
                      const std::vector<std::vector<double>>& rows) {
  auto out = open_out(path);
  for (std::size_t i = 0; i < columns.size(); ++i)
    out << (i ? "," : "") << columns[i];
  out << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << format_double(row[i]);
    out << "\n";
  }
}

// Self-describing text matrix: comment header of key/value pairs, a shape
// line, then space-separated rows at full precision.
inline void write_matrix(const std::filesystem::path& path,
                         const Eigen::MatrixXd& m,
                         const std::vector<std::pair<std::string, std::string>>&
                             header = {}) {
  auto out = open_out(path);
  out << "# scorelab-matrix 1\n";
  for (const auto& [k, v] : header) out << "# " << k << " " << v << "\n";
  out << m.rows() << " " << m.cols() << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      out << (c ? " " : "") << format_double(m(r, c));
    out << "\n";
  }
}

inline Eigen::MatrixXd read_matrix(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    break;
  }
  std::istringstream shape(line);
  Eigen::Index rows = 0, cols = 0;
  if (!(shape >> rows >> cols) || rows < 0 || cols < 0)
    throw std::runtime_error("read_matrix: bad shape line");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(in >> m(r, c))) throw std::runtime_error("read_matrix: truncated data");
  std::getline(in, line);  // consume trailing newline
  return m;
}

inline Eigen::MatrixXd read_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  return read_matrix(in);
}

// Net snapshot: header (m, d, t0, seed) followed by the current weights,
// the initialization snapshot, and the sign matrix.
inline void save_net(const std::filesystem::path& path,
                     const TwoLayerReluNet& net, std::uint64_t seed) {
  auto out = open_out(path);
  out << "# scorelab-net 1\n";
  out << "m " << net.width() << "\n";
  out << "d " << net.dim() << "\n";
  out << "t0 " << format_double(net.t0()) << "\n";
  out << "seed " << seed << "\n";
  const auto dump = [&](const Eigen::MatrixXd& m) {
    out << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        out << (c ? " " : "") << format_double(m(r, c));
      out << "\n";
    }
  };
  dump(net.weights());
  dump(net.weights_init());
  dump(net.signs());
}

inline TwoLayerReluNet load_net(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line, key;
  std::getline(in, line);  // magic comment
  long width = 0, dim = 0;
  double t0 = 0.0;
  std::uint64_t seed = 0;
  for (int i = 0; i < 4; ++i) {
    std::getline(in, line);
    std::istringstream ls(line);
    ls >> key;
    if (key == "m") ls >> width;
    else if (key == "d") ls >> dim;
    else if (key == "t0") ls >> t0;
    else if (key == "seed") ls >> seed;
    else throw std::runtime_error("load_net: unexpected header key " + key);
  }
  Eigen::MatrixXd w = read_matrix(in);
  Eigen::MatrixXd w0 = read_matrix(in);
  Eigen::MatrixXd a = read_matrix(in);
  if (w.cols() != width || a.cols() != dim)
    throw std::runtime_error("load_net: header/shape mismatch");
  return TwoLayerReluNet::from_parts(std::move(w), std::move(w0), std::move(a), t0);
}

// Terminal samples, one row per sample.
inline void write_samples_csv(const std::filesystem::path& path,
                              const Eigen::MatrixXd& samples) {
  std::vector<std::string> cols;
  for (Eigen::Index i = 0; i < samples.rows(); ++i)
    cols.push_back("x" + std::to_string(i));
  std::vector<std::vector<double>> rows(samples.cols());
  for (Eigen::Index c = 0; c < samples.cols(); ++c)
    for (Eigen::Index r = 0; r < samples.rows(); ++r)
      rows[c].push_back(samples(r, c));
  write_csv(path, cols, rows);
}

}  // namespace scorelab
