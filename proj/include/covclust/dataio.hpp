/*
 * Copyright (c) 2026, The covclust Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/**
 * @file dataio.hpp
 * @brief Grouped functional data: sample covariances, the Fourier-basis
 * simulator, and the on-disk formats.
 *
 * Curves live on a shared M-point grid and are treated as plain vectors, so a
 * covariance "operator" is an M x M matrix with no quadrature weights.
 *
 * Curve CSV: a header row `group_id,u_1,...,u_M` carrying the grid, then one
 * row per curve `id,x_1,...,x_M`. Rows of one group need not be contiguous;
 * groups keep the order of first appearance. Lines starting with '#' are
 * comments.
 *
 * Matrix CSV: M rows of M comma-separated values, no header.
 * Matrix binary: "WPCV", u32 dim, dim*dim f64 row-major, all little-endian.
 */

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "covclust/error.hpp"
#include "covclust/linalg_psd.hpp"
#include "covclust/softclust/types.hpp"

namespace covclust {

/// n curves of one group evaluated on a shared grid (rows = curves).
struct FunctionalSample {
  std::string group_id;
  MatrixXd curves;
  VectorXd grid;

  Index size() const noexcept { return curves.rows(); }
};

/**
 * Unbiased sample covariance (1/(n-1)) sum (x - mean)(x - mean)^T. With
 * `recenter = false` the curves are taken as already centred and the group
 * mean is not subtracted.
 */
inline SampleCov sample_cov(const FunctionalSample& sample, bool recenter = true) {
  const Index n = sample.curves.rows();
  if (n < 2) throw Error(ErrorCode::TooFewCurves, "group '" + sample.group_id + "' has fewer than 2 curves");
  if (!sample.curves.allFinite()) throw Error(ErrorCode::InputFormat, "non-finite curve values in '" + sample.group_id + "'");
  MatrixXd centred = sample.curves;
  if (recenter) centred.rowwise() -= sample.curves.colwise().mean();
  MatrixXd f = centred.transpose() / std::sqrt(static_cast<double>(n - 1));
  CovMatrix m = CovMatrix::trusted(f * f.transpose());
  const int count = static_cast<int>(n);
  if (f.cols() > f.rows()) return make_sample_cov(sample.group_id, std::move(m), count);
  return make_sample_cov(sample.group_id, std::move(m), count, CovFactor::from_gram_root(std::move(f)));
}

inline std::vector<SampleCov> sample_covs(const std::vector<FunctionalSample>& samples, bool recenter = true) {
  std::vector<SampleCov> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(sample_cov(s, recenter));
  return out;
}

/// Orthonormal Fourier basis on [0,1]: f_0 = 1, f_r = sqrt(2) sin((r+1) pi u)
/// for odd r and sqrt(2) cos(r pi u) for even r >= 2.
inline VectorXd fourier_basis(int r, const VectorXd& grid) {
  if (r < 0) throw Error(ErrorCode::InvalidParam, "basis index must be nonnegative");
  VectorXd out(grid.size());
  const double pi = std::numbers::pi;
  for (Index k = 0; k < grid.size(); ++k) {
    const double u = grid(k);
    if (r == 0) {
      out(k) = 1.0;
    } else if (r % 2 == 1) {
      out(k) = std::numbers::sqrt2 * std::sin((r + 1) * pi * u);
    } else {
      out(k) = std::numbers::sqrt2 * std::cos(r * pi * u);
    }
  }
  return out;
}

inline VectorXd even_grid(int size) {
  if (size < 2) throw Error(ErrorCode::InvalidParam, "grid needs at least 2 points");
  return VectorXd::LinSpaced(size, 0.0, 1.0);
}

/**
 * Four-cluster (by default) Gaussian model on the Fourier basis:
 *   X(u) = sum_{r=0}^{n_basis-1} lambda^r xi_r f_r(u) + sqrt(scale) zeta f_{p_c}(u)
 * so cluster c has covariance Sigma + scale f_{p_c} (x) f_{p_c}.
 */
struct SyntheticSpec {
  std::vector<int> perturbation_indices{1, 2, 3, 4};
  double lambda = 2.0 / std::sqrt(5.0);
  int n_basis = 33;
  int grid_size = 101;
  int n_per_cluster = 25;
  int n_min = 5;
  int n_max = 10;
  double perturbation_scale = 1.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (!(lambda > 0.0 && lambda < 1.0)) throw Error(ErrorCode::InvalidParam, "lambda must lie in (0, 1)");
    if (n_basis < 1 || grid_size < 2 || n_per_cluster < 1) throw Error(ErrorCode::InvalidParam, "sizes must be positive");
    if (n_min < 2 || n_max < n_min) throw Error(ErrorCode::InvalidParam, "curve counts need 2 <= n_min <= n_max");
    if (!(perturbation_scale >= 0.0)) throw Error(ErrorCode::InvalidParam, "perturbation scale must be nonnegative");
    if (perturbation_indices.empty()) throw Error(ErrorCode::InvalidParam, "need at least one cluster");
    for (int p : perturbation_indices) {
      if (p < 0) throw Error(ErrorCode::InvalidParam, "perturbation index must be nonnegative");
    }
  }
};

struct SyntheticData {
  VectorXd grid;
  std::vector<FunctionalSample> samples;
  std::vector<int> labels;
};

/**
 * Draw order: clusters in order, n_per_cluster groups each; per group the
 * size n ~ U{n_min..n_max}, then per curve xi_0..xi_{n_basis-1} and zeta.
 * Group ids are "g0001", "g0002", ... and labels are cluster positions.
 */
inline SyntheticData simulate(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticData out;
  out.grid = even_grid(spec.grid_size);
  const Index m = out.grid.size();

  MatrixXd basis(m, spec.n_basis);
  for (int r = 0; r < spec.n_basis; ++r) basis.col(r) = fourier_basis(r, out.grid) * std::pow(spec.lambda, r);
  std::vector<VectorXd> bumps;
  for (int p : spec.perturbation_indices) bumps.push_back(fourier_basis(p, out.grid) * std::sqrt(spec.perturbation_scale));

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> size_dist(spec.n_min, spec.n_max);
  int counter = 0;
  for (std::size_t c = 0; c < spec.perturbation_indices.size(); ++c) {
    for (int g = 0; g < spec.n_per_cluster; ++g) {
      const int n = size_dist(rng);
      FunctionalSample s;
      char id[32];
      std::snprintf(id, sizeof id, "g%04d", ++counter);
      s.group_id = id;
      s.grid = out.grid;
      s.curves.resize(n, m);
      VectorXd xi(spec.n_basis);
      for (int row = 0; row < n; ++row) {
        for (int r = 0; r < spec.n_basis; ++r) xi(r) = normal(rng);
        const double zeta = normal(rng);
        s.curves.row(row) = (basis * xi + zeta * bumps[c]).transpose();
      }
      out.samples.push_back(std::move(s));
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

/// Trapezoid weights of an increasing grid.
inline VectorXd trapezoid_weights(const VectorXd& grid) {
  const Index m = grid.size();
  VectorXd w = VectorXd::Zero(m);
  for (Index k = 0; k + 1 < m; ++k) {
    const double h = grid(k + 1) - grid(k);
    w(k) += 0.5 * h;
    w(k + 1) += 0.5 * h;
  }
  return w;
}

inline bool is_evenly_spaced(const VectorXd& grid, double rel_tol = 1e-6) {
  if (grid.size() < 3) return true;
  const double h = (grid(grid.size() - 1) - grid(0)) / static_cast<double>(grid.size() - 1);
  for (Index k = 0; k + 1 < grid.size(); ++k) {
    if (std::abs(grid(k + 1) - grid(k) - h) > rel_tol * std::abs(h)) return false;
  }
  return true;
}

/// Scales column k of every curve by sqrt(w_k) so that plain dot products
/// approximate L2 inner products on an uneven grid.
inline void apply_quadrature(std::vector<FunctionalSample>& samples) {
  for (auto& s : samples) {
    const VectorXd root = trapezoid_weights(s.grid).cwiseSqrt();
    s.curves = s.curves * root.asDiagonal();
  }
}

// ---------------------------------------------------------------------------
// Text and binary formats

/// Shortest round-trip decimal representation.
inline std::string format_double(double x) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (ec != std::errc{}) throw Error(ErrorCode::InvalidParam, "unformattable number");
  return std::string(buf.data(), ptr);
}

namespace detail {

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
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw Error(ErrorCode::InputFormat, "line " + std::to_string(line_no) + ": bad number '" + std::string(s) + "'");
  }
  return v;
}

inline bool skip_line(std::string_view line) {
  line = trim(line);
  return line.empty() || line.front() == '#';
}

}  // namespace detail

struct CurveData {
  VectorXd grid;
  std::vector<FunctionalSample> samples;
};

inline CurveData read_curves_csv(std::istream& in) {
  CurveData out;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::vector<std::vector<double>>> rows;
  Index m = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skip_line(line)) continue;
    const auto fields = detail::split_csv(line);
    if (!have_header) {
      if (fields.size() < 2) throw Error(ErrorCode::InputFormat, "header needs group_id and at least one grid value");
      m = static_cast<Index>(fields.size() - 1);
      out.grid.resize(m);
      for (Index k = 0; k < m; ++k) out.grid(k) = detail::parse_double(fields[static_cast<std::size_t>(k + 1)], line_no);
      for (Index k = 0; k + 1 < m; ++k) {
        if (!(out.grid(k + 1) > out.grid(k))) throw Error(ErrorCode::InputFormat, "grid must be strictly increasing");
      }
      have_header = true;
      continue;
    }
    if (static_cast<Index>(fields.size()) != m + 1) {
      throw Error(ErrorCode::InputFormat, "line " + std::to_string(line_no) + ": expected " + std::to_string(m + 1) + " fields");
    }
    const std::string id(fields[0]);
    if (id.empty()) throw Error(ErrorCode::InputFormat, "line " + std::to_string(line_no) + ": empty group id");
    auto [it, inserted] = index.try_emplace(id, rows.size());
    if (inserted) {
      rows.emplace_back();
      out.samples.push_back(FunctionalSample{id, {}, out.grid});
    }
    std::vector<double> values(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k) {
      values[static_cast<std::size_t>(k)] = detail::parse_double(fields[static_cast<std::size_t>(k + 1)], line_no);
      if (!std::isfinite(values[static_cast<std::size_t>(k)])) throw Error(ErrorCode::InputFormat, "non-finite value");
    }
    rows[it->second].push_back(std::move(values));
  }
  if (!have_header) throw Error(ErrorCode::InputFormat, "missing header row");
  if (out.samples.empty()) throw Error(ErrorCode::InputFormat, "no curves");
  for (std::size_t g = 0; g < rows.size(); ++g) {
    auto& c = out.samples[g].curves;
    c.resize(static_cast<Index>(rows[g].size()), m);
    for (std::size_t r = 0; r < rows[g].size(); ++r) {
      for (Index k = 0; k < m; ++k) c(static_cast<Index>(r), k) = rows[g][r][static_cast<std::size_t>(k)];
    }
  }
  return out;
}

inline void write_curves_csv(std::ostream& out, const VectorXd& grid, const std::vector<FunctionalSample>& samples) {
  out << "group_id";
  for (Index k = 0; k < grid.size(); ++k) out << ',' << format_double(grid(k));
  out << '\n';
  for (const auto& s : samples) {
    for (Index r = 0; r < s.curves.rows(); ++r) {
      out << s.group_id;
      for (Index k = 0; k < s.curves.cols(); ++k) out << ',' << format_double(s.curves(r, k));
      out << '\n';
    }
  }
}

inline void write_matrix_csv(std::ostream& out, const MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

/// Rectangular numeric CSV (no header). Rows must have equal length.
inline MatrixXd read_matrix_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skip_line(line)) continue;
    std::vector<double> row;
    for (auto f : detail::split_csv(line)) row.push_back(detail::parse_double(f, line_no));
    if (!rows.empty() && row.size() != rows.front().size()) throw Error(ErrorCode::InputFormat, "ragged matrix rows");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorCode::InputFormat, "empty matrix file");
  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Index>(r), static_cast<Index>(c)) = rows[r][c];
  }
  return m;
}

inline constexpr std::array<char, 4> kBinaryMagic{'W', 'P', 'C', 'V'};

namespace detail {

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) throw Error(ErrorCode::InputFormat, "truncated binary matrix");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline void write_matrix_binary(std::ostream& out, const MatrixXd& m) {
  if (m.rows() != m.cols()) throw Error(ErrorCode::InvalidMatrix, "binary format stores square matrices");
  out.write(kBinaryMagic.data(), kBinaryMagic.size());
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) detail::put_le<double>(out, m(r, c));
  }
}

inline MatrixXd read_matrix_binary(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kBinaryMagic) throw Error(ErrorCode::InputFormat, "missing WPCV magic");
  const auto dim = detail::get_le<std::uint32_t>(in);
  MatrixXd m(dim, dim);
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = detail::get_le<double>(in);
  }
  return m;
}

/// Reads either format, telling them apart by the magic bytes.
inline CovMatrix read_cov_matrix(std::istream& in) {
  std::array<char, 4> head{};
  in.read(head.data(), head.size());
  const auto got = in.gcount();
  in.clear();
  in.seekg(0);
  MatrixXd m = (got == 4 && head == kBinaryMagic) ? read_matrix_binary(in) : read_matrix_csv(in);
  try {
    return CovMatrix(std::move(m));
  } catch (const Error& e) {
    throw Error(ErrorCode::InputFormat, e.what());
  }
}

/// Two-column `group_id,label` file.
inline void write_labels_csv(std::ostream& out, const std::vector<FunctionalSample>& samples, const std::vector<int>& labels) {
  out << "group_id,label\n";
  for (std::size_t i = 0; i < samples.size(); ++i) out << samples[i].group_id << ',' << labels[i] << '\n';
}

inline std::vector<std::pair<std::string, int>> read_labels_csv(std::istream& in) {
  std::vector<std::pair<std::string, int>> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skip_line(line)) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 2) throw Error(ErrorCode::InputFormat, "line " + std::to_string(line_no) + ": expected 2 fields");
    if (!header) {
      header = true;
      continue;
    }
    int label = 0;
    auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), label);
    if (ec != std::errc{} || ptr != f[1].data() + f[1].size()) throw Error(ErrorCode::InputFormat, "bad label");
    out.emplace_back(std::string(f[0]), label);
  }
  return out;
}

/// Header plus string cells; the shape shared by the profile, coordinate and
/// distance reports.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline void write_csv_table(std::ostream& out, const CsvTable& table) {
  auto put = [&out](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) out << ',';
      out << cells[c];
    }
    out << '\n';
  };
  put(table.header);
  for (const auto& r : table.rows) put(r);
}

inline CsvTable read_csv_table(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::skip_line(line)) continue;
    std::vector<std::string> cells;
    for (auto f : detail::split_csv(line)) cells.emplace_back(f);
    if (!header) {
      t.header = std::move(cells);
      header = true;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw Error(ErrorCode::InputFormat, "line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) + " fields");
    }
    t.rows.push_back(std::move(cells));
  }
  if (!header) throw Error(ErrorCode::InputFormat, "missing header row");
  return t;
}

}  // namespace covclust
