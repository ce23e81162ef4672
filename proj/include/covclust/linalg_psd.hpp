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
 * @file linalg_psd.hpp
 * @brief Eigendecomposition-backed primitives for symmetric positive
 * semi-definite matrices.
 *
 * Everything in here is a pure function of its inputs. Negative eigenvalues
 * down to -psd_tol * trace are treated as roundoff and clipped to zero;
 * anything more negative is rejected as NotPSD.
 */

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "covclust/error.hpp"

namespace covclust {

using Index = Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kPsdTol = 1e-10;
inline constexpr double kPinvRelTol = 1e-10;

/// Eigenvalues in descending order with matching orthonormal columns.
struct SymEig {
  VectorXd values;
  MatrixXd vectors;
};

namespace detail {

inline bool all_finite(const MatrixXd& a) { return a.allFinite(); }

inline double symmetry_defect(const MatrixXd& a) {
  return (a - a.transpose()).cwiseAbs().maxCoeff();
}

/// Clipping threshold for a spectrum: eigenvalues in [-psd_tol * scale, 0)
/// are roundoff. The scale is the sum of |lambda|, which equals the trace
/// for a PSD matrix and stays meaningful when the trace is ~0.
inline double clip_threshold(const VectorXd& values) {
  return kPsdTol * values.cwiseAbs().sum();
}

/// Eigenvalues at or below this level are indistinguishable from the
/// backward error of a symmetric eigensolve.
inline double roundoff_cut(const VectorXd& values) {
  if (values.size() == 0) return 0.0;
  return 8.0 * static_cast<double>(values.size()) * std::numeric_limits<double>::epsilon() * values.cwiseAbs().maxCoeff();
}

inline SymEig eig_unchecked(const MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(a);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidMatrix, "symmetric eigensolver did not converge");
  }
  SymEig out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// V f(lambda) V^T for a descending spectrum.
template <class F>
MatrixXd spectral_apply(const SymEig& e, F&& f) {
  VectorXd mapped(e.values.size());
  for (Index k = 0; k < e.values.size(); ++k) mapped(k) = f(e.values(k));
  MatrixXd out = e.vectors * mapped.asDiagonal() * e.vectors.transpose();
  return 0.5 * (out + out.transpose());
}

/// V sqrt(lambda) V^T with roundoff-level eigenvalues mapped to zero.
inline MatrixXd psd_root(const SymEig& e) {
  const double cut = roundoff_cut(e.values);
  return spectral_apply(e, [cut](double l) { return l > cut ? std::sqrt(l) : 0.0; });
}

/// Sum of sqrt(lambda) over the above-roundoff spectrum of the symmetric part
/// of a small matrix.
inline double trace_sqrt_sym(const MatrixXd& c) {
  if (c.size() == 0) return 0.0;
  const MatrixXd sym = 0.5 * (c + c.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sym, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) {
    throw Error(ErrorCode::InvalidMatrix, "symmetric eigensolver did not converge");
  }
  const double cut = roundoff_cut(solver.eigenvalues());
  double s = 0.0;
  for (Index k = 0; k < solver.eigenvalues().size(); ++k) {
    if (solver.eigenvalues()(k) > cut) s += std::sqrt(solver.eigenvalues()(k));
  }
  return s;
}

}  // namespace detail

/// Symmetric eigendecomposition, eigenvalues sorted descending.
inline SymEig sym_eig(const MatrixXd& a) {
  if (a.rows() != a.cols()) throw Error(ErrorCode::InvalidMatrix, "matrix is not square");
  if (!detail::all_finite(a)) throw Error(ErrorCode::InvalidMatrix, "non-finite entries");
  return detail::eig_unchecked(a);
}

/**
 * A symmetric PSD matrix: the finite representation of a covariance operator.
 *
 * The checked constructor enforces symmetry (relative 1e-12) and clips
 * roundoff-negative eigenvalues. `trusted` skips the spectral check for
 * matrices that are PSD by construction (congruences, Gram products) and only
 * forces exact symmetry.
 */
class CovMatrix {
 public:
  CovMatrix() = default;

  explicit CovMatrix(MatrixXd m) {
    if (m.rows() == 0 || m.rows() != m.cols()) {
      throw Error(ErrorCode::InvalidMatrix, "covariance must be a non-empty square matrix");
    }
    if (!detail::all_finite(m)) throw Error(ErrorCode::InvalidMatrix, "non-finite entries");
    const double scale = 1.0 + m.cwiseAbs().maxCoeff();
    if (detail::symmetry_defect(m) > 1e-12 * scale) {
      throw Error(ErrorCode::InvalidMatrix, "matrix is not symmetric");
    }
    m = 0.5 * (m + m.transpose());
    SymEig e = detail::eig_unchecked(m);
    const double lmin = e.values(e.values.size() - 1);
    if (lmin < 0.0) {
      if (lmin < -detail::clip_threshold(e.values)) {
        throw Error(ErrorCode::NotPSD, "eigenvalue " + std::to_string(lmin) + " below tolerance");
      }
      m = detail::spectral_apply(e, [](double l) { return std::max(0.0, l); });
    }
    m_ = std::move(m);
  }

  static CovMatrix trusted(MatrixXd m) {
    CovMatrix c;
    c.m_ = 0.5 * (m + m.transpose());
    return c;
  }

  static CovMatrix identity(Index dim) { return trusted(MatrixXd::Identity(dim, dim)); }

  static CovMatrix diagonal(const VectorXd& d) {
    return CovMatrix(MatrixXd(d.asDiagonal()));
  }

  Index dim() const noexcept { return m_.rows(); }
  const MatrixXd& matrix() const noexcept { return m_; }
  double trace() const { return m_.trace(); }
  double operator()(Index r, Index c) const { return m_(r, c); }

 private:
  MatrixXd m_;
};

inline SymEig sym_eig(const CovMatrix& a) { return detail::eig_unchecked(a.matrix()); }

inline void require_same_dim(const CovMatrix& a, const CovMatrix& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
}

/// Clips the spectrum at zero. Unlike the CovMatrix constructor this accepts
/// arbitrarily negative eigenvalues.
inline CovMatrix project_psd(const MatrixXd& a) {
  const SymEig e = sym_eig(0.5 * (a + a.transpose()));
  return CovMatrix::trusted(detail::spectral_apply(e, [](double l) { return std::max(0.0, l); }));
}

inline CovMatrix sqrt_psd(const CovMatrix& a) {
  const SymEig e = sym_eig(a);
  const double thr = detail::clip_threshold(e.values);
  if (e.values(e.values.size() - 1) < -thr) throw Error(ErrorCode::NotPSD, "sqrt of indefinite matrix");
  return CovMatrix::trusted(detail::psd_root(e));
}

/// Moore-Penrose inverse square root: eigenvalues below rel_tol * lambda_max
/// map to zero. The zero matrix maps to itself.
inline MatrixXd inv_sqrt_psd(const SymEig& e, double rel_tol = kPinvRelTol) {
  const double lmax = e.values.size() ? std::max(0.0, e.values(0)) : 0.0;
  const double cut = rel_tol * lmax;
  return detail::spectral_apply(e, [&](double l) { return (lmax > 0.0 && l >= cut && l > 0.0) ? 1.0 / std::sqrt(l) : 0.0; });
}

inline CovMatrix inv_sqrt_psd(const CovMatrix& a, double rel_tol = kPinvRelTol) {
  return CovMatrix::trusted(inv_sqrt_psd(sym_eig(a), rel_tol));
}

/// tr sqrt(A^{1/2} B A^{1/2}), the cross term of the Bures-Wasserstein distance.
inline double trace_sqrt_product(const CovMatrix& a, const CovMatrix& b) {
  require_same_dim(a, b);
  const MatrixXd ra = sqrt_psd(a).matrix();
  return detail::trace_sqrt_sym(ra * b.matrix() * ra);
}

/**
 * Low-rank factor F with A = F F^T. Sample covariances estimated from n curves
 * have rank at most n-1, so F is typically M x (n-1) and every quantity that
 * involves A can be computed in the small (n-1) x (n-1) space.
 */
struct CovFactor {
  MatrixXd f;
  double trace = 0.0;

  Index dim() const noexcept { return f.rows(); }
  Index rank() const noexcept { return f.cols(); }

  static CovFactor from_gram_root(MatrixXd f) {
    CovFactor out;
    out.trace = f.squaredNorm();
    out.f = std::move(f);
    return out;
  }
};

/// Factor a PSD matrix through its eigendecomposition, keeping the columns
/// of eigenvalues above roundoff.
inline CovFactor factorize(const CovMatrix& a) {
  const SymEig e = sym_eig(a);
  const double cut = detail::roundoff_cut(e.values);
  Index r = 0;
  while (r < e.values.size() && e.values(r) > cut) ++r;
  MatrixXd f = e.vectors.leftCols(r) * e.values.head(r).cwiseSqrt().asDiagonal();
  return CovFactor::from_gram_root(std::move(f));
}

/// tr sqrt(A^{1/2} B A^{1/2}) with A = F F^T: the nonzero spectrum of
/// B^{1/2} F F^T B^{1/2} equals that of F^T B F.
inline double trace_sqrt_product(const CovFactor& a, const CovMatrix& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  return detail::trace_sqrt_sym(a.f.transpose() * b.matrix() * a.f);
}

/// Factor-factor variant: the nuclear norm of F_a^T F_b.
inline double trace_sqrt_product(const CovFactor& a, const CovFactor& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::DimMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  if (a.rank() == 0 || b.rank() == 0) return 0.0;
  const MatrixXd cross = a.f.transpose() * b.f;
  Eigen::JacobiSVD<MatrixXd> svd(cross);
  return svd.singularValues().sum();
}

}  // namespace covclust
