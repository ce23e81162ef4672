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
 * @file wasserstein.hpp
 * @brief Wasserstein-Procrustes distance between covariance matrices and the
 * weighted Frechet mean (Wasserstein barycenter of centred Gaussians).
 */

#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "covclust/linalg_psd.hpp"

namespace covclust {

/// Squared Wasserstein-Procrustes distance, clamped at zero.
inline double wp_dist2(const CovMatrix& a, const CovMatrix& b) {
  require_same_dim(a, b);
  return std::max(0.0, a.trace() + b.trace() - 2.0 * trace_sqrt_product(a, b));
}

inline double wp_dist2(const CovFactor& a, const CovMatrix& b) {
  return std::max(0.0, a.trace + b.trace() - 2.0 * trace_sqrt_product(a, b));
}

inline double wp_dist2(const CovFactor& a, const CovFactor& b) {
  return std::max(0.0, a.trace + b.trace - 2.0 * trace_sqrt_product(a, b));
}

/**
 * Symmetric map T with T base T = target:
 *   T = base^{-1/2} (base^{1/2} target base^{1/2})^{1/2} base^{-1/2}.
 * The inverse square root is the Moore-Penrose one (see inv_sqrt_psd), so for
 * a rank-deficient base the pushforward only reproduces target on range(base).
 */
inline MatrixXd transport_map(const CovMatrix& base, const CovMatrix& target,
                              double rel_tol = kPinvRelTol) {
  require_same_dim(base, target);
  const SymEig e = sym_eig(base);
  const MatrixXd root = detail::psd_root(e);
  const MatrixXd inv_root = inv_sqrt_psd(e, rel_tol);
  const MatrixXd middle = sqrt_psd(CovMatrix::trusted(root * target.matrix() * root)).matrix();
  MatrixXd t = inv_root * middle * inv_root;
  return 0.5 * (t + t.transpose());
}

/**
 * Column-stacked low-rank factors of a fixed collection of PSD matrices.
 *
 * Item i occupies columns [offset(i), offset(i) + rank(i)) of `all()`. Keeping
 * the factors contiguous lets the barycenter and distance kernels run one
 * large product per pass instead of one small product per item.
 */
class FactorStack {
 public:
  FactorStack() = default;

  explicit FactorStack(std::span<const CovFactor> factors) {
    if (factors.empty()) return;
    dim_ = factors.front().dim();
    Index total = 0;
    for (const auto& f : factors) {
      if (f.dim() != dim_) throw Error(ErrorCode::DimMismatch, "factors of different dimension");
      offset_.push_back(total);
      rank_.push_back(f.rank());
      trace_.push_back(f.trace);
      total += f.rank();
    }
    all_.resize(dim_, total);
    for (std::size_t i = 0; i < factors.size(); ++i) {
      all_.middleCols(offset_[i], rank_[i]) = factors[i].f;
    }
  }

  Index size() const noexcept { return static_cast<Index>(offset_.size()); }
  Index dim() const noexcept { return dim_; }
  const MatrixXd& all() const noexcept { return all_; }
  Index offset(Index i) const { return offset_[static_cast<std::size_t>(i)]; }
  Index rank(Index i) const { return rank_[static_cast<std::size_t>(i)]; }
  double trace(Index i) const { return trace_[static_cast<std::size_t>(i)]; }

  auto block(Index i) const { return all_.middleCols(offset(i), rank(i)); }

  /// Dense F_i F_i^T.
  CovMatrix matrix(Index i) const {
    const auto b = block(i);
    return CovMatrix::trusted(b * b.transpose());
  }

  FactorStack subset(std::span<const Index> items) const {
    std::vector<CovFactor> picked;
    picked.reserve(items.size());
    for (Index i : items) picked.push_back(CovFactor::from_gram_root(MatrixXd(block(i))));
    return FactorStack(picked);
  }

  /// Same items expressed in coordinates Q^T x for an orthonormal basis Q.
  FactorStack project(const MatrixXd& basis) const {
    FactorStack out = *this;
    out.dim_ = basis.cols();
    out.all_ = basis.transpose() * all_;
    return out;
  }

 private:
  Index dim_ = 0;
  MatrixXd all_;
  std::vector<Index> offset_;
  std::vector<Index> rank_;
  std::vector<double> trace_;
};

/**
 * Orthonormal basis of the span of all factor columns. Every Frechet mean of
 * the items, started from a matrix inside the span, stays inside it, and the
 * distance is invariant under the isometric embedding x -> Q x, so clustering
 * can run in the (often much smaller) span coordinates.
 */
inline MatrixXd span_basis(const FactorStack& stack, double rel_tol = 1e-13) {
  if (stack.all().cols() == 0) return MatrixXd(stack.dim(), 0);
  const SymEig e = sym_eig(MatrixXd(stack.all() * stack.all().transpose()));
  const double cut = rel_tol * std::max(0.0, e.values(0));
  Index d = 0;
  while (d < e.values.size() && e.values(d) > cut && e.values(d) > 0.0) ++d;
  return e.vectors.leftCols(d);
}

/// Squared distances from every stacked item to one matrix.
inline VectorXd wp_dist2_all(const FactorStack& stack, const CovMatrix& target) {
  if (stack.dim() != target.dim()) throw Error(ErrorCode::DimMismatch, "stack vs target dimension");
  VectorXd out(stack.size());
  const MatrixXd tf = target.matrix() * stack.all();
  const double tr = target.trace();
  for (Index i = 0; i < stack.size(); ++i) {
    const MatrixXd g = stack.block(i).transpose() * tf.middleCols(stack.offset(i), stack.rank(i));
    out(i) = std::max(0.0, stack.trace(i) + tr - 2.0 * detail::trace_sqrt_sym(g));
  }
  return out;
}

struct BarycenterOptions {
  int max_iter = 100;
  double tol = 1e-8;
  double pinv_rel_tol = kPinvRelTol;
  double ridge = 1e-10;
  double ridge_condition = 1e12;
};

struct BarycenterResult {
  CovMatrix mean;
  int iterations = 0;
  double frechet_value = 0.0;
  bool converged = false;
  /// F at the initial guess followed by F at every iterate.
  std::vector<double> history;
  /// Weight-normalised average transport map from the final iterate.
  MatrixXd mean_transport;
};

namespace detail {

struct FrechetPass {
  double value = 0.0;
  MatrixXd mean_transport;
};

/**
 * One sweep over the items at the current iterate: the Frechet functional and
 * the weight-averaged transport map
 *   T_i = P F_i (F_i^T B F_i)^{+1/2} F_i^T P,
 * which is base^{-1/2}(base^{1/2} F_i F_i^T base^{1/2})^{1/2} base^{-1/2}
 * written in the rank(F_i)-dimensional space. B is the iterate (ridged when
 * ill-conditioned) and P the projector kept by the pseudo-inverse.
 */
inline FrechetPass frechet_pass(const FactorStack& stack, std::span<const double> weights,
                                const CovMatrix& iterate, const BarycenterOptions& opt) {
  const Index m = iterate.dim();
  SymEig e = sym_eig(iterate);
  for (Index k = 0; k < e.values.size(); ++k) e.values(k) = std::max(0.0, e.values(k));
  const double lmax = e.values(0);
  const double lmin = e.values(m - 1);
  double ridge = 0.0;
  if (lmin <= 0.0 || lmax / lmin > opt.ridge_condition) ridge = opt.ridge * iterate.trace() / static_cast<double>(m);

  VectorXd base_vals = e.values.array() + ridge;
  const double cut = opt.pinv_rel_tol * base_vals(0);
  Index kept = 0;
  while (kept < m && base_vals(kept) >= cut && base_vals(kept) > 0.0) ++kept;

  const MatrixXd base = e.vectors * base_vals.asDiagonal() * e.vectors.transpose();
  const double iterate_trace = iterate.trace();

  double weight_sum = 0.0;
  std::vector<Index> active;
  for (Index i = 0; i < stack.size(); ++i) {
    if (weights[static_cast<std::size_t>(i)] > 0.0) {
      active.push_back(i);
      weight_sum += weights[static_cast<std::size_t>(i)];
    }
  }

  MatrixXd bf;
  const bool dense_pass = static_cast<std::size_t>(stack.size()) == active.size();
  if (dense_pass) bf = base * stack.all();

  FrechetPass out;
  MatrixXd accum = MatrixXd::Zero(m, m);
  MatrixXd fu;
  // Item ranks are usually small; bounded-size matrices avoid heap traffic.
  auto item = [&]<class Small>(Index i, double w, const auto& f) {
    Small g = dense_pass ? Small(f.transpose() * bf.middleCols(stack.offset(i), stack.rank(i)))
                         : Small(f.transpose() * (base * f));
    g = 0.5 * (g + g.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Small> small(g);
    const auto& s = small.eigenvalues();
    const double smax = std::max(0.0, s.maxCoeff());
    VectorXd root_inv(s.size());
    for (Index k = 0; k < s.size(); ++k) {
      root_inv(k) = (s(k) > opt.pinv_rel_tol * smax && s(k) > 0.0) ? 1.0 / std::sqrt(s(k)) : 0.0;
    }
    // Cross term against the un-ridged iterate.
    double cross = 0.0;
    if (ridge > 0.0) {
      Small g0 = g - ridge * (f.transpose() * f);
      Eigen::SelfAdjointEigenSolver<Small> plain(g0, Eigen::EigenvaluesOnly);
      for (Index k = 0; k < g0.rows(); ++k) cross += std::sqrt(std::max(0.0, plain.eigenvalues()(k)));
    } else {
      for (Index k = 0; k < s.size(); ++k) cross += std::sqrt(std::max(0.0, s(k)));
    }
    out.value += w * std::max(0.0, stack.trace(i) + iterate_trace - 2.0 * cross);

    fu.noalias() = f * small.eigenvectors();
    for (Index k = 0; k < fu.cols(); ++k) fu.col(k) *= std::sqrt(w * root_inv(k));
    accum.template selfadjointView<Eigen::Lower>().rankUpdate(fu);
  };
  using Bounded = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 16, 16>;
  for (Index i : active) {
    const double w = weights[static_cast<std::size_t>(i)];
    const auto f = stack.block(i);
    if (f.cols() == 0) {
      out.value += w * (stack.trace(i) + iterate_trace);
    } else if (f.cols() <= 16) {
      item.template operator()<Bounded>(i, w, f);
    } else {
      item.template operator()<MatrixXd>(i, w, f);
    }
  }
  accum = accum.selfadjointView<Eigen::Lower>();
  accum /= weight_sum;
  if (kept < m) {
    const MatrixXd p = e.vectors.leftCols(kept) * e.vectors.leftCols(kept).transpose();
    accum = p * accum * p;
  }
  out.mean_transport = 0.5 * (accum + accum.transpose());
  return out;
}

inline CovMatrix weighted_arithmetic_mean(const FactorStack& stack, std::span<const double> weights) {
  MatrixXd sum = MatrixXd::Zero(stack.dim(), stack.dim());
  double total = 0.0;
  for (Index i = 0; i < stack.size(); ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (w <= 0.0) continue;
    const auto f = stack.block(i);
    sum.noalias() += w * (f * f.transpose());
    total += w;
  }
  return CovMatrix::trusted(sum / total);
}

}  // namespace detail

/**
 * Weighted Frechet mean by the transport-map fixed point
 *   S_{j+1} = T_j S_j T_j,  T_j = sum_i w_i T_{i,j} / sum_i w_i.
 * Stops when |F(S_{j+1}) - F(S_j)| <= tol (1 + F(S_j)). Zero-weight items
 * are skipped. Default start is the weighted arithmetic mean.
 */
inline BarycenterResult frechet_mean(const FactorStack& stack, std::span<const double> weights,
                                     const std::optional<CovMatrix>& init = std::nullopt,
                                     const BarycenterOptions& opt = {}) {
  if (static_cast<Index>(weights.size()) != stack.size()) {
    throw Error(ErrorCode::InvalidParam, "weight count does not match item count");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::InvalidParam, "weights must be finite and nonnegative");
    total += w;
  }
  if (stack.size() == 0 || !(total > 0.0)) throw Error(ErrorCode::EmptySet, "no item with positive weight");
  if (init && init->dim() != stack.dim()) throw Error(ErrorCode::DimMismatch, "initial guess dimension");

  BarycenterResult res;
  CovMatrix current = init ? *init : detail::weighted_arithmetic_mean(stack, weights);
  detail::FrechetPass pass = detail::frechet_pass(stack, weights, current, opt);
  res.history.push_back(pass.value);

  for (int it = 1; it <= opt.max_iter; ++it) {
    const MatrixXd& t = pass.mean_transport;
    CovMatrix next = CovMatrix::trusted(t * current.matrix() * t);
    detail::FrechetPass next_pass = detail::frechet_pass(stack, weights, next, opt);
    res.history.push_back(next_pass.value);
    res.iterations = it;
    const double change = std::abs(next_pass.value - pass.value);
    const double scale = 1.0 + pass.value;
    current = std::move(next);
    pass = std::move(next_pass);
    if (change <= opt.tol * scale) {
      res.converged = true;
      break;
    }
  }
  res.mean = std::move(current);
  res.frechet_value = pass.value;
  res.mean_transport = std::move(pass.mean_transport);
  return res;
}

/// Nonnegative weights attached to same-dimension covariance matrices.
class WeightedCovSet {
 public:
  WeightedCovSet() = default;

  void add(CovMatrix m, double weight) {
    if (!std::isfinite(weight) || weight < 0.0) throw Error(ErrorCode::InvalidParam, "weight must be finite and nonnegative");
    if (!items_.empty() && m.dim() != items_.front().first.dim()) {
      throw Error(ErrorCode::DimMismatch, "all matrices must share one dimension");
    }
    items_.emplace_back(std::move(m), weight);
  }

  std::size_t size() const noexcept { return items_.size(); }
  Index dim() const noexcept { return items_.empty() ? 0 : items_.front().first.dim(); }
  const std::vector<std::pair<CovMatrix, double>>& items() const noexcept { return items_; }

 private:
  std::vector<std::pair<CovMatrix, double>> items_;
};

inline BarycenterResult frechet_mean(const WeightedCovSet& set, const std::optional<CovMatrix>& init = std::nullopt,
                                     int max_iter = 100, double tol = 1e-8) {
  std::vector<CovFactor> factors;
  std::vector<double> weights;
  double total = 0.0;
  for (const auto& [m, w] : set.items()) {
    factors.push_back(factorize(m));
    weights.push_back(w);
    total += w;
  }
  if (factors.empty() || !(total > 0.0)) throw Error(ErrorCode::EmptySet, "no item with positive weight");
  BarycenterOptions opt;
  opt.max_iter = max_iter;
  opt.tol = tol;
  return frechet_mean(FactorStack(factors), weights, init, opt);
}

}  // namespace covclust
