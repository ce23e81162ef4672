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

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "covclust/linalg_psd.hpp"
#include "covclust/wasserstein.hpp"

namespace covclust {

/// An estimated covariance with the sample size it came from. Clustering
/// weights each item by n - 1.
struct SampleCov {
  std::string id;
  CovMatrix matrix;
  int n = 0;
  CovFactor factor;

  double weight() const noexcept { return static_cast<double>(n - 1); }
};

inline SampleCov make_sample_cov(std::string id, CovMatrix matrix, int n, CovFactor factor) {
  if (n < 2) throw Error(ErrorCode::InvalidParam, "sample size must be at least 2 (item '" + id + "')");
  if (factor.dim() != matrix.dim()) throw Error(ErrorCode::DimMismatch, "factor and matrix dimension differ");
  return SampleCov{std::move(id), std::move(matrix), n, std::move(factor)};
}

inline SampleCov make_sample_cov(std::string id, CovMatrix matrix, int n) {
  CovFactor f = factorize(matrix);
  return make_sample_cov(std::move(id), std::move(matrix), n, std::move(f));
}

inline FactorStack stack_of(const std::vector<SampleCov>& covs) {
  std::vector<CovFactor> factors;
  factors.reserve(covs.size());
  for (const auto& c : covs) factors.push_back(c.factor);
  return FactorStack(factors);
}

inline std::vector<double> weights_of(const std::vector<SampleCov>& covs) {
  std::vector<double> w;
  w.reserve(covs.size());
  for (const auto& c : covs) w.push_back(c.weight());
  return w;
}

/// N x K row-stochastic matrix of nonnegative membership grades.
class PartitionMatrix {
 public:
  PartitionMatrix() = default;

  explicit PartitionMatrix(MatrixXd grades) : grades_(std::move(grades)) {
    for (Index i = 0; i < grades_.rows(); ++i) {
      double sum = 0.0;
      for (Index j = 0; j < grades_.cols(); ++j) {
        const double g = grades_(i, j);
        if (!(g >= 0.0) || !std::isfinite(g)) throw Error(ErrorCode::InvalidParam, "grades must be finite and nonnegative");
        sum += g;
      }
      if (std::abs(sum - 1.0) > 1e-10) throw Error(ErrorCode::InvalidParam, "partition row does not sum to one");
    }
  }

  Index rows() const noexcept { return grades_.rows(); }
  Index clusters() const noexcept { return grades_.cols(); }
  const MatrixXd& grades() const noexcept { return grades_; }
  double operator()(Index i, Index j) const { return grades_(i, j); }

  /// max_j pi_{i,j}
  double credibility(Index i) const { return grades_.row(i).maxCoeff(); }

  /// argmax_j pi_{i,j}, lowest index on ties.
  Index nearest(Index i) const {
    Index best = 0;
    for (Index j = 1; j < grades_.cols(); ++j) {
      if (grades_(i, j) > grades_(i, best)) best = j;
    }
    return best;
  }

  /// Mean row entropy -1/N sum pi log pi.
  double average_entropy() const {
    double s = 0.0;
    for (Index i = 0; i < grades_.rows(); ++i) {
      for (Index j = 0; j < grades_.cols(); ++j) {
        const double g = grades_(i, j);
        if (g > 0.0) s -= g * std::log(g);
      }
    }
    return grades_.rows() ? s / static_cast<double>(grades_.rows()) : 0.0;
  }

 private:
  MatrixXd grades_;
};

struct SoftClustConfig {
  int k = 2;
  /// Prescribed average row entropy, 0 <= entropy <= log k.
  double entropy = 0.0;
  int nstart = 5;
  int nrefine = 5;
  /// Candidates per refinement step; 0 means ceil(N / k).
  int ntry = 0;
  int max_bcd_iter = 100;
  double bcd_tol = 1e-6;
  BarycenterOptions barycenter;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  /// Run the iterations in the span of the data when it is smaller than the
  /// grid dimension. Exact up to roundoff.
  bool compress = true;
  /// Isotropic lift, relative to tr / M, added to each barycenter before it
  /// seeds the next Frechet iteration.
  double warm_start_floor = 1e-4;

  void validate(Index n_items) const {
    if (k < 1) throw Error(ErrorCode::InvalidParam, "k must be at least 1");
    if (!(entropy >= 0.0) || entropy > std::log(static_cast<double>(k)) + 1e-12) {
      throw Error(ErrorCode::InvalidParam, "entropy must lie in [0, log k]");
    }
    if (nstart < 1 || nrefine < 0 || ntry < 0 || max_bcd_iter < 1 || !(bcd_tol >= 0.0) ||
        !(warm_start_floor > 0.0)) {
      throw Error(ErrorCode::InvalidParam, "invalid search or iteration settings");
    }
    if (n_items < k) throw Error(ErrorCode::TooFewItems, "fewer items than clusters");
  }

  int effective_ntry(Index n_items) const {
    if (ntry > 0) return ntry;
    return static_cast<int>((n_items + k - 1) / k);
  }
};

struct ClusterSolution {
  std::vector<CovMatrix> barycenters;
  PartitionMatrix partition;
  /// Lagrange multiplier of the entropy constraint; 0 for hard partitions and
  /// +infinity for the uniform one.
  double eta = 0.0;
  double objective = 0.0;
  double entropy = 0.0;
  /// d_{i,j} = (n_i - 1) * squared distance from item i to barycenter j.
  MatrixXd dist2;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_history;
  /// Items whose covariances seeded the barycenters.
  std::vector<Index> medoids;
  int reseeds = 0;

  Index clusters() const noexcept { return static_cast<Index>(barycenters.size()); }
};

}  // namespace covclust
