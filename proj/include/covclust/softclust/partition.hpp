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
 * @file partition.hpp
 * @brief Optimal membership grades for fixed barycenters under the average
 * entropy constraint.
 *
 * For weighted squared distances d_{i,j} the grades are a row softmax of
 * -d_{i,j} / eta, and eta > 0 is the root of Psi(eta) = N E, where
 * Psi(eta) = -sum pi log pi is increasing on (0, inf) from the entropy of the
 * hard assignment up to N log K.
 */

#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "covclust/error.hpp"
#include "covclust/linalg_psd.hpp"
#include "covclust/softclust/types.hpp"

namespace covclust {

/// E = -(1 - alpha)[beta log beta + (1 - beta) log(1 - beta)] + alpha log 2.
inline double suggested_entropy(double alpha, double beta) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
    throw Error(ErrorCode::InvalidParam, "alpha and beta must lie in (0, 1)");
  }
  const double binary = beta * std::log(beta) + (1.0 - beta) * std::log1p(-beta);
  return -(1.0 - alpha) * binary + alpha * std::log(2.0);
}

/// Phi, Psi and the weighted variance V^2 at one eta.
struct EtaProfile {
  double phi = 0.0;
  double psi = 0.0;
  double v2 = 0.0;
};

/// Row softmax of -d / eta, shifted by each row minimum.
inline MatrixXd softmax_grades(const MatrixXd& d, double eta) {
  MatrixXd p(d.rows(), d.cols());
  for (Index i = 0; i < d.rows(); ++i) {
    const double lo = d.row(i).minCoeff();
    double z = 0.0;
    for (Index j = 0; j < d.cols(); ++j) {
      p(i, j) = std::exp(-(d(i, j) - lo) / eta);
      z += p(i, j);
    }
    p.row(i) /= z;
  }
  return p;
}

inline EtaProfile eta_profile(const MatrixXd& d, double eta) {
  EtaProfile out;
  for (Index i = 0; i < d.rows(); ++i) {
    const double lo = d.row(i).minCoeff();
    double z = 0.0;
    double zd = 0.0;
    for (Index j = 0; j < d.cols(); ++j) {
      const double shifted = d(i, j) - lo;
      const double e = std::exp(-shifted / eta);
      z += e;
      zd += e * shifted;
    }
    const double mean_shift = zd / z;
    // -sum pi log pi = log z + sum pi (d - lo) / eta
    out.psi += std::log(z) + mean_shift / eta;
    double var = 0.0;
    for (Index j = 0; j < d.cols(); ++j) {
      const double shifted = d(i, j) - lo;
      const double pij = std::exp(-shifted / eta) / z;
      out.phi += pij * d(i, j);
      var += pij * (shifted - mean_shift) * (shifted - mean_shift);
    }
    out.v2 += var;
  }
  return out;
}

struct PartitionResult {
  PartitionMatrix partition;
  double eta = 0.0;
  double psi = 0.0;
};

/// Hard assignment to the row minimum, lowest cluster index on ties.
inline MatrixXd hard_grades(const MatrixXd& d) {
  MatrixXd p = MatrixXd::Zero(d.rows(), d.cols());
  for (Index i = 0; i < d.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < d.cols(); ++j) {
      if (d(i, j) < d(i, best)) best = j;
    }
    p(i, best) = 1.0;
  }
  return p;
}

/**
 * Solves for the grades minimising sum pi d subject to row-stochasticity and
 * average entropy E. E = 0 gives the hard assignment (eta reported as 0),
 * E = log K the uniform partition (eta = +inf). Otherwise eta is bracketed by
 * doubling/halving from mean(d) and refined by Illinois regula falsi in
 * log(eta) with a bisection safeguard until |Psi - N E| <= 1e-11 N.
 */
inline PartitionResult solve_partition(const MatrixXd& d, double entropy) {
  const Index n = d.rows();
  const Index k = d.cols();
  if (n == 0 || k == 0) throw Error(ErrorCode::InvalidParam, "empty distance matrix");
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) {
      if (!std::isfinite(d(i, j)) || d(i, j) < 0.0) {
        throw Error(ErrorCode::InvalidDistance, "distances must be finite and nonnegative");
      }
    }
  }
  const double log_k = std::log(static_cast<double>(k));
  if (!(entropy >= 0.0) || entropy > log_k + 1e-12) {
    throw Error(ErrorCode::InvalidParam, "entropy must lie in [0, log K]");
  }

  PartitionResult out;
  if (entropy == 0.0) {
    out.partition = PartitionMatrix(hard_grades(d));
    out.eta = 0.0;
    out.psi = out.partition.average_entropy() * static_cast<double>(n);
    return out;
  }
  if (entropy >= log_k - 1e-12) {
    out.partition = PartitionMatrix(MatrixXd::Constant(n, k, 1.0 / static_cast<double>(k)));
    out.eta = std::numeric_limits<double>::infinity();
    out.psi = static_cast<double>(n) * log_k;
    return out;
  }

  bool informative = false;
  for (Index i = 0; i < n && !informative; ++i) {
    informative = d.row(i).maxCoeff() > d.row(i).minCoeff();
  }
  if (!informative) {
    throw Error(ErrorCode::DegenerateDistances, "every row of the distance matrix is constant");
  }

  const double target = static_cast<double>(n) * entropy;
  const double tol = 1e-11 * static_cast<double>(n);
  auto excess = [&](double log_eta) { return eta_profile(d, std::exp(log_eta)).psi - target; };

  double t0 = std::log(d.mean());
  double g0 = excess(t0);
  double t_lo = t0, g_lo = g0, t_hi = t0, g_hi = g0;
  constexpr double kStep = 0.69314718055994531;  // log 2
  if (g0 < 0.0) {
    for (int it = 0; g_hi < 0.0; ++it) {
      if (it > 2000) throw Error(ErrorCode::DegenerateDistances, "entropy target not reachable from above");
      t_lo = t_hi;
      g_lo = g_hi;
      t_hi += kStep;
      g_hi = excess(t_hi);
    }
  } else {
    for (int it = 0; g_lo > 0.0; ++it) {
      if (it > 2000) {
        throw Error(ErrorCode::DegenerateDistances, "entropy target below the entropy of tied hard assignments");
      }
      t_hi = t_lo;
      g_hi = g_lo;
      t_lo -= kStep;
      g_lo = excess(t_lo);
    }
  }

  double t = t_lo, g = g_lo;
  if (std::abs(g_hi) < std::abs(g_lo)) {
    t = t_hi;
    g = g_hi;
  }
  int side = 0;
  for (int it = 0; it < 300 && std::abs(g) > tol; ++it) {
    double cand = (t_lo * g_hi - t_hi * g_lo) / (g_hi - g_lo);
    const double width = t_hi - t_lo;
    if (!(cand > t_lo && cand < t_hi) || it % 8 == 7) cand = 0.5 * (t_lo + t_hi);
    const double gc = excess(cand);
    t = cand;
    g = gc;
    if (gc < 0.0) {
      t_lo = cand;
      g_lo = gc;
      if (side == -1) g_hi *= 0.5;
      side = -1;
    } else {
      t_hi = cand;
      g_hi = gc;
      if (side == 1) g_lo *= 0.5;
      side = 1;
    }
    if (width <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(t))) break;
  }

  out.eta = std::exp(t);
  out.partition = PartitionMatrix(softmax_grades(d, out.eta));
  out.psi = g + target;
  return out;
}

/// sum_{i,j} pi_{i,j} d_{i,j}
inline double partition_objective(const PartitionMatrix& p, const MatrixXd& d) {
  return p.grades().cwiseProduct(d).sum();
}

}  // namespace covclust
