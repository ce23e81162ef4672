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
 * @file validation.hpp
 * @brief Cluster diagnostics: fast silhouettes, credibilities, the trimmed
 * average silhouette width (TASW), K selection, the permutation test for the
 * single-cluster null, and classical MDS for plotting.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "covclust/dataio.hpp"
#include "covclust/parallel.hpp"
#include "covclust/softclust/fit.hpp"
#include "covclust/softclust/types.hpp"
#include "covclust/wasserstein.hpp"

namespace covclust {

/**
 * SW_i = 1 - Pi(i, nearest) / Pi(i, second nearest), with unsquared
 * distances recovered from the cached d_{i,j} / (n_i - 1). Zero when the
 * second-nearest distance is zero.
 */
inline std::vector<double> silhouette_widths(std::span<const double> weights, const ClusterSolution& sol) {
  const Index k = sol.dist2.cols();
  if (k < 2) throw Error(ErrorCode::NeedsTwoClusters, "silhouettes need at least two clusters");
  std::vector<double> sw(static_cast<std::size_t>(sol.dist2.rows()));
  for (Index i = 0; i < sol.dist2.rows(); ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    Index a = 0;
    for (Index j = 1; j < k; ++j) {
      if (sol.dist2(i, j) < sol.dist2(i, a)) a = j;
    }
    Index b = a == 0 ? 1 : 0;
    for (Index j = 0; j < k; ++j) {
      if (j != a && sol.dist2(i, j) < sol.dist2(i, b)) b = j;
    }
    const double da = std::sqrt(std::max(0.0, sol.dist2(i, a) / w));
    const double db = std::sqrt(std::max(0.0, sol.dist2(i, b) / w));
    sw[static_cast<std::size_t>(i)] = db > 0.0 ? 1.0 - da / db : 0.0;
  }
  return sw;
}

inline std::vector<double> silhouette_widths(const std::vector<SampleCov>& covs, const ClusterSolution& sol) {
  return silhouette_widths(weights_of(covs), sol);
}

/// C_i = max_j pi_{i,j}
inline std::vector<double> credibilities(const PartitionMatrix& p) {
  std::vector<double> c(static_cast<std::size_t>(p.rows()));
  for (Index i = 0; i < p.rows(); ++i) c[static_cast<std::size_t>(i)] = p.credibility(i);
  return c;
}

struct TaswDetail {
  double value = 0.0;
  std::vector<double> silhouettes;
  std::vector<double> credibilities;
  /// C_i >= mean C
  std::vector<char> good;
};

/**
 * TASW = sum_{GOOD} (n_i - 1) SW_i / sum_{GOOD} (n_i - 1) over the hard set
 * GOOD = {i : C_i >= mean C}. The item with the largest credibility always
 * qualifies, so GOOD is never empty.
 */
inline TaswDetail tasw_detail(std::span<const double> weights, const ClusterSolution& sol) {
  TaswDetail out;
  out.silhouettes = silhouette_widths(weights, sol);
  out.credibilities = credibilities(sol.partition);
  const double mean_c =
      std::accumulate(out.credibilities.begin(), out.credibilities.end(), 0.0) / static_cast<double>(out.credibilities.size());
  const double cmax = *std::max_element(out.credibilities.begin(), out.credibilities.end());
  double num = 0.0;
  double den = 0.0;
  out.good.resize(out.credibilities.size());
  for (std::size_t i = 0; i < out.credibilities.size(); ++i) {
    // The mean of equal values can round just above them.
    const bool good = out.credibilities[i] >= mean_c || out.credibilities[i] == cmax;
    out.good[i] = good;
    if (good) {
      num += weights[i] * out.silhouettes[i];
      den += weights[i];
    }
  }
  out.value = num / den;
  return out;
}

inline double tasw(const std::vector<SampleCov>& covs, const ClusterSolution& sol) {
  return tasw_detail(weights_of(covs), sol).value;
}

struct ScanOptions {
  int k_min = 2;
  int k_max = 10;
  double delta = 0.05;
  /// 0 fits every K on all items; otherwise the reduced mode with this
  /// subsample size.
  Index n_reduced = 0;
  int repeats = 1;
};

struct TaswEntry {
  int k = 0;
  double tasw = 0.0;
  TaswDetail detail;
  ClusterSolution solution;
};

struct TaswProfile {
  std::vector<TaswEntry> entries;
  int k_hat = 0;
  double tasw_max = 0.0;
  /// {K : (TASW_max - TASW_K) / TASW_max <= delta}
  std::vector<int> candidates;
};

/**
 * Fits every K in [k_min, k_max] with the same average entropy and an
 * independent medoid search (seed derived from (config.seed, K)), then picks
 * K-hat = argmax TASW (lowest K on ties) and the delta-candidate set.
 */
inline TaswProfile tasw_scan(const std::vector<SampleCov>& covs, const SoftClustConfig& config, const ScanOptions& scan) {
  if (scan.k_min < 2 || scan.k_max < scan.k_min) throw Error(ErrorCode::InvalidParam, "K range must satisfy 2 <= k_min <= k_max");
  if (static_cast<Index>(scan.k_max) > static_cast<Index>(covs.size())) throw Error(ErrorCode::TooFewItems, "k_max exceeds item count");
  if (!(scan.delta >= 0.0)) throw Error(ErrorCode::InvalidParam, "delta must be nonnegative");
  const std::vector<double> w = weights_of(covs);
  const int count = scan.k_max - scan.k_min + 1;

  TaswProfile prof;
  prof.entries.resize(static_cast<std::size_t>(count));
  const unsigned outer = std::min<unsigned>(config.threads, static_cast<unsigned>(count));
  parallel_for(count, outer, [&](std::int64_t idx) {
    SoftClustConfig c = config;
    c.k = scan.k_min + static_cast<int>(idx);
    c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(c.k));
    c.threads = outer > 1 ? 1 : config.threads;
    TaswEntry& e = prof.entries[static_cast<std::size_t>(idx)];
    e.k = c.k;
    e.solution = scan.n_reduced > 0 ? fit_reduced(covs, c, scan.n_reduced, scan.repeats) : fit(covs, c);
    e.detail = tasw_detail(w, e.solution);
    e.tasw = e.detail.value;
  });

  prof.tasw_max = -std::numeric_limits<double>::infinity();
  for (const auto& e : prof.entries) {
    if (e.tasw > prof.tasw_max) {
      prof.tasw_max = e.tasw;
      prof.k_hat = e.k;
    }
  }
  for (const auto& e : prof.entries) {
    const bool cand = prof.tasw_max != 0.0 ? (prof.tasw_max - e.tasw) / prof.tasw_max <= scan.delta : e.tasw == prof.tasw_max;
    if (cand || e.k == prof.k_hat) prof.candidates.push_back(e.k);
  }
  return prof;
}

struct PermTestResult {
  double observed_tasw_max = 0.0;
  int observed_k_hat = 0;
  std::vector<double> null_samples;
  /// (1 + #{null >= observed}) / (1 + #permutations)
  double p_value = 1.0;
};

struct PermTestOptions {
  int n_perm = 200;
  std::uint64_t seed = 1;
  /// Re-centre each permuted group by its own mean before estimating its
  /// covariance; otherwise the pooled centred curves are used as they are.
  bool recenter = true;
};

/**
 * Reference distribution of TASW_max under "no clusters": pool the
 * group-centred curves, shuffle, re-split into the original group sizes,
 * re-estimate covariances and rerun the K scan. Replicate b shuffles with a
 * generator seeded by derive_seed(opts.seed, b) and fits with config seed
 * derive_seed(config.seed, b + 1).
 */
inline PermTestResult permutation_test(const std::vector<FunctionalSample>& samples, const SoftClustConfig& config,
                                       const ScanOptions& scan, const PermTestOptions& opts) {
  if (samples.empty()) throw Error(ErrorCode::RequiresRawCurves, "no curves supplied");
  for (const auto& s : samples) {
    if (s.curves.rows() == 0) throw Error(ErrorCode::RequiresRawCurves, "group '" + s.group_id + "' has no curves");
  }
  if (opts.n_perm < 1) throw Error(ErrorCode::InvalidParam, "need at least one permutation");

  PermTestResult res;
  {
    const TaswProfile observed = tasw_scan(sample_covs(samples), config, scan);
    res.observed_tasw_max = observed.tasw_max;
    res.observed_k_hat = observed.k_hat;
  }

  const Index m = samples.front().curves.cols();
  Index total = 0;
  for (const auto& s : samples) total += s.curves.rows();
  MatrixXd pooled(total, m);
  {
    Index row = 0;
    for (const auto& s : samples) {
      const Eigen::RowVectorXd mean = s.curves.colwise().mean();
      for (Index r = 0; r < s.curves.rows(); ++r) pooled.row(row++) = s.curves.row(r) - mean;
    }
  }

  res.null_samples.assign(static_cast<std::size_t>(opts.n_perm), 0.0);
  const unsigned outer = std::max(1u, std::min<unsigned>(config.threads, static_cast<unsigned>(opts.n_perm)));
  parallel_for(opts.n_perm, outer, [&](std::int64_t b) {
    std::mt19937_64 rng(derive_seed(opts.seed, static_cast<std::uint64_t>(b)));
    std::vector<Index> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<SampleCov> covs;
    covs.reserve(samples.size());
    Index pos = 0;
    for (const auto& s : samples) {
      FunctionalSample g{s.group_id, MatrixXd(s.curves.rows(), m), s.grid};
      for (Index r = 0; r < g.curves.rows(); ++r) g.curves.row(r) = pooled.row(order[static_cast<std::size_t>(pos++)]);
      covs.push_back(sample_cov(g, opts.recenter));
    }
    SoftClustConfig c = config;
    c.seed = derive_seed(config.seed, static_cast<std::uint64_t>(b) + 1);
    c.threads = outer > 1 ? 1 : config.threads;
    res.null_samples[static_cast<std::size_t>(b)] = tasw_scan(covs, c, scan).tasw_max;
  });

  int exceed = 0;
  for (double v : res.null_samples) {
    if (v >= res.observed_tasw_max) ++exceed;
  }
  res.p_value = static_cast<double>(1 + exceed) / static_cast<double>(1 + opts.n_perm);
  return res;
}

/// Covariances without raw curves cannot be permuted.
inline PermTestResult permutation_test(const std::vector<SampleCov>&, const SoftClustConfig&, const ScanOptions&,
                                       const PermTestOptions&) {
  throw Error(ErrorCode::RequiresRawCurves, "the permutation test resamples curves, not covariances");
}

/**
 * Classical (Torgerson) scaling of a squared-distance matrix: double-centre,
 * keep the top eigenpairs with positive eigenvalues, scale by their roots.
 * Columns for non-positive eigenvalues are zero. Each column's sign is fixed
 * so that its largest-magnitude entry is positive.
 */
inline MatrixXd classical_mds(const MatrixXd& d2, Index dim_out) {
  const Index n = d2.rows();
  if (n < 2 || d2.cols() != n) throw Error(ErrorCode::InvalidParam, "need a square matrix of at least 2 items");
  if (dim_out < 1 || dim_out > n - 1) throw Error(ErrorCode::InvalidParam, "output dimension must lie in [1, count-1]");
  const MatrixXd j = MatrixXd::Identity(n, n) - MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  MatrixXd b = -0.5 * j * d2 * j;
  b = 0.5 * (b + b.transpose());
  const SymEig e = sym_eig(b);
  MatrixXd coords = MatrixXd::Zero(n, dim_out);
  const double scale = std::max(1.0, std::abs(e.values(0)));
  for (Index c = 0; c < dim_out; ++c) {
    const double l = e.values(c);
    if (!(l > 1e-12 * scale)) continue;
    VectorXd v = e.vectors.col(c);
    Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    coords.col(c) = v * std::sqrt(l);
  }
  return coords;
}

inline MatrixXd mds_coords(const std::vector<CovMatrix>& matrices, Index dim_out) {
  const Index n = static_cast<Index>(matrices.size());
  if (n < 2) throw Error(ErrorCode::InvalidParam, "need at least two matrices");
  MatrixXd d2 = MatrixXd::Zero(n, n);
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      d2(a, b) = d2(b, a) = wp_dist2(matrices[static_cast<std::size_t>(a)], matrices[static_cast<std::size_t>(b)]);
    }
  }
  return classical_mds(d2, dim_out);
}

/**
 * Misclassification rate of `assigned` (cluster indices) against `truth`
 * under the best one-to-one relabelling. Exhaustive over injections when the
 * smaller side has at most 8 labels.
 */
inline double classification_error(std::span<const int> truth, std::span<const int> assigned) {
  if (truth.size() != assigned.size() || truth.empty()) throw Error(ErrorCode::InvalidParam, "label vectors differ in length");
  const int nt = *std::max_element(truth.begin(), truth.end()) + 1;
  const int na = *std::max_element(assigned.begin(), assigned.end()) + 1;
  std::vector<std::vector<int>> table(static_cast<std::size_t>(na), std::vector<int>(static_cast<std::size_t>(nt), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++table[static_cast<std::size_t>(assigned[i])][static_cast<std::size_t>(truth[i])];

  int best = 0;
  const int width = std::max(na, nt);
  if (std::min(na, nt) <= 8 && width <= 10) {
    std::vector<int> perm(static_cast<std::size_t>(width));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      int hits = 0;
      for (int a = 0; a < na; ++a) {
        const int t = perm[static_cast<std::size_t>(a)];
        if (t < nt) hits += table[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)];
      }
      best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<char> used_a(static_cast<std::size_t>(na), 0), used_t(static_cast<std::size_t>(nt), 0);
    for (int step = 0; step < std::min(na, nt); ++step) {
      int ba = -1, bt = -1, bv = -1;
      for (int a = 0; a < na; ++a) {
        for (int t = 0; t < nt; ++t) {
          if (!used_a[static_cast<std::size_t>(a)] && !used_t[static_cast<std::size_t>(t)] &&
              table[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)] > bv) {
            bv = table[static_cast<std::size_t>(a)][static_cast<std::size_t>(t)];
            ba = a;
            bt = t;
          }
        }
      }
      used_a[static_cast<std::size_t>(ba)] = used_t[static_cast<std::size_t>(bt)] = 1;
      best += bv;
    }
  }
  return 1.0 - static_cast<double>(best) / static_cast<double>(truth.size());
}

/// Nearest-allocation labels (argmax grade).
inline std::vector<int> nearest_allocation(const PartitionMatrix& p) {
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = static_cast<int>(p.nearest(i));
  return out;
}

}  // namespace covclust
