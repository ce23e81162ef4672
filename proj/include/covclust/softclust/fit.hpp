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
 * @file fit.hpp
 * @brief Block coordinate descent for entropy-constrained soft clustering,
 * plus the subsample-then-assign mode for large N.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "covclust/parallel.hpp"
#include "covclust/softclust/medoids.hpp"
#include "covclust/softclust/partition.hpp"
#include "covclust/softclust/types.hpp"
#include "covclust/wasserstein.hpp"

namespace covclust {

/// Weighted squared distances d_{i,j} = w_i * D2(item i, barycenter j).
inline MatrixXd weighted_dist2(const FactorStack& stack, std::span<const double> weights,
                               const std::vector<CovMatrix>& barycenters, unsigned threads = 1) {
  const Index k = static_cast<Index>(barycenters.size());
  MatrixXd d(stack.size(), k);
  parallel_for(k, threads, [&](std::int64_t j) {
    d.col(j) = wp_dist2_all(stack, barycenters[static_cast<std::size_t>(j)]);
  });
  for (Index i = 0; i < stack.size(); ++i) d.row(i) *= weights[static_cast<std::size_t>(i)];
  return d;
}

namespace detail {

/// The transport-map iteration cannot raise the rank of its starting point,
/// so a warm start gets an isotropic floor of `floor * tr / M`.
inline CovMatrix warm_start(const CovMatrix& m, double floor) {
  const double level = floor * m.trace() / static_cast<double>(m.dim());
  return CovMatrix::trusted(m.matrix() + level * MatrixXd::Identity(m.dim(), m.dim()));
}

/**
 * BCD on stacked factors. Each iteration: grades from the current
 * barycenters, stop if the objective moved by at most bcd_tol (relative),
 * otherwise replace every barycenter by the Frechet mean with weights
 * (n_i - 1) pi_{i,j}, warm-started from its previous value lifted to full
 * rank.
 */
template <class Rng>
ClusterSolution fit_stack(const FactorStack& full, std::span<const double> weights, const SoftClustConfig& cfg,
                          Rng& rng) {
  const Index n = full.size();
  cfg.validate(n);
  const Index k = cfg.k;

  ClusterSolution sol;
  {
    const MatrixXd d2 = pairwise_wp_dist2(full, cfg.threads);
    MedoidResult seeds = init_medoids(d2, weights, cfg, cfg.entropy, rng);
    sol.medoids = std::move(seeds.indices);
  }

  MatrixXd basis;
  const FactorStack* work = &full;
  FactorStack projected;
  if (cfg.compress) {
    basis = span_basis(full);
    if (basis.cols() > 0 && basis.cols() < full.dim()) {
      projected = full.project(basis);
      work = &projected;
    } else {
      basis.resize(0, 0);
    }
  }

  std::vector<CovMatrix> bary;
  bary.reserve(static_cast<std::size_t>(k));
  for (Index m : sol.medoids) bary.push_back(work->matrix(m));

  double total_weight = 0.0;
  for (double w : weights) total_weight += w;

  PartitionResult pr;
  MatrixXd d;
  double previous = std::numeric_limits<double>::infinity();
  for (int iter = 1;; ++iter) {
    d = weighted_dist2(*work, weights, bary, cfg.threads);
    pr = solve_partition(d, cfg.entropy);
    const double obj = partition_objective(pr.partition, d);
    sol.objective_history.push_back(obj);
    sol.iterations = iter;
    if (std::isfinite(previous) && std::abs(previous - obj) <= cfg.bcd_tol * previous) {
      sol.converged = true;
      break;
    }
    if (iter >= cfg.max_bcd_iter) break;
    previous = obj;

    std::vector<char> reseeded(static_cast<std::size_t>(n), 0);
    std::vector<std::optional<CovMatrix>> next(static_cast<std::size_t>(k));
    std::vector<std::vector<double>> cluster_w(static_cast<std::size_t>(k));
    std::vector<Index> empty;
    for (Index j = 0; j < k; ++j) {
      auto& cw = cluster_w[static_cast<std::size_t>(j)];
      cw.resize(static_cast<std::size_t>(n));
      double mass = 0.0;
      for (Index i = 0; i < n; ++i) {
        cw[static_cast<std::size_t>(i)] = weights[static_cast<std::size_t>(i)] * pr.partition(i, j);
        mass += cw[static_cast<std::size_t>(i)];
      }
      if (mass < 1e-12 * total_weight) empty.push_back(j);
    }
    // A vanishing cluster restarts from the item farthest from its nearest
    // barycenter.
    for (Index j : empty) {
      Index far = -1;
      double far_d = -1.0;
      for (Index i = 0; i < n; ++i) {
        if (reseeded[static_cast<std::size_t>(i)]) continue;
        const double wi = weights[static_cast<std::size_t>(i)];
        const double nearest = d.row(i).minCoeff() / wi;
        if (nearest > far_d) {
          far_d = nearest;
          far = i;
        }
      }
      reseeded[static_cast<std::size_t>(far)] = 1;
      next[static_cast<std::size_t>(j)] = work->matrix(far);
      ++sol.reseeds;
    }
    parallel_for(k, cfg.threads, [&](std::int64_t j) {
      const auto uj = static_cast<std::size_t>(j);
      if (next[uj]) return;
      next[uj] = frechet_mean(*work, cluster_w[uj], warm_start(bary[uj], cfg.warm_start_floor), cfg.barycenter).mean;
    });
    for (Index j = 0; j < k; ++j) bary[static_cast<std::size_t>(j)] = std::move(*next[static_cast<std::size_t>(j)]);
  }

  if (basis.size() > 0) {
    for (auto& b : bary) b = CovMatrix::trusted(basis * b.matrix() * basis.transpose());
  }
  sol.barycenters = std::move(bary);
  sol.objective = sol.objective_history.back();
  sol.eta = pr.eta;
  sol.entropy = pr.psi / static_cast<double>(n);
  sol.partition = std::move(pr.partition);
  sol.dist2 = std::move(d);
  return sol;
}

}  // namespace detail

/// Soft clustering of the full collection; draws from a generator seeded
/// with config.seed (medoid search only).
inline ClusterSolution fit(const std::vector<SampleCov>& covs, const SoftClustConfig& config) {
  config.validate(static_cast<Index>(covs.size()));
  const FactorStack stack = stack_of(covs);
  const std::vector<double> w = weights_of(covs);
  std::mt19937_64 rng(config.seed);
  return detail::fit_stack(stack, w, config, rng);
}

/**
 * Large-N mode: per repeat, fit a uniform subsample of n_reduced items, then
 * compute grades for every item against those barycenters. The repeat with
 * the lowest full-data objective wins. Draw order per repeat: the subsample,
 * then the medoid search of the subsample fit.
 */
inline ClusterSolution fit_reduced(const std::vector<SampleCov>& covs, const SoftClustConfig& config, Index n_reduced,
                                   int repeats = 1) {
  const Index n = static_cast<Index>(covs.size());
  if (n_reduced < config.k) throw Error(ErrorCode::TooFewItems, "subsample smaller than the number of clusters");
  if (n_reduced > n) throw Error(ErrorCode::InvalidParam, "subsample larger than the data");
  if (repeats < 1) throw Error(ErrorCode::InvalidParam, "repeats must be positive");
  config.validate(n);

  const FactorStack stack = stack_of(covs);
  const std::vector<double> w = weights_of(covs);
  std::mt19937_64 rng(config.seed);

  std::vector<Index> all(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;

  ClusterSolution best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < repeats; ++r) {
    std::vector<Index> pick;
    pick.reserve(static_cast<std::size_t>(n_reduced));
    std::sample(all.begin(), all.end(), std::back_inserter(pick), n_reduced, rng);
    std::vector<double> sub_w;
    for (Index i : pick) sub_w.push_back(w[static_cast<std::size_t>(i)]);
    ClusterSolution sub = detail::fit_stack(stack.subset(pick), sub_w, config, rng);

    MatrixXd d = weighted_dist2(stack, w, sub.barycenters, config.threads);
    PartitionResult pr = solve_partition(d, config.entropy);
    const double obj = partition_objective(pr.partition, d);
    if (obj < best.objective) {
      best.barycenters = std::move(sub.barycenters);
      best.partition = std::move(pr.partition);
      best.eta = pr.eta;
      best.objective = obj;
      best.entropy = pr.psi / static_cast<double>(n);
      best.dist2 = std::move(d);
      best.iterations = sub.iterations;
      best.converged = sub.converged;
      best.objective_history = std::move(sub.objective_history);
      best.medoids.clear();
      for (Index m : sub.medoids) best.medoids.push_back(pick[static_cast<std::size_t>(m)]);
      best.reseeds = sub.reseeds;
    }
  }
  return best;
}

}  // namespace covclust
