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
 * @file medoids.hpp
 * @brief Stochastic medoid search used to seed the barycenters.
 *
 * The search minimises the clustering objective with the barycenters
 * restricted to observed covariances:
 *   G(i_1..i_K) = sum_{i,j} pi_{i,j} (n_i - 1) D2(i, i_j),
 * with pi the entropy-constrained grades for those prototypes. Each of
 * `nstart` seedings draws i_1 uniformly and i_j with probability proportional
 * to the squared distance to the closest prototype so far, then runs
 * `nrefine` sweeps that try `ntry` replacements per prototype.
 *
 * Random draws, in order: per seeding, one uniform index then K-1 weighted
 * draws; per sweep and prototype, up to ntry weighted draws without
 * replacement.
 */

#pragma once

#include <algorithm>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "covclust/parallel.hpp"
#include "covclust/softclust/partition.hpp"
#include "covclust/softclust/types.hpp"
#include "covclust/wasserstein.hpp"

namespace covclust {

/// Symmetric N x N matrix of squared distances between stacked items.
inline MatrixXd pairwise_wp_dist2(const FactorStack& stack, unsigned threads = 1) {
  const Index n = stack.size();
  MatrixXd d2 = MatrixXd::Zero(n, n);
  parallel_for(n, threads, [&](std::int64_t a) {
    const auto fa = stack.block(a);
    if (a + 1 >= n) return;
    const Index first = stack.offset(a + 1);
    const MatrixXd cross = fa.transpose() * stack.all().rightCols(stack.all().cols() - first);
    for (Index b = a + 1; b < n; ++b) {
      const auto block = cross.middleCols(stack.offset(b) - first, stack.rank(b));
      double nuclear = 0.0;
      if (block.size() > 0) {
        Eigen::JacobiSVD<MatrixXd> svd(block);
        nuclear = svd.singularValues().sum();
      }
      d2(a, b) = std::max(0.0, stack.trace(a) + stack.trace(b) - 2.0 * nuclear);
    }
  });
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) d2(b, a) = d2(a, b);
  }
  return d2;
}

inline MatrixXd pairwise_wp_dist2(const std::vector<SampleCov>& covs, unsigned threads = 1) {
  return pairwise_wp_dist2(stack_of(covs), threads);
}

struct MedoidResult {
  std::vector<Index> indices;
  double objective = std::numeric_limits<double>::infinity();
};

namespace detail {

/// G for a candidate prototype set; +inf when the grades are undefined
/// (e.g. duplicated prototypes make every row constant).
inline double medoid_objective(const MatrixXd& d2, std::span<const double> weights,
                               std::span<const Index> medoids, double entropy) {
  const Index n = d2.rows();
  const Index k = static_cast<Index>(medoids.size());
  MatrixXd d(n, k);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < k; ++j) d(i, j) = weights[static_cast<std::size_t>(i)] * d2(i, medoids[static_cast<std::size_t>(j)]);
  }
  try {
    const PartitionResult pr = solve_partition(d, entropy);
    return partition_objective(pr.partition, d);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::DegenerateDistances) return std::numeric_limits<double>::infinity();
    throw;
  }
}

/// Index drawn with probability proportional to `w`; uniform over `fallback`
/// when all weights vanish.
template <class Rng>
Index weighted_draw(const std::vector<double>& w, const std::vector<Index>& fallback, Rng& rng) {
  double total = 0.0;
  for (double x : w) total += x;
  if (total > 0.0) {
    std::discrete_distribution<Index> pick(w.begin(), w.end());
    return pick(rng);
  }
  std::uniform_int_distribution<std::size_t> pick(0, fallback.size() - 1);
  return fallback[pick(rng)];
}

}  // namespace detail

/**
 * Seeds K prototypes from the cached squared-distance matrix `d2` and item
 * weights (n_i - 1). Returns the best subset over all seedings.
 */
template <class Rng>
MedoidResult init_medoids(const MatrixXd& d2, std::span<const double> weights, const SoftClustConfig& config,
                          double entropy, Rng& rng) {
  const Index n = d2.rows();
  const Index k = config.k;
  if (n < k) throw Error(ErrorCode::TooFewItems, "fewer items than clusters");
  const int ntry = config.effective_ntry(n);

  MedoidResult best;
  for (int start = 0; start < config.nstart; ++start) {
    std::vector<Index> med;
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    std::uniform_int_distribution<Index> first(0, n - 1);
    med.push_back(first(rng));
    chosen[static_cast<std::size_t>(med.back())] = 1;

    std::vector<double> closest(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) closest[static_cast<std::size_t>(i)] = d2(i, med[0]);
    while (static_cast<Index>(med.size()) < k) {
      std::vector<double> w(static_cast<std::size_t>(n));
      std::vector<Index> unchosen;
      for (Index i = 0; i < n; ++i) {
        const auto ui = static_cast<std::size_t>(i);
        w[ui] = chosen[ui] ? 0.0 : closest[ui];
        if (!chosen[ui]) unchosen.push_back(i);
      }
      const Index next = detail::weighted_draw(w, unchosen, rng);
      med.push_back(next);
      chosen[static_cast<std::size_t>(next)] = 1;
      for (Index i = 0; i < n; ++i) {
        closest[static_cast<std::size_t>(i)] = std::min(closest[static_cast<std::size_t>(i)], d2(i, next));
      }
    }

    double g = detail::medoid_objective(d2, weights, med, entropy);
    for (int sweep = 0; sweep < config.nrefine; ++sweep) {
      for (Index j = 0; j < k; ++j) {
        std::vector<double> w(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
          double m = std::numeric_limits<double>::infinity();
          for (Index s = 0; s < k; ++s) {
            if (s != j) m = std::min(m, d2(i, med[static_cast<std::size_t>(s)]));
          }
          w[static_cast<std::size_t>(i)] = std::isfinite(m) ? m : 1.0;
        }
        Index best_j = med[static_cast<std::size_t>(j)];
        for (int t = 0; t < ntry; ++t) {
          double total = 0.0;
          for (double x : w) total += x;
          if (!(total > 0.0)) break;
          std::discrete_distribution<Index> pick(w.begin(), w.end());
          const Index cand = pick(rng);
          w[static_cast<std::size_t>(cand)] = 0.0;
          if (cand == best_j) continue;
          std::vector<Index> trial = med;
          trial[static_cast<std::size_t>(j)] = cand;
          const double gc = detail::medoid_objective(d2, weights, trial, entropy);
          if (gc < g) {
            g = gc;
            best_j = cand;
          }
        }
        med[static_cast<std::size_t>(j)] = best_j;
      }
    }

    if (g < best.objective || best.indices.empty()) {
      best.objective = g;
      best.indices = med;
    }
  }
  if (!std::isfinite(best.objective)) {
    throw Error(ErrorCode::DegenerateDistances, "no prototype set gives well-defined grades");
  }
  return best;
}

/// Convenience overload: computes the pairwise cache and draws from a
/// generator seeded with config.seed.
inline MedoidResult init_medoids(const std::vector<SampleCov>& covs, const SoftClustConfig& config, double entropy) {
  config.validate(static_cast<Index>(covs.size()));
  const MatrixXd d2 = pairwise_wp_dist2(covs, config.threads);
  const std::vector<double> w = weights_of(covs);
  std::mt19937_64 rng(config.seed);
  return init_medoids(d2, w, config, entropy, rng);
}

}  // namespace covclust
