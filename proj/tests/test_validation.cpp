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

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "covclust/dataio.hpp"
#include "covclust/validation.hpp"
#include "test_util.hpp"

namespace covclust {
namespace {

using testing::scalar_items;

ClusterSolution with_distances(MatrixXd dist2, MatrixXd grades) {
  ClusterSolution sol;
  sol.dist2 = std::move(dist2);
  sol.partition = PartitionMatrix(std::move(grades));
  return sol;
}

TEST(Silhouette, CoincidentAndEquidistantItems) {
  MatrixXd d(2, 3);
  d << 0.0, 4.0, 9.0,
       2.0, 2.0, 8.0;
  MatrixXd g(2, 3);
  g << 1, 0, 0,
       0.5, 0.5, 0;
  const std::vector<double> w{1.0, 1.0};
  const std::vector<double> sw = silhouette_widths(w, with_distances(d, g));
  EXPECT_DOUBLE_EQ(sw[0], 1.0);
  EXPECT_DOUBLE_EQ(sw[1], 0.0);
}

TEST(Silhouette, ScalarClusteringMatchesClosedForm) {
  const std::vector<SampleCov> covs = scalar_items({1.0, 4.0, 100.0});
  SoftClustConfig cfg;
  cfg.k = 2;
  cfg.entropy = 0.0;
  const ClusterSolution sol = fit(covs, cfg);
  const Index big = sol.partition.nearest(2);
  const Index small = 1 - big;
  EXPECT_NEAR(sol.barycenters[static_cast<std::size_t>(small)](0, 0), 2.25, 1e-9);
  EXPECT_NEAR(sol.barycenters[static_cast<std::size_t>(big)](0, 0), 100.0, 1e-9);
  const std::vector<double> sw = silhouette_widths(covs, sol);
  EXPECT_NEAR(sw[2], 1.0, 1e-9);
  EXPECT_NEAR(sw[0], 1.0 - 0.5 / 9.0, 1e-9);
  EXPECT_NEAR(sw[1], 1.0 - 0.5 / 8.0, 1e-9);
}

TEST(Silhouette, NeedsTwoClusters) {
  const ClusterSolution sol = with_distances(MatrixXd::Ones(2, 1), MatrixXd::Ones(2, 1));
  const std::vector<double> w{1.0, 1.0};
  try {
    silhouette_widths(w, sol);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NeedsTwoClusters);
  }
}

TEST(Tasw, ConstantSilhouettesGiveThatValue) {
  // Every item sits at distance 1 from one barycenter and 4 from the other,
  // so SW = 1 - 1/2 for all items regardless of the grades.
  MatrixXd d(4, 2);
  d << 1, 4, 4, 1, 1, 4, 4, 1;
  MatrixXd g(4, 2);
  g << 0.9, 0.1, 0.2, 0.8, 0.6, 0.4, 0.3, 0.7;
  const std::vector<double> w{1, 1, 1, 1};
  EXPECT_NEAR(tasw_detail(w, with_distances(d, g)).value, 0.5, 1e-15);
}

TEST(Tasw, UniformPartitionAveragesAllItems) {
  MatrixXd d(3, 2);
  d << 0, 4, 1, 4, 9, 1;
  const MatrixXd g = MatrixXd::Constant(3, 2, 0.5);
  const std::vector<double> w{1, 2, 3};
  const TaswDetail t = tasw_detail(w, with_distances(d, g));
  const double expected = (1.0 * 1.0 + 2.0 * 0.5 + 3.0 * (1.0 - 1.0 / 3.0)) / 6.0;
  EXPECT_NEAR(t.value, expected, 1e-15);
  for (char good : t.good) EXPECT_TRUE(good);
}

TEST(Tasw, OnlyCredibleItemsCount) {
  MatrixXd d(3, 2);
  d << 0, 4, 1, 4, 9, 1;
  MatrixXd g(3, 2);
  g << 0.9, 0.1, 0.6, 0.4, 0.2, 0.8;
  const std::vector<double> w{1, 1, 1};
  const TaswDetail t = tasw_detail(w, with_distances(d, g));
  EXPECT_EQ(t.good, (std::vector<char>{1, 0, 1}));
  EXPECT_NEAR(t.value, 0.5 * (1.0 + 2.0 / 3.0), 1e-15);
}

TEST(Tasw, InvariantToWeightScale) {
  const std::vector<SampleCov> covs = scalar_items({1.0, 1.3, 4.0, 5.0, 30.0, 35.0}, 7);
  SoftClustConfig cfg;
  cfg.k = 3;
  cfg.entropy = 0.2;
  const ClusterSolution sol = fit(covs, cfg);
  std::vector<double> w = weights_of(covs);
  const double base = tasw_detail(w, sol).value;
  ClusterSolution scaled = sol;
  scaled.dist2 *= 10.0;
  for (double& x : w) x *= 10.0;
  EXPECT_NEAR(tasw_detail(w, scaled).value, base, 1e-12);
}

TEST(TaswScan, SingleEntryProfile) {
  const std::vector<SampleCov> covs = scalar_items({1.0, 1.2, 9.0, 10.0, 50.0});
  SoftClustConfig cfg;
  cfg.entropy = 0.1;
  ScanOptions scan;
  scan.k_max = 2;
  const TaswProfile p = tasw_scan(covs, cfg, scan);
  ASSERT_EQ(p.entries.size(), 1u);
  EXPECT_EQ(p.k_hat, 2);
  EXPECT_EQ(p.candidates, std::vector<int>{2});
}

TEST(TaswScan, FindsThreeScalarGroups) {
  const std::vector<SampleCov> covs =
      scalar_items({1.0, 1.1, 0.9, 1.05, 25.0, 24.0, 26.0, 25.5, 400.0, 390.0, 410.0, 405.0});
  SoftClustConfig cfg;
  cfg.entropy = suggested_entropy(0.25, 0.05);
  ScanOptions scan;
  scan.k_max = 5;
  const TaswProfile p = tasw_scan(covs, cfg, scan);
  EXPECT_EQ(p.entries.size(), 4u);
  EXPECT_EQ(p.k_hat, 3);
  cfg.threads = 3;
  const TaswProfile again = tasw_scan(covs, cfg, scan);
  for (std::size_t i = 0; i < p.entries.size(); ++i) EXPECT_EQ(p.entries[i].tasw, again.entries[i].tasw);
}

TEST(TaswScan, RejectsBadRange) {
  const std::vector<SampleCov> covs = scalar_items({1.0, 2.0, 3.0});
  SoftClustConfig cfg;
  ScanOptions scan;
  scan.k_min = 1;
  EXPECT_THROW(tasw_scan(covs, cfg, scan), Error);
  scan.k_min = 3;
  scan.k_max = 2;
  EXPECT_THROW(tasw_scan(covs, cfg, scan), Error);
}

std::vector<FunctionalSample> tiny_groups(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.n_per_cluster = 3;
  spec.grid_size = 11;
  spec.n_basis = 5;
  spec.seed = seed;
  return simulate(spec).samples;
}

TEST(PermutationTest, SinglePermutationGivesHalfOrOne) {
  SoftClustConfig cfg;
  cfg.entropy = 0.1;
  ScanOptions scan;
  scan.k_max = 3;
  PermTestOptions opts;
  opts.n_perm = 1;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    opts.seed = seed;
    const PermTestResult r = permutation_test(tiny_groups(seed), cfg, scan, opts);
    EXPECT_TRUE(r.p_value == 0.5 || r.p_value == 1.0) << r.p_value;
    EXPECT_EQ(r.null_samples.size(), 1u);
  }
}

TEST(PermutationTest, DeterministicAndNeedsCurves) {
  SoftClustConfig cfg;
  cfg.entropy = 0.1;
  ScanOptions scan;
  scan.k_max = 3;
  PermTestOptions opts;
  opts.n_perm = 5;
  const std::vector<FunctionalSample> data = tiny_groups(4);
  const PermTestResult a = permutation_test(data, cfg, scan, opts);
  const PermTestResult b = permutation_test(data, cfg, scan, opts);
  EXPECT_EQ(a.null_samples, b.null_samples);
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_GE(a.p_value, 1.0 / 6.0);
  EXPECT_LE(a.p_value, 1.0);
  try {
    permutation_test(sample_covs(data), cfg, scan, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RequiresRawCurves);
  }
}

TEST(Mds, TwoMatricesSitAtHalfTheDistance) {
  const CovMatrix a(MatrixXd{{2.0, 0.3}, {0.3, 1.0}});
  const CovMatrix b = CovMatrix::diagonal(testing::vec(0.5, 3.0));
  const MatrixXd x = mds_coords({a, b}, 1);
  const double half = 0.5 * std::sqrt(wp_dist2(a, b));
  EXPECT_NEAR(std::abs(x(0, 0)), half, 1e-10);
  EXPECT_NEAR(x(0, 0) + x(1, 0), 0.0, 1e-10);
}

TEST(Mds, ScalarsEmbedOnTheirStandardDeviations) {
  const auto s = [](double v) { return CovMatrix::diagonal(VectorXd::Constant(1, v)); };
  const MatrixXd x = mds_coords({s(1.0), s(4.0), s(9.0)}, 1);
  EXPECT_NEAR(std::abs(x(1, 0) - x(0, 0)), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(x(2, 0) - x(1, 0)), 1.0, 1e-10);
  EXPECT_NEAR(std::abs(x(2, 0) - x(0, 0)), 2.0, 1e-10);
}

TEST(Mds, DuplicatesCoincide) {
  const CovMatrix a(MatrixXd{{2.0, 0.3}, {0.3, 1.0}});
  const CovMatrix b = CovMatrix::identity(2);
  const MatrixXd x = mds_coords({a, b, a}, 2);
  EXPECT_LE((x.row(0) - x.row(2)).norm(), 1e-10);
  EXPECT_EQ(x(0, 1), 0.0);
  EXPECT_THROW(mds_coords({a}, 1), Error);
  EXPECT_THROW(mds_coords({a, b}, 2), Error);
}

TEST(ClassificationError, BestRelabelling) {
  const std::vector<int> truth{0, 0, 1, 1, 2, 2};
  EXPECT_EQ(classification_error(truth, std::vector<int>{2, 2, 0, 0, 1, 1}), 0.0);
  EXPECT_NEAR(classification_error(truth, std::vector<int>{1, 1, 0, 0, 0, 1}), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(classification_error(truth, std::vector<int>{0, 0, 0, 0, 0, 0}), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(classification_error(truth, std::vector<int>{0, 1, 2, 3, 4, 5}), 0.5, 1e-15);
  EXPECT_THROW(classification_error(truth, std::vector<int>{0}), Error);
}

}  // namespace
}  // namespace covclust
