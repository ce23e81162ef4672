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
#include <numbers>
#include <sstream>
#include <vector>

#include "covclust/dataio.hpp"
#include "test_util.hpp"

namespace covclust {
namespace {

using testing::rel_frob;

FunctionalSample group(std::string id, MatrixXd curves) {
  FunctionalSample s;
  s.group_id = std::move(id);
  s.grid = VectorXd::LinSpaced(curves.cols(), 0.0, 1.0);
  s.curves = std::move(curves);
  return s;
}

TEST(SampleCov, TwoPointExample) {
  MatrixXd c(2, 2);
  c << 1, 0, -1, 0;
  const SampleCov s = sample_cov(group("a", c));
  EXPECT_EQ(s.n, 2);
  EXPECT_LE((s.matrix.matrix() - MatrixXd{{2, 0}, {0, 0}}).norm(), 1e-15);
  EXPECT_EQ(s.weight(), 1.0);
}

TEST(SampleCov, IdenticalCurvesGiveZeroAndShiftsCancel) {
  MatrixXd same(3, 4);
  same.rowwise() = Eigen::RowVector4d(1, 2, 3, 4);
  EXPECT_EQ(sample_cov(group("z", same)).matrix.matrix().norm(), 0.0);

  std::mt19937_64 rng(51);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd x(7, 5);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  MatrixXd shifted = x;
  shifted.rowwise() += Eigen::RowVectorXd::LinSpaced(5, -3.0, 10.0);
  const MatrixXd a = sample_cov(group("x", x)).matrix.matrix();
  EXPECT_LE(rel_frob(sample_cov(group("x", shifted)).matrix.matrix(), a), 1e-13);
  MatrixXd centred = x.rowwise() - x.colwise().mean();
  const MatrixXd expected = centred.transpose() * centred / 6.0;
  EXPECT_LE(rel_frob(a, expected), 1e-13);
}

TEST(SampleCov, WithoutRecentringUsesRawCrossProducts) {
  MatrixXd c(2, 2);
  c << 1, 1, 3, 1;
  const MatrixXd raw = sample_cov(group("r", c), false).matrix.matrix();
  EXPECT_LE((raw - MatrixXd{{10, 4}, {4, 2}}).norm(), 1e-14);
}

TEST(SampleCov, FactorAgreesWithMatrix) {
  std::mt19937_64 rng(52);
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd x(4, 9);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  const SampleCov s = sample_cov(group("f", x));
  EXPECT_LE(rel_frob(s.factor.f * s.factor.f.transpose(), s.matrix.matrix()), 1e-13);
}

TEST(SampleCov, Errors) {
  try {
    sample_cov(group("one", MatrixXd::Ones(1, 3)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewCurves);
  }
  MatrixXd bad = MatrixXd::Ones(2, 3);
  bad(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(sample_cov(group("nan", bad)), Error);
}

TEST(FourierBasis, PointValues) {
  const VectorXd u = testing::vec(0.0, 0.25, 0.5);
  EXPECT_EQ(fourier_basis(0, u), VectorXd::Ones(3));
  EXPECT_NEAR(fourier_basis(1, u)(1), std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(fourier_basis(2, u)(0), std::numbers::sqrt2, 1e-15);
  EXPECT_NEAR(fourier_basis(3, u)(1), std::numbers::sqrt2 * std::sin(std::numbers::pi), 1e-15);
  EXPECT_THROW(fourier_basis(-1, u), Error);
}

TEST(FourierBasis, NearlyOrthonormalUnderTrapezoidRule) {
  const VectorXd grid = even_grid(101);
  const VectorXd w = trapezoid_weights(grid);
  for (int r = 0; r < 12; ++r) {
    for (int s = 0; s < 12; ++s) {
      const double ip = (fourier_basis(r, grid).array() * fourier_basis(s, grid).array() * w.array()).sum();
      EXPECT_NEAR(ip, r == s ? 1.0 : 0.0, 0.02) << r << "," << s;
    }
  }
}

TEST(Simulate, SizesLabelsAndIds) {
  SyntheticSpec spec;
  spec.n_per_cluster = 3;
  spec.grid_size = 21;
  const SyntheticData d = simulate(spec);
  ASSERT_EQ(d.samples.size(), 12u);
  EXPECT_EQ(d.labels, (std::vector<int>{0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3}));
  EXPECT_EQ(d.samples.front().group_id, "g0001");
  EXPECT_EQ(d.samples.back().group_id, "g0012");
  for (const auto& s : d.samples) {
    EXPECT_GE(s.size(), 5);
    EXPECT_LE(s.size(), 10);
    EXPECT_EQ(s.curves.cols(), 21);
  }
}

TEST(Simulate, FixedSeedIsBitIdentical) {
  SyntheticSpec spec;
  spec.n_per_cluster = 2;
  spec.seed = 77;
  const SyntheticData a = simulate(spec);
  const SyntheticData b = simulate(spec);
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_TRUE(a.samples[i].curves == b.samples[i].curves);
  spec.seed = 78;
  EXPECT_FALSE(simulate(spec).samples[0].curves.rows() == a.samples[0].curves.rows() &&
               simulate(spec).samples[0].curves == a.samples[0].curves);
}

TEST(Simulate, NullModelSharesOneCovariance) {
  SyntheticSpec spec;
  spec.perturbation_scale = 0.0;
  spec.n_per_cluster = 1;
  spec.n_min = spec.n_max = 20000;
  spec.grid_size = 5;
  spec.seed = 5;
  const SyntheticData d = simulate(spec);
  const MatrixXd first = sample_cov(d.samples[0]).matrix.matrix();
  for (std::size_t c = 1; c < d.samples.size(); ++c) {
    EXPECT_LE(rel_frob(sample_cov(d.samples[c]).matrix.matrix(), first), 0.05);
  }
}

TEST(Simulate, LargeSampleCovarianceMatchesModel) {
  // Oracle: the model covariance evaluated directly from the sine/cosine
  // formulas, compared entrywise within three Gaussian standard errors.
  SyntheticSpec spec;
  spec.perturbation_indices = {1};
  spec.n_per_cluster = 1;
  spec.n_min = spec.n_max = 100000;
  spec.grid_size = 6;
  spec.seed = 2026;
  const SyntheticData d = simulate(spec);
  const MatrixXd est = sample_cov(d.samples[0]).matrix.matrix();

  const Index m = 6;
  const double pi = std::numbers::pi;
  auto f = [&](int r, double u) {
    if (r == 0) return 1.0;
    return r % 2 ? std::sqrt(2.0) * std::sin((r + 1) * pi * u) : std::sqrt(2.0) * std::cos(r * pi * u);
  };
  MatrixXd model = MatrixXd::Zero(m, m);
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b) {
      const double ua = static_cast<double>(a) / 5.0;
      const double ub = static_cast<double>(b) / 5.0;
      for (int r = 0; r < 33; ++r) model(a, b) += std::pow(0.8, r) * f(r, ua) * f(r, ub);
      model(a, b) += f(1, ua) * f(1, ub);
    }
  }
  const double n = 100000.0;
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b) {
      const double se = std::sqrt((model(a, a) * model(b, b) + model(a, b) * model(a, b)) / n);
      EXPECT_LE(std::abs(est(a, b) - model(a, b)), 3.0 * se) << a << "," << b;
    }
  }
}

TEST(Simulate, QuadratureTraceMatchesModel) {
  // The model's operator trace is sum_r lambda^{2r} + 1 = 1 / (1 - 0.8) + 1 = 6.
  SyntheticSpec spec;
  spec.perturbation_indices = {2};
  spec.n_per_cluster = 1;
  spec.n_min = spec.n_max = 20000;
  spec.seed = 9;
  SyntheticData d = simulate(spec);
  apply_quadrature(d.samples);
  EXPECT_NEAR(sample_cov(d.samples[0]).matrix.trace(), 6.0, 0.2);
}

TEST(Simulate, RejectsBadSpecs) {
  SyntheticSpec spec;
  spec.lambda = 1.0;
  EXPECT_THROW(simulate(spec), Error);
  spec = {};
  spec.n_min = 1;
  EXPECT_THROW(simulate(spec), Error);
  spec = {};
  spec.perturbation_indices.clear();
  EXPECT_THROW(simulate(spec), Error);
}

TEST(Grid, TrapezoidAndSpacing) {
  const VectorXd g = testing::vec(0.0, 0.5, 2.0);
  EXPECT_LE((trapezoid_weights(g) - testing::vec(0.25, 1.0, 0.75)).norm(), 1e-15);
  EXPECT_FALSE(is_evenly_spaced(g));
  EXPECT_TRUE(is_evenly_spaced(even_grid(11)));
  EXPECT_THROW(even_grid(1), Error);
}

TEST(CurvesCsv, RoundTripKeepsGroupsAndValues) {
  SyntheticSpec spec;
  spec.n_per_cluster = 2;
  spec.grid_size = 7;
  const SyntheticData d = simulate(spec);
  std::stringstream buf;
  write_curves_csv(buf, d.grid, d.samples);
  const CurveData back = read_curves_csv(buf);
  ASSERT_EQ(back.samples.size(), d.samples.size());
  EXPECT_TRUE(back.grid == d.grid);
  for (std::size_t i = 0; i < d.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].group_id, d.samples[i].group_id);
    EXPECT_TRUE(back.samples[i].curves == d.samples[i].curves);
  }
}

TEST(CurvesCsv, InterleavedRowsAndComments) {
  std::istringstream in("# note\ngroup_id,0,1\nb,1,2\na,3,4\nb,5,6\n\n");
  const CurveData d = read_curves_csv(in);
  ASSERT_EQ(d.samples.size(), 2u);
  EXPECT_EQ(d.samples[0].group_id, "b");
  EXPECT_EQ(d.samples[0].curves.rows(), 2);
  EXPECT_EQ(d.samples[1].curves(0, 1), 4.0);
}

TEST(CurvesCsv, MalformedInputs) {
  const std::vector<std::string> bad{"",
                                     "group_id\n",
                                     "group_id,0,1\n",
                                     "group_id,0,0\na,1,2\n",
                                     "group_id,0,1\na,1\n",
                                     "group_id,0,1\na,1,x\n",
                                     "group_id,0,1\n,1,2\n",
                                     "group_id,0,1\na,1,inf\n"};
  for (const auto& text : bad) {
    std::istringstream in(text);
    try {
      read_curves_csv(in);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InputFormat) << text;
    }
  }
}

TEST(MatrixFiles, CsvAndBinaryRoundTrip) {
  std::mt19937_64 rng(53);
  const MatrixXd m = testing::random_pd(rng, 5);
  std::stringstream csv;
  write_matrix_csv(csv, m);
  EXPECT_TRUE(read_cov_matrix(csv).matrix() == m);
  std::stringstream bin;
  write_matrix_binary(bin, m);
  EXPECT_EQ(bin.str().substr(0, 4), "WPCV");
  EXPECT_EQ(bin.str().size(), 4u + 4u + 25u * 8u);
  EXPECT_TRUE(read_cov_matrix(bin).matrix() == m);
}

TEST(MatrixFiles, Errors) {
  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(read_matrix_csv(ragged), Error);
  std::istringstream empty("");
  EXPECT_THROW(read_matrix_csv(empty), Error);
  std::istringstream truncated(std::string("WPCV\x02\0\0\0", 8) + std::string(8, '\0'));
  EXPECT_THROW(read_cov_matrix(truncated), Error);
  std::istringstream not_psd("1,0\n0,-1\n");
  try {
    read_cov_matrix(not_psd);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InputFormat);
  }
  std::stringstream out;
  EXPECT_THROW(write_matrix_binary(out, MatrixXd::Ones(2, 3)), Error);
}

TEST(Labels, RoundTrip) {
  std::vector<FunctionalSample> s(2);
  s[0].group_id = "x";
  s[1].group_id = "y";
  std::stringstream buf;
  write_labels_csv(buf, s, {3, 1});
  const auto back = read_labels_csv(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1], (std::pair<std::string, int>{"y", 1}));
  std::istringstream bad("group_id,label\nx,one\n");
  EXPECT_THROW(read_labels_csv(bad), Error);
}

TEST(CsvTable, RoundTripAndFieldCount) {
  CsvTable t{{"K", "tasw"}, {{"2", "0.5"}, {"3", "0.25"}}};
  std::stringstream buf;
  buf << "# comment\n";
  write_csv_table(buf, t);
  const CsvTable back = read_csv_table(buf);
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  std::istringstream bad("a,b\n1\n");
  EXPECT_THROW(read_csv_table(bad), Error);
  std::istringstream none("# only a comment\n");
  EXPECT_THROW(read_csv_table(none), Error);
}

TEST(FormatDouble, ShortestRoundTrip) {
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(-2.0), "-2");
  const double x = 1.0 / 3.0;
  EXPECT_EQ(std::stod(format_double(x)), x);
}

}  // namespace
}  // namespace covclust
