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

// covclust: command-line front end for clustering covariance operators.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "covclust/covclust.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace covclust::cli {

constexpr int kExitInput = 2;
constexpr int kExitSolver = 3;

/// Collects output files as temporaries and renames them into place only
/// when every one has been written.
class OutputSet {
 public:
  OutputSet() = default;
  OutputSet(const OutputSet&) = delete;
  OutputSet& operator=(const OutputSet&) = delete;
  ~OutputSet() {
    if (committed_) return;
    for (const auto& [final_path, tmp] : files_) {
      std::error_code ec;
      fs::remove(tmp, ec);
    }
  }

  template <class Writer>
  void add(const fs::path& target, Writer&& write) {
    for (const auto& f : files_) {
      if (fs::weakly_canonical(f.first) == fs::weakly_canonical(target)) {
        throw Error(ErrorCode::InvalidParam, "output path used twice: " + target.string());
      }
    }
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".partial";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error(ErrorCode::InputFormat, "cannot write " + tmp.string());
      files_.emplace_back(target, tmp);
      write(out);
      out.flush();
      if (!out) throw Error(ErrorCode::InputFormat, "write failed for " + target.string());
    }
  }

  void commit() {
    for (const auto& [final_path, tmp] : files_) fs::rename(tmp, final_path);
    committed_ = true;
  }

 private:
  std::vector<std::pair<fs::path, fs::path>> files_;
  bool committed_ = false;
};

std::ifstream open_input(const fs::path& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) throw Error(ErrorCode::InputFormat, "cannot open " + path.string());
  return in;
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("COVCLUST_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::InvalidParam, "COVCLUST_THREADS must be a positive integer");
  }
  return hardware_threads();
}

std::string json_number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return format_double(x);
}

ordered_json number_or_string(double x) {
  if (std::isfinite(x)) return x;
  return json_number(x);
}

// ---------------------------------------------------------------------------
// Shared option groups

struct InputOptions {
  std::string curves;
  std::string cov_index;
  bool quadrature = false;
  bool no_recenter = false;

  void attach(CLI::App* app, bool positional_required = false) {
    auto* c = app->add_option("input", curves, "Curve CSV (group_id, then one column per grid point)");
    if (positional_required) c->required();
    app->add_option("--cov-index", cov_index, "Covariance index CSV written by 'cov' (group_id,n,file)");
    app->add_flag("--quadrature", quadrature, "Weight uneven grids by the trapezoid rule");
    app->add_flag("--no-recenter", no_recenter, "Treat curves as already centred");
  }

  std::vector<FunctionalSample> curves_only() const {
    if (curves.empty()) throw Error(ErrorCode::RequiresRawCurves, "this command needs a curve CSV");
    auto in = open_input(curves);
    CurveData data = read_curves_csv(in);
    if (!is_evenly_spaced(data.grid)) {
      if (!quadrature) throw Error(ErrorCode::InputFormat, "grid is not evenly spaced; pass --quadrature to weight it");
      apply_quadrature(data.samples);
    }
    return std::move(data.samples);
  }

  std::vector<SampleCov> items() const {
    if (!cov_index.empty() && !curves.empty()) throw Error(ErrorCode::InvalidParam, "give either curves or --cov-index");
    if (cov_index.empty()) return sample_covs(curves_only(), !no_recenter);
    auto in = open_input(cov_index);
    const CsvTable t = read_csv_table(in);
    if (t.header != std::vector<std::string>{"group_id", "n", "file"}) {
      throw Error(ErrorCode::InputFormat, "covariance index needs columns group_id,n,file");
    }
    std::vector<SampleCov> out;
    const fs::path base = fs::path(cov_index).parent_path();
    for (const auto& row : t.rows) {
      int n = 0;
      try {
        std::size_t used = 0;
        n = std::stoi(row[1], &used);
        if (used != row[1].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(ErrorCode::InputFormat, "bad sample size '" + row[1] + "'");
      }
      auto min = open_input(base / row[2], true);
      CovMatrix m = read_cov_matrix(min);
      if (n < 2) throw Error(ErrorCode::InputFormat, "sample size below 2 for '" + row[0] + "'");
      out.push_back(make_sample_cov(row[0], std::move(m), n));
    }
    if (out.empty()) throw Error(ErrorCode::InputFormat, "empty covariance index");
    for (const auto& c : out) {
      if (c.matrix.dim() != out.front().matrix.dim()) throw Error(ErrorCode::InputFormat, "covariances differ in dimension");
    }
    return out;
  }
};

struct SolverOptions {
  int nstart = 5;
  int nrefine = 5;
  int ntry = 0;
  int max_iter = 100;
  double tol = 1e-6;
  std::optional<double> entropy;
  double alpha = 0.25;
  double beta = 0.05;
  std::uint64_t seed = 1;
  unsigned threads = 0;

  void attach(CLI::App* app) {
    app->add_option("-E,--entropy", entropy, "Average entropy target (overrides alpha/beta)")->check(CLI::NonNegativeNumber);
    app->add_option("--entropy-alpha", alpha, "Share of items fully confused between two clusters")->capture_default_str();
    app->add_option("--entropy-beta", beta, "Residual confusion of the other items")->capture_default_str();
    app->add_option("--nstart", nstart, "Medoid seedings")->capture_default_str();
    app->add_option("--nrefine", nrefine, "Refinement sweeps per seeding")->capture_default_str();
    app->add_option("--ntry", ntry, "Candidates per refinement step (0: ceil(N/K))")->capture_default_str();
    app->add_option("--max-iter", max_iter, "Block coordinate descent iterations")->capture_default_str();
    app->add_option("--tol", tol, "Relative objective tolerance")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("--threads", threads, "Worker threads (default: COVCLUST_THREADS or all cores)");
  }

  double target_entropy() const { return entropy ? *entropy : suggested_entropy(alpha, beta); }

  SoftClustConfig config(int k) const {
    SoftClustConfig c;
    c.k = k;
    c.entropy = target_entropy();
    c.nstart = nstart;
    c.nrefine = nrefine;
    c.ntry = ntry;
    c.max_bcd_iter = max_iter;
    c.bcd_tol = tol;
    c.seed = seed;
    c.threads = resolve_threads(threads);
    return c;
  }
};

std::string seed_comment(const std::string& command, std::uint64_t seed) {
  return "# covclust " + command + " seed=" + std::to_string(seed) + "\n";
}

// ---------------------------------------------------------------------------
// Subcommands

struct SimulateCmd {
  int n_per_cluster = 25;
  std::vector<int> perturbations{1, 2, 3, 4};
  double lambda = 2.0 / std::sqrt(5.0);
  int n_basis = 33;
  int grid_size = 101;
  int n_min = 5;
  int n_max = 10;
  double scale = 1.0;
  std::uint64_t seed = 1;
  std::string output;
  std::string labels;

  void attach(CLI::App* app) {
    app->add_option("--n-per-cluster", n_per_cluster, "Groups per cluster")->capture_default_str();
    app->add_option("--perturbations", perturbations, "Fourier index perturbed in each cluster")->delimiter(',');
    app->add_option("--lambda", lambda, "Decay of the common covariance")->capture_default_str();
    app->add_option("--n-basis", n_basis, "Fourier terms in the common covariance")->capture_default_str();
    app->add_option("--grid-size", grid_size, "Evenly spaced grid points on [0,1]")->capture_default_str();
    app->add_option("--n-min", n_min, "Smallest group size")->capture_default_str();
    app->add_option("--n-max", n_max, "Largest group size")->capture_default_str();
    app->add_option("--perturbation-scale", scale, "Coefficient of the rank-one cluster perturbation")->capture_default_str();
    app->add_option("--seed", seed, "Random seed")->capture_default_str();
    app->add_option("-o,--output", output, "Curve CSV")->required();
    app->add_option("--labels", labels, "Label CSV (default: <output stem>.labels.csv)");
  }

  int run() const {
    SyntheticSpec spec;
    spec.perturbation_indices = perturbations;
    spec.lambda = lambda;
    spec.n_basis = n_basis;
    spec.grid_size = grid_size;
    spec.n_per_cluster = n_per_cluster;
    spec.n_min = n_min;
    spec.n_max = n_max;
    spec.perturbation_scale = scale;
    spec.seed = seed;
    const SyntheticData data = simulate(spec);
    fs::path label_path = labels;
    if (label_path.empty()) {
      label_path = fs::path(output).parent_path() / (fs::path(output).stem().string() + ".labels.csv");
    }
    OutputSet out;
    out.add(output, [&](std::ostream& os) {
      os << seed_comment("simulate", seed);
      write_curves_csv(os, data.grid, data.samples);
    });
    out.add(label_path, [&](std::ostream& os) {
      os << seed_comment("simulate", seed);
      write_labels_csv(os, data.samples, data.labels);
    });
    out.commit();
    std::cerr << "simulate: " << data.samples.size() << " groups -> " << output << ", " << label_path.string() << '\n';
    return 0;
  }
};

struct CovCmd {
  InputOptions input;
  std::string outdir;
  bool binary = false;

  void attach(CLI::App* app) {
    input.attach(app, true);
    app->add_option("-o,--output-dir", outdir, "Directory for the matrices and index.csv")->required();
    app->add_flag("--binary", binary, "Write WPCV binary matrices instead of CSV");
  }

  int run() const {
    const std::vector<SampleCov> covs = sample_covs(input.curves_only(), !input.no_recenter);
    OutputSet out;
    CsvTable index{{"group_id", "n", "file"}, {}};
    for (std::size_t i = 0; i < covs.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "cov%05zu.%s", i + 1, binary ? "wpcv" : "csv");
      out.add(fs::path(outdir) / name, [&](std::ostream& os) {
        if (binary) {
          write_matrix_binary(os, covs[i].matrix.matrix());
        } else {
          write_matrix_csv(os, covs[i].matrix.matrix());
        }
      });
      index.rows.push_back({covs[i].id, std::to_string(covs[i].n), name});
    }
    out.add(fs::path(outdir) / "index.csv", [&](std::ostream& os) { write_csv_table(os, index); });
    out.commit();
    std::cerr << "cov: " << covs.size() << " covariances -> " << outdir << '\n';
    return 0;
  }
};

struct ClusterCmd {
  InputOptions input;
  SolverOptions solver;
  int k = 2;
  Index reduced = 0;
  int repeats = 1;
  std::string output;
  std::string barycenter_dir;

  void attach(CLI::App* app) {
    input.attach(app);
    solver.attach(app);
    app->add_option("-k,--clusters", k, "Number of clusters")->capture_default_str();
    app->add_option("--reduced", reduced, "Fit on a random subsample of this size, then grade every item");
    app->add_option("--repeats", repeats, "Subsamples tried in reduced mode")->capture_default_str();
    app->add_option("-o,--output", output, "Solution JSON")->required();
    app->add_option("--barycenters", barycenter_dir, "Directory for barycenter matrices (CSV)");
  }

  int run() const {
    const std::vector<SampleCov> covs = input.items();
    const SoftClustConfig cfg = solver.config(k);
    const ClusterSolution sol = reduced > 0 ? fit_reduced(covs, cfg, reduced, repeats) : fit(covs, cfg);
    const Index n = static_cast<Index>(covs.size());

    ordered_json j;
    j["command"] = "cluster";
    j["seed"] = solver.seed;
    j["k"] = k;
    j["mode"] = reduced > 0 ? "reduced" : "full";
    if (reduced > 0) {
      j["n_reduced"] = reduced;
      j["repeats"] = repeats;
    }
    j["entropy_target"] = cfg.entropy;
    j["entropy_achieved"] = sol.entropy;
    j["eta"] = number_or_string(sol.eta);
    j["objective"] = sol.objective;
    j["iterations"] = sol.iterations;
    j["converged"] = sol.converged;
    ordered_json ids = ordered_json::array();
    ordered_json grades = ordered_json::array();
    ordered_json nearest = ordered_json::array();
    ordered_json cred = ordered_json::array();
    for (Index i = 0; i < n; ++i) {
      ids.push_back(covs[static_cast<std::size_t>(i)].id);
      ordered_json row = ordered_json::array();
      for (Index c = 0; c < k; ++c) row.push_back(sol.partition(i, c));
      grades.push_back(std::move(row));
      nearest.push_back(sol.partition.nearest(i));
      cred.push_back(sol.partition.credibility(i));
    }
    j["ids"] = std::move(ids);
    j["partition"] = std::move(grades);
    j["nearest"] = std::move(nearest);
    j["credibility"] = std::move(cred);
    const MatrixXd overlap = sol.partition.grades().transpose() * sol.partition.grades();
    ordered_json ov = ordered_json::array();
    for (Index a = 0; a < k; ++a) {
      ordered_json row = ordered_json::array();
      for (Index b = 0; b < k; ++b) row.push_back(overlap(a, b));
      ov.push_back(std::move(row));
    }
    j["overlap"] = std::move(ov);
    ordered_json med = ordered_json::array();
    for (Index m : sol.medoids) med.push_back(covs[static_cast<std::size_t>(m)].id);
    j["medoids"] = std::move(med);

    OutputSet out;
    ordered_json files = ordered_json::array();
    if (!barycenter_dir.empty()) {
      for (Index c = 0; c < k; ++c) {
        const std::string name = (c < 9 ? "barycenter0" : "barycenter") + std::to_string(c + 1) + ".csv";
        out.add(fs::path(barycenter_dir) / name,
                [&](std::ostream& os) { write_matrix_csv(os, sol.barycenters[static_cast<std::size_t>(c)].matrix()); });
        files.push_back((fs::path(barycenter_dir) / name).generic_string());
      }
    }
    j["barycenter_files"] = std::move(files);
    out.add(output, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    out.commit();
    std::cerr << "cluster: K=" << k << " objective=" << format_double(sol.objective) << " iterations=" << sol.iterations
              << " -> " << output << '\n';
    return 0;
  }
};

struct TaswCmd {
  InputOptions input;
  SolverOptions solver;
  ScanOptions scan;
  std::string output;

  void attach(CLI::App* app) {
    input.attach(app);
    solver.attach(app);
    app->add_option("--k-min", scan.k_min, "Smallest K")->capture_default_str();
    app->add_option("--k-max", scan.k_max, "Largest K")->capture_default_str();
    app->add_option("--delta", scan.delta, "Relative tolerance of the candidate set")->capture_default_str();
    app->add_option("--reduced", scan.n_reduced, "Reduced mode subsample size");
    app->add_option("--repeats", scan.repeats, "Subsamples tried in reduced mode")->capture_default_str();
    app->add_option("-o,--output", output, "Profile CSV")->required();
  }

  int run() const {
    const std::vector<SampleCov> covs = input.items();
    const TaswProfile prof = tasw_scan(covs, solver.config(scan.k_min), scan);
    CsvTable t{{"K", "tasw", "k_hat", "candidate"}, {}};
    for (const auto& e : prof.entries) {
      const bool cand = std::find(prof.candidates.begin(), prof.candidates.end(), e.k) != prof.candidates.end();
      t.rows.push_back({std::to_string(e.k), format_double(e.tasw), e.k == prof.k_hat ? "1" : "0", cand ? "1" : "0"});
    }
    OutputSet out;
    out.add(output, [&](std::ostream& os) {
      os << seed_comment("tasw", solver.seed);
      write_csv_table(os, t);
    });
    out.commit();
    std::cerr << "tasw: k_hat=" << prof.k_hat << " -> " << output << '\n';
    return 0;
  }
};

struct PermtestCmd {
  InputOptions input;
  SolverOptions solver;
  ScanOptions scan;
  int n_perm = 200;
  std::string output;

  void attach(CLI::App* app) {
    input.attach(app);
    solver.attach(app);
    app->add_option("--k-min", scan.k_min, "Smallest K")->capture_default_str();
    app->add_option("--k-max", scan.k_max, "Largest K")->capture_default_str();
    app->add_option("--reduced", scan.n_reduced, "Reduced mode subsample size");
    app->add_option("--n-perm", n_perm, "Permutations")->capture_default_str();
    app->add_option("-o,--output", output, "Result JSON")->required();
  }

  int run() const {
    if (!input.cov_index.empty()) throw Error(ErrorCode::RequiresRawCurves, "the permutation test resamples curves");
    const std::vector<FunctionalSample> samples = input.curves_only();
    PermTestOptions opts;
    opts.n_perm = n_perm;
    opts.seed = derive_seed(solver.seed, 0xC0FFEE);
    opts.recenter = !input.no_recenter;
    const PermTestResult res = permutation_test(samples, solver.config(scan.k_min), scan, opts);
    ordered_json j;
    j["command"] = "permtest";
    j["seed"] = solver.seed;
    j["n_perm"] = n_perm;
    j["k_min"] = scan.k_min;
    j["k_max"] = scan.k_max;
    j["recenter"] = opts.recenter;
    if (scan.n_reduced > 0) j["n_reduced"] = scan.n_reduced;
    j["entropy_target"] = solver.target_entropy();
    j["observed_tasw_max"] = res.observed_tasw_max;
    j["observed_k_hat"] = res.observed_k_hat;
    j["null_samples"] = res.null_samples;
    j["p_value"] = res.p_value;
    OutputSet out;
    out.add(output, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
    out.commit();
    std::cerr << "permtest: p=" << format_double(res.p_value) << " -> " << output << '\n';
    return 0;
  }
};

struct MdsCmd {
  std::vector<std::string> matrices;
  Index dim = 2;
  std::string output;

  void attach(CLI::App* app) {
    app->add_option("matrices", matrices, "Covariance matrices (CSV or WPCV binary)")->required();
    app->add_option("--dim", dim, "Output dimensions")->capture_default_str();
    app->add_option("-o,--output", output, "Coordinates CSV")->required();
  }

  int run() const {
    std::vector<CovMatrix> ms;
    for (const auto& p : matrices) {
      auto in = open_input(p, true);
      ms.push_back(read_cov_matrix(in));
    }
    for (const auto& m : ms) {
      if (m.dim() != ms.front().dim()) throw Error(ErrorCode::InputFormat, "matrices differ in dimension");
    }
    const MatrixXd coords = mds_coords(ms, dim);
    CsvTable t{{"label"}, {}};
    for (Index c = 0; c < dim; ++c) t.header.push_back("x" + std::to_string(c + 1));
    for (std::size_t i = 0; i < ms.size(); ++i) {
      std::vector<std::string> row{fs::path(matrices[i]).stem().string()};
      for (Index c = 0; c < dim; ++c) row.push_back(format_double(coords(static_cast<Index>(i), c)));
      t.rows.push_back(std::move(row));
    }
    OutputSet out;
    out.add(output, [&](std::ostream& os) { write_csv_table(os, t); });
    out.commit();
    std::cerr << "mds: " << ms.size() << " matrices -> " << output << '\n';
    return 0;
  }
};

struct DistCmd {
  InputOptions input;
  unsigned threads = 0;
  std::string output;

  void attach(CLI::App* app) {
    input.attach(app);
    app->add_option("--threads", threads, "Worker threads (default: COVCLUST_THREADS or all cores)");
    app->add_option("-o,--output", output, "Distance CSV")->required();
  }

  int run() const {
    const std::vector<SampleCov> covs = input.items();
    const MatrixXd d2 = pairwise_wp_dist2(covs, resolve_threads(threads));
    CsvTable t{{"group_id"}, {}};
    for (const auto& c : covs) t.header.push_back(c.id);
    for (std::size_t i = 0; i < covs.size(); ++i) {
      std::vector<std::string> row{covs[i].id};
      for (std::size_t j = 0; j < covs.size(); ++j) {
        row.push_back(format_double(std::sqrt(d2(static_cast<Index>(i), static_cast<Index>(j)))));
      }
      t.rows.push_back(std::move(row));
    }
    OutputSet out;
    out.add(output, [&](std::ostream& os) { write_csv_table(os, t); });
    out.commit();
    std::cerr << "dist: " << covs.size() << " items -> " << output << '\n';
    return 0;
  }
};

}  // namespace covclust::cli

int main(int argc, char** argv) {
  using namespace covclust::cli;
  CLI::App app{"Soft clustering of covariance operators under the Wasserstein-Procrustes metric"};
  app.require_subcommand(1);

  SimulateCmd simulate_cmd;
  CovCmd cov_cmd;
  ClusterCmd cluster_cmd;
  TaswCmd tasw_cmd;
  PermtestCmd permtest_cmd;
  MdsCmd mds_cmd;
  DistCmd dist_cmd;
  auto* s_sim = app.add_subcommand("simulate", "Draw grouped curves from the Fourier-basis model");
  auto* s_cov = app.add_subcommand("cov", "Estimate one covariance per group");
  auto* s_cl = app.add_subcommand("cluster", "Entropy-constrained soft clustering");
  auto* s_ta = app.add_subcommand("tasw", "Trimmed average silhouette width over a range of K");
  auto* s_pt = app.add_subcommand("permtest", "Permutation test of the no-cluster hypothesis");
  auto* s_mds = app.add_subcommand("mds", "Classical scaling of covariance matrices");
  auto* s_di = app.add_subcommand("dist", "Pairwise Wasserstein-Procrustes distances");
  simulate_cmd.attach(s_sim);
  cov_cmd.attach(s_cov);
  cluster_cmd.attach(s_cl);
  tasw_cmd.attach(s_ta);
  permtest_cmd.attach(s_pt);
  mds_cmd.attach(s_mds);
  dist_cmd.attach(s_di);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*s_sim) return simulate_cmd.run();
    if (*s_cov) return cov_cmd.run();
    if (*s_cl) return cluster_cmd.run();
    if (*s_ta) return tasw_cmd.run();
    if (*s_pt) return permtest_cmd.run();
    if (*s_mds) return mds_cmd.run();
    if (*s_di) return dist_cmd.run();
  } catch (const covclust::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_input_error() ? kExitInput : kExitSolver;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitSolver;
  }
  return kExitInput;
}
