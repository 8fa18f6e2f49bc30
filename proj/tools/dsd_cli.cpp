#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <tuple>

#include "dsd/equivariance.hpp"
#include "dsd/experiments.hpp"
#include "dsd/stats.hpp"
#include "dsd/theory.hpp"

namespace {

using dsd::ModelKind;
using nlohmann::json;

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << j.dump(2) << "\n";
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open " + out_path);
    out << j.dump(2) << "\n";
  }
}

dsd::TaskSpec spec_from_flags(int k, int d, double sigma, std::uint64_t seed) {
  const double s = sigma > 0.0 ? sigma : 1.0 / std::sqrt(static_cast<double>(k));
  return dsd::make_task_spec(k, d, s, seed);
}

int run_train(const std::string& kind_name, int k, int d, double sigma, int n,
              std::uint64_t seed, const std::string& schedule, int iters, double eta, double bias,
              const std::string& out) {
  const dsd::TaskSpec spec = spec_from_flags(k, d, sigma, seed);
  dsd::Rng rng(dsd::derive_seed(seed, "train-data"));
  dsd::TrainResult result;
  if (schedule == "lcn2") {
    const int count = n > 0 ? n : dsd::two_phase_lcn_sample_count(spec);
    const dsd::Dataset data = dsd::sample_dsd(spec, count % 2 == 0 ? count : count + 1, rng);
    result = dsd::train_two_phase_lcn(spec, data, seed);
  } else if (schedule == "cnn2") {
    const int count = n > 0 ? n : dsd::two_phase_cnn_sample_count(spec);
    const dsd::Dataset data = dsd::sample_dsd(spec, count % 2 == 0 ? count : count + 1, rng);
    result = dsd::train_two_phase_cnn(spec, data, seed);
  } else if (schedule == "generic") {
    if (n <= 0) throw CLI::ValidationError("--n is required for the generic schedule");
    const ModelKind kind = dsd::model_kind_from_string(kind_name);
    const dsd::Dataset data = dsd::sample_dsd(spec, n, rng);
    dsd::TrainSchedule s;
    s.iterations = iters;
    s.step_sizes.assign(iters, eta);
    s.biases.assign(iters, bias);
    if (kind == ModelKind::Fcn) {
      s.init_variance = 1.0 / double(k * d);
      s.normalize_init = true;
    } else {
      s.init_variance = 1.0 / (100.0 * double(k) * k * d * d);
    }
    s.seed = seed;
    s.early_stop = true;
    result = dsd::train_generic(kind, spec, s, data);
  } else {
    throw CLI::ValidationError("unknown schedule: " + schedule);
  }
  emit(json::parse(dsd::train_result_to_json(result)), out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Laboratory for the dynamic-signal-distribution classification task"};
  app.require_subcommand(1);

  // ---- train ----------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a model and emit the result as JSON");
  std::string train_kind = "CNN", train_schedule = "cnn2", train_out;
  int train_k = 20, train_d = 20, train_n = 0, train_iters = 200;
  double train_sigma = 0.0, train_eta = 1e-2, train_bias = 1e-3;
  std::uint64_t train_seed = 1;
  train->add_option("--kind", train_kind, "FCN | LCN | CNN");
  train->add_option("--k", train_k, "number of patches")->required();
  train->add_option("--d", train_d, "patch dimension")->required();
  train->add_option("--sigma", train_sigma, "noise level (default 1/sqrt(k))");
  train->add_option("--n", train_n, "training samples (default: paper count for two-phase)");
  train->add_option("--seed", train_seed, "master seed");
  train->add_option("--schedule", train_schedule, "lcn2 | cnn2 | generic");
  train->add_option("--iters", train_iters, "iterations for the generic schedule");
  train->add_option("--eta", train_eta, "step size for the generic schedule");
  train->add_option("--bias", train_bias, "bias for the generic schedule");
  train->add_option("--out", train_out, "output path (default stdout)");

  // ---- theory ---------------------------------------------------------
  auto* theory = app.add_subcommand("theory", "Closed-form calculators");
  theory->require_subcommand(1);
  auto* kl = theory->add_subcommand("kl", "KL divergence between transformed static tasks");
  double kl_cos = 0.0, kl_sigma = 1.0;
  std::string kl_out;
  kl->add_option("--cosine", kl_cos, "dot product of the two unit means")->required();
  kl->add_option("--sigma", kl_sigma, "noise level")->required();
  kl->add_option("--out", kl_out);

  auto* fano = theory->add_subcommand("fano", "Fano minimax lower bound");
  double fano_delta = 0.25, fano_n = 0.0, fano_kl = 0.0, fano_m = 2.0;
  std::string fano_out;
  fano->add_option("--delta", fano_delta, "separation level")->required();
  fano->add_option("--n", fano_n, "sample count")->required();
  fano->add_option("--kl", fano_kl, "pairwise KL bound")->required();
  fano->add_option("--packing-size", fano_m, "packing cardinality")->required();
  fano->add_option("--out", fano_out);

  auto* packing = theory->add_subcommand("packing", "Greedy sphere packing");
  int packing_n = 40;
  double packing_c = 0.5;
  std::int64_t packing_attempts = 100000;
  std::uint64_t packing_seed = 1;
  std::string packing_out;
  packing->add_option("--ambient", packing_n, "ambient dimension (even)")->required();
  packing->add_option("--dot-bound", packing_c, "pairwise dot bound c")->required();
  packing->add_option("--max-attempts", packing_attempts, "consecutive rejections before stop");
  packing->add_option("--seed", packing_seed);
  packing->add_option("--out", packing_out);

  auto* lsa_mean_cmd = theory->add_subcommand("lsa-mean", "Closed-form LSA expectation");
  double lm_mu = 0.0, lm_sigma = 1.0, lm_b = 0.0;
  std::string lm_out;
  lsa_mean_cmd->add_option("--mu", lm_mu)->required();
  lsa_mean_cmd->add_option("--sigma", lm_sigma)->required();
  lsa_mean_cmd->add_option("--bias", lm_b)->required();
  lsa_mean_cmd->add_option("--out", lm_out);

  // ---- equivariance-check ----------------------------------------------
  auto* equi = app.add_subcommand("equivariance-check", "Numerical equivariance checks");
  std::string equi_kind = "CNN", equi_check = "model", equi_out;
  int equi_k = 4, equi_d = 6, equi_seeds = 20, equi_n = 40;
  double equi_sigma = 0.0;
  std::uint64_t equi_seed = 1;
  equi->add_option("--kind", equi_kind, "FCN | LCN | CNN");
  equi->add_option("--check", equi_check, "model | update | init | risk");
  equi->add_option("--k", equi_k);
  equi->add_option("--d", equi_d);
  equi->add_option("--sigma", equi_sigma);
  equi->add_option("--n", equi_n, "samples per draw");
  equi->add_option("--seeds", equi_seeds, "number of random draws / replicates");
  equi->add_option("--seed", equi_seed, "master seed");
  equi->add_option("--report", equi_out, "report output path");

  // ---- sweep ------------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep", "Test-error sweep");
  std::vector<std::string> sweep_kinds = {"FCN", "LCN", "CNN"};
  std::vector<int> sweep_k = {10, 20}, sweep_d = {10, 20}, sweep_n = {10, 50, 100, 250, 500};
  int sweep_reps = 5, sweep_jobs = 0, sweep_iters = 200, sweep_test = 10000;
  double sweep_sigma = 0.0;
  std::uint64_t sweep_seed = 1;
  std::string sweep_out = "sweep_out";
  sweep->add_option("--kinds", sweep_kinds, "model kinds");
  sweep->add_option("--k-list", sweep_k);
  sweep->add_option("--d-list", sweep_d);
  sweep->add_option("--n-list", sweep_n);
  sweep->add_option("--sigma", sweep_sigma, "fixed noise level (default 1/sqrt(k) per cell)");
  sweep->add_option("--reps", sweep_reps);
  sweep->add_option("--iters", sweep_iters);
  sweep->add_option("--test-size", sweep_test);
  sweep->add_option("--seed", sweep_seed);
  sweep->add_option("--out-dir", sweep_out);
  sweep->add_option("--jobs", sweep_jobs);

  // ---- complexity ---------------------------------------------------------
  auto* complexity = app.add_subcommand("complexity", "Sample-complexity binary search");
  std::vector<std::string> cx_kinds = {"LCN", "CNN"};
  std::vector<int> cx_k = {20}, cx_d = {20};
  int cx_reps = 5, cx_jobs = 0, cx_nmax = 1000, cx_iters = 200;
  double cx_sigma = 0.0, cx_tol = 0.03;
  std::uint64_t cx_seed = 1;
  std::string cx_out = "complexity_out";
  complexity->add_option("--kinds", cx_kinds);
  complexity->add_option("--k-list", cx_k);
  complexity->add_option("--d-list", cx_d);
  complexity->add_option("--sigma", cx_sigma, "fixed noise level (default 1/sqrt(k) per cell)");
  complexity->add_option("--tolerance", cx_tol);
  complexity->add_option("--n-max", cx_nmax);
  complexity->add_option("--reps", cx_reps);
  complexity->add_option("--iters", cx_iters);
  complexity->add_option("--seed", cx_seed);
  complexity->add_option("--out-dir", cx_out);
  complexity->add_option("--jobs", cx_jobs);

  // ---- boost-demo --------------------------------------------------------
  auto* boost = app.add_subcommand("boost-demo", "Identification + boosting demonstration");
  int boost_k = 4, boost_d = 8, boost_sections = 20, boost_budget = 200;
  double boost_sigma = 0.05;
  std::uint64_t boost_seed = 1;
  std::string boost_out;
  boost->add_option("--k", boost_k);
  boost->add_option("--d", boost_d);
  boost->add_option("--sigma", boost_sigma);
  boost->add_option("--sections", boost_sections);
  boost->add_option("--budget", boost_budget, "training samples per section");
  boost->add_option("--seed", boost_seed);
  boost->add_option("--out", boost_out);

  // ---- plot ---------------------------------------------------------------
  auto* plot = app.add_subcommand("plot", "Render SVG charts from a sweep CSV");
  std::string plot_in, plot_out = "plots";
  plot->add_option("--in", plot_in, "sweep CSV")->required();
  plot->add_option("--out-dir", plot_out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train)
      return run_train(train_kind, train_k, train_d, train_sigma, train_n, train_seed,
                       train_schedule, train_iters, train_eta, train_bias, train_out);

    if (*theory) {
      if (*kl) {
        // Report the closed form directly from the cosine of the two means.
        json j;
        j["kl"] = (1.0 - kl_cos) / (kl_sigma * kl_sigma);
        emit(j, kl_out);
      } else if (*fano) {
        json j;
        j["bound"] = dsd::theory::fano_lower_bound({fano_delta, fano_n, fano_kl, fano_m});
        emit(j, fano_out);
      } else if (*packing) {
        dsd::Rng rng(packing_seed);
        const auto pack = dsd::theory::gv_packing(packing_n, packing_c, packing_attempts, rng);
        json j;
        j["ambient"] = pack.ambient_dim;
        j["dot_bound"] = pack.dot_bound;
        j["size"] = pack.vectors.size();
        j["target_log_size"] = pack.target_log_size;
        j["attempts_used"] = pack.attempts_used;
        j["vectors"] = pack.vectors;
        emit(j, packing_out);
      } else if (*lsa_mean_cmd) {
        json j;
        j["mean"] = dsd::theory::lsa_mean(lm_mu, lm_sigma, lm_b);
        j["mean_db"] = dsd::theory::lsa_mean_db(lm_mu, lm_sigma, lm_b);
        emit(j, lm_out);
      }
      return 0;
    }

    if (*equi) {
      const ModelKind kind = dsd::model_kind_from_string(equi_kind);
      const dsd::TaskSpec spec = spec_from_flags(equi_k, equi_d, equi_sigma, equi_seed);
      const bool tied = kind == ModelKind::Cnn;
      const double variance =
          kind == ModelKind::Fcn ? 1.0 / spec.shape.ambient()
                                 : 1.0 / (100.0 * double(equi_k) * equi_k * equi_d * equi_d);
      json report;
      report["kind"] = equi_kind;
      report["check"] = equi_check;
      bool all_pass = true;
      if (equi_check == "model" || equi_check == "update") {
        for (int s = 0; s < equi_seeds; ++s) {
          dsd::Rng rng(dsd::derive_seed(equi_seed, "draw", s));
          const auto t = dsd::random_transform(spec.shape, tied, rng);
          auto params = dsd::init_params(kind, spec, variance, rng);
          dsd::CheckReport check;
          if (equi_check == "model") {
            std::vector<std::vector<double>> xs;
            std::normal_distribution<double> gauss(0.0, 1.0);
            for (int v = 0; v < 10; ++v) {
              std::vector<double> x(spec.shape.ambient());
              for (auto& value : x) value = gauss(rng);
              xs.push_back(std::move(x));
            }
            check = dsd::check_model_equivariance(params, t, xs);
          } else {
            const auto data = dsd::sample_dsd(spec, equi_n, rng);
            check = dsd::check_update_equivariance(dsd::projected_update_fn(1e-2, 0.0, 1e-3),
                                                   params, t, data);
          }
          all_pass = all_pass && check.pass;
          report["max_residual"] = std::max(report.value("max_residual", 0.0), check.max_residual);
        }
      } else if (equi_check == "init") {
        dsd::Rng rng(dsd::derive_seed(equi_seed, "transform"));
        const auto t = dsd::random_transform(spec.shape, tied, rng);
        const auto check = dsd::check_init_invariance(
            [&](dsd::Rng& r) { return dsd::init_params(kind, spec, variance, r); }, t, 10000,
            0.01, equi_seed);
        all_pass = check.pass;
        report["p_values"] = check.p_values;
        report["config"] = check.config;
      } else if (equi_check == "risk") {
        dsd::Rng rng(dsd::derive_seed(equi_seed, "transform"));
        const auto t = dsd::random_transform(spec.shape, tied, rng);
        dsd::TrainerFn trainer = [&](const dsd::TaskSpec& sp, const dsd::Dataset& data,
                                     const dsd::ModelParams& init) {
          const auto schedule = kind == ModelKind::Lcn
                                    ? dsd::two_phase_lcn_schedule(sp, 0)
                                    : dsd::two_phase_cnn_schedule(sp, 0);
          return dsd::train_generic_from(init, sp, schedule, data).params;
        };
        const auto check = dsd::check_risk_invariance(trainer, kind, spec, t, equi_seeds,
                                                      equi_n % 2 == 0 ? equi_n : equi_n + 1, 2000,
                                                      equi_seed);
        all_pass = check.pass;
        report["p_values"] = check.p_values;
        report["max_paired_deviation"] = check.max_residual;
        report["config"] = check.config;
      } else {
        throw CLI::ValidationError("unknown check: " + equi_check);
      }
      report["pass"] = all_pass;
      emit(report, equi_out);
      return all_pass ? 0 : 1;
    }

    if (*sweep) {
      dsd::SweepConfig cfg;
      cfg.kinds.clear();
      for (const auto& name : sweep_kinds) cfg.kinds.push_back(dsd::model_kind_from_string(name));
      cfg.k_values = sweep_k;
      cfg.d_values = sweep_d;
      cfg.sample_sizes = sweep_n;
      cfg.replications = sweep_reps;
      cfg.test_size = sweep_test;
      cfg.train_iterations = sweep_iters;
      if (sweep_sigma > 0.0) cfg.sigma = sweep_sigma;
      cfg.master_seed = sweep_seed;
      cfg.jobs = sweep_jobs;
      const auto report = dsd::run_test_error_sweep(cfg);
      std::filesystem::create_directories(sweep_out);
      dsd::write_sweep_csv(report, sweep_out + "/sweep.csv");
      dsd::write_sweep_metadata(report, sweep_out + "/sweep_meta.json");
      dsd::render_sweep_plots(report, sweep_out);
      std::cout << "wrote " << sweep_out << "/sweep.csv (" << report.rows.size() << " rows, "
                << report.wall_seconds << "s)\n";
      return 0;
    }

    if (*complexity) {
      dsd::ComplexityConfig cfg;
      cfg.tolerance = cx_tol;
      cfg.n_max = cx_nmax;
      cfg.replicates = cx_reps;
      cfg.train_iterations = cx_iters;
      cfg.jobs = cx_jobs;
      std::vector<dsd::ComplexityResult> results;
      for (const auto& name : cx_kinds)
        for (int k : cx_k)
          for (int d : cx_d) {
            const double sigma = cx_sigma > 0.0 ? cx_sigma : 1.0 / std::sqrt(double(k));
            const auto spec =
                dsd::make_task_spec(k, d, sigma, dsd::derive_seed(cx_seed, "spec", k * 1000 + d));
            results.push_back(dsd::estimate_sample_complexity(
                dsd::model_kind_from_string(name), spec, cfg,
                dsd::derive_seed(cx_seed, "cx", k * 1000 + d)));
          }
      std::filesystem::create_directories(cx_out);
      dsd::write_complexity_csv(results, cx_out + "/complexity.csv");
      const bool vary_k = cx_k.size() > 1;
      dsd::render_complexity_plot(results, vary_k ? "k" : "d", cx_out, "complexity");
      std::cout << "wrote " << cx_out << "/complexity.csv (" << results.size() << " cells)\n";
      return 0;
    }

    if (*boost) {
      const auto spec = dsd::make_task_spec(boost_k, boost_d, boost_sigma, boost_seed);
      const auto report = dsd::run_boosting_demo(spec, boost_budget, boost_sections, boost_seed);
      json j;
      j["section_alignment"] = report.section_alignment;
      j["failed_sections"] = report.failed_sections;
      j["boosted_alignment"] = report.boosted_alignment;
      j["best_single_alignment"] = report.best_single_alignment;
      emit(j, boost_out);
      return 0;
    }

    if (*plot) {
      const auto rows = dsd::parse_sweep_csv(plot_in);
      dsd::SweepReport report;
      report.rows = rows;
      std::map<std::tuple<std::string, int, int, int>, std::vector<double>> cells;
      for (const auto& row : rows)
        if (!row.failed) cells[{row.kind, row.k, row.d, row.n}].push_back(row.test_error);
      for (const auto& [key, errors] : cells) {
        dsd::SweepCellAggregate agg;
        agg.kind = std::get<0>(key);
        agg.k = std::get<1>(key);
        agg.d = std::get<2>(key);
        agg.n = std::get<3>(key);
        agg.mean_test_error = dsd::stats::mean(errors);
        agg.std_test_error = dsd::stats::sample_std(errors);
        report.aggregates.push_back(agg);
      }
      dsd::render_sweep_plots(report, plot_out);
      std::cout << "wrote plots to " << plot_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
