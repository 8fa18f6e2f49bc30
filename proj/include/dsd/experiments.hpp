#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dsd/training.hpp"

namespace dsd {

/// Monte Carlo risk of the ground-truth shared-weight model (weight =
/// planted signal), with the bias picked from a small micro-grid
/// {0, 1e-4, 1e-3, 1e-2} by lowest estimated risk.
double optimal_loss(const TaskSpec& spec, int n_test, Rng& rng);

struct SweepConfig {
  std::vector<ModelKind> kinds;
  std::vector<int> k_values;
  std::vector<int> d_values;
  std::vector<int> sample_sizes;
  int replications = 5;
  std::vector<double> weight_lrs = {1e-1, 1e-2, 1e-3};
  std::vector<double> bias_grid = {1e-2, 1e-3, 1e-4};
  int test_size = 10000;
  int train_iterations = 200;
  std::optional<double> sigma;  // fixed noise level; default 1/sqrt(k) per cell
  std::uint64_t master_seed = 0;
  int jobs = 0;  // <= 0: hardware concurrency
};

void validate(const SweepConfig& cfg);

struct SweepRow {
  std::string kind;
  int k = 0, d = 0, n = 0, replicate = 0;
  std::uint64_t seed = 0;
  double test_error = 0.0;
  double selected_lr = 0.0;
  double selected_bias = 0.0;
  bool failed = false;
};

struct SweepCellAggregate {
  std::string kind;
  int k = 0, d = 0, n = 0;
  double mean_test_error = 0.0;
  double std_test_error = 0.0;
  int successes = 0;
};

struct SweepReport {
  SweepConfig config;
  std::vector<SweepRow> rows;                 // sorted by (kind, k, d, n, replicate)
  std::vector<SweepCellAggregate> aggregates; // sorted by (kind, k, d, n)
  double wall_seconds = 0.0;
};

/// Appendix-style test-error sweep: per (kind, k, d, n, replicate) sample
/// training data, grid-search train, and record the selected test error
/// against a fixed held-out set per (k, d, replicate). Infeasible cells
/// are recorded as failed rows; the sweep never aborts.
SweepReport run_test_error_sweep(const SweepConfig& cfg);

struct SearchOutcome {
  int min_n = 0;
  bool saturated = false;
  bool bracket_expanded = false;
  int probes = 0;
};

/// Minimal n in [1, n_max] with eval(n) <= target, by bisection under a
/// monotonicity assumption. The found n is re-checked with a fresh probe
/// index; on a failed confirmation the bracket is expanded once to
/// min(2n, n_max). Saturation (target unreachable at n_max) sets the flag.
/// Probe count <= ceil(log2(n_max)) + 2.
SearchOutcome binary_search_min_n(const std::function<double(int n, int probe)>& eval,
                                  double target, int n_max);

struct ComplexityReplicate {
  int replicate = 0;
  std::uint64_t seed = 0;
  int min_n = 0;
  double target_loss = 0.0;
  bool saturated = false;
};

struct ComplexityResult {
  std::string kind;
  int k = 0, d = 0;
  std::vector<ComplexityReplicate> replicates;
  double mean_min_n = 0.0;
  double std_min_n = 0.0;
  double tolerance = 0.0;
  int n_max = 0;
};

struct ComplexityConfig {
  double tolerance = 0.03;
  int n_max = 1000;
  int replicates = 5;
  std::vector<double> weight_lrs = {1e-1, 1e-2, 1e-3};
  std::vector<double> bias_grid = {1e-2, 1e-3, 1e-4};
  int train_iterations = 200;
  int test_size = 10000;
  int optimal_loss_test_size = 100000;
  int jobs = 0;
};

/// Sample-complexity estimate for one (kind, spec): per replicate, target =
/// optimal loss + tolerance, then a verified binary search over n.
ComplexityResult estimate_sample_complexity(ModelKind kind, const TaskSpec& spec,
                                            const ComplexityConfig& cfg, std::uint64_t seed);

void write_sweep_csv(const SweepReport& report, const std::string& path);
std::vector<SweepRow> parse_sweep_csv(const std::string& path);
void write_complexity_csv(const std::vector<ComplexityResult>& results, const std::string& path);
/// JSON metadata: config echo + artifact version + wall clock.
void write_sweep_metadata(const SweepReport& report, const std::string& path);

struct PlotPoint {
  double x = 0.0, y = 0.0, yerr = 0.0;
};
struct PlotSeries {
  std::string name;
  std::vector<PlotPoint> points;
};

/// SVG line chart with error bars, one polyline per series, linear axes.
void render_line_chart(const std::string& path, const std::string& title,
                       const std::string& x_label, const std::string& y_label,
                       const std::vector<PlotSeries>& series);

/// Sweep report as charts (test error vs n, one file per (k, d) pair).
void render_sweep_plots(const SweepReport& report, const std::string& out_dir);
/// Complexity results as one chart (mean minimal n vs the varying axis).
void render_complexity_plot(const std::vector<ComplexityResult>& results,
                            const std::string& axis_label, const std::string& out_dir,
                            const std::string& file_stem);

struct BoostingDemoReport {
  std::vector<double> section_alignment;  // alignment of each section's estimate (0 = failed)
  int failed_sections = 0;
  double boosted_alignment = 0.0;
  double best_single_alignment = 0.0;
};

/// End-to-end identification + boosting composition on static-signal data:
/// per section, grid-search train an Fcn, identify a node with one held-out
/// sample, aggregate the identified weights, and report the alignment of
/// the boosted estimate with the true mean. Demonstration output only.
BoostingDemoReport run_boosting_demo(const TaskSpec& spec, int section_budget, int sections,
                                     std::uint64_t seed);

}  // namespace dsd
