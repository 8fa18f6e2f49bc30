#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsd/models.hpp"

namespace dsd {

enum class SplitPolicy { Halves, Whole };

/// Full description of one projected-gradient run. The gradient at
/// iteration t is computed with the bias in effect before the update
/// (bias 0 before the first iteration), then the update installs biases[t].
struct TrainSchedule {
  int iterations = 0;
  std::vector<double> step_sizes;  // one per iteration
  std::vector<double> biases;      // one per iteration, >= 0
  double init_variance = 1.0;      // per-coordinate Gaussian variance, > 0
  SplitPolicy split_policy = SplitPolicy::Whole;
  std::uint64_t seed = 0;
  bool normalize_init = false;  // project the initial weights to unit norm
  bool early_stop = false;      // stop when train loss plateaus
  int early_stop_window = 10;
  double early_stop_rel_tol = 1e-5;
};

void validate(const TrainSchedule& schedule);

struct TrainResult {
  ModelParams params;
  std::vector<std::vector<double>> alignment_per_iter;  // per iteration, per node
  std::vector<double> loss_per_iter;
  TrainSchedule schedule;
  std::uint64_t seed = 0;
  bool degenerate_update = false;  // a post-step vector had norm < 1e-14
  int iterations_run = 0;
};

/// Gaussian init with per-coordinate variance `variance`; bias 0.
/// Fcn nodes live in R^{kd}, Lcn nodes in R^d, Cnn has one R^d vector.
ModelParams init_params(ModelKind kind, const TaskSpec& spec, double variance, Rng& rng);

/// One step of projected gradient descent: each weight vector takes the
/// gradient step and is renormalized to the unit sphere; bias becomes
/// `next_bias`. A post-step vector of norm < 1e-14 keeps the normalized
/// pre-step direction and sets `degenerate`.
ModelParams projected_update(const ModelParams& params, double step_size, double next_bias,
                             const std::vector<std::vector<double>>& grad, bool* degenerate = nullptr);

/// Two-iteration projected-gradient trainer for Lcn:
/// eta = (1, k*1e3), bias schedule ((1/32)sqrt((k+d)ln(kd)/(kd)), 1e-4),
/// init variance 1/(100 k^2 d^2), data split into two halves.
TrainResult train_two_phase_lcn(const TaskSpec& spec, const Dataset& data, std::uint64_t seed);

/// Cnn variant: eta = (1, 1e3), bias schedule
/// ((1/100)sqrt(kd/((k+d)ln(kd))), 1e-4), same init variance and split.
TrainResult train_two_phase_cnn(const TaskSpec& spec, const Dataset& data, std::uint64_t seed);

TrainSchedule two_phase_lcn_schedule(const TaskSpec& spec, std::uint64_t seed);
TrainSchedule two_phase_cnn_schedule(const TaskSpec& spec, std::uint64_t seed);

/// Paper-scale sample counts for the two-phase trainers (even).
int two_phase_lcn_sample_count(const TaskSpec& spec);
int two_phase_cnn_sample_count(const TaskSpec& spec);

/// Runs `schedule.iterations` projected updates. Whole policy trains on
/// the full dataset each iteration; Halves divides the data into
/// `iterations` equal chunks (tail dropped) and uses chunk t at iteration t.
TrainResult train_generic(ModelKind kind, const TaskSpec& spec, const TrainSchedule& schedule,
                          const Dataset& data);
/// Same loop from an explicit initialization (no RNG involved).
TrainResult train_generic_from(ModelParams initial, const TaskSpec& spec,
                               const TrainSchedule& schedule, const Dataset& data);

struct GridSearchResult {
  TrainResult best;
  double selected_lr = 0.0;
  double selected_bias = 0.0;
  double best_test_error = 0.0;
  std::vector<double> cell_test_errors;  // row-major over (lr, bias)
};

/// Trains one model per (lr, bias) grid cell with constant schedules of
/// length `iterations` (early stop on train-loss plateau) and returns the
/// model with the lowest test error; ties broken by smaller lr, then
/// smaller bias. All cells share one derived init seed.
GridSearchResult grid_search_train(ModelKind kind, const TaskSpec& spec, const Dataset& train_data,
                                   const Dataset& test_data, const std::vector<double>& weight_lrs,
                                   const std::vector<double>& bias_grid, int iterations,
                                   std::uint64_t seed);

/// Per-node cosine between each weight vector and the planted signal
/// (patch-1 mean direction for Fcn nodes).
std::vector<double> alignment(const ModelParams& params, const TaskSpec& spec);

std::string train_result_to_json(const TrainResult& result);

}  // namespace dsd
