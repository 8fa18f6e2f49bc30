#include "dsd/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace dsd {

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void normalize_in_place(std::vector<double>& v) {
  const double n = norm2(v);
  if (n < 1e-14) throw std::invalid_argument("normalize: zero vector");
  for (double& x : v) x /= n;
}

Dataset slice(const Dataset& data, std::size_t begin, std::size_t count) {
  Dataset out;
  out.provenance = data.provenance;
  out.samples.assign(data.samples.begin() + begin, data.samples.begin() + begin + count);
  return out;
}

}  // namespace

void validate(const TrainSchedule& schedule) {
  if (schedule.iterations < 0) throw std::invalid_argument("TrainSchedule: negative iterations");
  if (static_cast<int>(schedule.step_sizes.size()) != schedule.iterations ||
      static_cast<int>(schedule.biases.size()) != schedule.iterations)
    throw std::invalid_argument("TrainSchedule: step_sizes/biases length must equal iterations");
  for (double b : schedule.biases)
    if (b < 0.0) throw std::invalid_argument("TrainSchedule: biases must be >= 0");
  if (schedule.init_variance <= 0.0)
    throw std::invalid_argument("TrainSchedule: init variance must be > 0");
}

ModelParams init_params(ModelKind kind, const TaskSpec& spec, double variance, Rng& rng) {
  if (variance <= 0.0) throw std::invalid_argument("init_params: variance must be > 0");
  const int k = spec.shape.num_patches;
  const int d = spec.shape.patch_dim;
  ModelParams params;
  params.kind = kind;
  params.shape = spec.shape;
  params.bias = 0.0;
  const std::size_t nodes = kind == ModelKind::Cnn ? 1 : static_cast<std::size_t>(k);
  const std::size_t dim = kind == ModelKind::Fcn ? static_cast<std::size_t>(k) * d
                                                 : static_cast<std::size_t>(d);
  std::normal_distribution<double> gauss(0.0, std::sqrt(variance));
  params.weights.resize(nodes);
  for (auto& w : params.weights) {
    w.resize(dim);
    for (double& v : w) v = gauss(rng);
  }
  return params;
}

ModelParams projected_update(const ModelParams& params, double step_size, double next_bias,
                             const std::vector<std::vector<double>>& grad, bool* degenerate) {
  if (next_bias < 0.0) throw std::invalid_argument("projected_update: bias must be >= 0");
  if (grad.size() != params.weights.size())
    throw std::invalid_argument("projected_update: gradient layout mismatch");
  ModelParams out = params;
  out.bias = next_bias;
  for (std::size_t i = 0; i < out.weights.size(); ++i) {
    if (grad[i].size() != out.weights[i].size())
      throw std::invalid_argument("projected_update: gradient layout mismatch");
    std::vector<double> stepped = out.weights[i];
    for (std::size_t c = 0; c < stepped.size(); ++c) stepped[c] -= step_size * grad[i][c];
    const double n = norm2(stepped);
    if (n < 1e-14) {
      // Degenerate step; keep the pre-step direction instead of crashing a sweep.
      if (degenerate) *degenerate = true;
      normalize_in_place(out.weights[i]);
    } else {
      for (double& v : stepped) v /= n;
      out.weights[i] = std::move(stepped);
    }
  }
  return out;
}

std::vector<double> alignment(const ModelParams& params, const TaskSpec& spec) {
  std::vector<double> target;
  if (params.kind == ModelKind::Fcn)
    target = mu_vector(spec, 0);
  else
    target = spec.signal;
  std::vector<double> cosines;
  cosines.reserve(params.weights.size());
  for (const auto& w : params.weights) {
    const double n = norm2(w);
    double dot = 0.0;
    for (std::size_t c = 0; c < w.size(); ++c) dot += w[c] * target[c];
    cosines.push_back(n < 1e-300 ? 0.0 : dot / n);
  }
  return cosines;
}

TrainResult train_generic_from(ModelParams initial, const TaskSpec& spec,
                               const TrainSchedule& schedule, const Dataset& data) {
  validate(schedule);
  validate_dimensions(initial);
  TrainResult result;
  result.schedule = schedule;
  result.seed = schedule.seed;

  const int t_total = schedule.iterations;
  std::size_t chunk = data.samples.size();
  if (schedule.split_policy == SplitPolicy::Halves && t_total > 0) {
    chunk = data.samples.size() / static_cast<std::size_t>(t_total);
    if (chunk == 0) throw std::invalid_argument("train: dataset too small to split");
  }

  ModelParams params = std::move(initial);
  double bias_in_effect = 0.0;
  params.bias = bias_in_effect;
  Dataset chunk_data;
  for (int t = 0; t < t_total; ++t) {
    const bool halves = schedule.split_policy == SplitPolicy::Halves;
    if (halves) chunk_data = slice(data, static_cast<std::size_t>(t) * chunk, chunk);
    const Dataset& iter_data = halves ? chunk_data : data;
    params.bias = bias_in_effect;
    const auto grad = grad_loss(params, iter_data);
    bool degenerate = false;
    params = projected_update(params, schedule.step_sizes[t], schedule.biases[t], grad, &degenerate);
    result.degenerate_update = result.degenerate_update || degenerate;
    bias_in_effect = schedule.biases[t];

    result.alignment_per_iter.push_back(alignment(params, spec));
    result.loss_per_iter.push_back(empirical_loss(params, iter_data));
    result.iterations_run = t + 1;

    if (schedule.early_stop && t + 1 >= schedule.early_stop_window + 1) {
      const double then = result.loss_per_iter[t - schedule.early_stop_window];
      const double now = result.loss_per_iter[t];
      if (then - now < schedule.early_stop_rel_tol * std::max(then, 1e-12)) break;
    }
  }
  result.params = std::move(params);
  return result;
}

TrainResult train_generic(ModelKind kind, const TaskSpec& spec, const TrainSchedule& schedule,
                          const Dataset& data) {
  validate(schedule);
  Rng rng(schedule.seed);
  ModelParams initial = init_params(kind, spec, schedule.init_variance, rng);
  if (schedule.normalize_init)
    for (auto& w : initial.weights) normalize_in_place(w);
  return train_generic_from(std::move(initial), spec, schedule, data);
}

namespace {

TrainSchedule two_phase_schedule(const TaskSpec& spec, std::uint64_t seed, double eta2, double b1) {
  const int k = spec.shape.num_patches;
  const int d = spec.shape.patch_dim;
  TrainSchedule s;
  s.iterations = 2;
  s.step_sizes = {1.0, eta2};
  s.biases = {b1, 1e-4};
  s.init_variance = 1.0 / (100.0 * static_cast<double>(k) * k * d * d);
  s.split_policy = SplitPolicy::Halves;
  s.seed = seed;
  return s;
}

TrainResult run_two_phase(ModelKind kind, const TaskSpec& spec, const Dataset& data,
                          const TrainSchedule& schedule) {
  if (data.samples.size() < 2 || data.samples.size() % 2 != 0)
    throw std::invalid_argument("two-phase trainer: dataset size must be even and >= 2");
  return train_generic(kind, spec, schedule, data);
}

}  // namespace

TrainSchedule two_phase_lcn_schedule(const TaskSpec& spec, std::uint64_t seed) {
  const double k = spec.shape.num_patches;
  const double d = spec.shape.patch_dim;
  const double b1 = std::sqrt((k + d) * std::log(k * d) / (k * d)) / 32.0;
  return two_phase_schedule(spec, seed, k * 1e3, b1);
}

TrainSchedule two_phase_cnn_schedule(const TaskSpec& spec, std::uint64_t seed) {
  const double k = spec.shape.num_patches;
  const double d = spec.shape.patch_dim;
  const double b1 = std::sqrt(k * d / ((k + d) * std::log(k * d))) / 100.0;
  return two_phase_schedule(spec, seed, 1e3, b1);
}

int two_phase_lcn_sample_count(const TaskSpec& spec) {
  const double k = spec.shape.num_patches;
  const double d = spec.shape.patch_dim;
  const double n = std::max(2.0 * spec.sigma * spec.sigma * k * (k + d) * std::log(k * d),
                            80.0 * k * std::log(k * d));
  int rounded = static_cast<int>(std::ceil(n));
  return rounded % 2 == 0 ? rounded : rounded + 1;
}

int two_phase_cnn_sample_count(const TaskSpec& spec) {
  const double k = spec.shape.num_patches;
  const double d = spec.shape.patch_dim;
  const double n =
      std::max(2.0 * spec.sigma * spec.sigma * (k + d) * std::log(k * d), 10.0);
  int rounded = static_cast<int>(std::ceil(n));
  return rounded % 2 == 0 ? rounded : rounded + 1;
}

TrainResult train_two_phase_lcn(const TaskSpec& spec, const Dataset& data, std::uint64_t seed) {
  return run_two_phase(ModelKind::Lcn, spec, data, two_phase_lcn_schedule(spec, seed));
}

TrainResult train_two_phase_cnn(const TaskSpec& spec, const Dataset& data, std::uint64_t seed) {
  return run_two_phase(ModelKind::Cnn, spec, data, two_phase_cnn_schedule(spec, seed));
}

GridSearchResult grid_search_train(ModelKind kind, const TaskSpec& spec, const Dataset& train_data,
                                   const Dataset& test_data, const std::vector<double>& weight_lrs,
                                   const std::vector<double>& bias_grid, int iterations,
                                   std::uint64_t seed) {
  if (weight_lrs.empty() || bias_grid.empty())
    throw std::invalid_argument("grid_search_train: empty grid");
  const int k = spec.shape.num_patches;
  const int d = spec.shape.patch_dim;

  GridSearchResult result;
  result.cell_test_errors.reserve(weight_lrs.size() * bias_grid.size());
  bool have_best = false;
  for (double lr : weight_lrs) {
    for (double bias : bias_grid) {
      TrainSchedule s;
      s.iterations = iterations;
      s.step_sizes.assign(iterations, lr);
      s.biases.assign(iterations, bias);
      if (kind == ModelKind::Fcn) {
        s.init_variance = 1.0 / (static_cast<double>(k) * d);
        s.normalize_init = true;
      } else {
        s.init_variance = 1.0 / (100.0 * static_cast<double>(k) * k * d * d);
      }
      s.split_policy = SplitPolicy::Whole;
      s.seed = derive_seed(seed, "grid-init");
      s.early_stop = true;
      TrainResult trained = train_generic(kind, spec, s, train_data);
      const double err = empirical_loss(trained.params, test_data);
      result.cell_test_errors.push_back(err);
      const bool wins =
          !have_best || err < result.best_test_error ||
          (err == result.best_test_error &&
           (lr < result.selected_lr ||
            (lr == result.selected_lr && bias < result.selected_bias)));
      if (wins) {
        have_best = true;
        result.best = std::move(trained);
        result.best_test_error = err;
        result.selected_lr = lr;
        result.selected_bias = bias;
      }
    }
  }
  return result;
}

std::string train_result_to_json(const TrainResult& result) {
  nlohmann::json j;
  j["params"] = nlohmann::json::parse(params_to_json(result.params));
  j["alignment_per_iter"] = result.alignment_per_iter;
  j["loss_per_iter"] = result.loss_per_iter;
  j["iterations_run"] = result.iterations_run;
  j["seed"] = result.seed;
  j["degenerate_update"] = result.degenerate_update;
  nlohmann::json sched;
  sched["iterations"] = result.schedule.iterations;
  sched["step_sizes"] = result.schedule.step_sizes;
  sched["biases"] = result.schedule.biases;
  sched["init_variance"] = result.schedule.init_variance;
  sched["split_policy"] = result.schedule.split_policy == SplitPolicy::Halves ? "halves" : "whole";
  sched["seed"] = result.schedule.seed;
  j["schedule"] = sched;
  return j.dump();
}

}  // namespace dsd
