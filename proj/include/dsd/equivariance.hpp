#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dsd/training.hpp"

namespace dsd {

/// Parameter-space counterpart of an input transform. The induced map is
/// orthogonal on the stacked parameters, so it preserves weight norms:
///   Fcn: each node weight gets the full transform applied;
///   Lcn: node i's weight becomes blocks[i] * w[perm[i]] (node relabeling
///        mirrors the patch permutation);
///   Cnn: the shared weight gets the tied block (tied transforms only).
ModelParams lift(const PatchTransform& t, const ModelParams& params);

/// Dense-orthogonal variant for Fcn against the full orthogonal group,
/// which has no patch structure. `dense` is a row-major kd x kd matrix.
ModelParams lift_dense_fcn(const std::vector<double>& dense, const ModelParams& params);
std::vector<double> apply_dense(const std::vector<double>& dense, std::span<const double> x,
                                int dim);

struct CheckReport {
  bool pass = false;
  double max_residual = 0.0;
  std::vector<double> p_values;  // statistical checks only
  std::string config;            // human-readable test configuration
};

/// forward(params, x) == forward(lift(T, params), T.apply(x)) on every
/// test vector, to 1e-9.
CheckReport check_model_equivariance(const ModelParams& params, const PatchTransform& t,
                                     const std::vector<std::vector<double>>& test_vectors);
/// Same identity with an explicitly supplied lifted parameter set (used to
/// build negative controls with a deliberately wrong lift).
CheckReport check_model_equivariance_with(const ModelParams& params,
                                          const ModelParams& lifted_params,
                                          const PatchTransform& t,
                                          const std::vector<std::vector<double>>& test_vectors);

using UpdateFn = std::function<ModelParams(const ModelParams&, const Dataset&)>;

/// lift(T, F(v, S)) == F(lift(T, v), T o S) component-wise to 1e-8, for a
/// single update function F.
CheckReport check_update_equivariance(const UpdateFn& update, const ModelParams& params,
                                      const PatchTransform& t, const Dataset& data,
                                      double tolerance = 1e-8);

/// One projected-gradient update as an UpdateFn: gradient with
/// `bias_in_effect`, step `step_size`, install `next_bias`.
UpdateFn projected_update_fn(double step_size, double bias_in_effect, double next_bias);

using InitSampler = std::function<ModelParams(Rng&)>;

/// Kolmogorov-Smirnov comparison of raw vs lifted initializations on
/// `num_projections` fixed random directions (Bonferroni-corrected level).
CheckReport check_init_invariance(const InitSampler& sampler, const PatchTransform& t,
                                  int n_draws, double level, std::uint64_t seed,
                                  int num_projections = 5);

using TrainerFn =
    std::function<ModelParams(const TaskSpec&, const Dataset&, const ModelParams& init)>;

/// Risk invariance over coupled replicates: arm one trains on S_i from the
/// base distribution and tests on it; arm two trains on T o S_i from
/// lift-coupled initializations and tests on the transformed test set.
/// For an equivariant trainer the paired risks agree to fp roundoff; the
/// report carries both the paired max deviation and a KS p-value.
CheckReport check_risk_invariance(const TrainerFn& trainer, ModelKind kind, const TaskSpec& spec,
                                  const PatchTransform& t, int replicates, int n_train,
                                  int n_test, std::uint64_t seed, double paired_tolerance = 1e-9);

}  // namespace dsd
