#include "dsd/equivariance.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dsd/stats.hpp"

namespace dsd {

namespace {

std::vector<double> block_times(const std::vector<double>& block, const std::vector<double>& w,
                                int dim) {
  std::vector<double> out(w.size());
  for (int r = 0; r < dim; ++r) {
    double s = 0.0;
    const double* row = block.data() + static_cast<std::size_t>(r) * dim;
    for (int c = 0; c < dim; ++c) s += row[c] * w[c];
    out[r] = s;
  }
  return out;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> flat;
  for (const auto& w : p.weights) flat.insert(flat.end(), w.begin(), w.end());
  return flat;
}

}  // namespace

ModelParams lift(const PatchTransform& t, const ModelParams& params) {
  validate_dimensions(params);
  if (!(t.shape == params.shape)) throw std::invalid_argument("lift: shape mismatch");
  const int k = t.shape.num_patches;
  const int d = t.shape.patch_dim;
  ModelParams out = params;
  switch (params.kind) {
    case ModelKind::Fcn:
      for (int i = 0; i < k; ++i) out.weights[i] = t.apply(params.weights[i]);
      break;
    case ModelKind::Lcn:
      for (int i = 0; i < k; ++i)
        out.weights[i] = block_times(t.blocks[i], params.weights[t.perm[i]], d);
      break;
    case ModelKind::Cnn:
      if (!t.tied)
        throw std::invalid_argument("lift: Cnn requires a tied transform");
      out.weights[0] = block_times(t.blocks[0], params.weights[0], d);
      break;
  }
  return out;
}

std::vector<double> apply_dense(const std::vector<double>& dense, std::span<const double> x,
                                int dim) {
  if (static_cast<int>(x.size()) != dim || static_cast<int>(dense.size()) != dim * dim)
    throw std::invalid_argument("apply_dense: dimension mismatch");
  std::vector<double> out(x.size());
  for (int r = 0; r < dim; ++r) {
    double s = 0.0;
    const double* row = dense.data() + static_cast<std::size_t>(r) * dim;
    for (int c = 0; c < dim; ++c) s += row[c] * x[c];
    out[r] = s;
  }
  return out;
}

ModelParams lift_dense_fcn(const std::vector<double>& dense, const ModelParams& params) {
  if (params.kind != ModelKind::Fcn)
    throw std::invalid_argument("lift_dense_fcn: expects Fcn params");
  ModelParams out = params;
  const int dim = params.shape.ambient();
  for (auto& w : out.weights) w = apply_dense(dense, w, dim);
  return out;
}

CheckReport check_model_equivariance_with(const ModelParams& params,
                                          const ModelParams& lifted_params,
                                          const PatchTransform& t,
                                          const std::vector<std::vector<double>>& test_vectors) {
  CheckReport report;
  for (const auto& x : test_vectors) {
    const double lhs = forward(params, x);
    const double rhs = forward(lifted_params, t.apply(x));
    report.max_residual = std::max(report.max_residual, std::abs(lhs - rhs));
  }
  report.pass = report.max_residual <= 1e-9;
  std::ostringstream cfg;
  cfg << "model-equivariance: " << test_vectors.size() << " vectors, tol 1e-9";
  report.config = cfg.str();
  return report;
}

CheckReport check_model_equivariance(const ModelParams& params, const PatchTransform& t,
                                     const std::vector<std::vector<double>>& test_vectors) {
  return check_model_equivariance_with(params, lift(t, params), t, test_vectors);
}

UpdateFn projected_update_fn(double step_size, double bias_in_effect, double next_bias) {
  return [=](const ModelParams& params, const Dataset& data) {
    ModelParams p = params;
    p.bias = bias_in_effect;
    const auto grad = grad_loss(p, data);
    return projected_update(p, step_size, next_bias, grad);
  };
}

CheckReport check_update_equivariance(const UpdateFn& update, const ModelParams& params,
                                      const PatchTransform& t, const Dataset& data,
                                      double tolerance) {
  Dataset transformed = data;
  for (auto& s : transformed.samples) s.x = t.apply(s.x);

  const ModelParams left = lift(t, update(params, data));
  const ModelParams right = update(lift(t, params), transformed);

  CheckReport report;
  const auto lf = flatten(left);
  const auto rf = flatten(right);
  for (std::size_t i = 0; i < lf.size(); ++i)
    report.max_residual = std::max(report.max_residual, std::abs(lf[i] - rf[i]));
  report.max_residual = std::max(report.max_residual, std::abs(left.bias - right.bias));
  report.pass = report.max_residual <= tolerance;
  std::ostringstream cfg;
  cfg << "update-equivariance: n=" << data.samples.size() << ", tol " << tolerance;
  report.config = cfg.str();
  return report;
}

CheckReport check_init_invariance(const InitSampler& sampler, const PatchTransform& t,
                                  int n_draws, double level, std::uint64_t seed,
                                  int num_projections) {
  if (n_draws < 10) throw std::invalid_argument("check_init_invariance: need >= 10 draws");
  Rng rng_a(derive_seed(seed, "init-raw"));
  Rng rng_b(derive_seed(seed, "init-lifted"));
  Rng rng_dir(derive_seed(seed, "init-projections"));

  std::vector<std::vector<double>> raw, lifted;
  raw.reserve(n_draws);
  lifted.reserve(n_draws);
  for (int i = 0; i < n_draws; ++i) raw.push_back(flatten(sampler(rng_a)));
  for (int i = 0; i < n_draws; ++i) lifted.push_back(flatten(lift(t, sampler(rng_b))));

  const std::size_t dim = raw.front().size();
  std::normal_distribution<double> gauss(0.0, 1.0);
  CheckReport report;
  report.pass = true;
  for (int p = 0; p < num_projections; ++p) {
    std::vector<double> dir(dim);
    double nrm = 0.0;
    for (auto& v : dir) {
      v = gauss(rng_dir);
      nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    for (auto& v : dir) v /= nrm;

    auto project = [&](const std::vector<std::vector<double>>& xs) {
      std::vector<double> out(xs.size());
      for (std::size_t i = 0; i < xs.size(); ++i) {
        double s = 0.0;
        for (std::size_t c = 0; c < dim; ++c) s += xs[i][c] * dir[c];
        out[i] = s;
      }
      return out;
    };
    const auto pa = project(raw);
    const auto pb = project(lifted);
    const auto ks = stats::ks_two_sample(pa, pb);
    report.p_values.push_back(ks.p_value);
    if (ks.p_value < level / num_projections) report.pass = false;
  }
  std::ostringstream cfg;
  cfg << "init-invariance: " << n_draws << " draws, " << num_projections
      << " projections, KS level " << level << " (Bonferroni)";
  report.config = cfg.str();
  return report;
}

CheckReport check_risk_invariance(const TrainerFn& trainer, ModelKind kind, const TaskSpec& spec,
                                  const PatchTransform& t, int replicates, int n_train,
                                  int n_test, std::uint64_t seed, double paired_tolerance) {
  if (replicates < 2) throw std::invalid_argument("check_risk_invariance: need >= 2 replicates");
  const double init_variance =
      kind == ModelKind::Fcn ? 1.0 / spec.shape.ambient()
                             : 1.0 / (100.0 * std::pow(spec.shape.num_patches, 2.0) *
                                      std::pow(spec.shape.patch_dim, 2.0));
  std::vector<double> risks_base(replicates), risks_transformed(replicates);
  double paired_dev = 0.0;
  for (int r = 0; r < replicates; ++r) {
    Rng rng_init(derive_seed(seed, "risk-init", r));
    Rng rng_data(derive_seed(seed, "risk-data", r));
    Rng rng_test(derive_seed(seed, "risk-test", r));
    const ModelParams init = init_params(kind, spec, init_variance, rng_init);
    const Dataset train = sample_dsd(spec, n_train, rng_data);
    const Dataset test = sample_dsd(spec, n_test, rng_test);

    Dataset train_t = train;
    for (auto& s : train_t.samples) s.x = t.apply(s.x);
    Dataset test_t = test;
    for (auto& s : test_t.samples) s.x = t.apply(s.x);

    const ModelParams f = trainer(spec, train, init);
    const ModelParams g = trainer(spec, train_t, lift(t, init));
    risks_base[r] = empirical_loss(f, test);
    risks_transformed[r] = empirical_loss(g, test_t);
    paired_dev = std::max(paired_dev, std::abs(risks_base[r] - risks_transformed[r]));
  }
  const auto ks = stats::ks_two_sample(risks_base, risks_transformed);
  CheckReport report;
  report.max_residual = paired_dev;
  report.p_values.push_back(ks.p_value);
  report.pass = ks.p_value >= 0.01 && paired_dev <= paired_tolerance;
  std::ostringstream cfg;
  cfg << "risk-invariance: " << replicates << " replicates, n_train=" << n_train
      << ", n_test=" << n_test
      << "; data/init/test seeds coupled across arms (init coupled through the lift), "
      << "KS level 0.01 plus paired deviation tol " << paired_tolerance;
  report.config = cfg.str();
  return report;
}

}  // namespace dsd
