#include "dsd/models.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace dsd {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Fcn: return "FCN";
    case ModelKind::Lcn: return "LCN";
    case ModelKind::Cnn: return "CNN";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "FCN" || name == "fcn") return ModelKind::Fcn;
  if (name == "LCN" || name == "lcn") return ModelKind::Lcn;
  if (name == "CNN" || name == "cnn") return ModelKind::Cnn;
  throw std::invalid_argument("unknown model kind: " + name);
}

void validate_dimensions(const ModelParams& params) {
  const int k = params.shape.num_patches;
  const int d = params.shape.patch_dim;
  const std::size_t want_nodes = params.kind == ModelKind::Cnn ? 1 : static_cast<std::size_t>(k);
  const std::size_t want_dim =
      params.kind == ModelKind::Fcn ? static_cast<std::size_t>(k) * d : static_cast<std::size_t>(d);
  if (params.weights.size() != want_nodes)
    throw std::invalid_argument("ModelParams: wrong number of weight vectors");
  for (const auto& w : params.weights)
    if (w.size() != want_dim) throw std::invalid_argument("ModelParams: wrong weight dimension");
  if (params.bias < 0.0) throw std::invalid_argument("ModelParams: bias must be >= 0");
}

double lsa(double x, double b) {
  if (b < 0.0) throw std::invalid_argument("lsa: bias must be >= 0");
  if (x > b) return x - b;
  if (x < -b) return x + b;
  return 0.0;
}

double lsa_deriv(double x, double b) {
  if (b < 0.0) throw std::invalid_argument("lsa_deriv: bias must be >= 0");
  return std::abs(x) > b ? 1.0 : 0.0;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double forward(const ModelParams& params, std::span<const double> x) {
  const int k = params.shape.num_patches;
  const int d = params.shape.patch_dim;
  if (static_cast<int>(x.size()) != k * d) throw std::invalid_argument("forward: input length mismatch");
  double out = 0.0;
  switch (params.kind) {
    case ModelKind::Fcn:
      for (int i = 0; i < k; ++i) out += lsa(dot(params.weights[i], x), params.bias);
      break;
    case ModelKind::Lcn:
      for (int i = 0; i < k; ++i)
        out += lsa(dot(params.weights[i], x.subspan(static_cast<std::size_t>(i) * d, d)), params.bias);
      break;
    case ModelKind::Cnn:
      for (int i = 0; i < k; ++i)
        out += lsa(dot(params.weights[0], x.subspan(static_cast<std::size_t>(i) * d, d)), params.bias);
      break;
  }
  return out;
}

double empirical_loss(const ModelParams& params, const Dataset& data) {
  if (data.samples.empty()) throw std::invalid_argument("empirical_loss: empty dataset");
  double s = 0.0;
  for (const auto& sample : data.samples) {
    const double r = static_cast<double>(sample.label) - forward(params, sample.x);
    s += r * r;
  }
  return s / static_cast<double>(data.samples.size());
}

std::vector<std::vector<double>> grad_loss(const ModelParams& params, const Dataset& data) {
  validate_dimensions(params);
  if (data.samples.empty()) throw std::invalid_argument("grad_loss: empty dataset");
  const int k = params.shape.num_patches;
  const int d = params.shape.patch_dim;
  const double b = params.bias;
  const double m = static_cast<double>(data.samples.size());

  std::vector<std::vector<double>> grad(params.weights.size());
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i].assign(params.weights[i].size(), 0.0);

  std::vector<double> pre(k);
  for (const auto& sample : data.samples) {
    std::span<const double> x(sample.x);
    double f = 0.0;
    for (int i = 0; i < k; ++i) {
      const auto& w = params.kind == ModelKind::Cnn ? params.weights[0] : params.weights[i];
      pre[i] = params.kind == ModelKind::Fcn
                   ? dot(w, x)
                   : dot(w, x.subspan(static_cast<std::size_t>(i) * d, d));
      f += lsa(pre[i], b);
    }
    const double scale = -2.0 / m * (static_cast<double>(sample.label) - f);
    for (int i = 0; i < k; ++i) {
      if (lsa_deriv(pre[i], b) == 0.0) continue;
      auto& g = params.kind == ModelKind::Cnn ? grad[0] : grad[i];
      const double* src = params.kind == ModelKind::Fcn
                              ? x.data()
                              : x.data() + static_cast<std::size_t>(i) * d;
      for (std::size_t c = 0; c < g.size(); ++c) g[c] += scale * src[c];
    }
  }
  return grad;
}

RiskEstimate risk_mc(const ModelParams& params, const TaskSpec& spec,
                     const Distribution& dist, int n_test, Rng& rng) {
  if (n_test < 1) throw std::invalid_argument("risk_mc: n_test must be >= 1");
  Dataset data;
  if (dist.transform != nullptr)
    data = sample_transformed(spec, dist.base, *dist.transform, n_test, rng);
  else if (dist.base.is_ssd)
    data = sample_ssd(spec, dist.base.ssd_patch, n_test, rng);
  else
    data = sample_dsd(spec, n_test, rng);

  double s = 0.0, ss = 0.0;
  for (const auto& sample : data.samples) {
    const double r = static_cast<double>(sample.label) - forward(params, sample.x);
    const double e = r * r;
    s += e;
    ss += e * e;
  }
  const double n = static_cast<double>(n_test);
  const double mean = s / n;
  const double var = n > 1 ? std::max(0.0, (ss - n * mean * mean) / (n - 1.0)) : 0.0;
  return {mean, std::sqrt(var / n)};
}

std::string params_to_json(const ModelParams& params) {
  nlohmann::json j;
  j["kind"] = to_string(params.kind);
  j["k"] = params.shape.num_patches;
  j["d"] = params.shape.patch_dim;
  j["weights"] = params.weights;
  j["bias"] = params.bias;
  return j.dump();
}

ModelParams params_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ModelParams p;
  p.kind = model_kind_from_string(j.at("kind").get<std::string>());
  p.shape = make_shape(j.at("k").get<int>(), j.at("d").get<int>());
  p.weights = j.at("weights").get<std::vector<std::vector<double>>>();
  p.bias = j.at("bias").get<double>();
  validate_dimensions(p);
  return p;
}

}  // namespace dsd
