#pragma once

#include <span>
#include <string>
#include <vector>

#include "dsd/datagen.hpp"

namespace dsd {

enum class ModelKind { Fcn, Lcn, Cnn };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// One-hidden-layer model with the LSA activation. Weight layout by kind:
///   Fcn: k vectors in R^{kd}   (per-node full-input weights)
///   Lcn: k vectors in R^d      (per-node per-patch weights)
///   Cnn: 1 vector in R^d       (shared across patches)
/// The bias is schedule-controlled and never trained by gradient.
struct ModelParams {
  ModelKind kind = ModelKind::Cnn;
  PatchShape shape;
  std::vector<std::vector<double>> weights;
  double bias = 0.0;
};

void validate_dimensions(const ModelParams& params);

/// Soft-thresholding activation: ReLU(x-b) - ReLU(-x-b); zero on [-b, b].
double lsa(double x, double b);
/// A.e. derivative of lsa: 1 when |x| > b, else 0 (0 at the kinks).
double lsa_deriv(double x, double b);

double forward(const ModelParams& params, std::span<const double> x);
/// Mean squared error of forward against labels.
double empirical_loss(const ModelParams& params, const Dataset& data);
/// Analytic gradient of empirical_loss in the weight layout of `params`
/// (bias not differentiated).
std::vector<std::vector<double>> grad_loss(const ModelParams& params, const Dataset& data);

struct RiskEstimate {
  double mean = 0.0;
  double standard_error = 0.0;
};

struct Distribution {
  BaseDistribution base = BaseDistribution::dsd();
  const PatchTransform* transform = nullptr;  // optional, non-owning
};

/// Monte Carlo estimate of E[(y - f(x))^2] with its standard error.
RiskEstimate risk_mc(const ModelParams& params, const TaskSpec& spec,
                     const Distribution& dist, int n_test, Rng& rng);

std::string params_to_json(const ModelParams& params);
ModelParams params_from_json(const std::string& text);

}  // namespace dsd
