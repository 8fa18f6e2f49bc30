#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dsd/models.hpp"
#include "dsd/rng.hpp"

namespace dsd::theory {

/// Standard normal CDF via erfc (absolute error well below 1e-12).
double normal_cdf(double x);
double normal_pdf(double x);

/// KL divergence between two transformed static-signal distributions with
/// unit mean directions u, v and shared noise sigma: (1 - u.v) / sigma^2.
double kl_transformed_ssd(std::span<const double> u_mean, std::span<const double> v_mean,
                          double sigma);

struct FanoInputs {
  double separation = 0.0;   // delta > 0
  double sample_count = 0.0; // n >= 0
  double kl_bound = 0.0;     // D >= 0
  double packing_size = 2.0; // M >= 2
};

/// delta * (1 - (n D + ln 2) / ln M); may be negative, caller clamps if desired.
double fano_lower_bound(const FanoInputs& in);

struct PackingSet {
  int ambient_dim = 0;             // N
  double dot_bound = 0.0;          // c
  std::vector<std::vector<double>> vectors;  // unit vectors, pairwise dot < c
  double target_log_size = 0.0;    // (c ln c - c + 1) N, the construction's rate
  std::int64_t attempts_used = 0;
};

/// Greedy randomized packing of the unit sphere by scaled (N/2)-sparse
/// binary vectors: draws candidates and keeps those with dot < c against
/// everything kept so far, stopping after `max_attempts` consecutive
/// rejections. Requires N even and 2/N <= c <= 1.
PackingSet gv_packing(int ambient_dim, double dot_bound, std::int64_t max_attempts, Rng& rng);

/// True when every vector is unit norm to 1e-12 and all pairwise dots are < c.
bool packing_valid(const PackingSet& packing);

/// Closed form for E[lsa(mu + sigma * eps, b)], eps ~ N(0,1).
double lsa_mean(double mu, double sigma, double b);
/// d/db of lsa_mean: Phi((b - mu)/sigma) - Phi((mu + b)/sigma).
double lsa_mean_db(double mu, double sigma, double b);
/// Closed form for E[lsa(mu + sigma * eps, b)^2].
double lsa_sq_mean(double mu, double sigma, double b);

/// Lower bound on the static-signal risk of an Lcn in terms of its first
/// node: (1 - max(0, w_1 . signal_dir))^2 in [0, 1].
double risk_floor(const ModelParams& lcn, std::span<const double> signal_dir);

struct SemiMetricReport {
  double rho_u = 0.0;
  double rho_v = 0.0;
  bool implication_holds = false;  // rho_u < 1e-2 implies rho_v > 1e-2
};

/// Checks the relaxed semi-metric property at delta = 1e-2 for two
/// near-orthogonal mean directions (u.v < 1e-3 required).
SemiMetricReport semi_metric_check(const ModelParams& lcn, std::span<const double> u,
                                   std::span<const double> v);

/// Index of the first Fcn node with lsa(w_i . (y x), b) > 0, if any.
std::optional<int> identify_aligned_node(const ModelParams& fcn, const LabeledSample& sample);

/// Aggregates per-section mean estimates (zero vector = failed section):
/// the normalized sum, or e_1 when the sum is exactly zero.
std::vector<double> boost_mean(const std::vector<std::vector<double>>& section_estimates);

}  // namespace dsd::theory
