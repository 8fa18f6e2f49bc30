#include "dsd/theory.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dsd::theory {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double kl_transformed_ssd(std::span<const double> u_mean, std::span<const double> v_mean,
                          double sigma) {
  if (u_mean.size() != v_mean.size())
    throw std::invalid_argument("kl_transformed_ssd: dimension mismatch");
  if (sigma <= 0.0) throw std::invalid_argument("kl_transformed_ssd: sigma must be > 0");
  if (std::abs(norm2(u_mean) - 1.0) > 1e-9 || std::abs(norm2(v_mean) - 1.0) > 1e-9)
    throw std::invalid_argument("kl_transformed_ssd: means must be unit norm to 1e-9");
  // (1 - cos)/sigma^2 evaluated as |u - v|^2 / (2 sigma^2): identical for
  // unit means, and exact zero for coincident ones.
  double diff2 = 0.0;
  for (std::size_t i = 0; i < u_mean.size(); ++i)
    diff2 += (u_mean[i] - v_mean[i]) * (u_mean[i] - v_mean[i]);
  return diff2 / (2.0 * sigma * sigma);
}

double fano_lower_bound(const FanoInputs& in) {
  if (in.separation <= 0.0) throw std::invalid_argument("fano: separation must be > 0");
  if (in.kl_bound < 0.0) throw std::invalid_argument("fano: KL bound must be >= 0");
  if (in.packing_size < 2.0) throw std::invalid_argument("fano: packing size must be >= 2");
  if (in.sample_count < 0.0) throw std::invalid_argument("fano: sample count must be >= 0");
  return in.separation *
         (1.0 - (in.sample_count * in.kl_bound + std::log(2.0)) / std::log(in.packing_size));
}

PackingSet gv_packing(int ambient_dim, double dot_bound, std::int64_t max_attempts, Rng& rng) {
  if (ambient_dim < 2 || ambient_dim % 2 != 0)
    throw std::invalid_argument("gv_packing: ambient dimension must be even and >= 2");
  if (dot_bound < 2.0 / ambient_dim || dot_bound > 1.0)
    throw std::invalid_argument("gv_packing: dot bound must be in [2/N, 1]");
  if (max_attempts < 1) throw std::invalid_argument("gv_packing: max_attempts must be >= 1");

  const int n = ambient_dim;
  const int sparsity = n / 2;
  PackingSet packing;
  packing.ambient_dim = n;
  packing.dot_bound = dot_bound;
  packing.target_log_size =
      (dot_bound * std::log(dot_bound) - dot_bound + 1.0) * static_cast<double>(n);

  std::vector<std::vector<std::uint64_t>> masks;  // kept supports as bitsets
  const int words = (n + 63) / 64;
  std::vector<int> indices(n);
  std::iota(indices.begin(), indices.end(), 0);

  std::int64_t consecutive_rejections = 0;
  while (consecutive_rejections < max_attempts) {
    ++packing.attempts_used;
    // Partial Fisher-Yates: first `sparsity` entries become the support.
    for (int i = 0; i < sparsity; ++i) {
      std::uniform_int_distribution<int> pick(i, n - 1);
      std::swap(indices[i], indices[pick(rng)]);
    }
    std::vector<std::uint64_t> mask(words, 0);
    for (int i = 0; i < sparsity; ++i)
      mask[indices[i] / 64] |= (std::uint64_t{1} << (indices[i] % 64));

    bool ok = true;
    for (const auto& kept : masks) {
      int overlap = 0;
      for (int w = 0; w < words; ++w) overlap += std::popcount(mask[w] & kept[w]);
      if (static_cast<double>(overlap) / sparsity >= dot_bound) {
        ok = false;
        break;
      }
    }
    if (!ok) {
      ++consecutive_rejections;
      continue;
    }
    consecutive_rejections = 0;
    masks.push_back(std::move(mask));
  }

  const double value = 1.0 / std::sqrt(static_cast<double>(sparsity));
  packing.vectors.reserve(masks.size());
  for (const auto& mask : masks) {
    std::vector<double> v(n, 0.0);
    for (int i = 0; i < n; ++i)
      if (mask[i / 64] & (std::uint64_t{1} << (i % 64))) v[i] = value;
    packing.vectors.push_back(std::move(v));
  }
  return packing;
}

bool packing_valid(const PackingSet& packing) {
  for (const auto& v : packing.vectors)
    if (std::abs(norm2(v) - 1.0) > 1e-12) return false;
  for (std::size_t i = 0; i < packing.vectors.size(); ++i)
    for (std::size_t j = i + 1; j < packing.vectors.size(); ++j)
      if (dot(packing.vectors[i], packing.vectors[j]) >= packing.dot_bound) return false;
  return true;
}

double lsa_mean(double mu, double sigma, double b) {
  if (sigma <= 0.0) throw std::invalid_argument("lsa_mean: sigma must be > 0");
  if (b < 0.0) throw std::invalid_argument("lsa_mean: bias must be >= 0");
  const double eta1 = sigma * normal_pdf((mu - b) / sigma);
  const double eta2 = sigma * normal_pdf((mu + b) / sigma);
  return (mu - b) * (1.0 - normal_cdf(-(mu - b) / sigma)) + eta1 +
         (mu + b) * (1.0 - normal_cdf((mu + b) / sigma)) - eta2;
}

double lsa_mean_db(double mu, double sigma, double b) {
  if (sigma <= 0.0) throw std::invalid_argument("lsa_mean_db: sigma must be > 0");
  if (b < 0.0) throw std::invalid_argument("lsa_mean_db: bias must be >= 0");
  return normal_cdf((b - mu) / sigma) - normal_cdf((mu + b) / sigma);
}

double lsa_sq_mean(double mu, double sigma, double b) {
  if (sigma <= 0.0) throw std::invalid_argument("lsa_sq_mean: sigma must be > 0");
  if (b < 0.0) throw std::invalid_argument("lsa_sq_mean: bias must be >= 0");
  // Positive branch: eps > z1 contributes (mu - b + sigma eps)^2.
  const double z1 = (b - mu) / sigma;
  const double q1 = 1.0 - normal_cdf(z1);
  const double pos = (mu - b) * (mu - b) * q1 + 2.0 * (mu - b) * sigma * normal_pdf(z1) +
                     sigma * sigma * (q1 + z1 * normal_pdf(z1));
  // Negative branch: eps < -z2 contributes (mu + b + sigma eps)^2.
  const double z2 = (mu + b) / sigma;
  const double p2 = normal_cdf(-z2);
  const double neg = (mu + b) * (mu + b) * p2 - 2.0 * (mu + b) * sigma * normal_pdf(z2) +
                     sigma * sigma * (p2 + z2 * normal_pdf(z2));
  return pos + neg;
}

double risk_floor(const ModelParams& lcn, std::span<const double> signal_dir) {
  if (lcn.kind != ModelKind::Lcn) throw std::invalid_argument("risk_floor: expects Lcn params");
  if (static_cast<int>(signal_dir.size()) != lcn.shape.patch_dim)
    throw std::invalid_argument("risk_floor: signal dimension mismatch");
  if (std::abs(norm2(signal_dir) - 1.0) > 1e-9)
    throw std::invalid_argument("risk_floor: signal must be unit norm");
  // ||w_1|| cos(alpha_1) is just w_1 . signal_dir.
  const double aligned = dot(lcn.weights[0], signal_dir);
  const double t = 1.0 - std::max(0.0, aligned);
  return t * t;
}

SemiMetricReport semi_metric_check(const ModelParams& lcn, std::span<const double> u,
                                   std::span<const double> v) {
  if (std::abs(dot(u, v)) >= 1e-3)
    throw std::invalid_argument("semi_metric_check: means must satisfy u.v < 1e-3");
  SemiMetricReport report;
  report.rho_u = risk_floor(lcn, u);
  report.rho_v = risk_floor(lcn, v);
  report.implication_holds = !(report.rho_u < 1e-2) || (report.rho_v > 1e-2);
  return report;
}

std::optional<int> identify_aligned_node(const ModelParams& fcn, const LabeledSample& sample) {
  if (fcn.kind != ModelKind::Fcn)
    throw std::invalid_argument("identify_aligned_node: expects Fcn params");
  validate_dimensions(fcn);
  if (sample.x.size() != fcn.weights[0].size())
    throw std::invalid_argument("identify_aligned_node: sample dimension mismatch");
  const double y = static_cast<double>(sample.label);
  for (std::size_t i = 0; i < fcn.weights.size(); ++i) {
    double pre = 0.0;
    for (std::size_t c = 0; c < sample.x.size(); ++c) pre += fcn.weights[i][c] * y * sample.x[c];
    if (lsa(pre, fcn.bias) > 0.0) return static_cast<int>(i);
  }
  return std::nullopt;
}

std::vector<double> boost_mean(const std::vector<std::vector<double>>& section_estimates) {
  if (section_estimates.empty()) throw std::invalid_argument("boost_mean: no sections");
  const std::size_t dim = section_estimates.front().size();
  std::vector<double> sum(dim, 0.0);
  for (const auto& est : section_estimates) {
    if (est.size() != dim) throw std::invalid_argument("boost_mean: dimension mismatch");
    for (std::size_t c = 0; c < dim; ++c) sum[c] += est[c];
  }
  const double n = norm2(sum);
  if (n == 0.0) {
    std::vector<double> e1(dim, 0.0);
    e1[0] = 1.0;
    return e1;
  }
  for (double& v : sum) v /= n;
  return sum;
}

}  // namespace dsd::theory
