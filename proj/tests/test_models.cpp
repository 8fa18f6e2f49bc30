#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <optional>

#include "dsd/equivariance.hpp"
#include "dsd/models.hpp"
#include "dsd/theory.hpp"

using namespace dsd;

namespace {

ModelParams random_params(ModelKind kind, PatchShape shape, double bias, Rng& rng) {
  ModelParams p;
  p.kind = kind;
  p.shape = shape;
  p.bias = bias;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t nodes = kind == ModelKind::Cnn ? 1 : shape.num_patches;
  const std::size_t dim =
      kind == ModelKind::Fcn ? static_cast<std::size_t>(shape.ambient()) : shape.patch_dim;
  p.weights.resize(nodes);
  for (auto& w : p.weights) {
    w.resize(dim);
    double nrm = 0.0;
    for (auto& v : w) {
      v = gauss(rng);
      nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    for (auto& v : w) v /= nrm;  // respect the unit-ball weight constraint
  }
  return p;
}

// Independent scalar-loop evaluation of the three model forms.
double forward_oracle(const ModelParams& p, const std::vector<double>& x) {
  const int k = p.shape.num_patches;
  const int d = p.shape.patch_dim;
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    double pre = 0.0;
    if (p.kind == ModelKind::Fcn) {
      for (int c = 0; c < k * d; ++c) pre += p.weights[i][c] * x[c];
    } else {
      const auto& w = p.kind == ModelKind::Cnn ? p.weights[0] : p.weights[i];
      for (int c = 0; c < d; ++c) pre += w[c] * x[i * d + c];
    }
    const double b = p.bias;
    total += std::max(pre - b, 0.0) - std::max(-pre - b, 0.0);
  }
  return total;
}

}  // namespace

TEST_CASE("lsa closed form") {
  SUBCASE("identity at b=0") {
    for (double x : {-3.0, -0.2, 0.0, 0.7, 11.0}) CHECK(lsa(x, 0.0) == x);
  }
  SUBCASE("dead zone") { CHECK(lsa(0.5, 1.0) == 0.0); }
  SUBCASE("two relu branches") {
    CHECK(lsa(2.0, 0.5) == 1.5);
    CHECK(lsa(-2.0, 0.5) == -1.5);
  }
  SUBCASE("negative bias rejected") { CHECK_THROWS_AS(lsa(1.0, -0.1), std::invalid_argument); }
}

TEST_CASE("lsa is odd and a shrinkage") {
  Rng rng(3);
  std::uniform_real_distribution<double> ux(-5.0, 5.0), ub(0.0, 2.0);
  for (int i = 0; i < 1000; ++i) {
    const double x = ux(rng), b = ub(rng);
    CHECK(lsa(-x, b) == -lsa(x, b));
    CHECK(std::abs(lsa(x, b)) <= std::abs(x));
    CHECK(lsa(x, b) * x >= 0.0);
  }
}

TEST_CASE("lsa_deriv") {
  CHECK(lsa_deriv(0.1, 0.0) == 1.0);
  CHECK(lsa_deriv(-7.0, 0.0) == 1.0);
  CHECK(lsa_deriv(0.3, 0.5) == 0.0);
  CHECK(lsa_deriv(0.5, 0.5) == 0.0);  // kink belongs to the dead zone
  SUBCASE("finite difference away from the kink") {
    const double h = 1e-6;
    const double fd = (lsa(2.0 + h, 0.5) - lsa(2.0 - h, 0.5)) / (2.0 * h);
    CHECK(std::abs(fd - lsa_deriv(2.0, 0.5)) <= 1e-6);
  }
}

TEST_CASE("forward on canonical cases") {
  const auto spec = make_task_spec(3, 4, 1e-12, 5);
  SUBCASE("oracle CNN on a noiseless sample is exactly the label scale") {
    ModelParams p;
    p.kind = ModelKind::Cnn;
    p.shape = spec.shape;
    p.weights = {spec.signal};
    p.bias = 0.0;
    CHECK(forward(p, mu_vector(spec, 0)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("all-zero weights give zero output") {
    ModelParams p;
    p.kind = ModelKind::Lcn;
    p.shape = spec.shape;
    p.weights.assign(3, std::vector<double>(4, 0.0));
    p.bias = 0.3;
    Rng rng(4);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> x(spec.shape.ambient());
    for (auto& v : x) v = gauss(rng);
    CHECK(forward(p, x) == 0.0);
  }
}

TEST_CASE("forward matches an independent scalar-loop oracle") {
  const auto shape = make_shape(2, 3);
  Rng rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (ModelKind kind : {ModelKind::Fcn, ModelKind::Lcn, ModelKind::Cnn}) {
    for (int trial = 0; trial < 30; ++trial) {
      const auto p = random_params(kind, shape, 0.2, rng);
      std::vector<double> x(shape.ambient());
      for (auto& v : x) v = gauss(rng);
      CHECK(forward(p, x) == doctest::Approx(forward_oracle(p, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("empirical_loss canonical cases") {
  const auto spec = make_task_spec(3, 4, 1e-12, 5);
  Rng rng(6);
  const auto data = sample_dsd(spec, 64, rng);
  SUBCASE("perfect predictor on near-noiseless data") {
    ModelParams p;
    p.kind = ModelKind::Cnn;
    p.shape = spec.shape;
    p.weights = {spec.signal};
    p.bias = 0.0;
    CHECK(empirical_loss(p, data) <= 1e-9);
  }
  SUBCASE("zero model has loss exactly 1") {
    ModelParams p;
    p.kind = ModelKind::Cnn;
    p.shape = spec.shape;
    p.weights = {std::vector<double>(4, 0.0)};
    p.bias = 0.0;
    CHECK(empirical_loss(p, data) == 1.0);
  }
}

TEST_CASE("empirical_loss matches scalar recomputation") {
  const auto spec = make_task_spec(2, 3, 0.4, 15);
  Rng rng(7);
  const auto data = sample_dsd(spec, 40, rng);
  for (ModelKind kind : {ModelKind::Fcn, ModelKind::Lcn, ModelKind::Cnn}) {
    const auto p = random_params(kind, spec.shape, 0.1, rng);
    double acc = 0.0;
    for (const auto& s : data.samples) {
      const double r = s.label - forward_oracle(p, s.x);
      acc += r * r;
    }
    CHECK(empirical_loss(p, data) == doctest::Approx(acc / 40.0).epsilon(1e-12));
  }
}

TEST_CASE("grad_loss dead zone is exactly zero") {
  const auto spec = make_task_spec(2, 3, 0.001, 25);
  Rng rng(8);
  const auto data = sample_dsd(spec, 30, rng);
  auto p = random_params(ModelKind::Lcn, spec.shape, 0.0, rng);
  for (auto& w : p.weights)
    for (auto& v : w) v *= 1e-4;  // pre-activations far inside the dead zone
  p.bias = 0.5;
  const auto g = grad_loss(p, data);
  for (const auto& gw : g)
    for (double v : gw) CHECK(v == 0.0);
}

TEST_CASE("grad_loss single-sample CNN closed form at k=1, b=0") {
  const auto spec = make_task_spec(1, 3, 0.5, 35);
  Rng rng(9);
  const auto data = sample_ssd(spec, 0, 1, rng);
  const auto p = random_params(ModelKind::Cnn, spec.shape, 0.0, rng);
  const auto g = grad_loss(p, data);
  const auto& s = data.samples.front();
  double pre = 0.0;
  for (int c = 0; c < 3; ++c) pre += p.weights[0][c] * s.x[c];
  for (int c = 0; c < 3; ++c)
    CHECK(g[0][c] == doctest::Approx(-2.0 * (s.label - pre) * s.x[c]).epsilon(1e-12));
}

namespace {

// Central finite differences of the empirical loss in every coordinate.
std::vector<std::vector<double>> fd_grad(const ModelParams& p, const Dataset& data, double h) {
  std::vector<std::vector<double>> g(p.weights.size());
  for (std::size_t i = 0; i < p.weights.size(); ++i) {
    g[i].resize(p.weights[i].size());
    for (std::size_t c = 0; c < p.weights[i].size(); ++c) {
      ModelParams hi = p, lo = p;
      hi.weights[i][c] += h;
      lo.weights[i][c] -= h;
      g[i][c] = (empirical_loss(hi, data) - empirical_loss(lo, data)) / (2.0 * h);
    }
  }
  return g;
}

// Picks a bias whose kinks sit at least `margin` from every |pre-activation|
// of (params, data): the midpoint of the widest gap in the sorted spectrum,
// or 0 when even the smallest pre-activation clears the margin.
std::optional<double> bias_clear_of_kinks(const ModelParams& p, const Dataset& data,
                                          double margin) {
  const int k = p.shape.num_patches;
  const int d = p.shape.patch_dim;
  std::vector<double> mags;
  for (const auto& s : data.samples)
    for (int i = 0; i < k; ++i) {
      double pre = 0.0;
      if (p.kind == ModelKind::Fcn)
        for (int c = 0; c < k * d; ++c) pre += p.weights[i][c] * s.x[c];
      else {
        const auto& w = p.kind == ModelKind::Cnn ? p.weights[0] : p.weights[i];
        for (int c = 0; c < d; ++c) pre += w[c] * s.x[i * d + c];
      }
      mags.push_back(std::abs(pre));
    }
  std::sort(mags.begin(), mags.end());
  double best_bias = -1.0, best_gap = 0.0;
  for (std::size_t i = 0; i + 1 < mags.size(); ++i) {
    const double gap = mags[i + 1] - mags[i];
    if (gap > 2.0 * margin && gap > best_gap) {
      best_gap = gap;
      best_bias = 0.5 * (mags[i] + mags[i + 1]);
    }
  }
  if (best_bias >= 0.0) return best_bias;
  if (mags.front() > margin) return 0.0;
  return std::nullopt;
}

}  // namespace

TEST_CASE("grad_loss agrees with finite differences away from kinks") {
  const auto spec = make_task_spec(3, 4, 0.8, 45);
  Rng rng(10);
  for (ModelKind kind : {ModelKind::Fcn, ModelKind::Lcn, ModelKind::Cnn}) {
    int accepted = 0;
    int attempts = 0;
    while (accepted < 100 && attempts < 2000) {
      ++attempts;
      Rng rng_data(derive_seed(77, "fd-data", attempts));
      const auto data = sample_dsd(spec, 10, rng_data);
      auto p = random_params(kind, spec.shape, 0.0, rng);
      const auto bias = bias_clear_of_kinks(p, data, 0.1);
      if (!bias) continue;
      p.bias = *bias;
      ++accepted;
      const auto ga = grad_loss(p, data);
      const auto gf = fd_grad(p, data, 1e-6);
      for (std::size_t i = 0; i < ga.size(); ++i)
        for (std::size_t c = 0; c < ga[i].size(); ++c) {
          const double scale = std::max({1.0, std::abs(ga[i][c]), std::abs(gf[i][c])});
          CHECK(std::abs(ga[i][c] - gf[i][c]) <= 1e-5 * scale);
        }
    }
    CHECK(accepted == 100);
  }
}

TEST_CASE("risk_mc canonical cases") {
  const auto spec = make_task_spec(3, 4, 1e-12, 5);
  Rng rng(12);
  SUBCASE("zero model risk is exactly 1") {
    ModelParams p;
    p.kind = ModelKind::Cnn;
    p.shape = spec.shape;
    p.weights = {std::vector<double>(4, 0.0)};
    const auto risk = risk_mc(p, spec, {BaseDistribution::dsd(), nullptr}, 5000, rng);
    CHECK(risk.mean == 1.0);
    CHECK(risk.standard_error == 0.0);
  }
  SUBCASE("oracle CNN on near-noiseless data") {
    ModelParams p;
    p.kind = ModelKind::Cnn;
    p.shape = spec.shape;
    p.weights = {spec.signal};
    const auto risk = risk_mc(p, spec, {BaseDistribution::dsd(), nullptr}, 5000, rng);
    CHECK(risk.mean <= 1e-9);
  }
}

TEST_CASE("risk_mc matches the closed-form variance decomposition") {
  // Risk of the oracle-direction CNN with bias b on the mixture:
  // Var[lsa(1 + sigma e, b)] + (k-1) Var[lsa(sigma e, b)] + (1 - E[lsa(1 + sigma e, b)])^2.
  const double sigma = 0.05, b = 0.05;
  const int k = 4;
  const auto spec = make_task_spec(k, 3, sigma, 61);
  ModelParams p;
  p.kind = ModelKind::Cnn;
  p.shape = spec.shape;
  p.weights = {spec.signal};
  p.bias = b;
  Rng rng(13);
  const auto risk = risk_mc(p, spec, {BaseDistribution::dsd(), nullptr}, 1000000, rng);
  const double m_sig = theory::lsa_mean(1.0, sigma, b);
  const double var_sig = theory::lsa_sq_mean(1.0, sigma, b) - m_sig * m_sig;
  const double var_noise = theory::lsa_sq_mean(0.0, sigma, b);  // mean is 0 by symmetry
  const double closed = var_sig + (k - 1) * var_noise + (1.0 - m_sig) * (1.0 - m_sig);
  CHECK(std::abs(risk.mean - closed) <= 4.0 * risk.standard_error);
}

TEST_CASE("CNN forward equals LCN forward with copied weights") {
  const auto shape = make_shape(4, 3);
  Rng rng(14);
  const auto cnn = random_params(ModelKind::Cnn, shape, 0.15, rng);
  ModelParams lcn;
  lcn.kind = ModelKind::Lcn;
  lcn.shape = shape;
  lcn.weights.assign(4, cnn.weights[0]);
  lcn.bias = cnn.bias;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(shape.ambient());
    for (auto& v : x) v = gauss(rng);
    CHECK(forward(cnn, x) == forward(lcn, x));
  }
}

TEST_CASE("model equivariance identity under the lift") {
  const auto shape = make_shape(3, 4);
  Rng rng(15);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (ModelKind kind : {ModelKind::Fcn, ModelKind::Lcn, ModelKind::Cnn}) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto t = random_transform(shape, kind == ModelKind::Cnn, rng);
      const auto p = random_params(kind, shape, 0.2, rng);
      const auto lifted = lift(t, p);
      std::vector<double> x(shape.ambient());
      for (auto& v : x) v = gauss(rng);
      CHECK(std::abs(forward(p, x) - forward(lifted, t.apply(x))) <= 1e-9);
    }
  }
}

TEST_CASE("params JSON round trip") {
  Rng rng(16);
  const auto p = random_params(ModelKind::Lcn, make_shape(2, 3), 0.25, rng);
  const auto q = params_from_json(params_to_json(p));
  CHECK(q.kind == p.kind);
  CHECK(q.weights == p.weights);
  CHECK(q.bias == p.bias);
}

TEST_CASE("dimension mismatches are rejected") {
  ModelParams p;
  p.kind = ModelKind::Lcn;
  p.shape = make_shape(2, 3);
  p.weights = {std::vector<double>(3, 0.1)};  // only one node for k=2
  CHECK_THROWS_AS(validate_dimensions(p), std::invalid_argument);
  p.weights.push_back(std::vector<double>(2, 0.1));
  CHECK_THROWS_AS(validate_dimensions(p), std::invalid_argument);
}
