#include "dsd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dsd {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TaskSpec make_task_spec(int num_patches, int patch_dim, double sigma,
                        std::uint64_t master_seed, std::vector<double> signal) {
  TaskSpec spec;
  spec.shape = make_shape(num_patches, patch_dim);
  spec.sigma = sigma;
  spec.master_seed = master_seed;
  if (signal.empty()) {
    Rng rng(derive_seed(master_seed, "signal"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    signal.resize(patch_dim);
    double nrm = 0.0;
    do {
      for (auto& v : signal) v = gauss(rng);
      nrm = norm2(signal);
    } while (nrm < 1e-12);
    for (auto& v : signal) v /= nrm;
  }
  spec.signal = std::move(signal);
  validate(spec);
  return spec;
}

void validate(const TaskSpec& spec) {
  if (spec.sigma <= 0.0) throw std::invalid_argument("TaskSpec: sigma must be > 0");
  if (static_cast<int>(spec.signal.size()) != spec.shape.patch_dim)
    throw std::invalid_argument("TaskSpec: signal dimension mismatch");
  if (std::abs(norm2(spec.signal) - 1.0) > 1e-12)
    throw std::invalid_argument("TaskSpec: signal must be unit norm to 1e-12");
}

std::vector<double> mu_vector(const TaskSpec& spec, int patch) {
  const int k = spec.shape.num_patches;
  const int d = spec.shape.patch_dim;
  if (patch < 0 || patch >= k) throw std::out_of_range("mu_vector: patch index out of range");
  std::vector<double> mu(static_cast<std::size_t>(k) * d, 0.0);
  std::copy(spec.signal.begin(), spec.signal.end(),
            mu.begin() + static_cast<std::size_t>(patch) * d);
  return mu;
}

namespace {

Dataset sample_impl(const TaskSpec& spec, std::optional<int> fixed_patch, int count, Rng& rng) {
  validate(spec);
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  const int k = spec.shape.num_patches;
  const int d = spec.shape.patch_dim;
  std::uniform_int_distribution<int> patch_dist(0, k - 1);
  std::uniform_int_distribution<int> coin(0, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Dataset data;
  data.samples.reserve(count);
  for (int s = 0; s < count; ++s) {
    LabeledSample sample;
    const int patch = fixed_patch ? *fixed_patch : patch_dist(rng);
    sample.latent_patch = patch;
    sample.label = coin(rng) == 0 ? -1 : 1;
    sample.x.resize(static_cast<std::size_t>(k) * d);
    for (auto& v : sample.x) v = spec.sigma * gauss(rng);
    const double y = static_cast<double>(sample.label);
    for (int c = 0; c < d; ++c)
      sample.x[static_cast<std::size_t>(patch) * d + c] += y * spec.signal[c];
    data.samples.push_back(std::move(sample));
  }
  data.provenance.num_patches = k;
  data.provenance.patch_dim = d;
  data.provenance.sigma = spec.sigma;
  data.provenance.base = fixed_patch ? ("ssd:" + std::to_string(*fixed_patch)) : "dsd";
  return data;
}

}  // namespace

Dataset sample_dsd(const TaskSpec& spec, int count, Rng& rng) {
  return sample_impl(spec, std::nullopt, count, rng);
}

Dataset sample_ssd(const TaskSpec& spec, int patch, int count, Rng& rng) {
  if (patch < 0 || patch >= spec.shape.num_patches)
    throw std::out_of_range("sample_ssd: patch index out of range");
  return sample_impl(spec, patch, count, rng);
}

Dataset sample_transformed(const TaskSpec& spec, BaseDistribution base,
                           const PatchTransform& t, int count, Rng& rng) {
  if (!(t.shape == spec.shape)) throw std::invalid_argument("sample_transformed: shape mismatch");
  Dataset data = base.is_ssd ? sample_ssd(spec, base.ssd_patch, count, rng)
                             : sample_dsd(spec, count, rng);
  for (auto& sample : data.samples) sample.x = t.apply(sample.x);
  data.provenance.transform_id =
      "perm+blocks:" + std::to_string(derive_seed(0, transform_to_json(t)));
  return data;
}

double dsd_pdf(const TaskSpec& spec, std::span<const double> x, int label) {
  validate(spec);
  const int k = spec.shape.num_patches;
  const int d = spec.shape.patch_dim;
  if (static_cast<int>(x.size()) != k * d) throw std::invalid_argument("dsd_pdf: length mismatch");
  if (label != 1 && label != -1) throw std::invalid_argument("dsd_pdf: label must be +-1");
  for (double v : x)
    if (!std::isfinite(v)) throw std::invalid_argument("dsd_pdf: non-finite input");

  const double y = static_cast<double>(label);
  const double inv2s2 = 1.0 / (2.0 * spec.sigma * spec.sigma);
  double xx = 0.0;
  for (double v : x) xx += v * v;

  // ||x - y mu_i||^2 = ||x||^2 - 2 y <x, mu_i> + 1; log-sum-exp over i.
  std::vector<double> exponents(k);
  double max_e = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    double dot = 0.0;
    for (int c = 0; c < d; ++c) dot += x[static_cast<std::size_t>(i) * d + c] * spec.signal[c];
    const double dist2 = xx - 2.0 * y * dot + 1.0;
    exponents[i] = -dist2 * inv2s2;
    max_e = std::max(max_e, exponents[i]);
  }
  double acc = 0.0;
  for (double e : exponents) acc += std::exp(e - max_e);
  const double log_norm = -std::log(2.0 * k) -
                          0.5 * k * d * std::log(2.0 * M_PI * spec.sigma * spec.sigma);
  return std::exp(log_norm + max_e + std::log(acc));
}

void write_dataset_csv(const Dataset& data, const std::string& csv_path,
                       const std::string& sidecar_json_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("write_dataset_csv: cannot open " + csv_path);
  const int dim = data.provenance.num_patches * data.provenance.patch_dim;
  csv << "y,latent_patch";
  for (int c = 1; c <= dim; ++c) csv << ",x_" << c;
  csv << "\n";
  csv.precision(17);
  for (const auto& s : data.samples) {
    csv << s.label << "," << (s.latent_patch ? std::to_string(*s.latent_patch) : "");
    for (double v : s.x) csv << "," << v;
    csv << "\n";
  }

  nlohmann::json j;
  j["k"] = data.provenance.num_patches;
  j["d"] = data.provenance.patch_dim;
  j["sigma"] = data.provenance.sigma;
  j["seed"] = data.provenance.seed;
  j["base"] = data.provenance.base;
  j["transform_id"] = data.provenance.transform_id;
  std::ofstream sidecar(sidecar_json_path);
  if (!sidecar) throw std::runtime_error("write_dataset_csv: cannot open " + sidecar_json_path);
  sidecar << j.dump(2) << "\n";
}

}  // namespace dsd
