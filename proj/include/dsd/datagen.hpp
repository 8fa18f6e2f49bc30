#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsd/patchspace.hpp"
#include "dsd/rng.hpp"

namespace dsd {

/// One DSD task instance: patch layout, noise level, planted unit signal.
struct TaskSpec {
  PatchShape shape;
  double sigma = 1.0;            // noise standard deviation, > 0
  std::vector<double> signal;    // unit vector in R^d
  std::uint64_t master_seed = 0;
};

/// Builds a TaskSpec; when `signal` is empty it is drawn uniformly from the
/// d-sphere using a child seed of `master_seed`.
TaskSpec make_task_spec(int num_patches, int patch_dim, double sigma,
                        std::uint64_t master_seed,
                        std::vector<double> signal = {});
void validate(const TaskSpec& spec);

struct LabeledSample {
  std::vector<double> x;          // R^{kd}
  int label = 1;                  // -1 or +1
  std::optional<int> latent_patch;  // recorded at generation, never fed to models
};

struct Provenance {
  int num_patches = 0;
  int patch_dim = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::string base;          // "dsd" or "ssd:<t>"
  std::string transform_id;  // empty when untransformed
};

struct Dataset {
  std::vector<LabeledSample> samples;
  Provenance provenance;

  std::size_t size() const { return samples.size(); }
};

/// The d-sparse mean vector with the signal planted in patch `patch`
/// (0-based): entries [patch*d, (patch+1)*d) equal the signal, rest zero.
std::vector<double> mu_vector(const TaskSpec& spec, int patch);

Dataset sample_dsd(const TaskSpec& spec, int count, Rng& rng);
Dataset sample_ssd(const TaskSpec& spec, int patch, int count, Rng& rng);

/// Which base distribution a transformed draw starts from.
struct BaseDistribution {
  bool is_ssd = false;
  int ssd_patch = 0;

  static BaseDistribution dsd() { return {false, 0}; }
  static BaseDistribution ssd(int t) { return {true, t}; }
};

/// Samples the base distribution, then applies `t` to every input.
/// With equal seeds this equals t.apply(.) mapped over the base draw.
Dataset sample_transformed(const TaskSpec& spec, BaseDistribution base,
                           const PatchTransform& t, int count, Rng& rng);

/// Joint density of the DSD mixture at (x, y), evaluated in log space.
double dsd_pdf(const TaskSpec& spec, std::span<const double> x, int label);

/// CSV (y, latent_patch, x_1..x_kd) plus a JSON sidecar of the provenance.
void write_dataset_csv(const Dataset& data, const std::string& csv_path,
                       const std::string& sidecar_json_path);

}  // namespace dsd
