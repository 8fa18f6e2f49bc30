#include "dsd/patchspace.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace dsd {

namespace {
using json = nlohmann::json;

void matvec(std::span<const double> m, std::span<const double> v, std::span<double> out, int dim) {
  for (int r = 0; r < dim; ++r) {
    double s = 0.0;
    const double* row = m.data() + static_cast<std::size_t>(r) * dim;
    for (int c = 0; c < dim; ++c) s += row[c] * v[c];
    out[r] = s;
  }
}

// out = a * b for row-major dim x dim matrices.
std::vector<double> matmul(std::span<const double> a, std::span<const double> b, int dim) {
  std::vector<double> out(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int r = 0; r < dim; ++r)
    for (int k = 0; k < dim; ++k) {
      const double arc = a[static_cast<std::size_t>(r) * dim + k];
      const double* brow = b.data() + static_cast<std::size_t>(k) * dim;
      double* orow = out.data() + static_cast<std::size_t>(r) * dim;
      for (int c = 0; c < dim; ++c) orow[c] += arc * brow[c];
    }
  return out;
}

std::vector<double> transpose(std::span<const double> m, int dim) {
  std::vector<double> out(static_cast<std::size_t>(dim) * dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c)
      out[static_cast<std::size_t>(c) * dim + r] = m[static_cast<std::size_t>(r) * dim + c];
  return out;
}

}  // namespace

PatchShape make_shape(int num_patches, int patch_dim) {
  if (num_patches < 1 || patch_dim < 1)
    throw std::invalid_argument("PatchShape: k and d must be >= 1");
  return {num_patches, patch_dim};
}

std::vector<double> haar_orthogonal(int dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("haar_orthogonal: dimension must be >= 1");
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(dim, dim);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) g(r, c) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dim, dim);
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int c = 0; c < dim; ++c)
    if (r(c, c) < 0.0) q.col(c) *= -1.0;
  std::vector<double> out(static_cast<std::size_t>(dim) * dim);
  for (int rr = 0; rr < dim; ++rr)
    for (int cc = 0; cc < dim; ++cc) out[static_cast<std::size_t>(rr) * dim + cc] = q(rr, cc);
  return out;
}

PatchTransform identity_transform(PatchShape shape) {
  PatchTransform t;
  t.shape = shape;
  t.perm.resize(shape.num_patches);
  std::iota(t.perm.begin(), t.perm.end(), 0);
  std::vector<double> eye(static_cast<std::size_t>(shape.patch_dim) * shape.patch_dim, 0.0);
  for (int i = 0; i < shape.patch_dim; ++i) eye[static_cast<std::size_t>(i) * shape.patch_dim + i] = 1.0;
  t.blocks.assign(shape.num_patches, eye);
  t.tied = true;
  return t;
}

PatchTransform random_transform(PatchShape shape, bool tied, Rng& rng) {
  if (shape.num_patches < 1 || shape.patch_dim < 1)
    throw std::invalid_argument("random_transform: invalid shape");
  PatchTransform t;
  t.shape = shape;
  t.tied = tied;
  t.perm.resize(shape.num_patches);
  std::iota(t.perm.begin(), t.perm.end(), 0);
  for (int i = shape.num_patches - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(t.perm[i], t.perm[pick(rng)]);
  }
  if (tied) {
    t.blocks.assign(shape.num_patches, haar_orthogonal(shape.patch_dim, rng));
  } else {
    t.blocks.reserve(shape.num_patches);
    for (int i = 0; i < shape.num_patches; ++i) t.blocks.push_back(haar_orthogonal(shape.patch_dim, rng));
  }
  return t;
}

std::vector<double> PatchTransform::apply(std::span<const double> x) const {
  const int k = shape.num_patches;
  const int d = shape.patch_dim;
  if (static_cast<int>(x.size()) != k * d)
    throw std::invalid_argument("apply: input length does not match k*d");
  std::vector<double> out(x.size());
  for (int j = 0; j < k; ++j) {
    const int src = perm[j];
    matvec(blocks[j], x.subspan(static_cast<std::size_t>(src) * d, d),
           std::span<double>(out.data() + static_cast<std::size_t>(j) * d, d), d);
  }
  return out;
}

PatchTransform compose(const PatchTransform& a, const PatchTransform& b) {
  if (!(a.shape == b.shape)) throw std::invalid_argument("compose: shape mismatch");
  const int k = a.shape.num_patches;
  const int d = a.shape.patch_dim;
  PatchTransform t;
  t.shape = a.shape;
  t.perm.resize(k);
  t.blocks.resize(k);
  // a after b: out patch j = A_j (b x)^{pa(j)} = A_j B_{pa(j)} x^{pb(pa(j))}.
  for (int j = 0; j < k; ++j) {
    t.perm[j] = b.perm[a.perm[j]];
    t.blocks[j] = matmul(a.blocks[j], b.blocks[a.perm[j]], d);
  }
  t.tied = a.tied && b.tied;
  return t;
}

PatchTransform inverse(const PatchTransform& t) {
  const int k = t.shape.num_patches;
  const int d = t.shape.patch_dim;
  PatchTransform inv;
  inv.shape = t.shape;
  inv.perm.resize(k);
  inv.blocks.resize(k);
  for (int j = 0; j < k; ++j) inv.perm[t.perm[j]] = j;
  for (int i = 0; i < k; ++i) inv.blocks[i] = transpose(t.blocks[inv.perm[i]], d);
  inv.tied = t.tied;
  return inv;
}

double orthogonality_residual(std::span<const double> q, int dim) {
  double worst = 0.0;
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) {
      double s = 0.0;
      for (int i = 0; i < dim; ++i)
        s += q[static_cast<std::size_t>(i) * dim + r] * q[static_cast<std::size_t>(i) * dim + c];
      worst = std::max(worst, std::abs(s - (r == c ? 1.0 : 0.0)));
    }
  return worst;
}

void validate(const PatchTransform& t) {
  const int k = t.shape.num_patches;
  const int d = t.shape.patch_dim;
  if (k < 1 || d < 1) throw std::invalid_argument("PatchTransform: invalid shape");
  if (static_cast<int>(t.perm.size()) != k || static_cast<int>(t.blocks.size()) != k)
    throw std::invalid_argument("PatchTransform: perm/blocks size mismatch");
  std::vector<char> seen(k, 0);
  for (int p : t.perm) {
    if (p < 0 || p >= k || seen[p]) throw std::invalid_argument("PatchTransform: perm not a bijection");
    seen[p] = 1;
  }
  for (const auto& blk : t.blocks) {
    if (static_cast<int>(blk.size()) != d * d)
      throw std::invalid_argument("PatchTransform: block size mismatch");
    if (orthogonality_residual(blk, d) > 1e-10)
      throw std::invalid_argument("PatchTransform: block not orthogonal to 1e-10");
  }
  if (t.tied)
    for (int i = 1; i < k; ++i)
      if (t.blocks[i] != t.blocks[0])
        throw std::invalid_argument("PatchTransform: tied flag with differing blocks");
}

std::string transform_to_json(const PatchTransform& t) {
  json j;
  j["k"] = t.shape.num_patches;
  j["d"] = t.shape.patch_dim;
  j["perm"] = t.perm;
  j["blocks"] = t.blocks;
  j["tied"] = t.tied;
  return j.dump();
}

PatchTransform transform_from_json(const std::string& text) {
  const json j = json::parse(text);
  PatchTransform t;
  t.shape = make_shape(j.at("k").get<int>(), j.at("d").get<int>());
  t.perm = j.at("perm").get<std::vector<int>>();
  t.blocks = j.at("blocks").get<std::vector<std::vector<double>>>();
  t.tied = j.at("tied").get<bool>();
  validate(t);
  return t;
}

}  // namespace dsd
