#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsd/rng.hpp"

namespace dsd {

/// Patch layout of the input space: k patches of dimension d, ambient k*d.
struct PatchShape {
  int num_patches = 1;  // k
  int patch_dim = 1;    // d

  int ambient() const { return num_patches * patch_dim; }
  bool operator==(const PatchShape&) const = default;
};

PatchShape make_shape(int num_patches, int patch_dim);

/// Element of the patch-structured transformation group in canonical form:
/// a patch permutation composed with one orthogonal block per destination
/// patch. Output patch j is blocks[j] * (input patch perm[j]): permute
/// first, then rotate per destination patch. This convention keeps
/// (perm, blocks) closed under composition.
///
/// `tied` marks the subgroup where all blocks are the same matrix (the
/// group a shared-weight model is equivariant under).
struct PatchTransform {
  PatchShape shape;
  std::vector<int> perm;                       // perm[j] = source patch of output patch j
  std::vector<std::vector<double>> blocks;     // k row-major d x d orthogonal matrices
  bool tied = false;

  /// Group action on an ambient vector.
  std::vector<double> apply(std::span<const double> x) const;
};

/// Haar-distributed orthogonal d x d matrix (row-major): Gaussian matrix,
/// QR factorization, columns sign-corrected so diag(R) > 0.
std::vector<double> haar_orthogonal(int dim, Rng& rng);

PatchTransform identity_transform(PatchShape shape);
/// Uniform patch permutation with i.i.d. Haar blocks (one shared block when tied).
PatchTransform random_transform(PatchShape shape, bool tied, Rng& rng);

/// Action composition: compose(a, b).apply(x) == a.apply(b.apply(x)).
PatchTransform compose(const PatchTransform& a, const PatchTransform& b);
PatchTransform inverse(const PatchTransform& t);

/// Max-norm orthogonality residual ||Q^T Q - I||_max of a d x d row-major matrix.
double orthogonality_residual(std::span<const double> q, int dim);
/// Checks the canonical-form invariants (orthogonal blocks, bijective perm,
/// tied consistency); throws std::invalid_argument on violation.
void validate(const PatchTransform& t);

std::string transform_to_json(const PatchTransform& t);
PatchTransform transform_from_json(const std::string& text);

}  // namespace dsd
