#pragma once

#include <vector>

#include "collafuse/nodes.hpp"
#include "collafuse/tensor.hpp"

namespace collafuse {

// Gaussian fit over an embedded sample set.
struct FeatureStats {
  VectorX mean;
  MatrixX cov;  // symmetric, PSD up to clamping tolerance
  Index n = 0;

  static FeatureStats from(const MatrixX& rows);  // rows: [n, d]
};

// Deterministic fixed embedding: flattened values concatenated with a seeded
// 32-dim random projection. Pure function of the batch contents.
constexpr Index kEmbedProjDims = 32;
MatrixX feature_embed(const Tensor& batch);

// Symmetric PSD square root via eigendecomposition; eigenvalues below zero are
// clamped, values below -1e-9 (relative) raise NonPSD.
MatrixX psd_sqrt(const MatrixX& m);

// squared 2-Wasserstein distance between Gaussians:
// |mu_a - mu_b|^2 + tr(Ca + Cb - 2 (Ca^1/2 Cb Ca^1/2)^1/2)
Scalar frechet_distance(const FeatureStats& a, const FeatureStats& b);

Scalar frechet_distance(const Tensor& a, const Tensor& b);  // embeds then compares

// Logistic-regression probe on embedded intermediates, one classifier per
// attribute; returns held-out macro-F1 per attribute.
struct ProbeResult {
  std::vector<Scalar> f1;  // per attribute
  int cut = 0;
  Scalar baseline_f1 = 0.0;  // filled by sweeps with the cut-0 value
  Scalar mean_f1() const;
};

ProbeResult attribute_probe(const Tensor& intermediates,
                            const std::vector<std::vector<int>>& attrs,
                            const std::vector<int>& attr_cardinality, Scalar split,
                            uint64_t seed = 0x9E11);

// Cross-client inversion: the attacker asks the server for intermediates under
// its own label distribution and finishes them with its own model;
// reconstructions are scored against the victim's and the attacker's data.
struct InversionResult {
  int attacker = 0;
  int victim = 0;
  int cut = 0;
  Scalar cross_fd = 0.0;  // FD(reconstructions, victim data)
  Scalar self_fd = 0.0;   // FD(reconstructions, attacker data)
};

InversionResult inversion_attack(ClientNode& attacker, const Dataset& victim_data,
                                 ServerNode& server, Index count, uint64_t seed);

}  // namespace collafuse
