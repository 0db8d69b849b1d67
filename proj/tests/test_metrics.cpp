#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "collafuse/datasets.hpp"
#include "collafuse/metrics.hpp"
#include "collafuse/rng.hpp"
#include "oracles.hpp"

using namespace collafuse;

TEST_CASE("feature embedding: purity, width, distinctness") {
  Rng rng(1);
  Tensor batch({10, 4, 4}, rng.normal_array(160));
  MatrixX a = feature_embed(batch);
  MatrixX b = feature_embed(batch);
  CHECK(a == b);
  CHECK(a.cols() == 16 + kEmbedProjDims);
  CHECK(a.rows() == 10);

  // distinct inputs almost never collide
  int collisions = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor x({1, 8}, rng.normal_array(8));
    Tensor y({1, 8}, rng.normal_array(8));
    MatrixX ex = feature_embed(x), ey = feature_embed(y);
    collisions += (ex - ey).cwiseAbs().maxCoeff() < 1e-12;
  }
  CHECK(collisions == 0);

  CHECK_THROWS_AS(feature_embed(Tensor({0, 4}, ArrayX(0))), EmptyBatch);
}

TEST_CASE("frechet distance: identity and 1-d closed forms") {
  FeatureStats std_normal{VectorX::Zero(1), MatrixX::Identity(1, 1), 100};
  CHECK(frechet_distance(std_normal, std_normal) == doctest::Approx(0.0).epsilon(1e-12));

  FeatureStats shifted{VectorX::Ones(1), MatrixX::Identity(1, 1), 100};
  CHECK(frechet_distance(std_normal, shifted) == doctest::Approx(1.0).epsilon(1e-9));

  FeatureStats wide{VectorX::Zero(1), 4.0 * MatrixX::Identity(1, 1), 100};
  CHECK(frechet_distance(std_normal, wide) == doctest::Approx(1.0).epsilon(1e-9));

  FeatureStats other{VectorX::Zero(2), MatrixX::Identity(2, 2), 100};
  CHECK_THROWS_AS(frechet_distance(std_normal, other), DimMismatch);
}

TEST_CASE("matrix square root against an eigendecomposition oracle") {
  Rng rng(42);
  for (int trial = 0; trial < 10; ++trial) {
    // build an SPD matrix from a known eigensystem
    MatrixX g(8, 8);
    for (Index i = 0; i < 8; ++i)
      for (Index j = 0; j < 8; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<MatrixX> qr(g);
    MatrixX q = qr.householderQ();
    VectorX ev(8);
    for (Index i = 0; i < 8; ++i) ev[i] = 0.1 + 2.9 * rng.uniform();
    MatrixX m = q * ev.asDiagonal() * q.transpose();
    m = ((m + m.transpose()) / 2.0).eval();

    MatrixX root = psd_sqrt(m);
    MatrixX expected = q * ev.cwiseSqrt().asDiagonal() * q.transpose();
    CHECK((root - expected).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((root * root - m).cwiseAbs().maxCoeff() < 1e-8);
  }

  MatrixX negative = -MatrixX::Identity(3, 3);
  CHECK_THROWS_AS(psd_sqrt(negative), NonPSD);
}

TEST_CASE("frechet distance is symmetric and separates a mean shift") {
  Rng rng(7);
  const Index n = 5000, d = 6;
  MatrixX a(n, d), b(n, d), shifted(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j) {
      a(i, j) = rng.normal();
      b(i, j) = rng.normal();
      shifted(i, j) = rng.normal() + 1.0;
    }
  auto sa = FeatureStats::from(a), sb = FeatureStats::from(b), ss = FeatureStats::from(shifted);
  CHECK(std::abs(frechet_distance(sa, sb) - frechet_distance(sb, sa)) < 1e-9);
  CHECK(frechet_distance(sa, sb) < frechet_distance(sa, ss));
}

TEST_CASE("probe recovers a separable attribute and stays at chance on noise") {
  Rng rng(99);
  const Index n = 600;

  // separable: attribute 0 determines the sign of every coordinate
  ArrayX data(n * 8);
  std::vector<std::vector<int>> attrs;
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(rng.uniform_int(0, 1));
    for (Index j = 0; j < 8; ++j) data[i * 8 + j] = (c ? 1.0 : -1.0) + 0.3 * rng.normal();
    attrs.push_back({c});
  }
  ProbeResult sep = attribute_probe(Tensor({n, 8}, data), attrs, {2}, 0.7);
  CHECK(sep.f1[0] > 0.9);

  // pure noise: macro F1 within 0.1 of the balanced prior
  ArrayX noise(n * 8);
  std::vector<std::vector<int>> noise_attrs;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < 8; ++j) noise[i * 8 + j] = rng.normal();
    noise_attrs.push_back({static_cast<int>(rng.uniform_int(0, 1))});
  }
  ProbeResult chance = attribute_probe(Tensor({n, 8}, noise), noise_attrs, {2}, 0.7);
  CHECK(std::abs(chance.f1[0] - 0.5) <= 0.1);

  // degenerate labels rejected
  std::vector<std::vector<int>> constant(static_cast<size_t>(n), {0});
  CHECK_THROWS_AS(attribute_probe(Tensor({n, 8}, noise), constant, {2}, 0.7), DegenerateLabels);
}

TEST_CASE("probe f1 falls as noise drowns the signal") {
  Rng rng(123);
  const Index n = 600;
  auto make = [&](Scalar noise_sd) {
    ArrayX data(n * 8);
    std::vector<std::vector<int>> attrs;
    Rng local(5);
    for (Index i = 0; i < n; ++i) {
      const int c = static_cast<int>(local.uniform_int(0, 1));
      for (Index j = 0; j < 8; ++j)
        data[i * 8 + j] = 0.5 * (c ? 1.0 : -1.0) + noise_sd * local.normal();
      attrs.push_back({c});
    }
    return attribute_probe(Tensor({n, 8}, data), attrs, {2}, 0.7).f1[0];
  };
  CHECK(make(0.2) > make(5.0));
}
