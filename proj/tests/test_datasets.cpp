#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "collafuse/datasets.hpp"
#include "oracles.hpp"

using namespace collafuse;
namespace ct = collafuse::testing;

TEST_CASE("gauss2d: determinism and class moments") {
  std::vector<std::array<Scalar, 2>> means = {{-2.0, 0.0}, {2.0, 1.0}};
  Dataset a = gen_gauss2d(4000, means, 0.25, 7);
  Dataset b = gen_gauss2d(4000, means, 0.25, 7);
  CHECK((a.x.data() == b.x.data()).all());
  CHECK(a.size() == 4000);

  for (int c = 0; c < 2; ++c) {
    Scalar sx = 0, sy = 0;
    Index n = 0;
    for (Index i = 0; i < a.size(); ++i) {
      if (a.attrs[static_cast<size_t>(i)][0] != c) continue;
      sx += a.x.data()[2 * i];
      sy += a.x.data()[2 * i + 1];
      ++n;
    }
    REQUIRE(n > 100);
    const Scalar tol = 3.0 * std::sqrt(0.25 / static_cast<Scalar>(n));
    CHECK(std::abs(sx / static_cast<Scalar>(n) - means[static_cast<size_t>(c)][0]) < tol);
    CHECK(std::abs(sy / static_cast<Scalar>(n) - means[static_cast<size_t>(c)][1]) < tol);
  }

  // single zero-mean class: overall mean shrinks like 3 sigma / sqrt(n)
  Dataset z = gen_gauss2d(8000, {{0.0, 0.0}}, 1.0, 9);
  CHECK(std::abs(z.x.data().mean()) < 3.0 / std::sqrt(8000.0));

  CHECK_THROWS_AS(gen_gauss2d(0, means, 0.25, 1), BadParams);
  CHECK_THROWS_AS(gen_gauss2d(10, means, -1.0, 1), BadParams);
}

TEST_CASE("sprites: range, determinism and attribute balance") {
  Dataset ds = gen_sprites(3000, 8, 2, 5, 21);
  CHECK(ds.x.shape() == Shape{3000, 3, 8, 8});
  CHECK(ds.x.data().minCoeff() >= -1.0);
  CHECK(ds.x.data().maxCoeff() <= 1.0);

  // identical draw parameters give identical pixels
  ArrayX s1 = render_sprite(8, 1, 2, 1, 3);
  ArrayX s2 = render_sprite(8, 1, 2, 1, 3);
  CHECK((s1 == s2).all());

  // attribute counts within multinomial 3 sigma
  std::vector<int> color_counts(5, 0);
  for (const auto& row : ds.attrs) color_counts[static_cast<size_t>(row[1])]++;
  const Scalar p = 1.0 / 5.0;
  const Scalar sigma = std::sqrt(3000.0 * p * (1 - p));
  for (int c = 0; c < 5; ++c)
    CHECK(std::abs(color_counts[static_cast<size_t>(c)] - 3000.0 * p) < 3.0 * sigma);

  CHECK_THROWS_AS(gen_sprites(10, 7, 2, 2, 1), BadParams);
  CHECK_THROWS_AS(gen_sprites(10, 8, 1, 2, 1), BadParams);
  CHECK_THROWS_AS(gen_sprites(10, 8, 2, 9, 1), BadParams);
}

namespace {

void check_partition_valid(const Partition& p, Index n) {
  std::set<Index> seen;
  for (const auto& ci : p.client_indices) {
    CHECK(!ci.empty());
    for (Index i : ci) {
      CHECK(!seen.count(i));
      seen.insert(i);
    }
  }
  CHECK(seen.size() == static_cast<size_t>(n));
}

}  // namespace

TEST_CASE("iid partition: even split, disjoint cover") {
  Dataset ds = gen_sprites(1000, 8, 2, 5, 3);
  Partition p = partition(ds, 5, PartitionMode::kIid, 0.0, 11);
  check_partition_valid(p, 1000);
  for (const auto& ci : p.client_indices) CHECK(ci.size() == 200);
}

TEST_CASE("by-attribute partition: skew controls dominant share") {
  Dataset ds = gen_sprites(5000, 8, 2, 5, 3);

  SUBCASE("skew 1.0 gives pure clients") {
    Partition p = partition(ds, 5, PartitionMode::kByAttribute, 1.0, 11, 1);
    check_partition_valid(p, 5000);
    for (int c = 0; c < 5; ++c) {
      for (Index i : p.client_indices[static_cast<size_t>(c)])
        CHECK(ds.attrs[static_cast<size_t>(i)][1] == c % 5);
    }
  }

  SUBCASE("skew 0.8 lands in [0.75, 0.85]") {
    Partition p = partition(ds, 5, PartitionMode::kByAttribute, 0.8, 11, 1);
    check_partition_valid(p, 5000);
    for (int c = 0; c < 5; ++c) {
      const auto& ci = p.client_indices[static_cast<size_t>(c)];
      REQUIRE(ci.size() >= 900);
      Index dominant = 0;
      for (Index i : ci) dominant += ds.attrs[static_cast<size_t>(i)][1] == c % 5;
      const Scalar share = static_cast<Scalar>(dominant) / static_cast<Scalar>(ci.size());
      CHECK(share >= 0.75);
      CHECK(share <= 0.85);
    }
  }

  SUBCASE("partitions are pure functions of their arguments") {
    Partition p1 = partition(ds, 5, PartitionMode::kByAttribute, 0.8, 11, 1);
    Partition p2 = partition(ds, 5, PartitionMode::kByAttribute, 0.8, 11, 1);
    CHECK(p1.client_indices == p2.client_indices);
  }

  CHECK_THROWS_AS(partition(ds, 0, PartitionMode::kIid, 0.0, 1), BadParams);
  CHECK_THROWS_AS(partition(ds, 5, PartitionMode::kIid, 1.5, 1), BadParams);
}

TEST_CASE("partition validity holds across modes and seeds") {
  Dataset ds = gen_sprites(997, 8, 3, 4, 5);  // deliberately not divisible
  for (uint64_t seed = 0; seed < 5; ++seed) {
    for (auto mode : {PartitionMode::kIid, PartitionMode::kByAttribute}) {
      for (Scalar skew : {0.0, 0.5, 0.9}) {
        Partition p = partition(ds, 4, mode, skew, seed, 1);
        check_partition_valid(p, 997);
      }
    }
  }
}

TEST_CASE("too-small datasets are rejected") {
  Dataset tiny = gen_gauss2d(3, {{0.0, 0.0}}, 1.0, 2);
  CHECK_THROWS_AS(partition(tiny, 5, PartitionMode::kIid, 0.0, 1), TooFewSamples);
}

TEST_CASE("dataset container roundtrips byte-exact") {
  Dataset ds = gen_sprites(50, 8, 2, 3, 77);
  auto bytes = dataset_bytes(ds);
  Dataset back = dataset_from_bytes(bytes);
  auto bytes2 = dataset_bytes(back);
  CHECK(bytes == bytes2);
  CHECK(back.kind == ds.kind);
  CHECK((back.x.data() == ds.x.data()).all());
  CHECK(back.attrs == ds.attrs);

  auto corrupt = bytes;
  corrupt[2] = 'X';
  CHECK_THROWS_AS(dataset_from_bytes(corrupt), BadMagic);
}

TEST_CASE("combined label codes are bijective with attribute tuples") {
  Dataset ds = gen_sprites(200, 8, 2, 3, 5);
  CHECK(ds.num_label_values() == 6);
  for (Index i = 0; i < ds.size(); ++i) {
    const int code = ds.label_of(i);
    CHECK(code == ds.attrs[static_cast<size_t>(i)][0] * 3 + ds.attrs[static_cast<size_t>(i)][1]);
  }
}
