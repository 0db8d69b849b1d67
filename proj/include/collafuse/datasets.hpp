#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "collafuse/rng.hpp"
#include "collafuse/tensor.hpp"

namespace collafuse {

enum class DatasetKind : uint8_t { kGauss2d = 0, kSprites = 1 };

// Synthetic attributed dataset. Samples sit in x's leading dimension; each
// sample carries one integer id per attribute (sprites: shape, color).
struct Dataset {
  DatasetKind kind = DatasetKind::kGauss2d;
  Tensor x;                              // [n, ...sample dims]
  std::vector<std::vector<int>> attrs;   // n rows, one id per attribute
  std::vector<int> attr_cardinality;     // values per attribute

  Index size() const { return x.ndim() == 0 ? 0 : x.shape()[0]; }
  Shape sample_shape() const;
  Index sample_numel() const { return numel(sample_shape()); }

  // conditioning label: combined attribute code in [0, num_label_values)
  int num_label_values() const;
  int label_of(Index i) const;

  Dataset subset(std::span<const Index> indices) const;
  Tensor rows(std::span<const Index> indices) const;
  ArrayX row(Index i) const;
};

// class-conditional 2-d Gaussians with analytic ground truth
Dataset gen_gauss2d(Index n, const std::vector<std::array<Scalar, 2>>& class_means, Scalar var,
                    uint64_t seed);

// RGB sprite grids in [-1,1]: one of `num_shapes` masks, one of `num_colors`
// palette colors, jittered integer position, no anti-aliasing
Dataset gen_sprites(Index n, int grid, int num_shapes, int num_colors, uint64_t seed);

// deterministic renderer used by gen_sprites; exposed for tests
ArrayX render_sprite(int grid, int shape_id, int color_id, int off_x, int off_y);

// inverse of Dataset::label_of: mixed-radix decode of a combined label code
std::vector<int> attrs_of_label(int code, const std::vector<int>& cardinality);

constexpr int kSpriteMaxShapes = 4;
constexpr int kSpriteMaxColors = 6;
int sprite_jitter_range(int grid);

enum class PartitionMode : uint8_t { kIid = 0, kByAttribute = 1 };

struct Partition {
  std::vector<std::vector<Index>> client_indices;
};

// Disjoint covering split across k clients. kByAttribute assigns attribute
// values of attrs[attr_index] round-robin as each client's dominant value and
// fills a `skew` fraction of the client from it, the rest from other values.
Partition partition(const Dataset& ds, int k, PartitionMode mode, Scalar skew, uint64_t seed,
                    int attr_index = 0);

// binary container, magic "CFDS"; byte-exact roundtrip
std::vector<uint8_t> dataset_bytes(const Dataset& ds);
Dataset dataset_from_bytes(std::span<const uint8_t> bytes);
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace collafuse
