#include "collafuse/datasets.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>

#include "collafuse/binio.hpp"

namespace collafuse {

Shape Dataset::sample_shape() const {
  if (x.ndim() < 1) return {};
  return Shape(x.shape().begin() + 1, x.shape().end());
}

int Dataset::num_label_values() const {
  int n = 1;
  for (int c : attr_cardinality) n *= c;
  return n;
}

int Dataset::label_of(Index i) const {
  int code = 0;
  for (size_t a = 0; a < attr_cardinality.size(); ++a)
    code = code * attr_cardinality[a] + attrs[static_cast<size_t>(i)][a];
  return code;
}

std::vector<int> attrs_of_label(int code, const std::vector<int>& cardinality) {
  std::vector<int> out(cardinality.size());
  for (size_t a = cardinality.size(); a > 0; --a) {
    out[a - 1] = code % cardinality[a - 1];
    code /= cardinality[a - 1];
  }
  return out;
}

Tensor Dataset::rows(std::span<const Index> indices) const {
  const Index per = sample_numel();
  ArrayX out(static_cast<Index>(indices.size()) * per);
  for (size_t i = 0; i < indices.size(); ++i)
    out.segment(static_cast<Index>(i) * per, per) = x.data().segment(indices[i] * per, per);
  Shape shape = x.shape();
  shape[0] = static_cast<Index>(indices.size());
  return Tensor(std::move(shape), std::move(out));
}

ArrayX Dataset::row(Index i) const {
  const Index per = sample_numel();
  return x.data().segment(i * per, per);
}

Dataset Dataset::subset(std::span<const Index> indices) const {
  Dataset out;
  out.kind = kind;
  out.attr_cardinality = attr_cardinality;
  out.x = rows(indices);
  out.attrs.reserve(indices.size());
  for (Index i : indices) out.attrs.push_back(attrs[static_cast<size_t>(i)]);
  return out;
}

Dataset gen_gauss2d(Index n, const std::vector<std::array<Scalar, 2>>& class_means, Scalar var,
                    uint64_t seed) {
  if (n < 1 || class_means.empty() || !(var > 0.0)) throw BadParams("gen_gauss2d: bad arguments");
  Rng rng(seed);
  Dataset ds;
  ds.kind = DatasetKind::kGauss2d;
  ds.attr_cardinality = {static_cast<int>(class_means.size())};
  ArrayX data(n * 2);
  const Scalar sd = std::sqrt(var);
  for (Index i = 0; i < n; ++i) {
    const int c = static_cast<int>(rng.uniform_int(0, static_cast<int64_t>(class_means.size()) - 1));
    data[2 * i] = class_means[static_cast<size_t>(c)][0] + sd * rng.normal();
    data[2 * i + 1] = class_means[static_cast<size_t>(c)][1] + sd * rng.normal();
    ds.attrs.push_back({c});
  }
  ds.x = Tensor({n, 2}, std::move(data));
  return ds;
}

namespace {

// palette in [-1,1] per channel
constexpr Scalar kPalette[kSpriteMaxColors][3] = {
    {1, -1, -1},  // red
    {-1, 1, -1},  // green
    {-1, -1, 1},  // blue
    {1, 1, -1},   // yellow
    {1, -1, 1},   // magenta
    {-1, 1, 1},   // cyan
};

bool sprite_mask(int shape_id, int y, int x, int s) {
  const int mid = s / 2;
  switch (shape_id) {
    case 0:  // square
      return true;
    case 1:  // plus
      return y == mid || y == mid - 1 || x == mid || x == mid - 1;
    case 2:  // diamond
      return std::abs(2 * y - (s - 1)) + std::abs(2 * x - (s - 1)) <= s;
    default:  // lower-left triangle
      return x <= y;
  }
}

}  // namespace

int sprite_jitter_range(int grid) { return grid - grid / 2; }

ArrayX render_sprite(int grid, int shape_id, int color_id, int off_x, int off_y) {
  const int s = grid / 2;
  ArrayX img = ArrayX::Constant(3 * grid * grid, -1.0);
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      if (!sprite_mask(shape_id, y, x, s)) continue;
      const int gy = off_y + y, gx = off_x + x;
      for (int ch = 0; ch < 3; ++ch)
        img[(ch * grid + gy) * grid + gx] = kPalette[color_id][ch];
    }
  return img;
}

Dataset gen_sprites(Index n, int grid, int num_shapes, int num_colors, uint64_t seed) {
  if (n < 1 || (grid != 8 && grid != 16) || num_shapes < 2 || num_shapes > kSpriteMaxShapes ||
      num_colors < 2 || num_colors > kSpriteMaxColors)
    throw BadParams("gen_sprites: bad arguments");
  Rng rng(seed);
  Dataset ds;
  ds.kind = DatasetKind::kSprites;
  ds.attr_cardinality = {num_shapes, num_colors};
  ArrayX data(n * 3 * grid * grid);
  const int jitter = sprite_jitter_range(grid);
  for (Index i = 0; i < n; ++i) {
    const int shape = static_cast<int>(rng.uniform_int(0, num_shapes - 1));
    const int color = static_cast<int>(rng.uniform_int(0, num_colors - 1));
    const int ox = static_cast<int>(rng.uniform_int(0, jitter - 1));
    const int oy = static_cast<int>(rng.uniform_int(0, jitter - 1));
    data.segment(i * 3 * grid * grid, 3 * grid * grid) = render_sprite(grid, shape, color, ox, oy);
    ds.attrs.push_back({shape, color});
  }
  ds.x = Tensor({n, 3, grid, grid}, std::move(data));
  return ds;
}

Partition partition(const Dataset& ds, int k, PartitionMode mode, Scalar skew, uint64_t seed,
                    int attr_index) {
  const Index n = ds.size();
  if (k < 1) throw BadParams("partition: k must be >= 1");
  if (skew < 0.0 || skew > 1.0) throw BadParams("partition: skew must lie in [0,1]");
  if (n < k) throw TooFewSamples("partition: fewer samples than clients");

  Rng rng(seed);
  auto shuffle = [&rng](std::vector<Index>& v) {
    for (size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
  };

  Partition p;
  p.client_indices.resize(static_cast<size_t>(k));

  if (mode == PartitionMode::kIid) {
    std::vector<Index> idx(static_cast<size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    shuffle(idx);
    size_t at = 0;
    for (int c = 0; c < k; ++c) {
      const Index quota = n / k + (c < static_cast<int>(n % k) ? 1 : 0);
      for (Index j = 0; j < quota; ++j) p.client_indices[static_cast<size_t>(c)].push_back(idx[at++]);
    }
    return p;
  }

  if (attr_index < 0 || attr_index >= static_cast<int>(ds.attr_cardinality.size()))
    throw BadParams("partition: attribute index out of range");
  const int values = ds.attr_cardinality[static_cast<size_t>(attr_index)];

  std::vector<std::vector<Index>> pools(static_cast<size_t>(values));
  for (Index i = 0; i < n; ++i)
    pools[static_cast<size_t>(ds.attrs[static_cast<size_t>(i)][static_cast<size_t>(attr_index)])]
        .push_back(i);
  for (auto& pool : pools) shuffle(pool);

  std::vector<int> dominant(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c) dominant[static_cast<size_t>(c)] = c % values;

  std::vector<Index> quota(static_cast<size_t>(k));
  if (skew == 1.0) {
    // pure clients: share each value pool evenly among the clients owning it
    std::vector<int> owners(static_cast<size_t>(values), 0);
    for (int c = 0; c < k; ++c) owners[static_cast<size_t>(dominant[static_cast<size_t>(c)])]++;
    for (int c = 0; c < k; ++c) {
      const int v = dominant[static_cast<size_t>(c)];
      const int rank = c / values;  // position among owners of v
      const Index pool_n = static_cast<Index>(pools[static_cast<size_t>(v)].size());
      const Index own = static_cast<Index>(owners[static_cast<size_t>(v)]);
      quota[static_cast<size_t>(c)] = pool_n / own + (rank < static_cast<int>(pool_n % own) ? 1 : 0);
    }
  } else {
    for (int c = 0; c < k; ++c)
      quota[static_cast<size_t>(c)] = n / k + (c < static_cast<int>(n % k) ? 1 : 0);
  }

  // phase 1: dominant fill
  std::vector<size_t> pool_pos(static_cast<size_t>(values), 0);
  for (int c = 0; c < k; ++c) {
    auto& pool = pools[static_cast<size_t>(dominant[static_cast<size_t>(c)])];
    size_t& pos = pool_pos[static_cast<size_t>(dominant[static_cast<size_t>(c)])];
    const Index want = static_cast<Index>(
        std::floor(skew * static_cast<Scalar>(quota[static_cast<size_t>(c)]) + 0.5));
    while (static_cast<Index>(p.client_indices[static_cast<size_t>(c)].size()) < want &&
           pos < pool.size())
      p.client_indices[static_cast<size_t>(c)].push_back(pool[pos++]);
  }

  // phase 2: deal every leftover index, avoiding the dominant value when possible
  std::vector<Index> leftovers;
  for (int v = 0; v < values; ++v)
    for (size_t i = pool_pos[static_cast<size_t>(v)]; i < pools[static_cast<size_t>(v)].size(); ++i)
      leftovers.push_back(pools[static_cast<size_t>(v)][i]);
  shuffle(leftovers);

  auto needs = [&](int c) {
    return static_cast<Index>(p.client_indices[static_cast<size_t>(c)].size()) <
           quota[static_cast<size_t>(c)];
  };
  int cursor = 0;
  for (Index idx : leftovers) {
    const int v = ds.attrs[static_cast<size_t>(idx)][static_cast<size_t>(attr_index)];
    int chosen = -1;
    for (int step = 0; step < k; ++step) {
      const int c = (cursor + step) % k;
      if (needs(c) && dominant[static_cast<size_t>(c)] != v) {
        chosen = c;
        break;
      }
    }
    if (chosen < 0) {
      for (int step = 0; step < k; ++step) {
        const int c = (cursor + step) % k;
        if (needs(c)) {
          chosen = c;
          break;
        }
      }
    }
    if (chosen < 0) {
      // quotas filled by rounding; append to the smallest client
      chosen = 0;
      for (int c = 1; c < k; ++c)
        if (p.client_indices[static_cast<size_t>(c)].size() <
            p.client_indices[static_cast<size_t>(chosen)].size())
          chosen = c;
    }
    p.client_indices[static_cast<size_t>(chosen)].push_back(idx);
    cursor = (chosen + 1) % k;
  }

  for (const auto& ci : p.client_indices)
    if (ci.empty()) throw TooFewSamples("partition: a client received no samples");
  return p;
}

// ---- container -----------------------------------------------------------------

namespace {
constexpr char kDatasetMagic[4] = {'C', 'F', 'D', 'S'};
constexpr uint32_t kDatasetVersion = 1;
}  // namespace

std::vector<uint8_t> dataset_bytes(const Dataset& ds) {
  ByteWriter w;
  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kDatasetMagic), 4));
  w.u32(kDatasetVersion);
  w.u8(static_cast<uint8_t>(ds.kind));
  w.u32(static_cast<uint32_t>(ds.x.ndim()));
  for (Index e : ds.x.shape()) w.u32(static_cast<uint32_t>(e));
  for (Index i = 0; i < ds.x.size(); ++i) w.f64(ds.x.data()[i]);
  w.u32(static_cast<uint32_t>(ds.attr_cardinality.size()));
  for (int c : ds.attr_cardinality) w.u32(static_cast<uint32_t>(c));
  w.u32(static_cast<uint32_t>(ds.attrs.size()));
  for (const auto& row : ds.attrs)
    for (int a : row) w.u32(static_cast<uint32_t>(a));
  return w.take();
}

Dataset dataset_from_bytes(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kDatasetMagic, 4) != 0) throw BadMagic("not a dataset file");
  if (r.u32() != kDatasetVersion) throw IoError("unsupported dataset version");
  Dataset ds;
  ds.kind = static_cast<DatasetKind>(r.u8());
  const uint32_t nd = r.u32();
  Shape shape(nd);
  for (uint32_t i = 0; i < nd; ++i) shape[i] = static_cast<Index>(r.u32());
  ArrayX data(numel(shape));
  for (Index i = 0; i < data.size(); ++i) data[i] = r.f64();
  ds.x = Tensor(std::move(shape), std::move(data));
  const uint32_t na = r.u32();
  ds.attr_cardinality.resize(na);
  for (uint32_t i = 0; i < na; ++i) ds.attr_cardinality[i] = static_cast<int>(r.u32());
  const uint32_t rows = r.u32();
  ds.attrs.resize(rows, std::vector<int>(na));
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t a = 0; a < na; ++a) ds.attrs[i][a] = static_cast<int>(r.u32());
  if (!r.done()) throw IoError("trailing bytes in dataset file");
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  auto bytes = dataset_bytes(ds);
  write_file_atomic(path, std::span<const uint8_t>(bytes.data(), bytes.size()));
}

Dataset load_dataset(const std::string& path) {
  auto bytes = read_file(path);
  return dataset_from_bytes(std::span<const uint8_t>(bytes.data(), bytes.size()));
}

}  // namespace collafuse
