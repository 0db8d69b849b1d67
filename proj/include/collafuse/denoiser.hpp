#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "collafuse/rng.hpp"
#include "collafuse/tensor.hpp"

namespace collafuse {

enum class Arch : uint8_t { kMlp = 0, kSmallConv = 1 };

struct NamedParam {
  std::string name;
  Tensor tensor;
};

// Sinusoidal encoding of t/T: interleaved sin/cos over geometrically spaced
// frequencies in [1, 1000]. dim must be even and >= 2.
ArrayX time_embedding(int t, int dim, int T);

// Conditional noise predictor eps(x_t, t, y).
//
//   kMlp:       flatten | time embedding | one-hot  ->  3x128 SiLU  -> out
//   kSmallConv: 3x3 convs over two pool/upsample levels (16/32 channels) with
//               skip connections; conditioning enters as learned per-channel
//               biases at the entry and bottleneck convs.
//
// The last layer is initialized near zero so an untrained model predicts
// almost-zero noise.
class DenoiserModel {
 public:
  static DenoiserModel init(Arch arch, Shape in_shape, int num_labels, int time_embed_dim,
                            uint64_t seed);

  // Batched forward pass: x_t is [b, ...in_shape], one timestep per row.
  // labels holds one id per row (-1 = unconditional row); pass an empty span
  // for an unconditional model. Participates in the active tape.
  Tensor predict(const Tensor& x_t, std::span<const int> t, std::span<const int> labels,
                 int T) const;

  // Single-sample convenience: x_t has exactly in_shape.
  Tensor predict_single(const Tensor& x_t, int t, std::optional<int> label, int T) const;

  std::vector<Tensor*> param_ptrs();
  const std::vector<NamedParam>& params() const { return params_; }
  Index param_count() const;

  Arch arch() const { return arch_; }
  const Shape& in_shape() const { return in_shape_; }
  int num_labels() const { return num_labels_; }
  int time_embed_dim() const { return time_embed_dim_; }

  // absent labels become the all-zero embedding instead of an error
  bool allow_null_label = false;

 private:
  friend void save_checkpoint(const DenoiserModel&, const std::string&);
  friend DenoiserModel load_checkpoint(const std::string&);
  friend std::vector<uint8_t> checkpoint_bytes(const DenoiserModel&);
  friend DenoiserModel checkpoint_from_bytes(std::span<const uint8_t>);

  const Tensor& p(size_t i) const { return params_[i].tensor; }

  Tensor forward_mlp(const Tensor& x, const Tensor& cond) const;
  Tensor forward_conv(const Tensor& x, const Tensor& cond) const;
  Tensor cond_matrix(std::span<const int> t, std::span<const int> labels, Index rows, int T) const;

  Arch arch_ = Arch::kMlp;
  Shape in_shape_;
  int num_labels_ = 0;
  int time_embed_dim_ = 32;
  std::vector<NamedParam> params_;
};

// Deep copy with fresh gradient buffers (plain copies share them).
DenoiserModel clone_model(const DenoiserModel& m);

// Versioned binary checkpoint container (magic "CFCK"); roundtrips byte-exact.
std::vector<uint8_t> checkpoint_bytes(const DenoiserModel& m);
DenoiserModel checkpoint_from_bytes(std::span<const uint8_t> bytes);
void save_checkpoint(const DenoiserModel& m, const std::string& path);
DenoiserModel load_checkpoint(const std::string& path);

}  // namespace collafuse
