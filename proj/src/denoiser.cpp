#include "collafuse/denoiser.hpp"

#include <cmath>

#include "collafuse/binio.hpp"

namespace collafuse {

namespace {

constexpr char kCheckpointMagic[4] = {'C', 'F', 'C', 'K'};
constexpr uint32_t kCheckpointVersion = 1;
constexpr Index kMlpWidth = 128;
constexpr Index kConvC1 = 16;
constexpr Index kConvC2 = 32;

Tensor init_param(Shape shape, Scalar stddev, Rng& rng) {
  ArrayX data(numel(shape));
  for (Index i = 0; i < data.size(); ++i) data[i] = stddev * rng.normal();
  Tensor t(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

Tensor zeros_param(Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape));
  t.set_requires_grad(true);
  return t;
}

}  // namespace

ArrayX time_embedding(int t, int dim, int T) {
  if (dim < 2 || dim % 2 != 0) throw BadDim("time_embedding: dim must be even and >= 2");
  if (t < 1 || t > T) throw TimestepOutOfRange("time_embedding: t = " + std::to_string(t));
  const int half = dim / 2;
  const Scalar u = static_cast<Scalar>(t) / static_cast<Scalar>(T);
  ArrayX e(dim);
  for (int i = 0; i < half; ++i) {
    const Scalar expo = half == 1 ? 0.0 : static_cast<Scalar>(i) / static_cast<Scalar>(half - 1);
    const Scalar w = std::pow(1000.0, expo);
    e[2 * i] = std::sin(w * u);
    e[2 * i + 1] = std::cos(w * u);
  }
  return e;
}

DenoiserModel DenoiserModel::init(Arch arch, Shape in_shape, int num_labels, int time_embed_dim,
                                  uint64_t seed) {
  if (in_shape.empty() || numel(in_shape) < 1) throw BadShape("empty input shape");
  if (num_labels < 0) throw BadShape("negative label count");
  if (time_embed_dim < 2 || time_embed_dim % 2 != 0)
    throw BadDim("time_embed_dim must be even and >= 2");

  DenoiserModel m;
  m.arch_ = arch;
  m.in_shape_ = std::move(in_shape);
  m.num_labels_ = num_labels;
  m.time_embed_dim_ = time_embed_dim;

  Rng rng(seed);
  const Index cond_dim = time_embed_dim + num_labels;
  auto he = [&](Index fan_in, Shape shape) {
    return init_param(std::move(shape), std::sqrt(2.0 / static_cast<Scalar>(fan_in)), rng);
  };

  if (arch == Arch::kMlp) {
    const Index d = numel(m.in_shape_);
    const Index in_dim = d + cond_dim;
    m.params_.push_back({"w0", he(in_dim, {in_dim, kMlpWidth})});
    m.params_.push_back({"b0", zeros_param({kMlpWidth})});
    m.params_.push_back({"w1", he(kMlpWidth, {kMlpWidth, kMlpWidth})});
    m.params_.push_back({"b1", zeros_param({kMlpWidth})});
    m.params_.push_back({"w2", he(kMlpWidth, {kMlpWidth, kMlpWidth})});
    m.params_.push_back({"b2", zeros_param({kMlpWidth})});
    // near-zero head: fresh models predict ~zero noise but still carry gradient
    m.params_.push_back({"w_out", init_param({kMlpWidth, d}, 1e-3, rng)});
    m.params_.push_back({"b_out", zeros_param({d})});
  } else {
    if (m.in_shape_.size() != 3) throw BadShape("smallconv expects [c,h,w] input");
    const Index c = m.in_shape_[0], h = m.in_shape_[1], w = m.in_shape_[2];
    if (h < 4 || w < 4 || h % 4 != 0 || w % 4 != 0)
      throw BadShape("smallconv needs h,w divisible by 4");
    m.params_.push_back({"cond_in_w", he(cond_dim, {cond_dim, kConvC1})});
    m.params_.push_back({"cond_in_b", zeros_param({kConvC1})});
    m.params_.push_back({"cond_mid_w", he(cond_dim, {cond_dim, kConvC2})});
    m.params_.push_back({"cond_mid_b", zeros_param({kConvC2})});
    m.params_.push_back({"enc1_k", he(c * 9, {kConvC1, c, 3, 3})});
    m.params_.push_back({"enc1_b", zeros_param({kConvC1})});
    m.params_.push_back({"enc2_k", he(kConvC1 * 9, {kConvC2, kConvC1, 3, 3})});
    m.params_.push_back({"enc2_b", zeros_param({kConvC2})});
    m.params_.push_back({"mid_k", he(kConvC2 * 9, {kConvC2, kConvC2, 3, 3})});
    m.params_.push_back({"mid_b", zeros_param({kConvC2})});
    m.params_.push_back({"dec2_k", he(kConvC2 * 9, {kConvC1, kConvC2, 3, 3})});
    m.params_.push_back({"dec2_b", zeros_param({kConvC1})});
    m.params_.push_back({"dec1_k", he(kConvC1 * 9, {kConvC1, kConvC1, 3, 3})});
    m.params_.push_back({"dec1_b", zeros_param({kConvC1})});
    m.params_.push_back({"out_k", init_param({c, kConvC1, 3, 3}, 1e-3, rng)});
    m.params_.push_back({"out_b", zeros_param({c})});
  }
  return m;
}

std::vector<Tensor*> DenoiserModel::param_ptrs() {
  std::vector<Tensor*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p.tensor);
  return out;
}

Index DenoiserModel::param_count() const {
  Index n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

Tensor DenoiserModel::cond_matrix(std::span<const int> t, std::span<const int> labels, Index rows,
                                  int T) const {
  const Index e = time_embed_dim_, l = num_labels_;
  ArrayX data = ArrayX::Zero(rows * (e + l));
  for (Index r = 0; r < rows; ++r) {
    ArrayX emb = time_embedding(t[static_cast<size_t>(r)], static_cast<int>(e), T);
    data.segment(r * (e + l), e) = emb;
    if (l > 0) {
      int id = labels.empty() ? -1 : labels[static_cast<size_t>(r)];
      if (id < 0) {
        if (!allow_null_label)
          throw LabelRequired("conditional model called without a label (row " +
                              std::to_string(r) + ")");
        continue;  // all-zero label block
      }
      if (id >= num_labels_) throw BadShape("label id " + std::to_string(id) + " out of range");
      data[r * (e + l) + e + id] = 1.0;
    }
  }
  return Tensor({rows, e + l}, std::move(data));
}

Tensor DenoiserModel::forward_mlp(const Tensor& x, const Tensor& cond) const {
  Tensor h = concat_cols(x, cond);
  h = silu(add_bias(matmul(h, p(0)), p(1)));
  h = silu(add_bias(matmul(h, p(2)), p(3)));
  h = silu(add_bias(matmul(h, p(4)), p(5)));
  return add_bias(matmul(h, p(6)), p(7));
}

Tensor DenoiserModel::forward_conv(const Tensor& x, const Tensor& cond) const {
  Tensor bias_in = add_bias(matmul(cond, p(0)), p(1));    // [b, c1]
  Tensor bias_mid = add_bias(matmul(cond, p(2)), p(3));   // [b, c2]
  Tensor h1 = silu(add_channel_bias(conv2d(x, p(4), p(5)), bias_in));
  Tensor h2 = silu(conv2d(avg_pool2(h1), p(6), p(7)));
  Tensor mid = silu(add_channel_bias(conv2d(avg_pool2(h2), p(8), p(9)), bias_mid));
  Tensor d2 = silu(conv2d(add(upsample2(mid), h2), p(10), p(11)));
  Tensor d1 = silu(conv2d(add(upsample2(d2), h1), p(12), p(13)));
  return conv2d(d1, p(14), p(15));
}

Tensor DenoiserModel::predict(const Tensor& x_t, std::span<const int> t,
                              std::span<const int> labels, int T) const {
  if (x_t.ndim() != static_cast<Index>(in_shape_.size()) + 1)
    throw ShapeMismatch("predict: input must be a batch of in_shape samples");
  for (size_t i = 0; i < in_shape_.size(); ++i)
    if (x_t.shape()[i + 1] != in_shape_[i]) throw ShapeMismatch("predict: sample shape mismatch");
  const Index rows = x_t.shape()[0];
  if (static_cast<Index>(t.size()) != rows)
    throw ShapeMismatch("predict: one timestep per row required");
  if (num_labels_ > 0 && !labels.empty() && static_cast<Index>(labels.size()) != rows)
    throw ShapeMismatch("predict: one label per row required");

  Tensor cond = cond_matrix(t, labels, rows, T);
  if (arch_ == Arch::kMlp) {
    Tensor flat = reshape(x_t, {rows, numel(in_shape_)});
    Tensor out = forward_mlp(flat, cond);
    return reshape(out, x_t.shape());
  }
  return forward_conv(x_t, cond);
}

Tensor DenoiserModel::predict_single(const Tensor& x_t, int t, std::optional<int> label,
                                     int T) const {
  if (!same_shape(x_t.shape(), in_shape_)) throw ShapeMismatch("predict_single: shape mismatch");
  Shape batched = in_shape_;
  batched.insert(batched.begin(), 1);
  Tensor x = x_t.reshaped(batched);
  const int ts[1] = {t};
  std::vector<int> ls;
  if (label.has_value()) ls.push_back(*label);
  Tensor out = predict(x, ts, ls, T);
  return out.reshaped(in_shape_);
}

// ---- checkpoints --------------------------------------------------------------

DenoiserModel clone_model(const DenoiserModel& m) {
  auto bytes = checkpoint_bytes(m);
  return checkpoint_from_bytes(std::span<const uint8_t>(bytes.data(), bytes.size()));
}

std::vector<uint8_t> checkpoint_bytes(const DenoiserModel& m) {
  ByteWriter w;
  w.bytes(std::span<const uint8_t>(reinterpret_cast<const uint8_t*>(kCheckpointMagic), 4));
  w.u32(kCheckpointVersion);
  w.u8(static_cast<uint8_t>(m.arch_));
  w.u32(static_cast<uint32_t>(m.in_shape_.size()));
  for (Index e : m.in_shape_) w.u32(static_cast<uint32_t>(e));
  w.u32(static_cast<uint32_t>(m.num_labels_));
  w.u32(static_cast<uint32_t>(m.time_embed_dim_));
  w.u8(m.allow_null_label ? 1 : 0);
  w.u32(static_cast<uint32_t>(m.params_.size()));
  for (const auto& p : m.params_) {
    w.str(p.name);
    w.u32(static_cast<uint32_t>(p.tensor.ndim()));
    for (Index e : p.tensor.shape()) w.u32(static_cast<uint32_t>(e));
    for (Index i = 0; i < p.tensor.size(); ++i) w.f64(p.tensor.data()[i]);
  }
  return w.take();
}

DenoiserModel checkpoint_from_bytes(std::span<const uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0)
    throw BadMagic("not a checkpoint file");
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  DenoiserModel m;
  m.arch_ = static_cast<Arch>(r.u8());
  const uint32_t nd = r.u32();
  m.in_shape_.resize(nd);
  for (uint32_t i = 0; i < nd; ++i) m.in_shape_[i] = static_cast<Index>(r.u32());
  m.num_labels_ = static_cast<int>(r.u32());
  m.time_embed_dim_ = static_cast<int>(r.u32());
  m.allow_null_label = r.u8() != 0;
  const uint32_t np = r.u32();
  for (uint32_t i = 0; i < np; ++i) {
    NamedParam p;
    p.name = r.str();
    const uint32_t pd = r.u32();
    Shape shape(pd);
    for (uint32_t j = 0; j < pd; ++j) shape[j] = static_cast<Index>(r.u32());
    ArrayX data(numel(shape));
    for (Index j = 0; j < data.size(); ++j) data[j] = r.f64();
    p.tensor = Tensor(std::move(shape), std::move(data));
    p.tensor.set_requires_grad(true);
    m.params_.push_back(std::move(p));
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint payload");
  return m;
}

void save_checkpoint(const DenoiserModel& m, const std::string& path) {
  auto bytes = checkpoint_bytes(m);
  write_file_atomic(path, std::span<const uint8_t>(bytes.data(), bytes.size()));
}

DenoiserModel load_checkpoint(const std::string& path) {
  auto bytes = read_file(path);
  return checkpoint_from_bytes(std::span<const uint8_t>(bytes.data(), bytes.size()));
}

}  // namespace collafuse
