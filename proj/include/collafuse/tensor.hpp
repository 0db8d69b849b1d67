#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "collafuse/errors.hpp"
#include "collafuse/types.hpp"

namespace collafuse {

class Tape;

// Gradient sink shared between a leaf tensor and the tapes that consume it.
struct GradBuffer {
  ArrayX g;
  bool populated = false;
};

// Dense n-dimensional array of Scalar, flat row-major storage.
// Value semantics for data; the gradient buffer is shared between copies so
// a model and an optimizer can both see it.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, ArrayX data);
  explicit Tensor(std::initializer_list<Scalar> values);  // 1-d

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, Scalar value);
  static Tensor scalar(Scalar value);  // rank-0

  const Shape& shape() const { return shape_; }
  Index ndim() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return data_.size(); }
  const ArrayX& data() const { return data_; }
  ArrayX& data() { return data_; }

  Scalar value() const;  // requires size() == 1

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on);

  // nullptr until backward() has populated it
  const ArrayX* grad() const;
  void clear_grad();
  const std::shared_ptr<GradBuffer>& grad_buffer() const { return grad_; }

  Tensor reshaped(Shape shape) const;  // same data, new shape (copy)

 private:
  friend class Tape;
  friend class OpRecorder;
  Shape shape_;
  ArrayX data_;
  bool requires_grad_ = false;
  std::shared_ptr<GradBuffer> grad_;
  // tape bookkeeping: node id valid only while gen_ matches the active tape
  mutable int node_ = -1;
  mutable uint64_t gen_ = 0;
};

enum class OpKind : uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kAddScalar,   // a + s
  kRSubScalar,  // s - a
  kScale,       // a * s
  kSquare,
  kMatmul,
  kAddBias,
  kConcatCols,
  kSilu,
  kConv2d,
  kAvgPool2,
  kUpsample2,
  kAddChannelBias,
  kReshape,
  kSum,
  kMseLoss,
};

// Append-only record of executed operations. Construction activates the tape
// for the current thread; destruction restores the previous one. A tape is
// built for one forward pass and discarded after backward().
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  // Runs reverse accumulation from `loss`. Each recorded node is visited at
  // most once; leaf gradients land in the tensors' shared buffers.
  void backward(const Tensor& loss);

  bool consumed() const { return consumed_; }
  size_t node_count() const { return nodes_.size(); }

  struct Node {
    OpKind op;
    int in0 = -1, in1 = -1, in2 = -1;
    Shape shape;
    Index size = 0;
    ArrayX grad;       // adjoint, lazily allocated
    ArrayX saved0, saved1;
    MatrixX saved_mat;  // conv im2col cache
    Scalar scalar = 0;
    std::array<Index, 8> dims{};
    std::shared_ptr<GradBuffer> leaf_grad;
  };

 private:
  friend class OpRecorder;

  int leaf_id(const Tensor& t);
  int push(Node&& n);
  void accumulate(int node, const ArrayX& g);
  void step_back(Node& n);

  std::vector<Node> nodes_;
  bool consumed_ = false;
  uint64_t gen_ = 0;
  Tape* prev_ = nullptr;
};

// ---- operations ------------------------------------------------------------
// Every function returns a fresh tensor and never mutates its inputs. When a
// tape is active and an input participates in gradients, an edge is recorded.

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, Scalar s);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, Scalar s);
Tensor sub(Scalar s, const Tensor& a);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Scalar s);
Tensor square(const Tensor& a);

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// x [m,n] + bias [n], broadcast over rows
Tensor add_bias(const Tensor& x, const Tensor& bias);
// [m,n1] | [m,n2] -> [m, n1+n2]
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor silu(const Tensor& x);

// 3x3 cross-correlation, stride 1, zero padding 1 (same size).
// x [b,cin,h,w], kernel [cout,cin,3,3], bias [cout] -> [b,cout,h,w]
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);
// 2x2 mean pooling; h and w must be even
Tensor avg_pool2(const Tensor& x);
// nearest-neighbour 2x upsampling
Tensor upsample2(const Tensor& x);
// x [b,c,h,w] + bias [b,c], broadcast over the spatial extent
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
// same flat data under a new shape; gradient passes through unchanged
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);                            // -> rank-0
Tensor mse_loss(const Tensor& pred, const Tensor& target);  // mean over all elements

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, Scalar s) { return scale(a, s); }
inline Tensor operator*(Scalar s, const Tensor& a) { return scale(a, s); }

// Runs reverse-mode accumulation on the active tape. `loss` must be a
// single-element tensor recorded on it; a tape can only be consumed once.
void backward(const Tensor& loss);

}  // namespace collafuse
