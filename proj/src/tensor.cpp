#include "collafuse/tensor.hpp"

#include <cmath>

namespace collafuse {

namespace {

thread_local Tape* g_current_tape = nullptr;
thread_local uint64_t g_tape_gen = 0;

void ensure_finite(const ArrayX& a) {
  if (!a.allFinite()) throw NonFinite("tensor holds NaN or Inf");
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// x flat [b,cin,h,w] -> patches [b*h*w, cin*9], zero padded border
MatrixX im2col3(const ArrayX& x, Index b, Index cin, Index h, Index w) {
  MatrixX cols = MatrixX::Zero(b * h * w, cin * 9);
  for (Index bi = 0; bi < b; ++bi) {
    for (Index y = 0; y < h; ++y) {
      for (Index xx = 0; xx < w; ++xx) {
        const Index row = (bi * h + y) * w + xx;
        for (Index ci = 0; ci < cin; ++ci) {
          const Index base = ((bi * cin + ci) * h) * w;
          for (Index dy = -1; dy <= 1; ++dy) {
            const Index sy = y + dy;
            if (sy < 0 || sy >= h) continue;
            for (Index dx = -1; dx <= 1; ++dx) {
              const Index sx = xx + dx;
              if (sx < 0 || sx >= w) continue;
              cols(row, ci * 9 + (dy + 1) * 3 + (dx + 1)) = x[base + sy * w + sx];
            }
          }
        }
      }
    }
  }
  return cols;
}

// adjoint of im2col3: scatter-add patch gradients back onto the image grid
void col2im3_add(const MatrixX& cols, ArrayX& gx, Index b, Index cin, Index h, Index w) {
  for (Index bi = 0; bi < b; ++bi) {
    for (Index y = 0; y < h; ++y) {
      for (Index xx = 0; xx < w; ++xx) {
        const Index row = (bi * h + y) * w + xx;
        for (Index ci = 0; ci < cin; ++ci) {
          const Index base = ((bi * cin + ci) * h) * w;
          for (Index dy = -1; dy <= 1; ++dy) {
            const Index sy = y + dy;
            if (sy < 0 || sy >= h) continue;
            for (Index dx = -1; dx <= 1; ++dx) {
              const Index sx = xx + dx;
              if (sx < 0 || sx >= w) continue;
              gx[base + sy * w + sx] += cols(row, ci * 9 + (dy + 1) * 3 + (dx + 1));
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor(Shape shape, ArrayX data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size())
    throw ShapeMismatch("shape " + shape_str(shape_) + " does not match data length " +
                        std::to_string(data_.size()));
  ensure_finite(data_);
}

Tensor::Tensor(std::initializer_list<Scalar> values) {
  shape_ = {static_cast<Index>(values.size())};
  data_.resize(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar v : values) data_[i++] = v;
  ensure_finite(data_);
}

Tensor Tensor::zeros(Shape shape) {
  Index n = numel(shape);
  return Tensor(std::move(shape), ArrayX::Zero(n));
}

Tensor Tensor::full(Shape shape, Scalar value) {
  Index n = numel(shape);
  return Tensor(std::move(shape), ArrayX::Constant(n, value));
}

Tensor Tensor::scalar(Scalar value) { return Tensor(Shape{}, ArrayX::Constant(1, value)); }

Scalar Tensor::value() const {
  if (data_.size() != 1) throw NotScalar("tensor of size " + std::to_string(data_.size()));
  return data_[0];
}

Tensor& Tensor::set_requires_grad(bool on) {
  requires_grad_ = on;
  if (on && !grad_) grad_ = std::make_shared<GradBuffer>();
  if (!on) grad_.reset();
  return *this;
}

const ArrayX* Tensor::grad() const {
  if (grad_ && grad_->populated) return &grad_->g;
  return nullptr;
}

void Tensor::clear_grad() {
  if (grad_) {
    grad_->g.setZero();
    grad_->populated = false;
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    throw ShapeMismatch("reshape to " + shape_str(shape) + " from size " +
                        std::to_string(data_.size()));
  Tensor out(std::move(shape), data_);
  return out;
}

// ---- Tape -------------------------------------------------------------------

Tape::Tape() : gen_(++g_tape_gen), prev_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

int Tape::push(Node&& n) {
  n.size = numel(n.shape);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf_id(const Tensor& t) {
  if (t.gen_ == gen_ && t.node_ >= 0) return t.node_;
  if (!t.requires_grad_) return -1;
  Node n;
  n.op = OpKind::kLeaf;
  n.shape = t.shape_;
  n.leaf_grad = t.grad_;
  int id = push(std::move(n));
  t.node_ = id;
  t.gen_ = gen_;
  return id;
}

void Tape::accumulate(int node, const ArrayX& g) {
  if (node < 0) return;
  Node& n = nodes_[static_cast<size_t>(node)];
  if (n.grad.size() == 0) n.grad = ArrayX::Zero(n.size);
  n.grad += g;
}

void Tape::backward(const Tensor& loss) {
  if (consumed_) throw GraphConsumed("tape already consumed by a previous backward pass");
  if (loss.size() != 1) throw NotScalar("backward requires a single-element loss");
  if (loss.gen_ != gen_ || loss.node_ < 0)
    throw Error("loss was not recorded on the active tape");
  consumed_ = true;
  accumulate(loss.node_, ArrayX::Ones(1));
  for (int i = loss.node_; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.grad.size() == 0) continue;  // no gradient reaches this node
    step_back(n);
  }
}

void Tape::step_back(Node& n) {
  const ArrayX& g = n.grad;
  switch (n.op) {
    case OpKind::kLeaf: {
      GradBuffer& buf = *n.leaf_grad;
      if (buf.g.size() == 0) buf.g = ArrayX::Zero(n.size);
      buf.g += g;
      buf.populated = true;
      break;
    }
    case OpKind::kAdd:
      accumulate(n.in0, g);
      accumulate(n.in1, g);
      break;
    case OpKind::kSub:
      accumulate(n.in0, g);
      accumulate(n.in1, -g);
      break;
    case OpKind::kMul:
      accumulate(n.in0, g * n.saved1);
      accumulate(n.in1, g * n.saved0);
      break;
    case OpKind::kAddScalar:
      accumulate(n.in0, g);
      break;
    case OpKind::kRSubScalar:
      accumulate(n.in0, -g);
      break;
    case OpKind::kScale:
      accumulate(n.in0, g * n.scalar);
      break;
    case OpKind::kSquare:
      accumulate(n.in0, 2.0 * n.saved0 * g);
      break;
    case OpKind::kMatmul: {
      const Index m = n.dims[0], k = n.dims[1], nn = n.dims[2];
      Eigen::Map<const RowMatrixX> G(g.data(), m, nn);
      Eigen::Map<const RowMatrixX> A(n.saved0.data(), m, k);
      Eigen::Map<const RowMatrixX> B(n.saved1.data(), k, nn);
      if (n.in0 >= 0) {
        ArrayX ga(m * k);
        Eigen::Map<RowMatrixX>(ga.data(), m, k) = G * B.transpose();
        accumulate(n.in0, ga);
      }
      if (n.in1 >= 0) {
        ArrayX gb(k * nn);
        Eigen::Map<RowMatrixX>(gb.data(), k, nn) = A.transpose() * G;
        accumulate(n.in1, gb);
      }
      break;
    }
    case OpKind::kAddBias: {
      const Index m = n.dims[0], c = n.dims[1];
      accumulate(n.in0, g);
      if (n.in1 >= 0) {
        Eigen::Map<const RowMatrixX> G(g.data(), m, c);
        ArrayX gb = G.colwise().sum().transpose().array();
        accumulate(n.in1, gb);
      }
      break;
    }
    case OpKind::kConcatCols: {
      const Index m = n.dims[0], n1 = n.dims[1], n2 = n.dims[2];
      Eigen::Map<const RowMatrixX> G(g.data(), m, n1 + n2);
      if (n.in0 >= 0) {
        ArrayX ga(m * n1);
        Eigen::Map<RowMatrixX>(ga.data(), m, n1) = G.leftCols(n1);
        accumulate(n.in0, ga);
      }
      if (n.in1 >= 0) {
        ArrayX gb(m * n2);
        Eigen::Map<RowMatrixX>(gb.data(), m, n2) = G.rightCols(n2);
        accumulate(n.in1, gb);
      }
      break;
    }
    case OpKind::kSilu: {
      const ArrayX& x = n.saved0;
      ArrayX sig = 1.0 / (1.0 + (-x).exp());
      accumulate(n.in0, g * sig * (1.0 + x * (1.0 - sig)));
      break;
    }
    case OpKind::kConv2d: {
      const Index b = n.dims[0], cin = n.dims[1], h = n.dims[2], w = n.dims[3], cout = n.dims[4];
      const Index bhw = b * h * w;
      // gather the adjoint into [bhw, cout] to mirror the forward layout
      MatrixX gmat(bhw, cout);
      for (Index bi = 0; bi < b; ++bi)
        for (Index co = 0; co < cout; ++co) {
          const Index base = ((bi * cout + co) * h) * w;
          for (Index p = 0; p < h * w; ++p) gmat(bi * h * w + p, co) = g[base + p];
        }
      if (n.in1 >= 0) {
        ArrayX gk(cout * cin * 9);
        Eigen::Map<RowMatrixX>(gk.data(), cout, cin * 9) = gmat.transpose() * n.saved_mat;
        accumulate(n.in1, gk);
      }
      if (n.in2 >= 0) {
        ArrayX gb = gmat.colwise().sum().transpose().array();
        accumulate(n.in2, gb);
      }
      if (n.in0 >= 0) {
        Eigen::Map<const RowMatrixX> W(n.saved1.data(), cout, cin * 9);
        MatrixX pg = gmat * W;  // [bhw, cin*9]
        ArrayX gx = ArrayX::Zero(b * cin * h * w);
        col2im3_add(pg, gx, b, cin, h, w);
        accumulate(n.in0, gx);
      }
      break;
    }
    case OpKind::kAvgPool2: {
      const Index b = n.dims[0], c = n.dims[1], h = n.dims[2], w = n.dims[3];
      const Index ho = h / 2, wo = w / 2;
      ArrayX gx(b * c * h * w);
      for (Index bc = 0; bc < b * c; ++bc) {
        const Index obase = bc * ho * wo, ibase = bc * h * w;
        for (Index y = 0; y < h; ++y)
          for (Index xx = 0; xx < w; ++xx)
            gx[ibase + y * w + xx] = 0.25 * g[obase + (y / 2) * wo + (xx / 2)];
      }
      accumulate(n.in0, gx);
      break;
    }
    case OpKind::kUpsample2: {
      const Index b = n.dims[0], c = n.dims[1], h = n.dims[2], w = n.dims[3];
      const Index ho = h * 2, wo = w * 2;
      ArrayX gx = ArrayX::Zero(b * c * h * w);
      for (Index bc = 0; bc < b * c; ++bc) {
        const Index obase = bc * ho * wo, ibase = bc * h * w;
        for (Index y = 0; y < ho; ++y)
          for (Index xx = 0; xx < wo; ++xx)
            gx[ibase + (y / 2) * w + (xx / 2)] += g[obase + y * wo + xx];
      }
      accumulate(n.in0, gx);
      break;
    }
    case OpKind::kAddChannelBias: {
      const Index b = n.dims[0], c = n.dims[1], hw = n.dims[2];
      accumulate(n.in0, g);
      if (n.in1 >= 0) {
        ArrayX gb(b * c);
        for (Index i = 0; i < b * c; ++i) gb[i] = g.segment(i * hw, hw).sum();
        accumulate(n.in1, gb);
      }
      break;
    }
    case OpKind::kReshape:
      accumulate(n.in0, g);
      break;
    case OpKind::kSum:
      accumulate(n.in0, ArrayX::Constant(nodes_[static_cast<size_t>(n.in0)].size, g[0]));
      break;
    case OpKind::kMseLoss: {
      const Scalar c = 2.0 * g[0] / static_cast<Scalar>(n.saved0.size());
      if (n.in0 >= 0) accumulate(n.in0, c * n.saved0);
      if (n.in1 >= 0) accumulate(n.in1, (-c) * n.saved0);
      break;
    }
  }
}

void backward(const Tensor& loss) {
  Tape* t = Tape::current();
  if (!t) throw Error("backward called with no active tape");
  t->backward(loss);
}

// ---- op recording helpers ----------------------------------------------------

class OpRecorder {
 public:
  // node id for t on the active tape, or -1 when t does not join the graph
  static int input_id(Tape* tp, const Tensor& t) {
    if (!tp) return -1;
    return tp->leaf_id(t);
  }

  static void tag_output(Tape* tp, const Tensor& out, int id) {
    if (!tp || id < 0) return;
    out.node_ = id;
    out.gen_ = tp->gen_;
  }

  static int record(Tape* tp, Tape::Node&& n) {
    return tp->push(std::move(n));
  }
};

namespace {

// builds the output tensor and, when any input is live, the tape node
struct OpBuilder {
  Tape* tape = Tape::current();
  Tape::Node node;
  bool live = false;

  explicit OpBuilder(OpKind op) { node.op = op; }

  void input0(const Tensor& t) {
    node.in0 = OpRecorder::input_id(tape, t);
    live = live || node.in0 >= 0;
  }
  void input1(const Tensor& t) {
    node.in1 = OpRecorder::input_id(tape, t);
    live = live || node.in1 >= 0;
  }
  void input2(const Tensor& t) {
    node.in2 = OpRecorder::input_id(tape, t);
    live = live || node.in2 >= 0;
  }

  Tensor finish(Shape shape, ArrayX data) {
    ensure_finite(data);
    Tensor out(std::move(shape), std::move(data));
    if (tape && live) {
      node.shape = out.shape();
      OpRecorder::tag_output(tape, out, OpRecorder::record(tape, std::move(node)));
    }
    return out;
  }
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!same_shape(a.shape(), b.shape()))
    throw ShapeMismatch(std::string(what) + ": shapes " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
}

}  // namespace

// ---- elementwise --------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  OpBuilder op(OpKind::kAdd);
  op.input0(a);
  op.input1(b);
  return op.finish(a.shape(), a.data() + b.data());
}

Tensor add(const Tensor& a, Scalar s) {
  OpBuilder op(OpKind::kAddScalar);
  op.input0(a);
  op.node.scalar = s;
  return op.finish(a.shape(), a.data() + s);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  OpBuilder op(OpKind::kSub);
  op.input0(a);
  op.input1(b);
  return op.finish(a.shape(), a.data() - b.data());
}

Tensor sub(const Tensor& a, Scalar s) { return add(a, -s); }

Tensor sub(Scalar s, const Tensor& a) {
  OpBuilder op(OpKind::kRSubScalar);
  op.input0(a);
  op.node.scalar = s;
  return op.finish(a.shape(), s - a.data());
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  OpBuilder op(OpKind::kMul);
  op.input0(a);
  op.input1(b);
  if (op.live) {
    op.node.saved0 = a.data();
    op.node.saved1 = b.data();
  }
  return op.finish(a.shape(), a.data() * b.data());
}

Tensor scale(const Tensor& a, Scalar s) {
  OpBuilder op(OpKind::kScale);
  op.input0(a);
  op.node.scalar = s;
  return op.finish(a.shape(), a.data() * s);
}

Tensor square(const Tensor& a) {
  OpBuilder op(OpKind::kSquare);
  op.input0(a);
  if (op.live) op.node.saved0 = a.data();
  return op.finish(a.shape(), a.data().square());
}

// ---- linear algebra ------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const Index m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  OpBuilder op(OpKind::kMatmul);
  op.input0(a);
  op.input1(b);
  op.node.dims = {m, k, n};
  if (op.live) {
    op.node.saved0 = a.data();
    op.node.saved1 = b.data();
  }
  ArrayX out(m * n);
  Eigen::Map<RowMatrixX>(out.data(), m, n) =
      Eigen::Map<const RowMatrixX>(a.data().data(), m, k) *
      Eigen::Map<const RowMatrixX>(b.data().data(), k, n);
  return op.finish({m, n}, std::move(out));
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.ndim() != 2 || bias.ndim() != 1 || bias.shape()[0] != x.shape()[1])
    throw ShapeMismatch("add_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  const Index m = x.shape()[0], n = x.shape()[1];
  OpBuilder op(OpKind::kAddBias);
  op.input0(x);
  op.input1(bias);
  op.node.dims = {m, n};
  ArrayX out(m * n);
  Eigen::Map<RowMatrixX>(out.data(), m, n) =
      Eigen::Map<const RowMatrixX>(x.data().data(), m, n).rowwise() +
      Eigen::Map<const VectorX>(bias.data().data(), n).transpose();
  return op.finish({m, n}, std::move(out));
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[0] != b.shape()[0])
    throw ShapeMismatch("concat_cols: " + shape_str(a.shape()) + " | " + shape_str(b.shape()));
  const Index m = a.shape()[0], n1 = a.shape()[1], n2 = b.shape()[1];
  OpBuilder op(OpKind::kConcatCols);
  op.input0(a);
  op.input1(b);
  op.node.dims = {m, n1, n2};
  ArrayX out(m * (n1 + n2));
  Eigen::Map<RowMatrixX> O(out.data(), m, n1 + n2);
  O.leftCols(n1) = Eigen::Map<const RowMatrixX>(a.data().data(), m, n1);
  O.rightCols(n2) = Eigen::Map<const RowMatrixX>(b.data().data(), m, n2);
  return op.finish({m, n1 + n2}, std::move(out));
}

Tensor silu(const Tensor& x) {
  OpBuilder op(OpKind::kSilu);
  op.input0(x);
  if (op.live) op.node.saved0 = x.data();
  ArrayX sig = 1.0 / (1.0 + (-x.data()).exp());
  return op.finish(x.shape(), x.data() * sig);
}

// ---- grid ops -------------------------------------------------------------------

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  if (x.ndim() != 4) throw ShapeMismatch("conv2d: input must be [b,c,h,w]");
  const Index b = x.shape()[0], cin = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (kernel.ndim() != 4 || kernel.shape()[1] != cin || kernel.shape()[2] != 3 ||
      kernel.shape()[3] != 3)
    throw ShapeMismatch("conv2d: kernel must be [cout," + std::to_string(cin) + ",3,3]");
  const Index cout = kernel.shape()[0];
  if (bias.ndim() != 1 || bias.shape()[0] != cout)
    throw ShapeMismatch("conv2d: bias must be [cout]");

  MatrixX cols = im2col3(x.data(), b, cin, h, w);
  Eigen::Map<const RowMatrixX> W(kernel.data().data(), cout, cin * 9);
  MatrixX omat = cols * W.transpose();  // [bhw, cout]
  omat.rowwise() += Eigen::Map<const VectorX>(bias.data().data(), cout).transpose();

  OpBuilder op(OpKind::kConv2d);
  op.input0(x);
  op.input1(kernel);
  op.input2(bias);
  op.node.dims = {b, cin, h, w, cout};
  if (op.live) {
    op.node.saved_mat = std::move(cols);
    op.node.saved1 = kernel.data();
  }
  ArrayX out(b * cout * h * w);
  for (Index bi = 0; bi < b; ++bi)
    for (Index co = 0; co < cout; ++co) {
      const Index base = ((bi * cout + co) * h) * w;
      for (Index p = 0; p < h * w; ++p) out[base + p] = omat(bi * h * w + p, co);
    }
  return op.finish({b, cout, h, w}, std::move(out));
}

Tensor avg_pool2(const Tensor& x) {
  if (x.ndim() != 4 || x.shape()[2] % 2 != 0 || x.shape()[3] % 2 != 0)
    throw ShapeMismatch("avg_pool2: input must be [b,c,h,w] with even h,w");
  const Index b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const Index ho = h / 2, wo = w / 2;
  OpBuilder op(OpKind::kAvgPool2);
  op.input0(x);
  op.node.dims = {b, c, h, w};
  ArrayX out(b * c * ho * wo);
  for (Index bc = 0; bc < b * c; ++bc) {
    const Index ibase = bc * h * w, obase = bc * ho * wo;
    for (Index y = 0; y < ho; ++y)
      for (Index xx = 0; xx < wo; ++xx) {
        const Index i0 = ibase + 2 * y * w + 2 * xx;
        out[obase + y * wo + xx] = 0.25 * (x.data()[i0] + x.data()[i0 + 1] +
                                           x.data()[i0 + w] + x.data()[i0 + w + 1]);
      }
  }
  return op.finish({b, c, ho, wo}, std::move(out));
}

Tensor upsample2(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeMismatch("upsample2: input must be [b,c,h,w]");
  const Index b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  const Index ho = h * 2, wo = w * 2;
  OpBuilder op(OpKind::kUpsample2);
  op.input0(x);
  op.node.dims = {b, c, h, w};
  ArrayX out(b * c * ho * wo);
  for (Index bc = 0; bc < b * c; ++bc) {
    const Index ibase = bc * h * w, obase = bc * ho * wo;
    for (Index y = 0; y < ho; ++y)
      for (Index xx = 0; xx < wo; ++xx)
        out[obase + y * wo + xx] = x.data()[ibase + (y / 2) * w + (xx / 2)];
  }
  return op.finish({b, c, ho, wo}, std::move(out));
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  if (x.ndim() != 4 || bias.ndim() != 2 || bias.shape()[0] != x.shape()[0] ||
      bias.shape()[1] != x.shape()[1])
    throw ShapeMismatch("add_channel_bias: " + shape_str(x.shape()) + " + " +
                        shape_str(bias.shape()));
  const Index b = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  OpBuilder op(OpKind::kAddChannelBias);
  op.input0(x);
  op.input1(bias);
  op.node.dims = {b, c, hw};
  ArrayX out(x.size());
  for (Index i = 0; i < b * c; ++i) out.segment(i * hw, hw) = x.data().segment(i * hw, hw) + bias.data()[i];
  return op.finish(x.shape(), std::move(out));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeMismatch("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  OpBuilder op(OpKind::kReshape);
  op.input0(x);
  return op.finish(std::move(shape), x.data());
}

// ---- reductions -----------------------------------------------------------------

Tensor sum(const Tensor& x) {
  OpBuilder op(OpKind::kSum);
  op.input0(x);
  return op.finish(Shape{}, ArrayX::Constant(1, x.data().sum()));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "mse_loss");
  OpBuilder op(OpKind::kMseLoss);
  op.input0(pred);
  op.input1(target);
  ArrayX diff = pred.data() - target.data();
  if (op.live) op.node.saved0 = diff;
  return op.finish(Shape{}, ArrayX::Constant(1, diff.square().mean()));
}

}  // namespace collafuse
