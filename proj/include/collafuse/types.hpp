#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include <Eigen/Dense>

namespace collafuse {

// 64-bit reals throughout; wire traffic downcasts to float32 (see protocol.hpp).
using Scalar = double;

using ArrayX     = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
using VectorX    = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using MatrixX    = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
// Tensors are stored flat in row-major order; this map view matches that layout.
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index      = Eigen::Index;

using Shape = std::vector<Index>;

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) n *= e;
  return n;
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace collafuse
