#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "stars/motion.hpp"
#include "stars/tensor.hpp"

namespace stars {

// Orthonormal DCT-II basis. Rows are basis vectors, so matrix * matrix^T is
// the M x M identity and the transpose inverts the transform at M == T.
struct DctBasis {
  int64_t m = 0;  // retained coefficient count
  int64_t t = 0;  // sequence length the basis spans
  std::vector<double> matrix;  // m x t, row-major

  double at(int64_t row, int64_t col) const { return matrix[static_cast<size_t>(row * t + col)]; }
  // The basis as a (m, t) tensor for use inside differentiable pipelines.
  Tensor as_tensor() const;
};

// entry[m][t] = s_m * sqrt(2/T) * cos(pi * (2t+1) * m / (2T)), s_0 = 1/sqrt(2).
DctBasis build_dct_basis(int64_t m, int64_t t);

// Replicates the last pose t_future times after the history.
MotionSequence pad_history(const MotionSequence& history, int64_t t_future);

// Per joint-coordinate channel: coefficients = matrix * time series.
// Returns shape (m, joints, 3).
Tensor to_frequency(const DctBasis& basis, const MotionSequence& padded);

// Inverse transform followed by a split into the recovered history (first
// t_history frames) and the future (last t_future frames).
std::pair<MotionSequence, MotionSequence> to_time(const DctBasis& basis, const Tensor& coeffs,
                                                  int64_t t_history, int64_t t_future);

}  // namespace stars
