#include "stars/frequency.hpp"

#include <cmath>

#include "stars/error.hpp"

namespace stars {

Tensor DctBasis::as_tensor() const { return Tensor({m, t}, matrix); }

DctBasis build_dct_basis(int64_t m, int64_t t) {
  if (t < 1 || m < 1 || m > t) {
    throw ParameterError("build_dct_basis: need 1 <= M <= T, got M=" + std::to_string(m) +
                         " T=" + std::to_string(t));
  }
  DctBasis basis;
  basis.m = m;
  basis.t = t;
  basis.matrix.resize(static_cast<size_t>(m * t));
  const double norm = std::sqrt(2.0 / static_cast<double>(t));
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  for (int64_t row = 0; row < m; ++row) {
    const double s = row == 0 ? inv_sqrt2 : 1.0;
    for (int64_t col = 0; col < t; ++col) {
      const double angle = M_PI * static_cast<double>(2 * col + 1) * static_cast<double>(row) /
                           (2.0 * static_cast<double>(t));
      basis.matrix[static_cast<size_t>(row * t + col)] = s * norm * std::cos(angle);
    }
  }
  return basis;
}

MotionSequence pad_history(const MotionSequence& history, int64_t t_future) {
  if (history.frames < 1) {
    throw ParameterError("pad_history: history must contain at least one frame");
  }
  if (t_future < 0) {
    throw ParameterError("pad_history: negative future length");
  }
  MotionSequence out = MotionSequence::zeros(history.frames + t_future, history.joints);
  std::copy(history.xyz.begin(), history.xyz.end(), out.xyz.begin());
  const int64_t last = history.frames - 1;
  for (int64_t t = history.frames; t < out.frames; ++t) {
    for (int64_t v = 0; v < out.joints; ++v) {
      for (int64_t c = 0; c < 3; ++c) out.at(t, v, c) = history.at(last, v, c);
    }
  }
  return out;
}

Tensor to_frequency(const DctBasis& basis, const MotionSequence& padded) {
  if (padded.frames != basis.t) {
    throw ContractError("to_frequency: sequence length " + std::to_string(padded.frames) +
                        " does not match basis T=" + std::to_string(basis.t));
  }
  const int64_t channels = padded.joints * 3;
  const Tensor series({basis.t, channels}, padded.xyz);
  const Tensor coeffs = matmul(basis.as_tensor(), series);
  return reshape(coeffs, {basis.m, padded.joints, 3});
}

std::pair<MotionSequence, MotionSequence> to_time(const DctBasis& basis, const Tensor& coeffs,
                                                  int64_t t_history, int64_t t_future) {
  if (t_history < 0 || t_future < 0 || t_history + t_future != basis.t) {
    throw ParameterError("to_time: split " + std::to_string(t_history) + "+" +
                         std::to_string(t_future) + " does not cover basis T=" +
                         std::to_string(basis.t));
  }
  if (coeffs.rank() != 3 || coeffs.dim(0) != basis.m || coeffs.dim(2) != 3) {
    throw ContractError("to_time: coefficients shape " + shape_str(coeffs.shape()) +
                        " does not match basis M=" + std::to_string(basis.m));
  }
  const int64_t joints = coeffs.dim(1);
  const int64_t channels = joints * 3;
  // full series = transpose(matrix) * coeffs
  std::vector<double> transposed(static_cast<size_t>(basis.t * basis.m));
  for (int64_t row = 0; row < basis.m; ++row) {
    for (int64_t col = 0; col < basis.t; ++col) {
      transposed[static_cast<size_t>(col * basis.m + row)] = basis.at(row, col);
    }
  }
  const Tensor ct({basis.t, basis.m}, std::move(transposed));
  const Tensor series = matmul(ct, reshape(coeffs, {basis.m, channels}));

  MotionSequence history = MotionSequence::zeros(t_history, joints);
  MotionSequence future = MotionSequence::zeros(t_future, joints);
  const auto sv = series.values();
  std::copy_n(sv.begin(), t_history * channels, history.xyz.begin());
  std::copy_n(sv.begin() + t_history * channels, t_future * channels, future.xyz.begin());
  return {std::move(history), std::move(future)};
}

}  // namespace stars
