#pragma once

#include <cstdint>
#include <vector>

namespace stars {

// A frames x joints x 3 array of joint positions in meters; the universal
// payload between data files, the predictor, and the metric suite.
struct MotionSequence {
  int64_t frames = 0;
  int64_t joints = 0;
  std::vector<double> xyz;  // (frame, joint, coordinate) row-major

  static MotionSequence zeros(int64_t frames, int64_t joints);

  double& at(int64_t t, int64_t v, int64_t c);
  double at(int64_t t, int64_t v, int64_t c) const;

  bool all_finite() const;
  bool same_values(const MotionSequence& other) const;  // bitwise

  // Flattened view in (frame, joint, coordinate) order.
  const std::vector<double>& flat() const { return xyz; }
};

// Euclidean distance over the flattened (frame, joint, coordinate) vector.
double sequence_distance_l2(const MotionSequence& a, const MotionSequence& b);
// Euclidean distance between single frames, flattened over (joint, coordinate).
double frame_distance_l2(const MotionSequence& a, int64_t ta, const MotionSequence& b, int64_t tb);

}  // namespace stars
