#include "stars/motion.hpp"

#include <cmath>
#include <cstring>

#include "stars/error.hpp"

namespace stars {

MotionSequence MotionSequence::zeros(int64_t frames, int64_t joints) {
  MotionSequence s;
  s.frames = frames;
  s.joints = joints;
  s.xyz.assign(static_cast<size_t>(frames * joints * 3), 0.0);
  return s;
}

double& MotionSequence::at(int64_t t, int64_t v, int64_t c) {
  return xyz[static_cast<size_t>((t * joints + v) * 3 + c)];
}

double MotionSequence::at(int64_t t, int64_t v, int64_t c) const {
  return xyz[static_cast<size_t>((t * joints + v) * 3 + c)];
}

bool MotionSequence::all_finite() const {
  for (double v : xyz) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

bool MotionSequence::same_values(const MotionSequence& other) const {
  if (frames != other.frames || joints != other.joints) return false;
  if (xyz.empty()) return true;
  return std::memcmp(xyz.data(), other.xyz.data(), sizeof(double) * xyz.size()) == 0;
}

double sequence_distance_l2(const MotionSequence& a, const MotionSequence& b) {
  if (a.frames != b.frames || a.joints != b.joints) {
    throw ContractError("sequence_distance_l2: shapes differ");
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.xyz.size(); ++i) {
    const double d = a.xyz[i] - b.xyz[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

double frame_distance_l2(const MotionSequence& a, int64_t ta, const MotionSequence& b,
                         int64_t tb) {
  if (a.joints != b.joints) {
    throw ContractError("frame_distance_l2: joint counts differ");
  }
  double acc = 0.0;
  for (int64_t v = 0; v < a.joints; ++v) {
    for (int64_t c = 0; c < 3; ++c) {
      const double d = a.at(ta, v, c) - b.at(tb, v, c);
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

}  // namespace stars
