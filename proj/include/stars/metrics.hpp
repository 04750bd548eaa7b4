#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "stars/model.hpp"
#include "stars/motion.hpp"

namespace stars {

// Diverse-prediction metrics are in meters; MPJPE is reported in millimeters.
struct MetricReport {
  double apd = 0.0;
  double ade = 0.0;
  double fde = 0.0;
  double mmade = 0.0;
  double mmfde = 0.0;
  std::map<int64_t, double> mpjpe_by_horizon_ms;
  int64_t sample_count = 0;
  bool has_diverse = false;
  bool has_mpjpe = false;
};

// (1/(K(K-1))) sum_i sum_{j != i} |Y_i - Y_j|_2 over flattened sequences.
double apd(const PredictionSet& preds);
// (1/T_p) min_k |Y_k - Y|_2.
double ade(const PredictionSet& preds, const MotionSequence& gt);
// min_k |Y_k[T_p] - Y[T_p]|_2.
double fde(const PredictionSet& preds, const MotionSequence& gt);
// Means over the multi-modal ground-truth set of the per-neighbor quantities.
double mmade(const PredictionSet& preds, std::span<const MotionSequence> neighbors);
double mmfde(const PredictionSet& preds, std::span<const MotionSequence> neighbors);
// Joint-averaged Euclidean error per requested frame, in millimeters.
std::map<int64_t, double> mpjpe(const MotionSequence& pred, const MotionSequence& gt,
                                std::span<const int64_t> horizon_frames);

}  // namespace stars
