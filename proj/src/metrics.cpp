#include "stars/metrics.hpp"

#include <cmath>
#include <limits>

#include "stars/error.hpp"

namespace stars {

double apd(const PredictionSet& preds) {
  const int64_t k = preds.k();
  if (k < 2) throw ContractError("apd: needs at least two predictions");
  double acc = 0.0;
  for (int64_t a = 0; a < k; ++a) {
    for (int64_t b = a + 1; b < k; ++b) {
      acc += 2.0 * sequence_distance_l2(preds.futures[static_cast<size_t>(a)],
                                        preds.futures[static_cast<size_t>(b)]);
    }
  }
  return acc / static_cast<double>(k * (k - 1));
}

namespace {

double closest_distance(const PredictionSet& preds, const MotionSequence& gt) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : preds.futures) best = std::min(best, sequence_distance_l2(f, gt));
  return best;
}

double closest_final_distance(const PredictionSet& preds, const MotionSequence& gt) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& f : preds.futures) {
    best = std::min(best, frame_distance_l2(f, f.frames - 1, gt, gt.frames - 1));
  }
  return best;
}

}  // namespace

double ade(const PredictionSet& preds, const MotionSequence& gt) {
  if (preds.k() < 1) throw ContractError("ade: needs at least one prediction");
  return closest_distance(preds, gt) / static_cast<double>(gt.frames);
}

double fde(const PredictionSet& preds, const MotionSequence& gt) {
  if (preds.k() < 1) throw ContractError("fde: needs at least one prediction");
  return closest_final_distance(preds, gt);
}

double mmade(const PredictionSet& preds, std::span<const MotionSequence> neighbors) {
  if (neighbors.empty()) throw ContractError("mmade: empty multi-modal ground-truth set");
  double acc = 0.0;
  for (const MotionSequence& yn : neighbors) {
    acc += closest_distance(preds, yn) / static_cast<double>(yn.frames);
  }
  return acc / static_cast<double>(neighbors.size());
}

double mmfde(const PredictionSet& preds, std::span<const MotionSequence> neighbors) {
  if (neighbors.empty()) throw ContractError("mmfde: empty multi-modal ground-truth set");
  double acc = 0.0;
  for (const MotionSequence& yn : neighbors) acc += closest_final_distance(preds, yn);
  return acc / static_cast<double>(neighbors.size());
}

std::map<int64_t, double> mpjpe(const MotionSequence& pred, const MotionSequence& gt,
                                std::span<const int64_t> horizon_frames) {
  if (pred.frames != gt.frames || pred.joints != gt.joints) {
    throw ContractError("mpjpe: prediction and ground truth shapes differ");
  }
  std::map<int64_t, double> out;
  for (int64_t t : horizon_frames) {
    if (t < 0 || t >= pred.frames) {
      throw ParameterError("mpjpe: horizon frame " + std::to_string(t) +
                           " beyond prediction length " + std::to_string(pred.frames));
    }
    double acc = 0.0;
    for (int64_t v = 0; v < pred.joints; ++v) {
      double sq = 0.0;
      for (int64_t c = 0; c < 3; ++c) {
        const double d = pred.at(t, v, c) - gt.at(t, v, c);
        sq += d * d;
      }
      acc += std::sqrt(sq);
    }
    out[t] = 1000.0 * acc / static_cast<double>(pred.joints);  // meters -> millimeters
  }
  return out;
}

}  // namespace stars
