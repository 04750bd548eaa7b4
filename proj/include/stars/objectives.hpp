#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stars/data.hpp"
#include "stars/graph.hpp"
#include "stars/tensor.hpp"

namespace stars {

struct LossWeights {
  double lambda_r = 2.0;
  double lambda_mm = 1.0;
  double lambda_h = 50.0;
  double lambda_d = 160.0;
  double lambda_nf = 0.01;
  double lambda_l = 500.0;
  double lambda_a = 100.0;
  double alpha_div = 100.0;  // diversity temperature

  void validate() const;
};

// Per sample: indices of the windows whose final history pose lies within
// epsilon; always contains the sample itself.
struct MultiModalGT {
  std::vector<std::vector<int64_t>> neighbors;
};

MultiModalGT multimodal_ground_truth(const std::vector<MotionWindow>& windows, double epsilon);

// All losses take futures / histories as (T, V, 3) tensors, tape-bound during
// training and plain values in tests, and return scalars. Sequence distances
// flatten (frame, joint, coordinate) into one vector; the diversity kernel
// uses L1, everything else squared L2.

// min_k |Y_k - Y|^2
Tensor loss_reconstruction(std::span<const Tensor> futures, const Tensor& gt_future);
// (1/N) sum_n min_k |Y_k - Y_n|^2
Tensor loss_multimodal(std::span<const Tensor> futures, std::span<const Tensor> neighbor_futures);
// (1/K) sum_k |X_k - X|^2
Tensor loss_history(std::span<const Tensor> recovered_histories, const Tensor& gt_history);
// (2/(K(K-1))) sum_{j<k} exp(-|Y_j - Y_k|_1 / alpha)
Tensor loss_diversity(std::span<const Tensor> futures, double alpha_div);
// (1/K) sum_k |L_k - L|^2 over per-frame bone lengths
Tensor loss_limb(std::span<const Tensor> futures, const Skeleton& skeleton,
                 const Tensor& gt_future);

// Pluggable pose realism penalty standing in for an external density model.
using PosePriorHook = std::function<Tensor(std::span<const Tensor> futures)>;

// Mean over predictions and joints, summed over frame transitions, of the
// squared displacement excess over tau_v meters per frame.
PosePriorHook capped_velocity_prior(double tau_v = 0.1);

struct WeightedLoss {
  std::string name;
  double weight = 0.0;
  Tensor value;  // scalar
};

// Weighted sum; a non-finite component aborts training naming the component.
Tensor total_loss(std::span<const WeightedLoss> components);

}  // namespace stars
