#include "stars/objectives.hpp"

#include <cmath>

#include "stars/error.hpp"
#include "stars/motion.hpp"

namespace stars {

void LossWeights::validate() const {
  for (double w : {lambda_r, lambda_mm, lambda_h, lambda_d, lambda_nf, lambda_l, lambda_a}) {
    if (w < 0.0) throw ParameterError("loss weights must be nonnegative");
  }
  if (alpha_div <= 0.0) throw ParameterError("diversity temperature alpha must be positive");
}

MultiModalGT multimodal_ground_truth(const std::vector<MotionWindow>& windows, double epsilon) {
  if (!(epsilon > 0.0)) {
    throw ParameterError("multimodal_ground_truth: epsilon must be positive");
  }
  MultiModalGT out;
  out.neighbors.resize(windows.size());
  for (size_t a = 0; a < windows.size(); ++a) {
    const MotionSequence& ha = windows[a].history;
    for (size_t b = 0; b < windows.size(); ++b) {
      const MotionSequence& hb = windows[b].history;
      const double d = frame_distance_l2(ha, ha.frames - 1, hb, hb.frames - 1);
      if (d <= epsilon) out.neighbors[a].push_back(static_cast<int64_t>(b));
    }
  }
  return out;
}

namespace {

Tensor flat(const Tensor& t) { return reshape(t, {t.size()}); }

// |a - b|^2 over the flattened sequences
Tensor squared_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ContractError("loss: sequence shapes differ: " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
  const Tensor d = sub(flat(a), flat(b));
  return sum(elementwise_mul(d, d));
}

Tensor mean_of(std::span<const Tensor> scalars) {
  Tensor acc = scalars[0];
  for (size_t i = 1; i < scalars.size(); ++i) acc = add(acc, scalars[i]);
  return scale(acc, 1.0 / static_cast<double>(scalars.size()));
}

}  // namespace

Tensor loss_reconstruction(std::span<const Tensor> futures, const Tensor& gt_future) {
  if (futures.empty()) throw ContractError("loss_reconstruction: needs at least one prediction");
  std::vector<Tensor> dists;
  dists.reserve(futures.size());
  for (const Tensor& f : futures) dists.push_back(squared_error(f, gt_future));
  return min_over_set(dists);
}

Tensor loss_multimodal(std::span<const Tensor> futures,
                       std::span<const Tensor> neighbor_futures) {
  if (futures.empty()) throw ContractError("loss_multimodal: needs at least one prediction");
  if (neighbor_futures.empty()) {
    throw ContractError("loss_multimodal: empty multi-modal ground-truth set");
  }
  std::vector<Tensor> per_neighbor;
  per_neighbor.reserve(neighbor_futures.size());
  for (const Tensor& yn : neighbor_futures) {
    std::vector<Tensor> dists;
    dists.reserve(futures.size());
    for (const Tensor& f : futures) dists.push_back(squared_error(f, yn));
    per_neighbor.push_back(min_over_set(dists));
  }
  return mean_of(per_neighbor);
}

Tensor loss_history(std::span<const Tensor> recovered_histories, const Tensor& gt_history) {
  if (recovered_histories.empty()) {
    throw ContractError("loss_history: needs at least one recovered history");
  }
  std::vector<Tensor> errs;
  errs.reserve(recovered_histories.size());
  for (const Tensor& h : recovered_histories) errs.push_back(squared_error(h, gt_history));
  return mean_of(errs);
}

Tensor loss_diversity(std::span<const Tensor> futures, double alpha_div) {
  if (futures.size() < 2) {
    throw ContractError("loss_diversity: needs at least two predictions");
  }
  if (!(alpha_div > 0.0)) {
    throw ParameterError("loss_diversity: alpha must be positive");
  }
  const size_t k = futures.size();
  std::vector<Tensor> kernels;
  kernels.reserve(k * (k - 1) / 2);
  for (size_t a = 0; a + 1 < k; ++a) {
    for (size_t b = a + 1; b < k; ++b) {
      const Tensor d = l1_norm(sub(flat(futures[a]), flat(futures[b])));
      kernels.push_back(stars::exp(scale(d, -1.0 / alpha_div)));
    }
  }
  return mean_of(kernels);
}

namespace {

// (Bn, V) incidence matrix: +1 on the first endpoint, -1 on the second, so
// matmul against (T, V, 3) poses yields per-frame bone vectors.
Tensor bone_incidence(const Skeleton& skeleton) {
  const int64_t bones = static_cast<int64_t>(skeleton.bone_edges.size());
  const int64_t v = skeleton.joint_count();
  std::vector<double> d(static_cast<size_t>(bones * v), 0.0);
  for (int64_t e = 0; e < bones; ++e) {
    const auto [a, b] = skeleton.bone_edges[static_cast<size_t>(e)];
    d[static_cast<size_t>(e * v + a)] = 1.0;
    d[static_cast<size_t>(e * v + b)] = -1.0;
  }
  return Tensor({bones, v}, std::move(d));
}

Tensor bone_lengths(const Tensor& future, const Tensor& incidence) {
  return l2_norm(matmul(incidence, future));  // (T, Bn)
}

}  // namespace

Tensor loss_limb(std::span<const Tensor> futures, const Skeleton& skeleton,
                 const Tensor& gt_future) {
  if (futures.empty()) throw ContractError("loss_limb: needs at least one prediction");
  if (skeleton.bone_edges.empty()) {
    throw ContractError("loss_limb: skeleton has no bone edges");
  }
  const Tensor incidence = bone_incidence(skeleton);
  const Tensor gt_lengths = bone_lengths(gt_future, incidence);
  std::vector<Tensor> errs;
  errs.reserve(futures.size());
  for (const Tensor& f : futures) {
    const Tensor d = sub(bone_lengths(f, incidence), gt_lengths);
    errs.push_back(sum(elementwise_mul(d, d)));
  }
  return mean_of(errs);
}

PosePriorHook capped_velocity_prior(double tau_v) {
  if (!(tau_v > 0.0)) throw ParameterError("capped_velocity_prior: tau_v must be positive");
  return [tau_v](std::span<const Tensor> futures) {
    if (futures.empty()) throw ContractError("pose prior: needs at least one prediction");
    std::vector<Tensor> penalties;
    penalties.reserve(futures.size());
    for (const Tensor& f : futures) {
      const int64_t t = f.dim(0);
      const int64_t v = f.dim(1);
      if (t < 2) {
        penalties.push_back(Tensor::scalar(0.0));
        continue;
      }
      const Tensor diffs = sub(slice_axis0(f, 1, t), slice_axis0(f, 0, t - 1));
      const Tensor disp = l2_norm(diffs);  // (T-1, V)
      const Tensor excess = relu(add(disp, Tensor::scalar(-tau_v)));
      penalties.push_back(scale(sum(elementwise_mul(excess, excess)),
                                1.0 / static_cast<double>(v)));
    }
    return mean_of(penalties);
  };
}

Tensor total_loss(std::span<const WeightedLoss> components) {
  if (components.empty()) throw ContractError("total_loss: no components");
  Tensor acc;
  bool first = true;
  for (const WeightedLoss& c : components) {
    if (!std::isfinite(c.value.value())) {
      throw TrainingAbort("loss component '" + c.name + "' is not finite");
    }
    const Tensor weighted = scale(c.value, c.weight);
    acc = first ? weighted : add(acc, weighted);
    first = false;
  }
  return acc;
}

}  // namespace stars
