#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stars/tensor.hpp"

namespace stars {

// Joint topology: physical bone connections plus left/right mirror symmetry.
struct Skeleton {
  std::vector<std::string> joint_names;
  std::vector<std::pair<int64_t, int64_t>> bone_edges;
  std::vector<std::pair<int64_t, int64_t>> mirror_pairs;

  int64_t joint_count() const { return static_cast<int64_t>(joint_names.size()); }
  // Bounds, duplicate-edge, and self-edge checks; throws ValidationError.
  void validate() const;
  bool operator==(const Skeleton& other) const = default;
};

// Spatial-temporal graph nodes are indexed i = f * V + v for frequency f and
// joint v. The masks below are (MV, MV) 0/1 tensors over that indexing.

// 1 iff f_i == f_j and (v_i, v_j physically connected, mirror-symmetric, or
// v_i == v_j). Self-loops are admitted so a pruned layer can still propagate a
// node's own features.
Tensor build_spatial_mask(const Skeleton& skeleton, int64_t m);

// 1 iff |f_i - f_j| == 1 and v_i == v_j (no self-loops).
Tensor build_temporal_mask(int64_t m, int64_t v);

// Structural supports of the two factors: the spatial factor connects only
// same-frequency nodes, the frequency factor only same-joint nodes.
Tensor spatial_structure_mask(int64_t m, int64_t v);
Tensor frequency_structure_mask(int64_t m, int64_t v);

// A layer's adjacency, factorized into spatial and frequency parts.
// `spatial_param` / `frequency_param` name the underlying storage; layers in
// the same share group carry the same spatial key and therefore the same
// storage. Masks fold the structural support with any pruning and are applied
// multiplicatively every forward pass, so masked entries are exact zeros no
// matter how the raw parameters move.
struct FactorizedAdjacency {
  std::string spatial_param;
  std::string frequency_param;
  Tensor spatial_mask;
  Tensor frequency_mask;
};

// H' = sigma(adj_s_eff * adj_f_eff * H * W), activation optional. Effective
// (already masked) factors are expected. H may carry a leading batch axis.
Tensor factorized_propagate(const Tensor& adj_s_eff, const Tensor& adj_f_eff, const Tensor& h,
                            const Tensor& w, bool activation);

}  // namespace stars
