#include "stars/graph.hpp"

#include <algorithm>
#include <set>

#include "stars/error.hpp"

namespace stars {

void Skeleton::validate() const {
  const int64_t v = joint_count();
  if (v < 1) throw ValidationError("skeleton: no joints");
  std::set<std::pair<int64_t, int64_t>> seen;
  for (auto [a, b] : bone_edges) {
    if (a < 0 || a >= v || b < 0 || b >= v) {
      throw ValidationError("skeleton: bone edge endpoint out of range");
    }
    if (a == b) throw ValidationError("skeleton: self-edge in bone list");
    auto key = std::minmax(a, b);
    if (!seen.insert(key).second) throw ValidationError("skeleton: duplicate bone edge");
  }
  for (auto [a, b] : mirror_pairs) {
    if (a < 0 || a >= v || b < 0 || b >= v) {
      throw ValidationError("skeleton: mirror pair endpoint out of range");
    }
    if (a == b) throw ValidationError("skeleton: mirror pair maps a joint to itself");
  }
}

namespace {

std::vector<std::vector<bool>> pair_lookup(const std::vector<std::pair<int64_t, int64_t>>& pairs,
                                           int64_t v) {
  std::vector<std::vector<bool>> table(static_cast<size_t>(v),
                                       std::vector<bool>(static_cast<size_t>(v), false));
  for (auto [a, b] : pairs) {
    table[static_cast<size_t>(a)][static_cast<size_t>(b)] = true;
    table[static_cast<size_t>(b)][static_cast<size_t>(a)] = true;
  }
  return table;
}

}  // namespace

Tensor build_spatial_mask(const Skeleton& skeleton, int64_t m) {
  skeleton.validate();
  if (m < 1) throw ParameterError("build_spatial_mask: M must be >= 1");
  const int64_t v = skeleton.joint_count();
  const auto connected = pair_lookup(skeleton.bone_edges, v);
  const auto mirrored = pair_lookup(skeleton.mirror_pairs, v);
  const int64_t n = m * v;
  std::vector<double> mask(static_cast<size_t>(n * n), 0.0);
  for (int64_t f = 0; f < m; ++f) {
    for (int64_t vi = 0; vi < v; ++vi) {
      for (int64_t vj = 0; vj < v; ++vj) {
        const bool keep = vi == vj || connected[static_cast<size_t>(vi)][static_cast<size_t>(vj)] ||
                          mirrored[static_cast<size_t>(vi)][static_cast<size_t>(vj)];
        if (keep) {
          mask[static_cast<size_t>((f * v + vi) * n + (f * v + vj))] = 1.0;
        }
      }
    }
  }
  return Tensor({n, n}, std::move(mask));
}

Tensor build_temporal_mask(int64_t m, int64_t v) {
  if (m < 1 || v < 1) throw ParameterError("build_temporal_mask: M and V must be >= 1");
  const int64_t n = m * v;
  std::vector<double> mask(static_cast<size_t>(n * n), 0.0);
  for (int64_t f = 0; f + 1 < m; ++f) {
    for (int64_t joint = 0; joint < v; ++joint) {
      const int64_t a = f * v + joint;
      const int64_t b = (f + 1) * v + joint;
      mask[static_cast<size_t>(a * n + b)] = 1.0;
      mask[static_cast<size_t>(b * n + a)] = 1.0;
    }
  }
  return Tensor({n, n}, std::move(mask));
}

Tensor spatial_structure_mask(int64_t m, int64_t v) {
  const int64_t n = m * v;
  std::vector<double> mask(static_cast<size_t>(n * n), 0.0);
  for (int64_t f = 0; f < m; ++f) {
    for (int64_t vi = 0; vi < v; ++vi) {
      for (int64_t vj = 0; vj < v; ++vj) {
        mask[static_cast<size_t>((f * v + vi) * n + (f * v + vj))] = 1.0;
      }
    }
  }
  return Tensor({n, n}, std::move(mask));
}

Tensor frequency_structure_mask(int64_t m, int64_t v) {
  const int64_t n = m * v;
  std::vector<double> mask(static_cast<size_t>(n * n), 0.0);
  for (int64_t fi = 0; fi < m; ++fi) {
    for (int64_t fj = 0; fj < m; ++fj) {
      for (int64_t joint = 0; joint < v; ++joint) {
        mask[static_cast<size_t>((fi * v + joint) * n + (fj * v + joint))] = 1.0;
      }
    }
  }
  return Tensor({n, n}, std::move(mask));
}

Tensor factorized_propagate(const Tensor& adj_s_eff, const Tensor& adj_f_eff, const Tensor& h,
                            const Tensor& w, bool activation) {
  const Tensor mixed = matmul(adj_s_eff, matmul(adj_f_eff, h));
  const Tensor projected = matmul(mixed, w);
  return activation ? relu(projected) : projected;
}

}  // namespace stars
