#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stars/frequency.hpp"
#include "stars/graph.hpp"
#include "stars/motion.hpp"
#include "stars/tensor.hpp"

namespace stars {

enum class Variant { stochastic, deterministic_short, deterministic_long };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct ModelConfig {
  Variant variant = Variant::stochastic;
  // per-layer widths; channels[0] and channels.back() are the 3 coordinates
  std::vector<int64_t> channels = {3, 128, 64, 128, 64, 128, 64, 128, 3};
  int64_t m_coeffs = 20;
  int64_t t_history = 25;
  int64_t t_future = 100;
  int64_t joints = 17;
  int64_t k_spatial = 5;
  int64_t k_temporal = 10;
  int64_t noise_dim = 64;
  // 1-indexed layers whose input receives the level-1, level-2, ... anchor
  std::vector<int64_t> anchor_layers = {4, 6};
  int64_t noise_layer = 5;  // 1-indexed layer whose input is [H : z]
  // adjacency indices (0-based; adjacency l feeds layer l+1) carrying the
  // spatial pruning mask; empty selects the variant default
  std::vector<int64_t> prune_adjacencies;
  // spatial-factor share groups over adjacency indices; members alias storage
  std::vector<std::vector<int64_t>> share_groups = {{3, 5, 7}, {4, 6}};

  int64_t layer_count() const { return static_cast<int64_t>(channels.size()) - 1; }
  int64_t k_total() const { return k_spatial * k_temporal; }
  int64_t node_count() const { return m_coeffs * joints; }
  bool deterministic() const { return variant != Variant::stochastic; }
  std::vector<int64_t> effective_prune() const;
  void validate() const;
};

struct AnchorProvenance {
  int64_t spatial = 0;
  int64_t temporal = 0;
  uint64_t noise_draw = 0;
};

// K generated futures plus the recovered histories and the anchor/noise
// provenance that produced each.
struct PredictionSet {
  std::vector<MotionSequence> futures;
  std::vector<MotionSequence> recovered_histories;
  std::vector<AnchorProvenance> provenance;
  int64_t k() const { return static_cast<int64_t>(futures.size()); }
};

enum class AnchorAxis { spatial, temporal };

class Model {
 public:
  Model(ModelConfig config, Skeleton skeleton, uint64_t init_seed);

  const ModelConfig& config() const { return config_; }
  const Skeleton& skeleton() const { return skeleton_; }
  const DctBasis& basis() const { return basis_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::vector<BatchNormStats>& bn_stats() { return bn_stats_; }
  const std::vector<BatchNormStats>& bn_stats() const { return bn_stats_; }
  const FactorizedAdjacency& adjacency(int64_t idx) const;

  // parameter naming
  static std::string weight_name(int64_t adj_idx);
  static std::string adj_frequency_name(int64_t adj_idx);
  static std::string bn_gamma_name(int64_t layer);
  static std::string bn_beta_name(int64_t layer);
  static std::string anchor_name(int64_t level, AnchorAxis axis);
  std::string adj_spatial_name(int64_t adj_idx) const;
  std::vector<std::string> anchor_param_names() const;
  int64_t anchor_levels() const { return static_cast<int64_t>(config_.anchor_layers.size()); }
  int64_t anchor_width(int64_t level) const;

  // offset[f][v][c] = spatial[i][v][c] + temporal[j][f][c], shape (M, V, C)
  Tensor compose_anchor(int64_t level, int64_t i, int64_t j) const;
  // (1 - alpha) * bank[a] + alpha * bank[b]; rejects alpha outside [0, 1]
  Tensor interpolate_anchor(int64_t level, AnchorAxis axis, int64_t a, int64_t b,
                            double alpha) const;

  // Replacements for the selected anchor components, one optional entry per
  // level; used by anchor interpolation.
  struct AnchorOverrides {
    std::vector<std::optional<Tensor>> spatial;   // each (V, C_level)
    std::vector<std::optional<Tensor>> temporal;  // each (M, C_level)
  };

  // Single-sample forward in evaluation mode (running batch-norm statistics,
  // nothing recorded). `noise` must carry noise_dim entries for the
  // stochastic variant and may be null when noise_dim is 0.
  std::pair<MotionSequence, MotionSequence> forward_one(
      const MotionSequence& history, int64_t i, int64_t j, const std::vector<double>* noise,
      const AnchorOverrides* overrides = nullptr) const;

  // Every (i, j) pair once, fresh standard-normal noise per prediction.
  PredictionSet sample_set(const MotionSequence& history, uint64_t seed) const;

  std::pair<MotionSequence, MotionSequence> deterministic_forward(
      const MotionSequence& history) const;

  // Training-facing batched forward for one anchor pair over stacked samples.
  // input_coeffs is (B, M*V, 3); returns futures (B, T_p, V*3) and recovered
  // histories (B, T_h, V*3) on the tape.
  struct BatchOutputs {
    Tensor future;
    Tensor history;
  };
  BatchOutputs forward_batch(Tape& tape, const Tensor& input_coeffs, int64_t i, int64_t j,
                             const std::vector<std::vector<double>>& noise_per_sample,
                             bool training);

  // Stacked DCT coefficients of padded histories, shape (B, M*V, 3).
  Tensor input_coefficients(const std::vector<const MotionSequence*>& histories) const;

  // Overwrites parameters and running statistics with checkpointed values;
  // every name and shape must match this model's layout.
  void restore(const ParamStore& params, const std::vector<BatchNormStats>& bn_stats);

 private:
  struct ForwardEnv;
  Tensor forward_core(const ForwardEnv& env, const Tensor& h0) const;
  Tensor anchor_offset(const ForwardEnv& env, int64_t level) const;
  BatchOutputs split_outputs(const Tensor& h_final, int64_t batch) const;
  void init_params(uint64_t seed);

  ModelConfig config_;
  Skeleton skeleton_;
  DctBasis basis_;
  ParamStore params_;
  mutable std::vector<BatchNormStats> bn_stats_;
  std::vector<FactorizedAdjacency> adjacencies_;
  std::vector<int64_t> spatial_storage_;  // adjacency index -> storage index
  Tensor hist_basis_;  // (T_h, M) rows of C^T covering the history
  Tensor fut_basis_;   // (T_p, M) rows covering the future
};

// Reshape helpers between motion sequences and flat tensors.
Tensor sequence_tensor(const MotionSequence& s);  // (T, V, 3)
MotionSequence sequence_from_flat(std::span<const double> values, int64_t frames, int64_t joints);

}  // namespace stars
