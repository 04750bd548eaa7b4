#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stars/adam.hpp"
#include "stars/data.hpp"
#include "stars/metrics.hpp"
#include "stars/model.hpp"
#include "stars/objectives.hpp"
#include "stars/rng.hpp"

namespace stars {

struct TrainConfig {
  int64_t epochs = 500;
  int64_t batch_size = 16;
  int64_t instances_per_epoch = 5000;
  double base_lr = 0.001;
  uint64_t seed = 0;
  LossWeights weights;
  double epsilon_mm = 0.5;  // multi-modal ground-truth clustering threshold
  double tau_v = 0.1;       // default pose-prior velocity cap, meters per frame
  bool freeze_anchors = false;
  int64_t window_stride = 1;

  void validate() const;
};

// base_lr * (1 - max(0, epoch - 100) / 400), clamped at zero.
double lr_schedule(int64_t epoch, double base_lr = 0.001);

struct EpochSummary {
  int64_t epoch = 0;
  double lr = 0.0;
  std::vector<std::pair<std::string, double>> loss_means;  // per component plus "total"
  double wall_seconds = 0.0;
};

// Per-sample noise draws for one batch, indexed [k][sample][coordinate].
using BatchNoise = std::vector<std::vector<std::vector<double>>>;

class Trainer {
 public:
  Trainer(Model& model, TrainConfig config, std::vector<MotionWindow> train_windows);

  EpochSummary train_epoch();
  int64_t epoch() const { return epoch_; }
  void set_epoch(int64_t epoch) { epoch_ = epoch; }
  AdamState& optimizer() { return adam_; }
  Rng& data_rng() { return data_rng_; }
  Rng& noise_rng() { return noise_rng_; }
  const MultiModalGT& mmgt() const { return mmgt_; }
  const std::vector<MotionWindow>& windows() const { return windows_; }
  Model& model() { return model_; }
  const TrainConfig& config() const { return config_; }

  struct BatchLosses {
    Tensor total;
    std::vector<WeightedLoss> components;
  };
  // Builds one training step's loss graph on the tape. Stochastic models run
  // every compositional anchor once; deterministic variants keep only the
  // reconstruction and history terms. Exposed so gradient-verification
  // harnesses share the exact training path.
  BatchLosses build_batch_loss(Tape& tape, const std::vector<int64_t>& window_indices,
                               const BatchNoise& noise, bool training);

  BatchNoise draw_noise(int64_t batch);

 private:
  Model& model_;
  TrainConfig config_;
  std::vector<MotionWindow> windows_;
  MultiModalGT mmgt_;
  AdamState adam_;
  Rng data_rng_;
  Rng noise_rng_;
  PosePriorHook prior_hook_;
  std::optional<PosePriorHook> angle_hook_;
  std::set<std::string> frozen_;
  int64_t epoch_ = 0;
};

struct EvalOptions {
  double epsilon = 0.5;
  uint64_t seed = 0;
  double fps = 25.0;                   // for millisecond horizons
  std::vector<int64_t> horizons_ms;    // deterministic variants only
};

// Runs sample_set (or deterministic_forward) on every test window and
// aggregates the metric suite; deterministic given the seed.
MetricReport evaluate(const Model& model, const std::vector<MotionWindow>& test_windows,
                      const EvalOptions& options);

}  // namespace stars
