#include "stars/trainer.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>

#include "stars/error.hpp"

namespace stars {

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("train: epochs must be >= 1");
  if (batch_size < 2) {
    throw ValidationError("train: batch_size must be >= 2 (batch norm in training mode)");
  }
  if (instances_per_epoch < batch_size) {
    throw ValidationError("train: instances_per_epoch must cover at least one batch");
  }
  if (base_lr <= 0.0) throw ValidationError("train: base_lr must be positive");
  if (epsilon_mm <= 0.0) throw ValidationError("train: epsilon_mm must be positive");
  if (tau_v <= 0.0) throw ValidationError("train: tau_v must be positive");
  if (window_stride < 1) throw ValidationError("train: window_stride must be >= 1");
  weights.validate();
}

double lr_schedule(int64_t epoch, double base_lr) {
  const double over = static_cast<double>(std::max<int64_t>(0, epoch - 100));
  return base_lr * std::max(0.0, 1.0 - over / 400.0);
}

Trainer::Trainer(Model& model, TrainConfig config, std::vector<MotionWindow> train_windows)
    : model_(model),
      config_(std::move(config)),
      windows_(std::move(train_windows)),
      data_rng_(Rng::substream(config_.seed, "data")),
      noise_rng_(Rng::substream(config_.seed, "train-noise")) {
  config_.validate();
  if (windows_.empty()) throw ParameterError("trainer: no training windows");
  prior_hook_ = capped_velocity_prior(config_.tau_v);
  if (config_.weights.lambda_a > 0.0 && !angle_hook_) {
    // the angle penalty has no built-in definition; it ships as a hook that
    // defaults to off
    config_.weights.lambda_a = 0.0;
  }
  if (!model_.config().deterministic() && config_.weights.lambda_mm > 0.0) {
    mmgt_ = multimodal_ground_truth(windows_, config_.epsilon_mm);
  }
  if (config_.freeze_anchors) {
    for (const auto& name : model_.anchor_param_names()) frozen_.insert(name);
  }
}

BatchNoise Trainer::draw_noise(int64_t batch) {
  const int64_t k_total = model_.config().deterministic() ? 1 : model_.config().k_total();
  const int64_t z_dim = model_.config().noise_dim;
  BatchNoise noise(static_cast<size_t>(k_total));
  for (int64_t k = 0; k < k_total; ++k) {
    noise[static_cast<size_t>(k)].resize(static_cast<size_t>(batch));
    for (int64_t b = 0; b < batch; ++b) {
      auto& z = noise[static_cast<size_t>(k)][static_cast<size_t>(b)];
      z.resize(static_cast<size_t>(z_dim));
      for (double& x : z) x = noise_rng_.normal();
    }
  }
  return noise;
}

Trainer::BatchLosses Trainer::build_batch_loss(Tape& tape,
                                               const std::vector<int64_t>& window_indices,
                                               const BatchNoise& noise, bool training) {
  const auto& mc = model_.config();
  const int64_t batch = static_cast<int64_t>(window_indices.size());
  const int64_t k_total = mc.deterministic() ? 1 : mc.k_total();
  const int64_t tp = mc.t_future, th = mc.t_history, v = mc.joints;
  const LossWeights& lw = config_.weights;

  std::vector<const MotionSequence*> histories;
  histories.reserve(static_cast<size_t>(batch));
  for (int64_t idx : window_indices) {
    histories.push_back(&windows_[static_cast<size_t>(idx)].history);
  }
  const Tensor h0 = model_.input_coefficients(histories);

  std::vector<Model::BatchOutputs> outputs;
  outputs.reserve(static_cast<size_t>(k_total));
  for (int64_t k = 0; k < k_total; ++k) {
    const int64_t i = mc.deterministic() ? 0 : k / mc.k_temporal;
    const int64_t j = mc.deterministic() ? 0 : k % mc.k_temporal;
    outputs.push_back(model_.forward_batch(tape, h0, i, j, noise[static_cast<size_t>(k)],
                                           training));
  }

  const bool diverse = !mc.deterministic();
  Tensor acc_r, acc_mm, acc_h, acc_d, acc_nf, acc_l, acc_a;
  for (int64_t b = 0; b < batch; ++b) {
    const MotionWindow& w = windows_[static_cast<size_t>(window_indices[static_cast<size_t>(b)])];
    std::vector<Tensor> futures, recovered;
    futures.reserve(static_cast<size_t>(k_total));
    recovered.reserve(static_cast<size_t>(k_total));
    for (int64_t k = 0; k < k_total; ++k) {
      futures.push_back(
          reshape(slice_axis0(outputs[static_cast<size_t>(k)].future, b, b + 1), {tp, v, 3}));
      recovered.push_back(
          reshape(slice_axis0(outputs[static_cast<size_t>(k)].history, b, b + 1), {th, v, 3}));
    }
    const Tensor gt_future = sequence_tensor(w.future);
    const Tensor gt_history = sequence_tensor(w.history);

    auto accumulate = [b](Tensor& acc, const Tensor& value) {
      acc = b == 0 ? value : add(acc, value);
    };

    accumulate(acc_r, loss_reconstruction(futures, gt_future));
    accumulate(acc_h, loss_history(recovered, gt_history));
    if (diverse && lw.lambda_mm > 0.0) {
      std::vector<Tensor> neighbor_futures;
      for (int64_t n : mmgt_.neighbors[static_cast<size_t>(window_indices[static_cast<size_t>(b)])]) {
        neighbor_futures.push_back(sequence_tensor(windows_[static_cast<size_t>(n)].future));
      }
      accumulate(acc_mm, loss_multimodal(futures, neighbor_futures));
    }
    if (diverse && k_total >= 2 && lw.lambda_d > 0.0) {
      accumulate(acc_d, loss_diversity(futures, lw.alpha_div));
    }
    if (diverse && lw.lambda_nf > 0.0) {
      if (!prior_hook_) {
        throw ConfigError("pose prior weight is positive but no hook is registered");
      }
      accumulate(acc_nf, prior_hook_(futures));
    }
    if (diverse && lw.lambda_l > 0.0) {
      accumulate(acc_l, loss_limb(futures, model_.skeleton(), gt_future));
    }
    if (diverse && lw.lambda_a > 0.0) {
      if (!angle_hook_) {
        throw ConfigError("angle loss weight is positive but no hook is registered");
      }
      accumulate(acc_a, (*angle_hook_)(futures));
    }
  }

  const double inv_b = 1.0 / static_cast<double>(batch);
  BatchLosses out;
  auto push = [&](const char* name, double weight, const Tensor& acc) {
    if (acc.size() == 0) return;  // component not built
    out.components.push_back({name, weight, scale(acc, inv_b)});
  };
  push("loss_r", lw.lambda_r, acc_r);
  push("loss_mm", lw.lambda_mm, acc_mm);
  push("loss_h", lw.lambda_h, acc_h);
  push("loss_d", lw.lambda_d, acc_d);
  push("loss_nf", lw.lambda_nf, acc_nf);
  push("loss_l", lw.lambda_l, acc_l);
  push("loss_a", lw.lambda_a, acc_a);
  out.total = total_loss(out.components);
  return out;
}

EpochSummary Trainer::train_epoch() {
  const auto start = std::chrono::steady_clock::now();
  const double lr = lr_schedule(epoch_, config_.base_lr);
  const int64_t n_batches = config_.instances_per_epoch / config_.batch_size;
  const int64_t n_windows = static_cast<int64_t>(windows_.size());

  std::vector<std::pair<std::string, double>> sums;
  double total_sum = 0.0;
  for (int64_t batch = 0; batch < n_batches; ++batch) {
    std::vector<int64_t> indices(static_cast<size_t>(config_.batch_size));
    for (auto& idx : indices) {
      idx = static_cast<int64_t>(data_rng_.next_u64() % static_cast<uint64_t>(n_windows));
    }
    const BatchNoise noise = draw_noise(config_.batch_size);
    Tape tape;
    BatchLosses losses;
    try {
      losses = build_batch_loss(tape, indices, noise, true);
    } catch (const TrainingAbort& e) {
      throw TrainingAbort("epoch " + std::to_string(epoch_) + " batch " + std::to_string(batch) +
                          ": " + e.what());
    }
    const GradMap grads = tape.backward(losses.total);
    adam_step(model_.params(), grads, adam_, lr, frozen_.empty() ? nullptr : &frozen_);

    if (sums.empty()) {
      for (const auto& c : losses.components) sums.emplace_back(c.name, 0.0);
    }
    for (size_t i = 0; i < losses.components.size(); ++i) {
      sums[i].second += losses.components[i].value.value();
    }
    total_sum += losses.total.value();
  }

#ifndef NDEBUG
  // shared spatial adjacencies reference one storage; verify group members
  // resolve to identical parameter values
  for (const auto& group : model_.config().share_groups) {
    const auto& first = model_.params().at(model_.adj_spatial_name(group.front()));
    for (int64_t idx : group) {
      assert(model_.params().at(model_.adj_spatial_name(idx)).values == first.values);
    }
  }
#endif

  EpochSummary summary;
  summary.epoch = epoch_;
  summary.lr = lr;
  const double inv = n_batches > 0 ? 1.0 / static_cast<double>(n_batches) : 0.0;
  for (auto& [name, sum] : sums) summary.loss_means.emplace_back(name, sum * inv);
  summary.loss_means.emplace_back("total", total_sum * inv);
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  epoch_ += 1;
  return summary;
}

MetricReport evaluate(const Model& model, const std::vector<MotionWindow>& test_windows,
                      const EvalOptions& options) {
  if (test_windows.empty()) throw ParameterError("evaluate: empty test split");
  MetricReport report;
  report.sample_count = static_cast<int64_t>(test_windows.size());
  const double inv_n = 1.0 / static_cast<double>(test_windows.size());

  if (model.config().deterministic()) {
    if (options.horizons_ms.empty()) {
      throw ParameterError("evaluate: deterministic variants need millisecond horizons");
    }
    std::vector<int64_t> frames;
    for (int64_t ms : options.horizons_ms) {
      const int64_t frame =
          static_cast<int64_t>(std::llround(static_cast<double>(ms) * options.fps / 1000.0)) - 1;
      if (frame < 0 || frame >= model.config().t_future) {
        throw ParameterError("evaluate: horizon " + std::to_string(ms) +
                             " ms maps outside the predicted future");
      }
      frames.push_back(frame);
    }
    for (const auto& w : test_windows) {
      auto [future, recovered] = model.deterministic_forward(w.history);
      const auto per_frame = mpjpe(future, w.future, frames);
      for (size_t h = 0; h < frames.size(); ++h) {
        report.mpjpe_by_horizon_ms[options.horizons_ms[h]] +=
            per_frame.at(frames[h]) * inv_n;
      }
    }
    report.has_mpjpe = true;
    return report;
  }

  const MultiModalGT mmgt = multimodal_ground_truth(test_windows, options.epsilon);
  for (size_t wi = 0; wi < test_windows.size(); ++wi) {
    const auto& w = test_windows[wi];
    const uint64_t window_seed = Rng::substream(options.seed, "eval", wi).next_u64();
    const PredictionSet preds = model.sample_set(w.history, window_seed);
    report.apd += (preds.k() >= 2 ? apd(preds) : 0.0) * inv_n;
    report.ade += ade(preds, w.future) * inv_n;
    report.fde += fde(preds, w.future) * inv_n;
    std::vector<MotionSequence> neighbors;
    for (int64_t n : mmgt.neighbors[wi]) {
      neighbors.push_back(test_windows[static_cast<size_t>(n)].future);
    }
    report.mmade += mmade(preds, neighbors) * inv_n;
    report.mmfde += mmfde(preds, neighbors) * inv_n;
  }
  report.has_diverse = true;
  return report;
}

}  // namespace stars
