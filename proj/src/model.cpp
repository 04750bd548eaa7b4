#include "stars/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stars/error.hpp"
#include "stars/rng.hpp"

namespace stars {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::stochastic: return "stochastic";
    case Variant::deterministic_short: return "det-short";
    case Variant::deterministic_long: return "det-long";
  }
  return "?";
}

Variant variant_from_name(const std::string& name) {
  if (name == "stochastic") return Variant::stochastic;
  if (name == "det-short") return Variant::deterministic_short;
  if (name == "det-long") return Variant::deterministic_long;
  throw ParameterError("unknown variant '" + name + "' (stochastic | det-short | det-long)");
}

std::vector<int64_t> ModelConfig::effective_prune() const {
  if (!prune_adjacencies.empty()) return prune_adjacencies;
  const int64_t layers = layer_count();
  std::vector<int64_t> out;
  if (deterministic()) {
    // every middle layer is pruned
    for (int64_t a = 1; a + 1 < layers; ++a) out.push_back(a);
  } else {
    for (int64_t a = 0; a < layers; a += 2) out.push_back(a);
  }
  return out;
}

void ModelConfig::validate() const {
  if (channels.size() < 3) throw ValidationError("model: need at least two layers");
  if (channels.front() != 3 || channels.back() != 3) {
    throw ValidationError("model: channels must start and end at 3 coordinates");
  }
  for (int64_t c : channels) {
    if (c < 1) throw ValidationError("model: channel widths must be positive");
  }
  if (t_history < 1 || t_future < 1) throw ValidationError("model: history/future must be >= 1");
  if (m_coeffs < 1 || m_coeffs > t_history + t_future) {
    throw ValidationError("model: M must satisfy 1 <= M <= T_h + T_p");
  }
  if (joints < 1) throw ValidationError("model: joint count must be >= 1");
  if (k_spatial < 1 || k_temporal < 1) throw ValidationError("model: anchor counts must be >= 1");
  if (noise_dim < 0) throw ValidationError("model: noise_dim must be >= 0");
  const int64_t layers = layer_count();
  if (anchor_layers.size() > 2) {
    throw ValidationError("model: at most two anchor levels are supported");
  }
  std::set<int64_t> seen_anchor;
  for (int64_t l : anchor_layers) {
    if (l < 1 || l > layers) throw ValidationError("model: anchor layer out of range");
    if (!seen_anchor.insert(l).second) throw ValidationError("model: duplicate anchor layer");
  }
  if (noise_layer < 1 || noise_layer > layers) {
    throw ValidationError("model: noise layer out of range");
  }
  for (int64_t a : prune_adjacencies) {
    if (a < 0 || a >= layers) throw ValidationError("model: pruned adjacency index out of range");
  }
  std::set<int64_t> shared;
  for (const auto& group : share_groups) {
    if (group.size() < 2) throw ValidationError("model: share group needs at least two members");
    for (int64_t a : group) {
      if (a < 0 || a >= layers) throw ValidationError("model: share group index out of range");
      if (!shared.insert(a).second) {
        throw ValidationError("model: adjacency appears in more than one share group");
      }
    }
  }
  if (deterministic()) {
    if (k_spatial != 1 || k_temporal != 1 || noise_dim != 0) {
      throw ValidationError("model: variant " + variant_name(variant) +
                            " forces K_s = K_t = 1 and noise_dim = 0");
    }
  }
}

// --- naming -------------------------------------------------------------

std::string Model::weight_name(int64_t adj_idx) { return "w." + std::to_string(adj_idx); }

std::string Model::adj_frequency_name(int64_t adj_idx) {
  return "adj.f." + std::to_string(adj_idx);
}

std::string Model::bn_gamma_name(int64_t layer) { return "bn." + std::to_string(layer) + ".gamma"; }

std::string Model::bn_beta_name(int64_t layer) { return "bn." + std::to_string(layer) + ".beta"; }

std::string Model::anchor_name(int64_t level, AnchorAxis axis) {
  return "anchor." + std::to_string(level + 1) +
         (axis == AnchorAxis::spatial ? ".spatial" : ".temporal");
}

std::string Model::adj_spatial_name(int64_t adj_idx) const {
  return "adj.s." + std::to_string(spatial_storage_[static_cast<size_t>(adj_idx)]);
}

std::vector<std::string> Model::anchor_param_names() const {
  std::vector<std::string> names;
  for (int64_t level = 0; level < anchor_levels(); ++level) {
    names.push_back(anchor_name(level, AnchorAxis::spatial));
    names.push_back(anchor_name(level, AnchorAxis::temporal));
  }
  return names;
}

int64_t Model::anchor_width(int64_t level) const {
  const int64_t layer = config_.anchor_layers[static_cast<size_t>(level)];
  return config_.channels[static_cast<size_t>(layer - 1)];
}

// --- construction ------------------------------------------------------------

Model::Model(ModelConfig config, Skeleton skeleton, uint64_t init_seed)
    : config_(std::move(config)), skeleton_(std::move(skeleton)) {
  config_.validate();
  config_.prune_adjacencies = config_.effective_prune();  // pin the variant default
  skeleton_.validate();
  if (config_.joints != skeleton_.joint_count()) {
    throw ValidationError("model: config lists " + std::to_string(config_.joints) +
                          " joints, skeleton has " + std::to_string(skeleton_.joint_count()));
  }
  basis_ = build_dct_basis(config_.m_coeffs, config_.t_history + config_.t_future);

  const int64_t layers = config_.layer_count();
  spatial_storage_.resize(static_cast<size_t>(layers));
  for (int64_t a = 0; a < layers; ++a) spatial_storage_[static_cast<size_t>(a)] = a;
  for (const auto& group : config_.share_groups) {
    const int64_t storage = *std::min_element(group.begin(), group.end());
    for (int64_t a : group) spatial_storage_[static_cast<size_t>(a)] = storage;
  }

  init_params(init_seed);

  // history / future rows of the inverse transform
  {
    const int64_t th = config_.t_history, tp = config_.t_future, m = config_.m_coeffs;
    std::vector<double> hb(static_cast<size_t>(th * m));
    std::vector<double> fb(static_cast<size_t>(tp * m));
    for (int64_t t = 0; t < th; ++t) {
      for (int64_t row = 0; row < m; ++row) {
        hb[static_cast<size_t>(t * m + row)] = basis_.at(row, t);
      }
    }
    for (int64_t t = 0; t < tp; ++t) {
      for (int64_t row = 0; row < m; ++row) {
        fb[static_cast<size_t>(t * m + row)] = basis_.at(row, th + t);
      }
    }
    hist_basis_ = Tensor({th, m}, std::move(hb));
    fut_basis_ = Tensor({tp, m}, std::move(fb));
  }
}

void Model::init_params(uint64_t seed) {
  Rng rng = Rng::substream(seed, "init");
  const int64_t layers = config_.layer_count();
  const int64_t mv = config_.node_count();
  const int64_t m = config_.m_coeffs, v = config_.joints;

  for (int64_t l = 0; l < layers; ++l) {
    int64_t c_in = config_.channels[static_cast<size_t>(l)];
    if (l + 1 == config_.noise_layer) c_in += config_.noise_dim;
    const int64_t c_out = config_.channels[static_cast<size_t>(l + 1)];
    const double s = 1.0 / std::sqrt(static_cast<double>(c_in));
    std::vector<double> w(static_cast<size_t>(c_in * c_out));
    for (double& x : w) x = rng.uniform(-s, s);
    params_[weight_name(l)] = {{c_in, c_out}, std::move(w)};
  }

  const Tensor s_struct = spatial_structure_mask(m, v);
  const Tensor f_struct = frequency_structure_mask(m, v);
  const Tensor ms = build_spatial_mask(skeleton_, m);
  const Tensor mf = build_temporal_mask(m, v);
  const double s_adj = 1.0 / std::sqrt(static_cast<double>(mv));

  std::set<int64_t> storages(spatial_storage_.begin(), spatial_storage_.end());
  for (int64_t storage : storages) {
    std::vector<double> a(static_cast<size_t>(mv * mv));
    for (size_t idx = 0; idx < a.size(); ++idx) {
      a[idx] = rng.uniform(-s_adj, s_adj) * s_struct.values()[idx];
    }
    params_["adj.s." + std::to_string(storage)] = {{mv, mv}, std::move(a)};
  }
  for (int64_t adj = 0; adj < layers; ++adj) {
    std::vector<double> a(static_cast<size_t>(mv * mv));
    for (size_t idx = 0; idx < a.size(); ++idx) {
      a[idx] = rng.uniform(-s_adj, s_adj) * f_struct.values()[idx];
    }
    params_[adj_frequency_name(adj)] = {{mv, mv}, std::move(a)};
  }

  for (int64_t l = 1; l <= layers; ++l) {
    const int64_t c = config_.channels[static_cast<size_t>(l)];
    params_[bn_gamma_name(l)] = {{mv, c}, std::vector<double>(static_cast<size_t>(mv * c), 1.0)};
    params_[bn_beta_name(l)] = {{mv, c}, std::vector<double>(static_cast<size_t>(mv * c), 0.0)};
    bn_stats_.push_back(BatchNormStats::fresh(mv * c));
  }

  if (!config_.deterministic()) {
    // anchors start nearly coincident; the diversity loss drives separation
    for (int64_t level = 0; level < anchor_levels(); ++level) {
      const int64_t c = anchor_width(level);
      std::vector<double> sp(static_cast<size_t>(config_.k_spatial * v * c));
      for (double& x : sp) x = 0.01 * rng.normal();
      params_[anchor_name(level, AnchorAxis::spatial)] = {{config_.k_spatial, v, c},
                                                          std::move(sp)};
      std::vector<double> tp(static_cast<size_t>(config_.k_temporal * m * c));
      for (double& x : tp) x = 0.01 * rng.normal();
      params_[anchor_name(level, AnchorAxis::temporal)] = {{config_.k_temporal, m, c},
                                                           std::move(tp)};
    }
  }

  const auto pruned_list = config_.effective_prune();
  const std::set<int64_t> pruned(pruned_list.begin(), pruned_list.end());
  for (int64_t adj = 0; adj < layers; ++adj) {
    FactorizedAdjacency fa;
    fa.spatial_param = adj_spatial_name(adj);
    fa.frequency_param = adj_frequency_name(adj);
    if (pruned.count(adj)) {
      std::vector<double> sm(s_struct.values().begin(), s_struct.values().end());
      for (size_t idx = 0; idx < sm.size(); ++idx) sm[idx] *= ms.values()[idx];
      fa.spatial_mask = Tensor({mv, mv}, std::move(sm));
    } else {
      fa.spatial_mask = s_struct;
    }
    if (config_.variant == Variant::deterministic_long && pruned.count(adj)) {
      std::vector<double> fm(f_struct.values().begin(), f_struct.values().end());
      for (size_t idx = 0; idx < fm.size(); ++idx) fm[idx] *= mf.values()[idx];
      fa.frequency_mask = Tensor({mv, mv}, std::move(fm));
    } else {
      fa.frequency_mask = f_struct;
    }
    adjacencies_.push_back(std::move(fa));
  }
}

const FactorizedAdjacency& Model::adjacency(int64_t idx) const {
  if (idx < 0 || idx >= static_cast<int64_t>(adjacencies_.size())) {
    throw ParameterError("model: adjacency index out of range");
  }
  return adjacencies_[static_cast<size_t>(idx)];
}

// --- anchors ------------------------------------------------------------

namespace {

Tensor compose_from_rows(const Tensor& spatial_row, const Tensor& temporal_row, int64_t m,
                         int64_t v, int64_t c) {
  const Tensor sp = reshape(spatial_row, {1, v, c});
  const Tensor tp = reshape(temporal_row, {m, 1, c});
  return add(tp, sp);
}

}  // namespace

Tensor Model::compose_anchor(int64_t level, int64_t i, int64_t j) const {
  if (config_.deterministic()) {
    throw StateError("compose_anchor: deterministic variants carry no anchors");
  }
  if (level < 0 || level >= anchor_levels()) {
    throw ParameterError("compose_anchor: level out of range");
  }
  if (i < 0 || i >= config_.k_spatial || j < 0 || j >= config_.k_temporal) {
    throw ParameterError("compose_anchor: anchor index (" + std::to_string(i) + ", " +
                         std::to_string(j) + ") out of range");
  }
  const int64_t m = config_.m_coeffs, v = config_.joints, c = anchor_width(level);
  const Tensor sp_bank = param_tensor(params_.at(anchor_name(level, AnchorAxis::spatial)));
  const Tensor tp_bank = param_tensor(params_.at(anchor_name(level, AnchorAxis::temporal)));
  const Tensor sp = reshape(slice_axis0(sp_bank, i, i + 1), {v, c});
  const Tensor tp = reshape(slice_axis0(tp_bank, j, j + 1), {m, c});
  return compose_from_rows(sp, tp, m, v, c);
}

Tensor Model::interpolate_anchor(int64_t level, AnchorAxis axis, int64_t a, int64_t b,
                                 double alpha) const {
  if (config_.deterministic()) {
    throw StateError("interpolate_anchor: deterministic variants carry no anchors");
  }
  if (level < 0 || level >= anchor_levels()) {
    throw ParameterError("interpolate_anchor: level out of range");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("interpolate_anchor: alpha must lie in [0, 1], extrapolation rejected");
  }
  const int64_t count = axis == AnchorAxis::spatial ? config_.k_spatial : config_.k_temporal;
  if (a < 0 || a >= count || b < 0 || b >= count) {
    throw ParameterError("interpolate_anchor: index out of range");
  }
  const int64_t rows = axis == AnchorAxis::spatial ? config_.joints : config_.m_coeffs;
  const int64_t c = anchor_width(level);
  const Tensor bank = param_tensor(params_.at(anchor_name(level, axis)));
  const Tensor pa = reshape(slice_axis0(bank, a, a + 1), {rows, c});
  const Tensor pb = reshape(slice_axis0(bank, b, b + 1), {rows, c});
  return add(scale(pa, 1.0 - alpha), scale(pb, alpha));
}

// --- forward ------------------------------------------------------------

struct Model::ForwardEnv {
  Tape* tape = nullptr;
  bool training = false;
  bool use_anchors = false;
  int64_t i = 0;
  int64_t j = 0;
  const AnchorOverrides* overrides = nullptr;
  std::optional<Tensor> noise;  // (B, MV, noise_dim)
  const Model* model = nullptr;

  Tensor lookup(const std::string& name) const {
    Tensor t = param_tensor(model->params_.at(name));
    return tape ? tape->param(name, t) : t;
  }
};

Tensor Model::anchor_offset(const ForwardEnv& env, int64_t level) const {
  const int64_t m = config_.m_coeffs, v = config_.joints, c = anchor_width(level);
  Tensor sp, tp;
  if (env.overrides && level < static_cast<int64_t>(env.overrides->spatial.size()) &&
      env.overrides->spatial[static_cast<size_t>(level)]) {
    sp = *env.overrides->spatial[static_cast<size_t>(level)];
  } else {
    sp = reshape(slice_axis0(env.lookup(anchor_name(level, AnchorAxis::spatial)), env.i,
                             env.i + 1),
                 {v, c});
  }
  if (env.overrides && level < static_cast<int64_t>(env.overrides->temporal.size()) &&
      env.overrides->temporal[static_cast<size_t>(level)]) {
    tp = *env.overrides->temporal[static_cast<size_t>(level)];
  } else {
    tp = reshape(slice_axis0(env.lookup(anchor_name(level, AnchorAxis::temporal)), env.j,
                             env.j + 1),
                 {m, c});
  }
  return reshape(compose_from_rows(sp, tp, m, v, c), {m * v, c});
}

Tensor Model::forward_core(const ForwardEnv& env, const Tensor& h0) const {
  const int64_t layers = config_.layer_count();
  std::vector<Tensor> outputs(static_cast<size_t>(layers + 1));
  outputs[0] = h0;
  Tensor h = h0;
  for (int64_t l = 1; l <= layers; ++l) {
    Tensor input = h;
    if (env.use_anchors) {
      for (int64_t level = 0; level < anchor_levels(); ++level) {
        if (config_.anchor_layers[static_cast<size_t>(level)] == l) {
          input = add(input, anchor_offset(env, level));
        }
      }
    }
    if (l == config_.noise_layer && env.noise) {
      input = concat_last_axis(input, *env.noise);
    }
    const FactorizedAdjacency& adj = adjacencies_[static_cast<size_t>(l - 1)];
    const Tensor eff_s = elementwise_mul(env.lookup(adj.spatial_param), adj.spatial_mask);
    const Tensor eff_f = elementwise_mul(env.lookup(adj.frequency_param), adj.frequency_mask);
    Tensor pre = matmul(eff_s, matmul(eff_f, input));
    pre = matmul(pre, env.lookup(weight_name(l - 1)));
    // activation precedes normalization: batch statistics are computed per
    // anchor group, and a pre-activation anchor offset is constant across
    // that group, so normalizing first would cancel it exactly
    const Tensor activated = l < layers ? relu(pre) : pre;
    Tensor out = batch_norm(activated, env.lookup(bn_gamma_name(l)), env.lookup(bn_beta_name(l)),
                            bn_stats_[static_cast<size_t>(l - 1)], env.training);
    // residual connections between equal-width layer outputs
    if (l >= 3 && l % 2 == 1 &&
        config_.channels[static_cast<size_t>(l)] == config_.channels[static_cast<size_t>(l - 2)]) {
      out = add(out, outputs[static_cast<size_t>(l - 2)]);
    }
    outputs[static_cast<size_t>(l)] = out;
    h = out;
  }
  return h;
}

Tensor Model::input_coefficients(const std::vector<const MotionSequence*>& histories) const {
  const int64_t batch = static_cast<int64_t>(histories.size());
  const int64_t mv = config_.node_count();
  std::vector<double> values(static_cast<size_t>(batch * mv * 3));
  for (int64_t b = 0; b < batch; ++b) {
    const MotionSequence* h = histories[static_cast<size_t>(b)];
    if (h->joints != config_.joints) {
      throw ContractError("model: history has " + std::to_string(h->joints) +
                          " joints, config expects " + std::to_string(config_.joints));
    }
    if (h->frames != config_.t_history) {
      throw ContractError("model: history has " + std::to_string(h->frames) +
                          " frames, config expects " + std::to_string(config_.t_history));
    }
    const MotionSequence padded = pad_history(*h, config_.t_future);
    const Tensor coeffs = to_frequency(basis_, padded);  // (M, V, 3)
    std::copy(coeffs.values().begin(), coeffs.values().end(),
              values.begin() + static_cast<int64_t>(b * mv * 3));
  }
  return Tensor({batch, mv, 3}, std::move(values));
}

Model::BatchOutputs Model::split_outputs(const Tensor& h_final, int64_t batch) const {
  const Tensor coeffs =
      reshape(h_final, {batch, config_.m_coeffs, config_.joints * 3});
  BatchOutputs out;
  out.future = matmul(fut_basis_, coeffs);    // (B, T_p, V*3)
  out.history = matmul(hist_basis_, coeffs);  // (B, T_h, V*3)
  return out;
}

std::pair<MotionSequence, MotionSequence> Model::forward_one(
    const MotionSequence& history, int64_t i, int64_t j, const std::vector<double>* noise,
    const AnchorOverrides* overrides) const {
  if (config_.deterministic()) {
    throw StateError("forward_one: unsupported for deterministic variants");
  }
  if (i < 0 || i >= config_.k_spatial || j < 0 || j >= config_.k_temporal) {
    throw ParameterError("forward_one: anchor index (" + std::to_string(i) + ", " +
                         std::to_string(j) + ") out of range");
  }
  ForwardEnv env;
  env.model = this;
  env.use_anchors = true;
  env.i = i;
  env.j = j;
  env.overrides = overrides;
  const int64_t mv = config_.node_count();
  if (config_.noise_dim > 0) {
    if (noise == nullptr || static_cast<int64_t>(noise->size()) != config_.noise_dim) {
      throw ContractError("forward_one: expected a noise vector of " +
                          std::to_string(config_.noise_dim) + " entries");
    }
    std::vector<double> z(static_cast<size_t>(mv * config_.noise_dim));
    for (int64_t n = 0; n < mv; ++n) {
      std::copy(noise->begin(), noise->end(),
                z.begin() + static_cast<int64_t>(n * config_.noise_dim));
    }
    env.noise = Tensor({1, mv, config_.noise_dim}, std::move(z));
  }
  const Tensor h0 = input_coefficients({&history});
  const Tensor h_final = forward_core(env, h0);
  const BatchOutputs outs = split_outputs(h_final, 1);
  return {sequence_from_flat(outs.future.values(), config_.t_future, config_.joints),
          sequence_from_flat(outs.history.values(), config_.t_history, config_.joints)};
}

PredictionSet Model::sample_set(const MotionSequence& history, uint64_t seed) const {
  if (config_.deterministic()) {
    throw StateError("sample_set: unsupported for deterministic variants");
  }
  PredictionSet out;
  for (int64_t k = 0; k < config_.k_total(); ++k) {
    const int64_t i = k / config_.k_temporal;
    const int64_t j = k % config_.k_temporal;
    std::vector<double> z(static_cast<size_t>(config_.noise_dim));
    Rng rng = Rng::substream(seed, "noise", static_cast<uint64_t>(k));
    for (double& x : z) x = rng.normal();
    auto [future, recovered] = forward_one(history, i, j, config_.noise_dim > 0 ? &z : nullptr);
    out.futures.push_back(std::move(future));
    out.recovered_histories.push_back(std::move(recovered));
    out.provenance.push_back({i, j, static_cast<uint64_t>(k)});
  }
  return out;
}

std::pair<MotionSequence, MotionSequence> Model::deterministic_forward(
    const MotionSequence& history) const {
  if (!config_.deterministic()) {
    throw StateError("deterministic_forward: unsupported for the stochastic variant");
  }
  ForwardEnv env;
  env.model = this;
  const Tensor h0 = input_coefficients({&history});
  const Tensor h_final = forward_core(env, h0);
  const BatchOutputs outs = split_outputs(h_final, 1);
  return {sequence_from_flat(outs.future.values(), config_.t_future, config_.joints),
          sequence_from_flat(outs.history.values(), config_.t_history, config_.joints)};
}

Model::BatchOutputs Model::forward_batch(Tape& tape, const Tensor& input_coeffs, int64_t i,
                                         int64_t j,
                                         const std::vector<std::vector<double>>& noise_per_sample,
                                         bool training) {
  const int64_t batch = input_coeffs.dim(0);
  const int64_t mv = config_.node_count();
  if (input_coeffs.rank() != 3 || input_coeffs.dim(1) != mv || input_coeffs.dim(2) != 3) {
    throw ContractError("forward_batch: input coefficients must be (B, M*V, 3), got " +
                        shape_str(input_coeffs.shape()));
  }
  ForwardEnv env;
  env.model = this;
  env.tape = &tape;
  env.training = training;
  env.use_anchors = !config_.deterministic();
  env.i = i;
  env.j = j;
  if (config_.noise_dim > 0) {
    if (static_cast<int64_t>(noise_per_sample.size()) != batch) {
      throw ContractError("forward_batch: need one noise vector per sample");
    }
    std::vector<double> z(static_cast<size_t>(batch * mv * config_.noise_dim));
    for (int64_t b = 0; b < batch; ++b) {
      const auto& zb = noise_per_sample[static_cast<size_t>(b)];
      if (static_cast<int64_t>(zb.size()) != config_.noise_dim) {
        throw ContractError("forward_batch: noise vector " + std::to_string(b) + " has " +
                            std::to_string(zb.size()) + " entries, expected " +
                            std::to_string(config_.noise_dim));
      }
      for (int64_t n = 0; n < mv; ++n) {
        std::copy(zb.begin(), zb.end(),
                  z.begin() + static_cast<int64_t>((b * mv + n) * config_.noise_dim));
      }
    }
    env.noise = Tensor({batch, mv, config_.noise_dim}, std::move(z));
  }
  const Tensor h_final = forward_core(env, input_coeffs);
  return split_outputs(h_final, batch);
}

void Model::restore(const ParamStore& params, const std::vector<BatchNormStats>& bn_stats) {
  if (params.size() != params_.size()) {
    throw ValidationError("restore: checkpoint has " + std::to_string(params.size()) +
                          " parameters, model expects " + std::to_string(params_.size()));
  }
  for (const auto& [name, p] : params) {
    auto it = params_.find(name);
    if (it == params_.end()) {
      throw ValidationError("restore: unexpected parameter '" + name + "'");
    }
    if (it->second.shape != p.shape) {
      throw ValidationError("restore: parameter '" + name + "' has shape " + shape_str(p.shape) +
                            ", model expects " + shape_str(it->second.shape));
    }
  }
  if (bn_stats.size() != bn_stats_.size()) {
    throw ValidationError("restore: batch-norm site count mismatch");
  }
  for (size_t i = 0; i < bn_stats.size(); ++i) {
    if (bn_stats[i].mean.size() != bn_stats_[i].mean.size()) {
      throw ValidationError("restore: batch-norm feature count mismatch at layer " +
                            std::to_string(i + 1));
    }
  }
  params_ = params;
  bn_stats_ = bn_stats;
}

Tensor sequence_tensor(const MotionSequence& s) {
  return Tensor({s.frames, s.joints, 3}, s.xyz);
}

MotionSequence sequence_from_flat(std::span<const double> values, int64_t frames,
                                  int64_t joints) {
  if (static_cast<int64_t>(values.size()) != frames * joints * 3) {
    throw ContractError("sequence_from_flat: value count does not match frames x joints x 3");
  }
  MotionSequence s = MotionSequence::zeros(frames, joints);
  std::copy(values.begin(), values.end(), s.xyz.begin());
  return s;
}

}  // namespace stars
