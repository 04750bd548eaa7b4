// Command-line entry points: data generation, training, evaluation, diverse
// sampling, anchor interpolation, and gradient verification.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "stars/checkpoint.hpp"
#include "stars/config.hpp"
#include "stars/data.hpp"
#include "stars/error.hpp"
#include "stars/gradcheck.hpp"
#include "stars/metrics.hpp"
#include "stars/model.hpp"
#include "stars/rng.hpp"
#include "stars/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stars;

namespace {

void ensure_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw StateError("output directory " + dir.string() +
                     " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

MotionSequence tail_history(const MotionRecord& record, int64_t t_history) {
  if (record.frames.frames < t_history) {
    throw ParameterError("input motion '" + record.id + "' has " +
                         std::to_string(record.frames.frames) + " frames, need at least " +
                         std::to_string(t_history));
  }
  MotionSequence h = MotionSequence::zeros(t_history, record.frames.joints);
  const int64_t start = record.frames.frames - t_history;
  for (int64_t t = 0; t < t_history; ++t) {
    for (int64_t v = 0; v < record.frames.joints; ++v) {
      for (int64_t c = 0; c < 3; ++c) h.at(t, v, c) = record.frames.at(start + t, v, c);
    }
  }
  return h;
}

MotionRecord prediction_record(const Model& model, const MotionSequence& future, double fps) {
  MotionRecord rec;
  rec.id = "prediction";
  rec.fps = fps;
  rec.skeleton_name = "custom";
  rec.joint_names = model.skeleton().joint_names;
  rec.frames = future;
  return rec;
}

void write_provenance(const fs::path& path, const json& j) {
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

std::string zero_pad(int64_t value, int width) {
  std::ostringstream os;
  os << std::setw(width) << std::setfill('0') << value;
  return os.str();
}

// --- generate-data -----------------------------------------------------------

struct GenerateArgs {
  std::string spec_path;
  uint64_t seed = 0;
  std::string out_dir;
  bool force = false;
};

int cmd_generate_data(const GenerateArgs& args) {
  const SyntheticSpec spec = SyntheticSpec::load(args.spec_path);
  ensure_output_dir(args.out_dir, args.force);
  const GeneratedDataset data = generate_synthetic(spec, args.seed);
  save_generated_dataset(data, spec, args.seed, args.out_dir);
  // echo: the spec plus the seed, loadable as a spec again
  {
    json echo;
    std::ifstream in(args.spec_path);
    in >> echo;
    echo["seed"] = args.seed;
    std::ofstream out(fs::path(args.out_dir) / "dataspec_echo.json");
    out << echo.dump(2) << '\n';
  }
  std::cout << "generated " << data.records.size() << " records (" << spec.sequences
            << " groups x " << spec.mode_count << " modes x " << spec.futures_per_mode
            << " futures) into " << args.out_dir << "\n";
  return 0;
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string variant;
  std::optional<uint64_t> seed;
  std::optional<int64_t> epochs;
  bool freeze_anchors = false;
  std::string resume;
  bool force = false;
};

void write_train_log_row(std::ofstream& log, const EpochSummary& s) {
  auto value_of = [&](const char* name) {
    for (const auto& [n, v] : s.loss_means) {
      if (n == name) return v;
    }
    return 0.0;
  };
  log << s.epoch << ',' << s.lr;
  for (const char* name :
       {"loss_r", "loss_mm", "loss_h", "loss_d", "loss_nf", "loss_l", "loss_a", "total"}) {
    log << ',' << value_of(name);
  }
  log << ',' << s.wall_seconds << '\n';
}

int cmd_train(const TrainArgs& args) {
  RunConfig rc = load_run_config(args.config_path);
  if (!args.variant.empty()) rc.model.variant = variant_from_name(args.variant);
  if (args.seed) rc.train.seed = *args.seed;
  if (args.epochs) rc.train.epochs = *args.epochs;
  if (args.freeze_anchors) rc.train.freeze_anchors = true;
  rc.validate();

  const LoadedDataset dataset = load_generated_dataset(args.data_dir);
  const Skeleton skeleton = skeleton_from_template(dataset.spec.skeleton_template);
  for (const auto& rec : dataset.train_records) validate_against_skeleton(rec, skeleton);

  ensure_output_dir(args.out_dir, args.force);
  const fs::path out_dir(args.out_dir);
  {
    std::ofstream echo(out_dir / "config_echo.ini");
    echo << echo_run_config(rc);
  }

  auto windows = window_dataset(dataset.train_records, rc.model.t_history, rc.model.t_future,
                                rc.train.window_stride);
  if (windows.windows.empty()) {
    throw ParameterError("train: no usable windows (records shorter than T_h + T_p?)");
  }
  if (windows.skipped_records > 0) {
    std::cerr << "warning: skipped " << windows.skipped_records << " short records\n";
  }

  std::optional<Model> model;
  int64_t start_epoch = 0;
  std::optional<TrainProgress> resume_progress;
  if (!args.resume.empty()) {
    const LoadedCheckpoint loaded = load_checkpoint(args.resume);
    model.emplace(model_from_checkpoint(loaded));
    resume_progress = loaded.progress;
    start_epoch = loaded.progress.epoch;
  } else {
    model.emplace(rc.model, skeleton, rc.train.seed);
  }

  Trainer trainer(*model, rc.train, std::move(windows.windows));
  if (resume_progress) {
    trainer.set_epoch(resume_progress->epoch);
    trainer.optimizer() = resume_progress->adam;
    trainer.data_rng() = Rng::deserialize(resume_progress->rng_data);
    trainer.noise_rng() = Rng::deserialize(resume_progress->rng_noise);
  }

  std::ofstream log(out_dir / "train_log.csv");
  log << "epoch,lr,loss_r,loss_mm,loss_h,loss_d,loss_nf,loss_l,loss_a,total,wall_seconds\n";
  log << std::setprecision(17);

  double best_total = std::numeric_limits<double>::infinity();
  ParamStore best_params;
  std::vector<BatchNormStats> best_stats;
  TrainProgress best_progress;

  const int64_t report_every = std::max<int64_t>(1, (rc.train.epochs - start_epoch) / 10);
  for (int64_t epoch = start_epoch; epoch < rc.train.epochs; ++epoch) {
    const EpochSummary s = trainer.train_epoch();
    write_train_log_row(log, s);
    const double total = s.loss_means.back().second;
    if (total < best_total) {
      best_total = total;
      best_params = model->params();
      best_stats = model->bn_stats();
      best_progress.epoch = trainer.epoch();
      best_progress.adam = trainer.optimizer();
      best_progress.rng_data = trainer.data_rng().serialize();
      best_progress.rng_noise = trainer.noise_rng().serialize();
    }
    if ((epoch - start_epoch) % report_every == 0 || epoch + 1 == rc.train.epochs) {
      std::cout << "epoch " << epoch << " lr " << s.lr << " total " << total << "\n";
    }
  }

  TrainProgress final_progress;
  final_progress.epoch = trainer.epoch();
  final_progress.adam = trainer.optimizer();
  final_progress.rng_data = trainer.data_rng().serialize();
  final_progress.rng_noise = trainer.noise_rng().serialize();
  save_checkpoint(*model, final_progress, out_dir / "checkpoint_final.ckpt");

  Model best_model(rc.model, skeleton, rc.train.seed);
  best_model.restore(best_params, best_stats);
  save_checkpoint(best_model, best_progress, out_dir / "checkpoint_best.ckpt");

  std::cout << "wrote " << (out_dir / "checkpoint_final.ckpt").string() << " (best total "
            << best_total << ")\n";
  return 0;
}

// --- evaluate ------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string out_path;
  double epsilon = 0.5;
  uint64_t seed = 0;
  std::string split = "test";
  std::vector<int64_t> horizons_ms;
  int64_t stride = 1;
};

json report_to_json(const MetricReport& r) {
  json j;
  j["apd"] = r.has_diverse ? json(r.apd) : json(nullptr);
  j["ade"] = r.has_diverse ? json(r.ade) : json(nullptr);
  j["fde"] = r.has_diverse ? json(r.fde) : json(nullptr);
  j["mmade"] = r.has_diverse ? json(r.mmade) : json(nullptr);
  j["mmfde"] = r.has_diverse ? json(r.mmfde) : json(nullptr);
  json mp = json::object();
  for (auto [ms, mm] : r.mpjpe_by_horizon_ms) mp[std::to_string(ms)] = mm;
  j["mpjpe_by_horizon"] = r.has_mpjpe ? mp : json(nullptr);
  j["sample_count"] = r.sample_count;
  return j;
}

int cmd_evaluate(const EvaluateArgs& args) {
  const LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
  const Model model = model_from_checkpoint(loaded);
  const LoadedDataset dataset = load_generated_dataset(args.data_dir);

  const auto& records = args.split == "train" ? dataset.train_records : dataset.test_records;
  if (records.empty()) {
    throw ParameterError("evaluate: split '" + args.split + "' holds no records");
  }
  for (const auto& rec : records) validate_against_skeleton(rec, model.skeleton());

  const auto windows =
      window_dataset(records, model.config().t_history, model.config().t_future, args.stride);

  EvalOptions opts;
  opts.epsilon = args.epsilon;
  opts.seed = args.seed;
  opts.fps = dataset.spec.fps;
  if (model.config().deterministic()) {
    if (!args.horizons_ms.empty()) {
      opts.horizons_ms = args.horizons_ms;
    } else if (model.config().variant == Variant::deterministic_short) {
      opts.horizons_ms = {80, 160, 320, 400};
    } else {
      opts.horizons_ms = {560, 720, 880, 1000};
    }
  }

  const MetricReport report = evaluate(model, windows.windows, opts);

  json out;
  out["config_echo"] = {{"checkpoint", args.checkpoint},
                        {"data", args.data_dir},
                        {"split", args.split},
                        {"epsilon", args.epsilon},
                        {"seed", args.seed},
                        {"stride", args.stride},
                        {"variant", variant_name(model.config().variant)},
                        {"horizons_ms", opts.horizons_ms}};
  out.update(report_to_json(report));

  std::ofstream out_file(args.out_path);
  if (!out_file) throw ParseError("evaluate: cannot write " + args.out_path);
  out_file << out.dump(2) << '\n';

  // CSV sibling: one header row, one value row
  fs::path csv_path(args.out_path);
  csv_path.replace_extension(".csv");
  std::ofstream csv(csv_path);
  csv << "apd,ade,fde,mmade,mmfde,sample_count";
  for (auto [ms, mm] : report.mpjpe_by_horizon_ms) csv << ",mpjpe_" << ms << "ms";
  csv << '\n' << std::setprecision(17);
  if (report.has_diverse) {
    csv << report.apd << ',' << report.ade << ',' << report.fde << ',' << report.mmade << ','
        << report.mmfde;
  } else {
    csv << ",,,,";
  }
  csv << ',' << report.sample_count;
  for (auto [ms, mm] : report.mpjpe_by_horizon_ms) csv << ',' << mm;
  csv << '\n';

  std::cout << out.dump(2) << '\n';
  return 0;
}

// --- predict ------------------------------------------------------------

struct PredictArgs {
  std::string checkpoint;
  std::string input;
  std::string out_dir;
  bool k_all = false;
  std::vector<int64_t> anchor;  // i,j
  uint64_t seed = 0;
  bool force = false;
};

int cmd_predict(const PredictArgs& args) {
  if (args.k_all == !args.anchor.empty()) {
    throw ParameterError("predict: pass exactly one of --k-all or --anchor i,j");
  }
  const LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
  const Model model = model_from_checkpoint(loaded);
  const MotionRecord input = load_motion_file(args.input);
  validate_against_skeleton(input, model.skeleton());
  const MotionSequence history = tail_history(input, model.config().t_history);

  ensure_output_dir(args.out_dir, args.force);
  const fs::path out_dir(args.out_dir);
  write_provenance(out_dir / "invocation.json", json{{"command", "predict"},
                                                     {"checkpoint", args.checkpoint},
                                                     {"input", args.input},
                                                     {"seed", args.seed},
                                                     {"k_all", args.k_all},
                                                     {"anchor", args.anchor}});

  if (args.k_all) {
    const PredictionSet preds = model.sample_set(history, args.seed);
    for (int64_t k = 0; k < preds.k(); ++k) {
      const std::string stem = "pred_" + zero_pad(k, 3);
      save_motion_file(prediction_record(model, preds.futures[static_cast<size_t>(k)], input.fps),
                       out_dir / (stem + ".json"));
      const auto& prov = preds.provenance[static_cast<size_t>(k)];
      write_provenance(out_dir / (stem + ".provenance.json"),
                       json{{"seed", args.seed},
                            {"spatial", prov.spatial},
                            {"temporal", prov.temporal},
                            {"noise_draw", prov.noise_draw}});
    }
    std::cout << "wrote " << preds.k() << " predictions to " << args.out_dir << "\n";
  } else {
    if (args.anchor.size() != 2) {
      throw ParameterError("predict: --anchor expects two indices i,j");
    }
    const int64_t i = args.anchor[0], j = args.anchor[1];
    std::vector<double> z(static_cast<size_t>(model.config().noise_dim));
    Rng rng = Rng::substream(args.seed, "noise", 0);
    for (double& x : z) x = rng.normal();
    auto [future, recovered] =
        model.forward_one(history, i, j, model.config().noise_dim > 0 ? &z : nullptr);
    save_motion_file(prediction_record(model, future, input.fps), out_dir / "pred_000.json");
    write_provenance(out_dir / "pred_000.provenance.json", json{{"seed", args.seed},
                                                                {"spatial", i},
                                                                {"temporal", j},
                                                                {"noise_draw", 0}});
    std::cout << "wrote 1 prediction to " << args.out_dir << "\n";
  }
  return 0;
}

// --- interpolate -----------------------------------------------------------

struct InterpolateArgs {
  std::string checkpoint;
  std::string input;
  std::string out_dir;
  std::string axis = "spatial";
  int64_t from = 0;
  int64_t to = 1;
  int64_t steps = 2;
  int64_t fixed = 0;
  uint64_t seed = 0;
  bool force = false;
};

int cmd_interpolate(const InterpolateArgs& args) {
  if (args.steps < 2) throw ParameterError("interpolate: --steps must be >= 2");
  AnchorAxis axis;
  if (args.axis == "spatial") {
    axis = AnchorAxis::spatial;
  } else if (args.axis == "temporal") {
    axis = AnchorAxis::temporal;
  } else {
    throw ParameterError("interpolate: --axis must be spatial or temporal");
  }
  const LoadedCheckpoint loaded = load_checkpoint(args.checkpoint);
  const Model model = model_from_checkpoint(loaded);
  const MotionRecord input = load_motion_file(args.input);
  validate_against_skeleton(input, model.skeleton());
  const MotionSequence history = tail_history(input, model.config().t_history);

  ensure_output_dir(args.out_dir, args.force);
  const fs::path out_dir(args.out_dir);
  write_provenance(out_dir / "invocation.json", json{{"command", "interpolate"},
                                                     {"checkpoint", args.checkpoint},
                                                     {"input", args.input},
                                                     {"axis", args.axis},
                                                     {"from", args.from},
                                                     {"to", args.to},
                                                     {"steps", args.steps},
                                                     {"fixed", args.fixed},
                                                     {"seed", args.seed}});

  // one noise draw shared across the sweep isolates the anchor's effect and
  // makes the endpoints reproduce cmd_predict outputs under the same seed
  std::vector<double> z(static_cast<size_t>(model.config().noise_dim));
  Rng rng = Rng::substream(args.seed, "noise", 0);
  for (double& x : z) x = rng.normal();
  const std::vector<double>* noise = model.config().noise_dim > 0 ? &z : nullptr;

  for (int64_t s = 0; s < args.steps; ++s) {
    const double alpha = static_cast<double>(s) / static_cast<double>(args.steps - 1);
    Model::AnchorOverrides overrides;
    overrides.spatial.resize(static_cast<size_t>(model.anchor_levels()));
    overrides.temporal.resize(static_cast<size_t>(model.anchor_levels()));
    for (int64_t level = 0; level < model.anchor_levels(); ++level) {
      const Tensor blended = model.interpolate_anchor(level, axis, args.from, args.to, alpha);
      if (axis == AnchorAxis::spatial) {
        overrides.spatial[static_cast<size_t>(level)] = blended;
      } else {
        overrides.temporal[static_cast<size_t>(level)] = blended;
      }
    }
    const int64_t i = axis == AnchorAxis::spatial ? args.from : args.fixed;
    const int64_t j = axis == AnchorAxis::spatial ? args.fixed : args.from;
    auto [future, recovered] = model.forward_one(history, i, j, noise, &overrides);

    const std::string stem = "step_" + zero_pad(s, 3);
    save_motion_file(prediction_record(model, future, input.fps), out_dir / (stem + ".json"));
    write_provenance(out_dir / (stem + ".provenance.json"), json{{"seed", args.seed},
                                                                 {"axis", args.axis},
                                                                 {"from", args.from},
                                                                 {"to", args.to},
                                                                 {"fixed", args.fixed},
                                                                 {"alpha", alpha}});
  }
  std::cout << "wrote " << args.steps << " interpolated predictions to " << args.out_dir << "\n";
  return 0;
}

// --- gradcheck ------------------------------------------------------------

struct GradcheckArgs {
  std::string config_path;
  uint64_t seed = 0;
  double tolerance = 1e-3;
  double atol = 1e-7;
  double fd_step = 1e-6;
  int64_t max_params = 20000;
  std::string corrupt;
};

Prim prim_from_name(const std::string& name) {
  for (Prim p : {Prim::matmul, Prim::add, Prim::elementwise_mul, Prim::concat_last_axis,
                 Prim::relu, Prim::batch_norm, Prim::reshape, Prim::sum, Prim::l1_norm,
                 Prim::l2_norm, Prim::exp, Prim::min_over_set, Prim::slice_axis0}) {
    if (name == prim_name(p)) return p;
  }
  throw ParameterError("gradcheck: unknown primitive '" + name + "'");
}

int cmd_gradcheck(const GradcheckArgs& args) {
  RunConfig rc = load_run_config(args.config_path);
  rc.model.validate();

  // chain-topology skeleton sized to the config
  Skeleton skeleton;
  for (int64_t v = 0; v < rc.model.joints; ++v) {
    skeleton.joint_names.push_back("j" + std::to_string(v));
    if (v > 0) skeleton.bone_edges.push_back({v - 1, v});
  }

  Model model(rc.model, skeleton, rc.train.seed);
  int64_t param_count = 0;
  for (const auto& [name, p] : model.params()) {
    param_count += static_cast<int64_t>(p.values.size());
  }
  if (param_count > args.max_params) {
    throw ParameterError("gradcheck: config has " + std::to_string(param_count) +
                         " parameters, cap is " + std::to_string(args.max_params) +
                         " (finite differences need a toy-sized model)");
  }
  std::cout << "config: " << param_count << " parameters across " << model.params().size()
            << " blocks, seed " << args.seed << "\n";

  bool all_pass = true;

  // stage 1: per-primitive adjoints at the tighter tolerance
  const auto prim_checks = run_primitive_adjoint_checks(20, 1e-4, args.atol);
  std::map<std::string, std::pair<bool, double>> by_prim;
  for (const auto& c : prim_checks) {
    auto it = by_prim.find(c.primitive);
    if (it == by_prim.end()) {
      by_prim[c.primitive] = {c.pass, c.max_abs_diff};
    } else {
      it->second.first = it->second.first && c.pass;
      it->second.second = std::max(it->second.second, c.max_abs_diff);
    }
  }
  for (const auto& [name, result] : by_prim) {
    std::cout << (result.first ? "[PASS] " : "[FAIL] ") << "primitive " << name << " max|diff| "
              << result.second << " (20 seeds, rtol 1e-4)\n";
    all_pass = all_pass && result.first;
  }

  // stage 2: the full training loss against finite differences, per block
  TrainConfig tc = rc.train;
  tc.batch_size = 2;
  tc.instances_per_epoch = 2;
  std::vector<MotionWindow> windows;
  {
    Rng rng = Rng::substream(args.seed, "gradcheck-data");
    for (int w = 0; w < 3; ++w) {
      MotionWindow win;
      win.record_id = "gc" + std::to_string(w);
      win.history = MotionSequence::zeros(rc.model.t_history, rc.model.joints);
      win.future = MotionSequence::zeros(rc.model.t_future, rc.model.joints);
      for (double& x : win.history.xyz) x = rng.uniform(-0.5, 0.5);
      for (double& x : win.future.xyz) x = rng.uniform(-0.5, 0.5);
      windows.push_back(std::move(win));
    }
  }
  Trainer trainer(model, tc, std::move(windows));
  const std::vector<int64_t> indices = {0, 1};
  const BatchNoise noise = trainer.draw_noise(2);

  Tape tape;
  if (!args.corrupt.empty()) tape.corrupt_adjoint_for_test(prim_from_name(args.corrupt));
  auto losses = trainer.build_batch_loss(tape, indices, noise, true);
  const GradMap analytic = tape.backward(losses.total);

  const ParamStore original = model.params();
  const auto f = [&](const ParamStore& p) {
    model.params() = p;
    Tape t;
    return trainer.build_batch_loss(t, indices, noise, true).total.value();
  };
  const auto numeric = finite_difference_gradient(f, original, args.fd_step);
  model.params() = original;

  // central differences carry roundoff of order eps * |loss| / h; the
  // absolute floor must sit above that noise for near-zero gradients
  const double noise_floor = 8.0 * std::numeric_limits<double>::epsilon() *
                             std::abs(losses.total.value()) / args.fd_step;
  const double atol = std::max(args.atol, noise_floor);
  std::cout << "loss " << losses.total.value() << ", absolute tolerance " << atol << "\n";

  const auto checks = compare_gradients(analytic, numeric, original, args.tolerance, atol);
  for (const auto& c : checks) {
    std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << " max|diff| " << c.max_abs_diff
              << " (analytic " << c.worst_analytic << ", numeric " << c.worst_numeric << ")\n";
    all_pass = all_pass && c.pass;
  }

  std::cout << (all_pass ? "gradcheck passed" : "gradcheck FAILED") << "\n";
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-level spatial-temporal anchor sampling on a factorized "
               "spatial-temporal graph motion predictor"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate-data", "synthesize a multi-modal motion dataset");
  gen_cmd->add_option("--spec", gen.spec_path, "generator spec JSON")->required();
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_flag("--force", gen.force, "overwrite a non-empty output directory");

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->add_option("--config", train.config_path, "run configuration file")->required();
  train_cmd->add_option("--data", train.data_dir, "dataset directory")->required();
  train_cmd->add_option("--out", train.out_dir, "output directory")->required();
  train_cmd->add_option("--variant", train.variant, "stochastic | det-short | det-long");
  uint64_t seed_override = 0;
  auto* seed_opt = train_cmd->add_option("--seed", seed_override, "override the config seed");
  int64_t epochs_override = 0;
  auto* epochs_opt =
      train_cmd->add_option("--epochs", epochs_override, "override the epoch count");
  train_cmd->add_flag("--freeze-anchors", train.freeze_anchors,
                      "keep anchors at their initial values (pure-noise ablation)");
  train_cmd->add_option("--resume", train.resume, "checkpoint to continue from");
  train_cmd->add_flag("--force", train.force, "overwrite a non-empty output directory");

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "run the metric suite on a data split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval.data_dir, "dataset directory")->required();
  eval_cmd->add_option("--out", eval.out_path, "report JSON path")->required();
  eval_cmd->add_option("--epsilon", eval.epsilon, "multi-modal clustering threshold (meters)");
  eval_cmd->add_option("--seed", eval.seed, "sampling seed");
  eval_cmd->add_option("--split", eval.split, "test | train");
  eval_cmd->add_option("--horizons", eval.horizons_ms, "millisecond horizons for MPJPE")
      ->delimiter(',');
  eval_cmd->add_option("--stride", eval.stride, "window stride over records");

  PredictArgs predict;
  auto* predict_cmd = app.add_subcommand("predict", "sample futures for one motion file");
  predict_cmd->add_option("--checkpoint", predict.checkpoint, "checkpoint file")->required();
  predict_cmd->add_option("--input", predict.input, "input motion file")->required();
  predict_cmd->add_option("--out", predict.out_dir, "output directory")->required();
  predict_cmd->add_flag("--k-all", predict.k_all, "one prediction per compositional anchor");
  predict_cmd
      ->add_option("--anchor", predict.anchor,
                   "spatial,temporal anchor indices for a single prediction")
      ->delimiter(',');
  predict_cmd->add_option("--seed", predict.seed, "noise seed");
  predict_cmd->add_flag("--force", predict.force, "overwrite a non-empty output directory");

  InterpolateArgs interp;
  auto* interp_cmd = app.add_subcommand("interpolate", "sweep an anchor interpolation");
  interp_cmd->add_option("--checkpoint", interp.checkpoint, "checkpoint file")->required();
  interp_cmd->add_option("--input", interp.input, "input motion file")->required();
  interp_cmd->add_option("--out", interp.out_dir, "output directory")->required();
  interp_cmd->add_option("--axis", interp.axis, "spatial | temporal")->required();
  interp_cmd->add_option("--from", interp.from, "start anchor index")->required();
  interp_cmd->add_option("--to", interp.to, "end anchor index")->required();
  interp_cmd->add_option("--steps", interp.steps, "number of interpolation steps (>= 2)");
  interp_cmd->add_option("--fixed", interp.fixed, "index held fixed on the other axis");
  interp_cmd->add_option("--seed", interp.seed, "noise seed");
  interp_cmd->add_flag("--force", interp.force, "overwrite a non-empty output directory");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "verify analytic gradients on a toy config");
  gc_cmd->add_option("--config", gc.config_path, "run configuration file")->required();
  gc_cmd->add_option("--seed", gc.seed, "data seed");
  gc_cmd->add_option("--tolerance", gc.tolerance, "relative tolerance (0 is a guaranteed fail)");
  gc_cmd->add_option("--atol", gc.atol, "absolute tolerance floor");
  gc_cmd->add_option("--fd-step", gc.fd_step, "central-difference step");
  gc_cmd->add_option("--max-params", gc.max_params, "refusal cap on parameter count");
  gc_cmd->add_option("--self-test-corrupt", gc.corrupt,
                     "deliberately corrupt one primitive's adjoint (harness sanity check)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;  // usage error
  }

  if (*seed_opt) train.seed = seed_override;
  if (*epochs_opt) train.epochs = epochs_override;

  try {
    if (*gen_cmd) return cmd_generate_data(gen);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_evaluate(eval);
    if (*predict_cmd) return cmd_predict(predict);
    if (*interp_cmd) return cmd_interpolate(interp);
    if (*gc_cmd) return cmd_gradcheck(gc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
