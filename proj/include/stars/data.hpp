#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stars/graph.hpp"
#include "stars/motion.hpp"

namespace stars {

struct MotionRecord {
  std::string id;
  double fps = 25.0;
  std::string skeleton_name;
  std::vector<std::string> joint_names;
  MotionSequence frames;
  std::optional<int64_t> mode_label;
};

// Generator recipe for the synthetic multi-modal dataset. Each of `sequences`
// groups shares one history; at `branch_frame` the future splits into
// `mode_count` distinct continuations (direction/speed branches of a smooth
// limb oscillation), each emitted `futures_per_mode` times with observation
// noise on the branched frames.
struct SyntheticSpec {
  std::string skeleton_template = "chain3";
  int64_t mode_count = 4;
  int64_t sequences = 8;
  int64_t futures_per_mode = 1;
  int64_t length = 24;
  int64_t branch_frame = 8;
  double fps = 25.0;
  double noise_scale = 0.0;
  double test_fraction = 0.25;

  void validate() const;
  static SyntheticSpec load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

struct GeneratedDataset {
  std::vector<MotionRecord> records;
  std::vector<int64_t> group_of;  // parallel to records
  std::vector<int64_t> mode_of;
  std::vector<bool> is_test;      // deterministic split by group
};

GeneratedDataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

// Typical norm of the observation noise on one future of `future_frames`
// frames; mode-coverage checks use a multiple of this radius.
double observation_noise_radius(const SyntheticSpec& spec, int64_t future_frames,
                                int64_t joints);

Skeleton skeleton_from_template(const std::string& name);
std::vector<std::string> known_skeleton_templates();

// Plain-text skeleton description: JOINTS / BONES / MIRRORS sections, one
// entry per line, '#' comments.
Skeleton load_skeleton_file(const std::filesystem::path& path);
void save_skeleton_file(const Skeleton& skeleton, const std::filesystem::path& path);

// Motion file: a JSON document with format_version, fps, skeleton name,
// joint_names, frames[[x,y,z]...], and optional id / mode_label.
void save_motion_file(const MotionRecord& record, const std::filesystem::path& path);
MotionRecord load_motion_file(const std::filesystem::path& path);

void validate_against_skeleton(const MotionRecord& record, const Skeleton& skeleton);

struct MotionWindow {
  std::string record_id;
  int64_t start = 0;
  int64_t group = -1;  // -1 when the source carries no group information
  std::optional<int64_t> mode_label;
  MotionSequence history;
  MotionSequence future;
};

struct WindowSet {
  std::vector<MotionWindow> windows;
  int64_t skipped_records = 0;  // records shorter than one window
};

WindowSet window_dataset(const std::vector<MotionRecord>& records, int64_t t_history,
                         int64_t t_future, int64_t stride);

// Dataset directory layout: `manifest.json` plus one motion file per record
// under `records/`. The manifest echoes the generator spec and seed and tags
// every record with its group, mode, and split.
void save_generated_dataset(const GeneratedDataset& data, const SyntheticSpec& spec,
                            uint64_t seed, const std::filesystem::path& dir);

struct LoadedDataset {
  SyntheticSpec spec;
  uint64_t seed = 0;
  std::vector<MotionRecord> train_records;
  std::vector<MotionRecord> test_records;
  std::vector<int64_t> train_groups;  // parallel to the record lists
  std::vector<int64_t> test_groups;
};

LoadedDataset load_generated_dataset(const std::filesystem::path& dir);

}  // namespace stars
