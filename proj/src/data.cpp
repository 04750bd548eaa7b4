#include "stars/data.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "stars/error.hpp"
#include "stars/rng.hpp"

namespace stars {

using nlohmann::json;

void SyntheticSpec::validate() const {
  if (mode_count < 1) throw ParameterError("dataspec: mode_count must be >= 1");
  if (sequences < 1) throw ParameterError("dataspec: sequences must be >= 1");
  if (futures_per_mode < 1) throw ParameterError("dataspec: futures_per_mode must be >= 1");
  if (length < 2) throw ParameterError("dataspec: length must be >= 2");
  if (branch_frame < 1 || branch_frame >= length) {
    throw ParameterError("dataspec: branch_frame must lie strictly inside the sequence");
  }
  if (fps <= 0) throw ParameterError("dataspec: fps must be positive");
  if (noise_scale < 0) throw ParameterError("dataspec: noise_scale must be >= 0");
  if (test_fraction < 0 || test_fraction > 1) {
    throw ParameterError("dataspec: test_fraction must be in [0, 1]");
  }
  (void)skeleton_from_template(skeleton_template);
}

SyntheticSpec SyntheticSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("dataspec: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError("dataspec " + path.string() + ": " + e.what());
  }
  SyntheticSpec spec;
  try {
    spec.skeleton_template = j.at("skeleton_template").get<std::string>();
    spec.mode_count = j.at("mode_count").get<int64_t>();
    spec.sequences = j.at("sequences").get<int64_t>();
    spec.futures_per_mode = j.value("futures_per_mode", spec.futures_per_mode);
    spec.length = j.at("length").get<int64_t>();
    spec.branch_frame = j.at("branch_frame").get<int64_t>();
    spec.fps = j.at("fps").get<double>();
    spec.noise_scale = j.at("noise_scale").get<double>();
    spec.test_fraction = j.value("test_fraction", spec.test_fraction);
  } catch (const json::exception& e) {
    throw ParseError("dataspec " + path.string() + ": " + e.what());
  }
  spec.validate();
  return spec;
}

void SyntheticSpec::save(const std::filesystem::path& path) const {
  json j;
  j["skeleton_template"] = skeleton_template;
  j["mode_count"] = mode_count;
  j["sequences"] = sequences;
  j["futures_per_mode"] = futures_per_mode;
  j["length"] = length;
  j["branch_frame"] = branch_frame;
  j["fps"] = fps;
  j["noise_scale"] = noise_scale;
  j["test_fraction"] = test_fraction;
  std::ofstream out(path);
  if (!out) throw ParseError("dataspec: cannot write " + path.string());
  out << j.dump(2) << '\n';
}

namespace {

struct Template {
  Skeleton skeleton;
  std::vector<int64_t> parent;      // -1 for the root
  std::vector<double> base_angle;   // rest direction of the bone from parent
  double bone_length = 0.3;
};

Template template_chain3() {
  Template t;
  t.skeleton.joint_names = {"base", "mid", "tip"};
  t.skeleton.bone_edges = {{0, 1}, {1, 2}};
  t.parent = {-1, 0, 1};
  t.base_angle = {0.0, M_PI / 2.0, M_PI / 2.0};
  return t;
}

Template template_ytree5() {
  Template t;
  t.skeleton.joint_names = {"root", "l_upper", "l_lower", "r_upper", "r_lower"};
  t.skeleton.bone_edges = {{0, 1}, {1, 2}, {0, 3}, {3, 4}};
  t.skeleton.mirror_pairs = {{1, 3}, {2, 4}};
  t.parent = {-1, 0, 1, 0, 3};
  t.base_angle = {0.0, M_PI * 0.75, M_PI * 0.6, M_PI * 0.25, M_PI * 0.4};
  return t;
}

Template get_template(const std::string& name) {
  if (name == "chain3") return template_chain3();
  if (name == "ytree5") return template_ytree5();
  throw ParameterError("unknown skeleton template '" + name + "'");
}

struct GroupParams {
  double omega = 0.0;              // base angular velocity, rad/s
  std::vector<double> amplitude;   // per joint
  std::vector<double> phase;
};

GroupParams draw_group_params(uint64_t seed, int64_t group, int64_t joints) {
  Rng rng = Rng::substream(seed, "group-params", static_cast<uint64_t>(group));
  GroupParams p;
  p.omega = rng.uniform(1.2, 2.4);
  p.amplitude.resize(static_cast<size_t>(joints));
  p.phase.resize(static_cast<size_t>(joints));
  for (int64_t v = 0; v < joints; ++v) {
    p.amplitude[static_cast<size_t>(v)] = rng.uniform(0.25, 0.6);
    p.phase[static_cast<size_t>(v)] = rng.uniform(0.0, 2.0 * M_PI);
  }
  return p;
}

// direction flips pair-wise, speed grows every second mode
double mode_direction(int64_t mode) { return mode % 2 == 0 ? 1.0 : -1.0; }
double mode_speed(int64_t mode) { return 1.0 + 0.75 * static_cast<double>(mode / 2); }

MotionSequence synthesize_record(const Template& tmpl, const GroupParams& gp,
                                 const SyntheticSpec& spec, int64_t mode, Rng& noise_rng) {
  const int64_t v_count = tmpl.skeleton.joint_count();
  MotionSequence seq = MotionSequence::zeros(spec.length, v_count);
  const double dir = mode_direction(mode);
  const double speed = mode_speed(mode);
  const double tb = static_cast<double>(spec.branch_frame);
  for (int64_t t = 0; t < spec.length; ++t) {
    const double ts = static_cast<double>(t) / spec.fps;
    for (int64_t v = 0; v < v_count; ++v) {
      const size_t vu = static_cast<size_t>(v);
      double psi;
      if (t < spec.branch_frame) {
        psi = gp.omega * ts + gp.phase[vu];
      } else {
        // phase continues from the branch point with mode-specific velocity
        const double branch_ts = tb / spec.fps;
        psi = gp.omega * branch_ts + gp.phase[vu] +
              dir * speed * gp.omega * (ts - branch_ts);
      }
      const double angle = tmpl.base_angle[vu] + gp.amplitude[vu] * std::sin(psi);
      const int64_t parent = tmpl.parent[vu];
      if (parent < 0) {
        seq.at(t, v, 0) = 0.0;
        seq.at(t, v, 1) = 0.0;
        seq.at(t, v, 2) = 0.0;
      } else {
        seq.at(t, v, 0) = seq.at(t, parent, 0) + tmpl.bone_length * std::cos(angle);
        seq.at(t, v, 1) = seq.at(t, parent, 1) + tmpl.bone_length * std::sin(angle);
        seq.at(t, v, 2) = seq.at(t, parent, 2);
      }
    }
  }
  if (spec.noise_scale > 0.0) {
    // observation noise on branched frames only, keeping group histories
    // byte-identical
    for (int64_t t = spec.branch_frame; t < spec.length; ++t) {
      for (int64_t v = 0; v < v_count; ++v) {
        for (int64_t c = 0; c < 3; ++c) {
          seq.at(t, v, c) += spec.noise_scale * noise_rng.normal();
        }
      }
    }
  }
  return seq;
}

}  // namespace

Skeleton skeleton_from_template(const std::string& name) {
  Skeleton s = get_template(name).skeleton;
  s.validate();
  return s;
}

std::vector<std::string> known_skeleton_templates() { return {"chain3", "ytree5"}; }

GeneratedDataset generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  spec.validate();
  const Template tmpl = get_template(spec.skeleton_template);
  GeneratedDataset out;
  const int64_t test_groups =
      std::min(spec.sequences,
               static_cast<int64_t>(std::llround(spec.test_fraction *
                                                 static_cast<double>(spec.sequences))));
  int64_t record_index = 0;
  for (int64_t g = 0; g < spec.sequences; ++g) {
    const GroupParams gp = draw_group_params(seed, g, tmpl.skeleton.joint_count());
    const bool test = g >= spec.sequences - test_groups;
    for (int64_t m = 0; m < spec.mode_count; ++m) {
      for (int64_t rep = 0; rep < spec.futures_per_mode; ++rep) {
        Rng noise_rng = Rng::substream(seed, "obs-noise", static_cast<uint64_t>(record_index));
        MotionRecord rec;
        std::ostringstream id;
        id << (test ? "test" : "train") << "_g" << g << "_m" << m << "_r" << rep;
        rec.id = id.str();
        rec.fps = spec.fps;
        rec.skeleton_name = spec.skeleton_template;
        rec.joint_names = tmpl.skeleton.joint_names;
        rec.mode_label = m;
        rec.frames = synthesize_record(tmpl, gp, spec, m, noise_rng);
        out.records.push_back(std::move(rec));
        out.group_of.push_back(g);
        out.mode_of.push_back(m);
        out.is_test.push_back(test);
        ++record_index;
      }
    }
  }
  return out;
}

double observation_noise_radius(const SyntheticSpec& spec, int64_t future_frames,
                                int64_t joints) {
  return spec.noise_scale * std::sqrt(static_cast<double>(future_frames * joints * 3));
}

// --- skeleton text format ----------------------------------------------------

Skeleton load_skeleton_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("skeleton: cannot open " + path.string());
  Skeleton s;
  std::map<std::string, int64_t> index;
  enum class Section { none, joints, bones, mirrors };
  Section section = Section::none;
  std::string line;
  int64_t line_no = 0;
  auto fail = [&](const std::string& msg) {
    throw ParseError("skeleton " + path.string() + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto lookup = [&](const std::string& name) {
    auto it = index.find(name);
    if (it == index.end()) fail("unknown joint '" + name + "'");
    return it->second;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string first;
    if (!(ls >> first)) continue;
    if (first == "JOINTS") {
      section = Section::joints;
    } else if (first == "BONES") {
      section = Section::bones;
    } else if (first == "MIRRORS") {
      section = Section::mirrors;
    } else if (section == Section::joints) {
      if (index.count(first)) fail("duplicate joint '" + first + "'");
      index[first] = s.joint_count();
      s.joint_names.push_back(first);
    } else if (section == Section::bones || section == Section::mirrors) {
      std::string second;
      if (!(ls >> second)) fail("expected two joint names");
      const auto pair = std::make_pair(lookup(first), lookup(second));
      if (section == Section::bones) {
        s.bone_edges.push_back(pair);
      } else {
        s.mirror_pairs.push_back(pair);
      }
    } else {
      fail("entry before any section header");
    }
  }
  try {
    s.validate();
  } catch (const ValidationError& e) {
    throw ParseError("skeleton " + path.string() + ": " + e.what());
  }
  return s;
}

void save_skeleton_file(const Skeleton& skeleton, const std::filesystem::path& path) {
  skeleton.validate();
  std::ofstream out(path);
  if (!out) throw ParseError("skeleton: cannot write " + path.string());
  out << "JOINTS\n";
  for (const auto& name : skeleton.joint_names) out << name << '\n';
  out << "BONES\n";
  for (auto [a, b] : skeleton.bone_edges) {
    out << skeleton.joint_names[static_cast<size_t>(a)] << ' '
        << skeleton.joint_names[static_cast<size_t>(b)] << '\n';
  }
  out << "MIRRORS\n";
  for (auto [a, b] : skeleton.mirror_pairs) {
    out << skeleton.joint_names[static_cast<size_t>(a)] << ' '
        << skeleton.joint_names[static_cast<size_t>(b)] << '\n';
  }
}

// --- motion JSON format --------------------------------------------------------

void save_motion_file(const MotionRecord& record, const std::filesystem::path& path) {
  if (record.frames.joints != static_cast<int64_t>(record.joint_names.size())) {
    throw ValidationError("motion record '" + record.id + "': " +
                          std::to_string(record.joint_names.size()) + " joint names but frames carry " +
                          std::to_string(record.frames.joints) + " joints");
  }
  json j;
  j["format_version"] = 1;
  j["id"] = record.id;
  j["fps"] = record.fps;
  j["skeleton"] = record.skeleton_name;
  j["joint_names"] = record.joint_names;
  if (record.mode_label) j["mode_label"] = *record.mode_label;
  json frames = json::array();
  for (int64_t t = 0; t < record.frames.frames; ++t) {
    json frame = json::array();
    for (int64_t v = 0; v < record.frames.joints; ++v) {
      frame.push_back({record.frames.at(t, v, 0), record.frames.at(t, v, 1),
                       record.frames.at(t, v, 2)});
    }
    frames.push_back(std::move(frame));
  }
  j["frames"] = std::move(frames);
  std::ofstream out(path);
  if (!out) throw ParseError("motion: cannot write " + path.string());
  out << j.dump() << '\n';
}

MotionRecord load_motion_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("motion: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError("motion " + path.string() + ": " + e.what());
  }
  MotionRecord rec;
  try {
    const int64_t version = j.at("format_version").get<int64_t>();
    if (version != 1) {
      throw ParseError("motion " + path.string() + ": format_version " +
                       std::to_string(version) + " unsupported (expected 1)");
    }
    rec.id = j.value("id", path.stem().string());
    rec.fps = j.at("fps").get<double>();
    rec.skeleton_name = j.value("skeleton", std::string{});
    rec.joint_names = j.at("joint_names").get<std::vector<std::string>>();
    if (j.contains("mode_label")) rec.mode_label = j.at("mode_label").get<int64_t>();
    const auto& frames = j.at("frames");
    const int64_t t_count = static_cast<int64_t>(frames.size());
    const int64_t v_count = static_cast<int64_t>(rec.joint_names.size());
    rec.frames = MotionSequence::zeros(t_count, v_count);
    for (int64_t t = 0; t < t_count; ++t) {
      const auto& frame = frames.at(static_cast<size_t>(t));
      if (static_cast<int64_t>(frame.size()) != v_count) {
        throw ParseError("motion " + path.string() + ": frame " + std::to_string(t) + " has " +
                         std::to_string(frame.size()) + " joints, joint_names lists " +
                         std::to_string(v_count));
      }
      for (int64_t v = 0; v < v_count; ++v) {
        const auto& point = frame.at(static_cast<size_t>(v));
        if (point.size() != 3) {
          throw ParseError("motion " + path.string() + ": frame " + std::to_string(t) +
                           " joint " + std::to_string(v) + " is not an [x,y,z] triple");
        }
        for (int64_t c = 0; c < 3; ++c) {
          rec.frames.at(t, v, c) = point.at(static_cast<size_t>(c)).get<double>();
        }
      }
    }
  } catch (const json::exception& e) {
    throw ParseError("motion " + path.string() + ": " + e.what());
  }
  if (!rec.frames.all_finite()) {
    throw ValidationError("motion " + path.string() + ": non-finite coordinates");
  }
  return rec;
}

void validate_against_skeleton(const MotionRecord& record, const Skeleton& skeleton) {
  if (record.frames.joints != skeleton.joint_count()) {
    throw ValidationError("record '" + record.id + "': expected " +
                          std::to_string(skeleton.joint_count()) + " joints, got " +
                          std::to_string(record.frames.joints));
  }
  if (!record.joint_names.empty() && record.joint_names != skeleton.joint_names) {
    throw ValidationError("record '" + record.id + "': joint names do not match the skeleton");
  }
}

void save_generated_dataset(const GeneratedDataset& data, const SyntheticSpec& spec,
                            uint64_t seed, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "records");
  json manifest;
  manifest["format_version"] = 1;
  manifest["seed"] = seed;
  manifest["spec"] = {{"skeleton_template", spec.skeleton_template},
                      {"mode_count", spec.mode_count},
                      {"sequences", spec.sequences},
                      {"futures_per_mode", spec.futures_per_mode},
                      {"length", spec.length},
                      {"branch_frame", spec.branch_frame},
                      {"fps", spec.fps},
                      {"noise_scale", spec.noise_scale},
                      {"test_fraction", spec.test_fraction}};
  json records = json::array();
  for (size_t r = 0; r < data.records.size(); ++r) {
    const std::string file = "records/" + data.records[r].id + ".json";
    save_motion_file(data.records[r], dir / file);
    records.push_back({{"id", data.records[r].id},
                       {"file", file},
                       {"group", data.group_of[r]},
                       {"mode", data.mode_of[r]},
                       {"split", data.is_test[r] ? "test" : "train"}});
  }
  manifest["records"] = std::move(records);
  std::ofstream out(dir / "manifest.json");
  if (!out) throw ParseError("dataset: cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

LoadedDataset load_generated_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw ParseError("dataset: cannot open manifest in " + dir.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::parse_error& e) {
    throw ParseError("dataset manifest: " + std::string(e.what()));
  }
  LoadedDataset out;
  try {
    const auto& spec = manifest.at("spec");
    out.spec.skeleton_template = spec.at("skeleton_template").get<std::string>();
    out.spec.mode_count = spec.at("mode_count").get<int64_t>();
    out.spec.sequences = spec.at("sequences").get<int64_t>();
    out.spec.futures_per_mode = spec.at("futures_per_mode").get<int64_t>();
    out.spec.length = spec.at("length").get<int64_t>();
    out.spec.branch_frame = spec.at("branch_frame").get<int64_t>();
    out.spec.fps = spec.at("fps").get<double>();
    out.spec.noise_scale = spec.at("noise_scale").get<double>();
    out.spec.test_fraction = spec.at("test_fraction").get<double>();
    out.seed = manifest.at("seed").get<uint64_t>();
    for (const auto& entry : manifest.at("records")) {
      MotionRecord rec = load_motion_file(dir / entry.at("file").get<std::string>());
      const int64_t group = entry.at("group").get<int64_t>();
      if (entry.at("split").get<std::string>() == "test") {
        out.test_records.push_back(std::move(rec));
        out.test_groups.push_back(group);
      } else {
        out.train_records.push_back(std::move(rec));
        out.train_groups.push_back(group);
      }
    }
  } catch (const json::exception& e) {
    throw ParseError("dataset manifest: " + std::string(e.what()));
  }
  return out;
}

WindowSet window_dataset(const std::vector<MotionRecord>& records, int64_t t_history,
                         int64_t t_future, int64_t stride) {
  if (t_history < 1 || t_future < 1) {
    throw ParameterError("window_dataset: history and future lengths must be >= 1");
  }
  if (stride < 1) throw ParameterError("window_dataset: stride must be >= 1");
  WindowSet out;
  const int64_t window = t_history + t_future;
  for (const auto& rec : records) {
    if (rec.frames.frames < window) {
      ++out.skipped_records;
      continue;
    }
    for (int64_t start = 0; start + window <= rec.frames.frames; start += stride) {
      MotionWindow w;
      w.record_id = rec.id;
      w.start = start;
      w.mode_label = rec.mode_label;
      w.history = MotionSequence::zeros(t_history, rec.frames.joints);
      w.future = MotionSequence::zeros(t_future, rec.frames.joints);
      for (int64_t t = 0; t < t_history; ++t) {
        for (int64_t v = 0; v < rec.frames.joints; ++v) {
          for (int64_t c = 0; c < 3; ++c) w.history.at(t, v, c) = rec.frames.at(start + t, v, c);
        }
      }
      for (int64_t t = 0; t < t_future; ++t) {
        for (int64_t v = 0; v < rec.frames.joints; ++v) {
          for (int64_t c = 0; c < 3; ++c) {
            w.future.at(t, v, c) = rec.frames.at(start + t_history + t, v, c);
          }
        }
      }
      out.windows.push_back(std::move(w));
    }
  }
  return out;
}

}  // namespace stars
