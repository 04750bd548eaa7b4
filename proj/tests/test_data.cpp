#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "stars/data.hpp"
#include "stars/error.hpp"

using namespace stars;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "stars_data_tests";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.skeleton_template = "chain3";
  spec.mode_count = 2;
  spec.sequences = 3;
  spec.futures_per_mode = 2;
  spec.length = 16;
  spec.branch_frame = 6;
  spec.noise_scale = 0.0;
  spec.test_fraction = 0.34;
  return spec;
}

}  // namespace

TEST_CASE("generation is a pure function of spec and seed") {
  const auto a = generate_synthetic(small_spec(), 99);
  const auto b = generate_synthetic(small_spec(), 99);
  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].frames.same_values(b.records[i].frames));
    CHECK(a.records[i].id == b.records[i].id);
  }
  const auto c = generate_synthetic(small_spec(), 100);
  CHECK_FALSE(a.records[0].frames.same_values(c.records[0].frames));
}

TEST_CASE("modes branch into distinct futures with shared histories") {
  const SyntheticSpec spec = small_spec();
  const auto data = generate_synthetic(spec, 7);
  REQUIRE(static_cast<int64_t>(data.records.size()) ==
          spec.sequences * spec.mode_count * spec.futures_per_mode);

  for (int64_t g = 0; g < spec.sequences; ++g) {
    std::vector<size_t> members;
    for (size_t r = 0; r < data.records.size(); ++r) {
      if (data.group_of[r] == g) members.push_back(r);
    }
    REQUIRE(members.size() == 4);  // 2 modes x 2 repetitions
    // histories byte-identical within the group
    for (size_t r : members) {
      for (int64_t t = 0; t < spec.branch_frame; ++t) {
        for (int64_t v = 0; v < 3; ++v) {
          for (int64_t c = 0; c < 3; ++c) {
            CHECK(data.records[r].frames.at(t, v, c) ==
                  data.records[members[0]].frames.at(t, v, c));
          }
        }
      }
    }
    // with zero noise, same-mode repetitions are identical and distinct modes
    // are strictly separated
    for (size_t a : members) {
      for (size_t b : members) {
        if (a >= b) continue;
        double dist = 0.0;
        for (int64_t t = spec.branch_frame; t < spec.length; ++t) {
          for (int64_t v = 0; v < 3; ++v) {
            for (int64_t c = 0; c < 3; ++c) {
              const double d =
                  data.records[a].frames.at(t, v, c) - data.records[b].frames.at(t, v, c);
              dist += d * d;
            }
          }
        }
        if (data.mode_of[a] == data.mode_of[b]) {
          CHECK(dist == 0.0);
        } else {
          CHECK(dist > 0.0);
        }
      }
    }
  }
}

TEST_CASE("single-mode data stays within the observation noise ball") {
  SyntheticSpec spec = small_spec();
  spec.mode_count = 1;
  spec.futures_per_mode = 3;
  spec.noise_scale = 0.01;
  const auto data = generate_synthetic(spec, 21);
  const double radius = observation_noise_radius(spec, spec.length - spec.branch_frame, 3);
  for (size_t a = 0; a < data.records.size(); ++a) {
    for (size_t b = 0; b < data.records.size(); ++b) {
      if (data.group_of[a] != data.group_of[b]) continue;
      const double d = sequence_distance_l2(data.records[a].frames, data.records[b].frames);
      CHECK(d <= 3.0 * radius);
    }
  }
}

TEST_CASE("limb lengths are constant by construction") {
  const auto data = generate_synthetic(small_spec(), 3);
  const Skeleton skel = skeleton_from_template("chain3");
  for (const auto& rec : data.records) {
    for (auto [a, b] : skel.bone_edges) {
      for (int64_t t = 0; t < rec.frames.frames; ++t) {
        double sq = 0.0;
        for (int64_t c = 0; c < 3; ++c) {
          const double d = rec.frames.at(t, a, c) - rec.frames.at(t, b, c);
          sq += d * d;
        }
        CHECK(std::sqrt(sq) == doctest::Approx(0.3).epsilon(1e-9));
      }
    }
  }
}

TEST_CASE("motion files round trip losslessly") {
  const auto data = generate_synthetic(small_spec(), 13);
  const auto path = scratch_dir() / "roundtrip.json";
  save_motion_file(data.records[0], path);
  const MotionRecord loaded = load_motion_file(path);
  CHECK(loaded.id == data.records[0].id);
  CHECK(loaded.fps == data.records[0].fps);
  CHECK(loaded.joint_names == data.records[0].joint_names);
  CHECK(loaded.mode_label == data.records[0].mode_label);
  CHECK(loaded.frames.same_values(data.records[0].frames));
}

TEST_CASE("truncated motion files fail to parse") {
  const auto data = generate_synthetic(small_spec(), 13);
  const auto path = scratch_dir() / "truncated.json";
  save_motion_file(data.records[0], path);
  auto text = [&] {
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }();
  std::ofstream out(path);
  out << text.substr(0, text.size() / 2);
  out.close();
  CHECK_THROWS_AS(load_motion_file(path), ParseError);
}

TEST_CASE("skeleton mismatch is a validation error naming both counts") {
  const auto data = generate_synthetic(small_spec(), 13);
  const Skeleton wrong = skeleton_from_template("ytree5");
  CHECK_THROWS_WITH_AS(validate_against_skeleton(data.records[0], wrong),
                       doctest::Contains("expected 5 joints, got 3"), ValidationError);
}

TEST_CASE("skeleton text files round trip") {
  const Skeleton s = skeleton_from_template("ytree5");
  const auto path = scratch_dir() / "skel.txt";
  save_skeleton_file(s, path);
  const Skeleton loaded = load_skeleton_file(path);
  CHECK(loaded == s);
}

TEST_CASE("skeleton parse errors carry line numbers") {
  const auto path = scratch_dir() / "bad_skel.txt";
  std::ofstream(path) << "JOINTS\na\nb\nBONES\na missing_joint\n";
  CHECK_THROWS_WITH_AS(load_skeleton_file(path), doctest::Contains(":5:"), ParseError);
}

TEST_CASE("windowing") {
  SyntheticSpec spec = small_spec();
  spec.length = 125;
  spec.branch_frame = 25;
  spec.sequences = 1;
  spec.mode_count = 1;
  spec.futures_per_mode = 1;
  const auto data = generate_synthetic(spec, 5);

  const WindowSet one = window_dataset(data.records, 25, 100, 1);
  CHECK(one.windows.size() == 1);  // 125 - 125 + 1
  CHECK(one.skipped_records == 0);

  const WindowSet strided = window_dataset(data.records, 10, 10, 200);
  CHECK(strided.windows.size() == 1);

  const WindowSet skipped = window_dataset(data.records, 100, 100, 1);
  CHECK(skipped.windows.empty());
  CHECK(skipped.skipped_records == 1);

  // windows never span record boundaries
  const auto multi = generate_synthetic(small_spec(), 5);
  const WindowSet w = window_dataset(multi.records, 6, 10, 1);
  CHECK(w.windows.size() == multi.records.size());  // length 16 fits exactly once
  for (const auto& win : w.windows) {
    CHECK(win.history.frames == 6);
    CHECK(win.future.frames == 10);
  }
}

TEST_CASE("dataspec file round trip and validation") {
  const auto path = scratch_dir() / "spec.json";
  SyntheticSpec spec = small_spec();
  spec.save(path);
  const SyntheticSpec loaded = SyntheticSpec::load(path);
  CHECK(loaded.mode_count == spec.mode_count);
  CHECK(loaded.sequences == spec.sequences);
  CHECK(loaded.noise_scale == spec.noise_scale);

  SyntheticSpec bad = spec;
  bad.branch_frame = 20;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
  bad = spec;
  bad.skeleton_template = "nonsense";
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("deterministic split by group") {
  const auto data = generate_synthetic(small_spec(), 10);
  // 3 groups, test_fraction 0.34 -> 1 test group, the last one
  for (size_t r = 0; r < data.records.size(); ++r) {
    CHECK(data.is_test[r] == (data.group_of[r] == 2));
  }
}
