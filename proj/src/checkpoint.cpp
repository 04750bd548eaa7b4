#include "stars/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "stars/error.hpp"

namespace stars {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'T', 'A', 'R', 'S', 'C', 'P', '1'};
constexpr int64_t kFormatVersion = 1;

void write_u64_le(std::ostream& out, uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

uint64_t read_u64_le(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void write_doubles_le(std::ostream& out, const std::vector<double>& values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double d : values) {
      uint64_t bits;
      std::memcpy(&bits, &d, 8);
      write_u64_le(out, bits);
    }
  }
}

std::vector<double> read_doubles_le(std::istream& in, size_t count) {
  std::vector<double> values(count);
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
  } else {
    for (size_t i = 0; i < count; ++i) {
      const uint64_t bits = read_u64_le(in);
      std::memcpy(&values[i], &bits, 8);
    }
  }
  return values;
}

json skeleton_to_json(const Skeleton& s) {
  json j;
  j["joints"] = s.joint_names;
  json bones = json::array();
  for (auto [a, b] : s.bone_edges) bones.push_back({a, b});
  j["bones"] = std::move(bones);
  json mirrors = json::array();
  for (auto [a, b] : s.mirror_pairs) mirrors.push_back({a, b});
  j["mirrors"] = std::move(mirrors);
  return j;
}

Skeleton skeleton_from_json(const json& j) {
  Skeleton s;
  s.joint_names = j.at("joints").get<std::vector<std::string>>();
  for (const auto& e : j.at("bones")) {
    s.bone_edges.emplace_back(e.at(0).get<int64_t>(), e.at(1).get<int64_t>());
  }
  for (const auto& e : j.at("mirrors")) {
    s.mirror_pairs.emplace_back(e.at(0).get<int64_t>(), e.at(1).get<int64_t>());
  }
  return s;
}

json config_to_json(const ModelConfig& c) {
  json j;
  j["variant"] = variant_name(c.variant);
  j["channels"] = c.channels;
  j["m_coeffs"] = c.m_coeffs;
  j["t_history"] = c.t_history;
  j["t_future"] = c.t_future;
  j["joints"] = c.joints;
  j["k_spatial"] = c.k_spatial;
  j["k_temporal"] = c.k_temporal;
  j["noise_dim"] = c.noise_dim;
  j["anchor_layers"] = c.anchor_layers;
  j["noise_layer"] = c.noise_layer;
  j["prune_adjacencies"] = c.prune_adjacencies;
  j["share_groups"] = c.share_groups;
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.variant = variant_from_name(j.at("variant").get<std::string>());
  c.channels = j.at("channels").get<std::vector<int64_t>>();
  c.m_coeffs = j.at("m_coeffs").get<int64_t>();
  c.t_history = j.at("t_history").get<int64_t>();
  c.t_future = j.at("t_future").get<int64_t>();
  c.joints = j.at("joints").get<int64_t>();
  c.k_spatial = j.at("k_spatial").get<int64_t>();
  c.k_temporal = j.at("k_temporal").get<int64_t>();
  c.noise_dim = j.at("noise_dim").get<int64_t>();
  c.anchor_layers = j.at("anchor_layers").get<std::vector<int64_t>>();
  c.noise_layer = j.at("noise_layer").get<int64_t>();
  c.prune_adjacencies = j.at("prune_adjacencies").get<std::vector<int64_t>>();
  c.share_groups = j.at("share_groups").get<std::vector<std::vector<int64_t>>>();
  return c;
}

}  // namespace

void save_checkpoint(const Model& model, const TrainProgress& progress,
                     const std::filesystem::path& path) {
  json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["model"] = config_to_json(model.config());
  manifest["model"]["skeleton"] = skeleton_to_json(model.skeleton());
  manifest["progress"] = {{"epoch", progress.epoch},
                          {"adam",
                           {{"beta1", progress.adam.beta1},
                            {"beta2", progress.adam.beta2},
                            {"epsilon", progress.adam.epsilon},
                            {"step", progress.adam.step}}},
                          {"rng_data", progress.rng_data},
                          {"rng_noise", progress.rng_noise}};

  // array directory in a fixed order: params, adam moments, bn stats
  json arrays = json::array();
  std::vector<const std::vector<double>*> blobs;
  uint64_t offset = 0;
  auto add_array = [&](const std::string& name, const std::string& kind, const Shape& shape,
                       const std::vector<double>& values) {
    arrays.push_back({{"name", name},
                      {"kind", kind},
                      {"shape", shape},
                      {"offset", offset},
                      {"count", values.size()}});
    blobs.push_back(&values);
    offset += values.size() * sizeof(double);
  };
  for (const auto& [name, p] : model.params()) add_array(name, "param", p.shape, p.values);
  for (const auto& [name, m] : progress.adam.m) {
    add_array(name, "adam_m", {static_cast<int64_t>(m.size())}, m);
  }
  for (const auto& [name, v] : progress.adam.v) {
    add_array(name, "adam_v", {static_cast<int64_t>(v.size())}, v);
  }
  for (size_t l = 0; l < model.bn_stats().size(); ++l) {
    const auto& s = model.bn_stats()[l];
    add_array("bn." + std::to_string(l + 1), "bn_mean",
              {static_cast<int64_t>(s.mean.size())}, s.mean);
    add_array("bn." + std::to_string(l + 1), "bn_var", {static_cast<int64_t>(s.var.size())},
              s.var);
  }
  manifest["arrays"] = std::move(arrays);

  const std::string manifest_text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u64_le(out, manifest_text.size());
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (const auto* blob : blobs) write_doubles_le(out, *blob);
  if (!out) throw ParseError("checkpoint: write failed for " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("checkpoint " + path.string() + ": bad magic, not a checkpoint file");
  }
  const uint64_t manifest_len = read_u64_le(in);
  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) throw ParseError("checkpoint " + path.string() + ": truncated manifest");

  json manifest;
  try {
    manifest = json::parse(manifest_text);
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }

  LoadedCheckpoint loaded;
  try {
    const int64_t version = manifest.at("format_version").get<int64_t>();
    if (version != kFormatVersion) {
      throw ParseError("checkpoint " + path.string() + ": format_version " +
                       std::to_string(version) + " incompatible with supported version " +
                       std::to_string(kFormatVersion));
    }
    loaded.config = config_from_json(manifest.at("model"));
    loaded.skeleton = skeleton_from_json(manifest.at("model").at("skeleton"));
    const auto& progress = manifest.at("progress");
    loaded.progress.epoch = progress.at("epoch").get<int64_t>();
    loaded.progress.adam.beta1 = progress.at("adam").at("beta1").get<double>();
    loaded.progress.adam.beta2 = progress.at("adam").at("beta2").get<double>();
    loaded.progress.adam.epsilon = progress.at("adam").at("epsilon").get<double>();
    loaded.progress.adam.step = progress.at("adam").at("step").get<int64_t>();
    loaded.progress.rng_data = progress.at("rng_data").get<std::string>();
    loaded.progress.rng_noise = progress.at("rng_noise").get<std::string>();

    for (const auto& entry : manifest.at("arrays")) {
      const std::string name = entry.at("name").get<std::string>();
      const std::string kind = entry.at("kind").get<std::string>();
      const size_t count = entry.at("count").get<size_t>();
      std::vector<double> values = read_doubles_le(in, count);
      if (!in) {
        throw ParseError("checkpoint " + path.string() + ": truncated array '" + name + "'");
      }
      if (kind == "param") {
        loaded.params[name] = {entry.at("shape").get<Shape>(), std::move(values)};
      } else if (kind == "adam_m") {
        loaded.progress.adam.m[name] = std::move(values);
      } else if (kind == "adam_v") {
        loaded.progress.adam.v[name] = std::move(values);
      } else if (kind == "bn_mean" || kind == "bn_var") {
        const size_t layer = std::stoul(name.substr(3));
        if (loaded.bn_stats.size() < layer) loaded.bn_stats.resize(layer);
        auto& site = loaded.bn_stats[layer - 1];
        (kind == "bn_mean" ? site.mean : site.var) = std::move(values);
      } else {
        throw ParseError("checkpoint " + path.string() + ": unknown array kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path.string() + ": " + e.what());
  }
  return loaded;
}

Model model_from_checkpoint(const LoadedCheckpoint& loaded) {
  Model model(loaded.config, loaded.skeleton, /*init_seed=*/0);
  model.restore(loaded.params, loaded.bn_stats);
  return model;
}

}  // namespace stars
