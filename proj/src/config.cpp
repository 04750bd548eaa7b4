#include "stars/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "stars/error.hpp"

namespace stars {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

int64_t parse_int(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    const int64_t v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
}

uint64_t parse_u64(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    const uint64_t v = std::stoull(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + value +
                      "'");
  }
}

double parse_double(const std::string& value, const std::string& key) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + value + "'");
}

std::vector<int64_t> parse_int_list(const std::string& value, const std::string& key) {
  std::vector<int64_t> out;
  std::string token;
  std::istringstream is(value);
  while (std::getline(is, token, ',')) {
    token = trim(token);
    if (!token.empty()) out.push_back(parse_int(token, key));
  }
  return out;
}

// groups separated by commas, members by spaces: "3 5 7, 4 6"
std::vector<std::vector<int64_t>> parse_groups(const std::string& value, const std::string& key) {
  std::vector<std::vector<int64_t>> out;
  std::string group;
  std::istringstream is(value);
  while (std::getline(is, group, ',')) {
    std::vector<int64_t> members;
    std::istringstream gs(group);
    std::string token;
    while (gs >> token) members.push_back(parse_int(token, key));
    if (!members.empty()) out.push_back(std::move(members));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_int_list(const std::vector<int64_t>& values) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out;
}

std::string format_groups(const std::vector<std::vector<int64_t>>& groups) {
  std::string out;
  for (size_t g = 0; g < groups.size(); ++g) {
    if (g) out += ", ";
    for (size_t i = 0; i < groups[g].size(); ++i) {
      if (i) out += " ";
      out += std::to_string(groups[g][i]);
    }
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int64_t line_no = 0;
  bool share_groups_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const std::string qualified = section + "." + key;

    if (qualified == "model.variant") {
      cfg.model.variant = variant_from_name(value);
    } else if (qualified == "model.channels") {
      cfg.model.channels = parse_int_list(value, qualified);
    } else if (qualified == "model.m_coeffs") {
      cfg.model.m_coeffs = parse_int(value, qualified);
    } else if (qualified == "model.t_history") {
      cfg.model.t_history = parse_int(value, qualified);
    } else if (qualified == "model.t_future") {
      cfg.model.t_future = parse_int(value, qualified);
    } else if (qualified == "model.joints") {
      cfg.model.joints = parse_int(value, qualified);
    } else if (qualified == "model.k_spatial") {
      cfg.model.k_spatial = parse_int(value, qualified);
    } else if (qualified == "model.k_temporal") {
      cfg.model.k_temporal = parse_int(value, qualified);
    } else if (qualified == "model.noise_dim") {
      cfg.model.noise_dim = parse_int(value, qualified);
    } else if (qualified == "model.anchor_layers") {
      cfg.model.anchor_layers = parse_int_list(value, qualified);
    } else if (qualified == "model.noise_layer") {
      cfg.model.noise_layer = parse_int(value, qualified);
    } else if (qualified == "model.prune_adjacencies") {
      cfg.model.prune_adjacencies = parse_int_list(value, qualified);
    } else if (qualified == "model.share_groups") {
      cfg.model.share_groups = parse_groups(value, qualified);
      share_groups_seen = true;
    } else if (qualified == "train.epochs") {
      cfg.train.epochs = parse_int(value, qualified);
    } else if (qualified == "train.batch_size") {
      cfg.train.batch_size = parse_int(value, qualified);
    } else if (qualified == "train.instances_per_epoch") {
      cfg.train.instances_per_epoch = parse_int(value, qualified);
    } else if (qualified == "train.base_lr") {
      cfg.train.base_lr = parse_double(value, qualified);
    } else if (qualified == "train.seed") {
      cfg.train.seed = parse_u64(value, qualified);
    } else if (qualified == "train.epsilon_mm") {
      cfg.train.epsilon_mm = parse_double(value, qualified);
    } else if (qualified == "train.tau_v") {
      cfg.train.tau_v = parse_double(value, qualified);
    } else if (qualified == "train.freeze_anchors") {
      cfg.train.freeze_anchors = parse_bool(value, qualified);
    } else if (qualified == "train.window_stride") {
      cfg.train.window_stride = parse_int(value, qualified);
    } else if (qualified == "loss.lambda_r") {
      cfg.train.weights.lambda_r = parse_double(value, qualified);
    } else if (qualified == "loss.lambda_mm") {
      cfg.train.weights.lambda_mm = parse_double(value, qualified);
    } else if (qualified == "loss.lambda_h") {
      cfg.train.weights.lambda_h = parse_double(value, qualified);
    } else if (qualified == "loss.lambda_d") {
      cfg.train.weights.lambda_d = parse_double(value, qualified);
    } else if (qualified == "loss.lambda_nf") {
      cfg.train.weights.lambda_nf = parse_double(value, qualified);
    } else if (qualified == "loss.lambda_l") {
      cfg.train.weights.lambda_l = parse_double(value, qualified);
    } else if (qualified == "loss.lambda_a") {
      cfg.train.weights.lambda_a = parse_double(value, qualified);
    } else if (qualified == "loss.alpha_div") {
      cfg.train.weights.alpha_div = parse_double(value, qualified);
    } else {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": unknown key '" + qualified +
                        "'");
    }
  }
  // an explicitly empty share list clears the default groups
  if (share_groups_seen && cfg.model.share_groups.empty()) cfg.model.share_groups.clear();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_run_config(buffer.str(), path.string());
}

std::string echo_run_config(const RunConfig& config) {
  std::ostringstream out;
  out << "[model]\n";
  out << "variant = " << variant_name(config.model.variant) << "\n";
  out << "channels = " << format_int_list(config.model.channels) << "\n";
  out << "m_coeffs = " << config.model.m_coeffs << "\n";
  out << "t_history = " << config.model.t_history << "\n";
  out << "t_future = " << config.model.t_future << "\n";
  out << "joints = " << config.model.joints << "\n";
  out << "k_spatial = " << config.model.k_spatial << "\n";
  out << "k_temporal = " << config.model.k_temporal << "\n";
  out << "noise_dim = " << config.model.noise_dim << "\n";
  out << "anchor_layers = " << format_int_list(config.model.anchor_layers) << "\n";
  out << "noise_layer = " << config.model.noise_layer << "\n";
  // the echo pins the resolved pruning so reruns cannot drift
  out << "prune_adjacencies = " << format_int_list(config.model.effective_prune()) << "\n";
  out << "share_groups = " << format_groups(config.model.share_groups) << "\n";
  out << "\n[train]\n";
  out << "epochs = " << config.train.epochs << "\n";
  out << "batch_size = " << config.train.batch_size << "\n";
  out << "instances_per_epoch = " << config.train.instances_per_epoch << "\n";
  out << "base_lr = " << format_double(config.train.base_lr) << "\n";
  out << "seed = " << config.train.seed << "\n";
  out << "epsilon_mm = " << format_double(config.train.epsilon_mm) << "\n";
  out << "tau_v = " << format_double(config.train.tau_v) << "\n";
  out << "freeze_anchors = " << (config.train.freeze_anchors ? "true" : "false") << "\n";
  out << "window_stride = " << config.train.window_stride << "\n";
  out << "\n[loss]\n";
  const LossWeights& w = config.train.weights;
  out << "lambda_r = " << format_double(w.lambda_r) << "\n";
  out << "lambda_mm = " << format_double(w.lambda_mm) << "\n";
  out << "lambda_h = " << format_double(w.lambda_h) << "\n";
  out << "lambda_d = " << format_double(w.lambda_d) << "\n";
  out << "lambda_nf = " << format_double(w.lambda_nf) << "\n";
  out << "lambda_l = " << format_double(w.lambda_l) << "\n";
  out << "lambda_a = " << format_double(w.lambda_a) << "\n";
  out << "alpha_div = " << format_double(w.alpha_div) << "\n";
  return out.str();
}

}  // namespace stars
