#include "iet/config.hpp"

#include <algorithm>
#include <sstream>
#include <vector>

namespace iet::net {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int32_t to_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const int32_t r = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (...) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int32_t> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int32_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int(key, trim(item)));
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_kv(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key=value, got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) +
                                       ": empty key");
    kv[key] = val;  // later lines override earlier ones
  }
  return kv;
}

ModelConfig config_from_kv_text(const std::string& text) {
  ModelConfig c;
  std::vector<int32_t> k1, k2, expand_flags;
  for (const auto& [key, val] : parse_kv(text)) {
    if (key == "blocks") c.blocks = to_int(key, val);
    else if (key == "layers") c.layers_per_block = to_int(key, val);
    else if (key == "heads") c.heads = to_int(key, val);
    else if (key == "channels") c.channels = to_int(key, val);
    else if (key == "scale") c.scale = to_int(key, val);
    else if (key == "window") c.window = to_int(key, val);
    else if (key == "dilation_train") c.dilation_train = to_int(key, val);
    else if (key == "dilation_infer") c.dilation_infer = to_int(key, val);
    else if (key == "ffn_ratio") c.ffn_ratio = to_int(key, val);
    else if (key == "reset_candidates")
      c.reset_candidates_between_blocks = to_bool(key, val);
    else if (key == "rho") c.schedule.keep_fraction = to_double(key, val);
    else if (key == "k_min") c.schedule.k_min = to_int(key, val);
    else if (key == "k_out_max") c.schedule.k_out_max = to_int(key, val);
    else if (key == "expand") expand_flags = to_int_list(key, val);
    else if (key == "k1") k1 = to_int_list(key, val);
    else if (key == "k2") k2 = to_int_list(key, val);
    else if (key == "lr") c.lr = to_double(key, val);
    else if (key == "beta1") c.beta1 = to_double(key, val);
    else if (key == "beta2") c.beta2 = to_double(key, val);
    else if (key == "adam_eps") c.adam_eps = to_double(key, val);
    else if (key == "warmup") c.warmup_steps = to_int(key, val);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
  if (!expand_flags.empty() || !k1.empty() || !k2.empty()) {
    if (expand_flags.empty() || k1.size() != expand_flags.size() ||
        k2.size() != expand_flags.size())
      throw ConfigError("config: expand/k1/k2 lists must have equal length");
    c.schedule.expand_in_block.assign(expand_flags.begin(), expand_flags.end());
    c.schedule.k1 = k1;
    c.schedule.k2 = k2;
  }
  c.finalize();
  return c;
}

}  // namespace iet::net
