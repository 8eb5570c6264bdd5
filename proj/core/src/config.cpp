#include "attnhtr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "attnhtr/error.hpp"

namespace attnhtr {

namespace {

// Registered keys and defaults. Empty strings mean "derive at run time".
const std::map<std::string, std::string>& registry() {
  static const std::map<std::string, std::string> keys = {
      {"train.learning_rate", "2e-4"},
      {"train.batch_size", "32"},
      {"train.dropout", "0.5"},
      {"train.label_smoothing", "0.1"},
      {"train.augment_probability", "0.5"},
      {"train.epochs", "100"},
      {"train.seed", ""},
      {"train.patience", "20"},
      {"train.clip_norm", "0"},
      {"train.checkpoint_dir", "checkpoints"},
      {"train.valid_every", "1"},
      {"train.lm_checkpoint", ""},
      {"train.target_cer", "-1"},

      {"augment.blur_sigma", "0,1.5"},
      {"augment.sharpen_amount", "0,1"},
      {"augment.elastic_cells_x", "4"},
      {"augment.elastic_cells_y", "4"},
      {"augment.elastic_magnitude", "0,2"},
      {"augment.shear_deg", "-15,15"},
      {"augment.rotation_deg", "-5,5"},
      {"augment.translate", "0,0.02"},
      {"augment.scale", "0.9,1.1"},
      {"augment.gamma", "0.5,2"},
      {"augment.background_blend", "0,0.2"},

      {"encoder.backbone", "small"},
      {"encoder.positional_mode", "recurrent"},
      {"encoder.feature_dim", "256"},
      {"encoder.recurrent_layers", "2"},
      {"encoder.input_height", "64"},
      {"encoder.batch_norm", "true"},
      {"encoder.dropout", ""},

      {"attention.kind", "location"},
      {"attention.attn_dim", "0"},
      {"attention.kernel", "11"},
      {"attention.filters", "8"},

      {"decoder.state_dim", "256"},
      {"decoder.layers", "2"},
      {"decoder.max_steps", "0"},
      {"decoder.unit_style", "proposed"},
      {"decoder.embedding_dim", "128"},
      {"decoder.dropout", ""},

      {"lm.embedding_dim", "64"},
      {"lm.state_dim", "256"},
      {"lm.layers", "2"},
      {"lm.epochs", "10"},
      {"lm.batch_size", "32"},
      {"lm.window", "32"},
      {"lm.learning_rate", "1e-3"},

      {"fusion.mode", "none"},
      {"fusion.shallow_weight", "0.3"},
      {"fusion.injection", "raw_batchnorm"},
      {"fusion.lm_trainable", ""},
      {"fusion.deep_hidden", "0"},
  };
  return keys;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::defaults() {
  Config c;
  c.values_ = registry();
  return c;
}

std::string Config::resolve(const std::string& key) const {
  if (registry().count(key) != 0) return key;
  // A top-level "attention" key selects the attention kind.
  if (key == "attention") return "attention.kind";
  std::string match;
  for (const auto& [full, unused] : registry()) {
    (void)unused;
    const auto dot = full.rfind('.');
    if (full.substr(dot + 1) == key) {
      require(match.empty(), ErrorCode::InvalidConfig,
              "ambiguous configuration key '" + key + "' (" + match + ", " + full + ")");
      match = full;
    }
  }
  require(!match.empty(), ErrorCode::InvalidConfig, "unknown configuration key '" + key + "'");
  return match;
}

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c = defaults();
  std::istringstream in(text);
  std::string line;
  std::string section;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      require(line.back() == ']', ErrorCode::InvalidConfig,
              origin + ":" + std::to_string(number) + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) eq = line.find(':');
    require(eq != std::string::npos, ErrorCode::InvalidConfig,
            origin + ":" + std::to_string(number) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    c.set(section.empty() ? key : section + "." + key, value);
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open config " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) { values_[resolve(key)] = value; }

std::vector<std::string> Config::apply_overrides(const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2) {
      rest.push_back(a);
      continue;
    }
    const std::string body = a.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      set(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    require(i + 1 < args.size(), ErrorCode::InvalidConfig, "missing value for --" + body);
    set(body, args[++i]);
  }
  return rest;
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Config::get(const std::string& key) const {
  const auto it = values_.find(resolve(key));
  if (it != values_.end()) return it->second;
  return registry().at(resolve(key));
}

int Config::get_int(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const int out = std::stoi(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidConfig, key + ": expected an integer, got '" + v + "'");
}

double Config::get_double(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidConfig, key + ": expected a number, got '" + v + "'");
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCode::InvalidConfig, key + ": expected a boolean, got '" + v + "'");
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string v = get(key);
  try {
    std::size_t used = 0;
    const unsigned long long out = std::stoull(v, &used);
    if (used == v.size() && v.front() != '-') return out;
  } catch (const std::exception&) {
  }
  fail(ErrorCode::InvalidConfig, key + ": expected an unsigned integer, got '" + v + "'");
}

std::pair<double, double> Config::get_range(const std::string& key) const {
  const std::string v = get(key);
  const auto comma = v.find(',');
  try {
    if (comma == std::string::npos) {
      const double x = std::stod(v);
      return {x, x};
    }
    return {std::stod(v.substr(0, comma)), std::stod(v.substr(comma + 1))};
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidConfig, key + ": expected 'lo,hi', got '" + v + "'");
  }
}

std::string Config::to_text() const {
  std::ostringstream out;
  std::string section;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    const std::string s = k.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << "\n";
      out << "[" << s << "]\n";
      section = s;
    }
    out << k.substr(dot + 1) << " = " << v << "\n";
  }
  return out.str();
}

std::uint64_t Config::seed() const {
  if (!get("train.seed").empty()) return get_u64("train.seed");
  if (const char* env = std::getenv("ATTNHTR_SEED"); env != nullptr && *env != '\0') {
    try {
      return std::stoull(env);
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidConfig, std::string("ATTNHTR_SEED is not an unsigned integer: ") + env);
    }
  }
  return 0;
}

}  // namespace attnhtr
