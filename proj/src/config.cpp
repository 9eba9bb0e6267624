#include "neuroverb/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "neuroverb/errors.hpp"

namespace neuroverb {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long n = std::stoll(v, &used);
    if (used != v.size() || n < 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::size_t> to_list(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_size(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string num(double d) {
  std::ostringstream os;
  os.precision(17);
  os << d;
  return os.str();
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"frame_size", [](RunConfig& c, auto& k, auto& v) { c.model.frame_size = to_size(k, v); }},
      {"hop", [](RunConfig& c, auto& k, auto& v) { c.model.hop = to_size(k, v); }},
      {"context", [](RunConfig& c, auto& k, auto& v) { c.model.context = to_size(k, v); }},
      {"bands", [](RunConfig& c, auto& k, auto& v) { c.model.bands = to_size(k, v); }},
      {"conv_kernel", [](RunConfig& c, auto& k, auto& v) { c.model.conv_kernel = to_size(k, v); }},
      {"local_kernel", [](RunConfig& c, auto& k, auto& v) { c.model.local_kernel = to_size(k, v); }},
      {"pool", [](RunConfig& c, auto& k, auto& v) { c.model.pool = to_size(k, v); }},
      {"shared_lstm", [](RunConfig& c, auto& k, auto& v) { c.model.shared_lstm = to_list(k, v); }},
      {"branch_lstm", [](RunConfig& c, auto& k, auto& v) { c.model.branch_lstm = to_size(k, v); }},
      {"saaf_intervals", [](RunConfig& c, auto& k, auto& v) { c.model.saaf_intervals = to_size(k, v); }},
      {"sfir_units", [](RunConfig& c, auto& k, auto& v) { c.model.sfir_units = to_size(k, v); }},
      {"sfir_interval", [](RunConfig& c, auto& k, auto& v) { c.model.sfir_interval = to_size(k, v); }},
      {"dnn_saaf", [](RunConfig& c, auto& k, auto& v) { c.model.dnn_saaf = to_list(k, v); }},
      {"se_lstm", [](RunConfig& c, auto& k, auto& v) { c.model.se_lstm = to_list(k, v); }},
      {"dropout", [](RunConfig& c, auto& k, auto& v) { c.model.dropout = to_double(k, v); }},
      {"sample_rate",
       [](RunConfig& c, auto& k, auto& v) { c.model.sample_rate = static_cast<int>(to_size(k, v)); }},
      {"alpha_time", [](RunConfig& c, auto& k, auto& v) { c.loss.alpha_time = to_double(k, v); }},
      {"alpha_spec", [](RunConfig& c, auto& k, auto& v) { c.loss.alpha_spec = to_double(k, v); }},
      {"pre_emphasis", [](RunConfig& c, auto& k, auto& v) { c.loss.pre_emphasis = to_double(k, v); }},
      {"learning_rate", [](RunConfig& c, auto& k, auto& v) { c.train.learning_rate = to_double(k, v); }},
      {"finetune_factor",
       [](RunConfig& c, auto& k, auto& v) { c.train.finetune_factor = to_double(k, v); }},
      {"finetune", [](RunConfig& c, auto& k, auto& v) { c.train.finetune = to_bool(k, v); }},
      {"patience", [](RunConfig& c, auto& k, auto& v) { c.train.patience = to_size(k, v); }},
      {"max_epochs", [](RunConfig& c, auto& k, auto& v) { c.train.max_epochs = to_size(k, v); }},
      {"pretrain_max_epochs",
       [](RunConfig& c, auto& k, auto& v) { c.train.pretrain_max_epochs = to_size(k, v); }},
      {"lipschitz", [](RunConfig& c, auto& k, auto& v) { c.train.lipschitz = to_double(k, v); }},
      {"lipschitz_weight",
       [](RunConfig& c, auto& k, auto& v) { c.train.lipschitz_weight = to_double(k, v); }},
      {"val_frac", [](RunConfig& c, auto& k, auto& v) { c.train.val_frac = to_double(k, v); }},
      {"test_frac", [](RunConfig& c, auto& k, auto& v) { c.train.test_frac = to_double(k, v); }},
      {"normalize", [](RunConfig& c, auto& k, auto& v) { c.train.normalize = to_bool(k, v); }},
      {"fadeout_s", [](RunConfig& c, auto& k, auto& v) { c.train.fadeout_s = to_double(k, v); }},
      {"seed", [](RunConfig& c, auto& k, auto& v) { c.train.seed = to_size(k, v); }},
  };
  return table;
}

}  // namespace

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.frame_size = 512;
  c.hop = 256;
  c.bands = 8;
  c.conv_kernel = 16;
  c.local_kernel = 32;
  c.pool = 8;
  c.shared_lstm = {16, 8};
  c.branch_lstm = 4;
  // Two frames of filter tail.
  c.sfir_units = 512 / 8 * 2;
  c.dnn_saaf = {8, 4, 4, 8};
  c.se_lstm = {8, 64, 8};
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("model config: " + what); };
  if (frame_size == 0 || hop * 2 != frame_size) fail("frame_size must equal 2 * hop");
  if (pool == 0 || frame_size % pool != 0) fail("frame_size must be divisible by pool");
  if (bands == 0) fail("bands must be positive");
  if (conv_kernel == 0 || local_kernel == 0) fail("kernel sizes must be positive");
  if (sfir_interval == 0 || sample_rate <= 0 ||
      static_cast<std::size_t>(sample_rate) != 2000 * sfir_interval) {
    fail("sample_rate / sfir_interval must equal 2000 coefficients per second");
  }
  if (shared_lstm.empty()) fail("shared_lstm needs at least one layer");
  for (auto u : shared_lstm) {
    if (u == 0) fail("LSTM widths must be positive");
  }
  if (branch_lstm * 2 != bands) fail("branch_lstm must be bands / 2 (bidirectional output per band)");
  if (saaf_intervals == 0) fail("saaf_intervals must be positive");
  if (sfir_units == 0) fail("sfir_units must be positive");
  if (dnn_saaf.empty() || dnn_saaf.back() != bands) fail("last dnn_saaf width must equal bands");
  if (se_lstm.size() != 3 || se_lstm[2] != bands) fail("se_lstm must be {lstm, hidden, bands}");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "preset") {
      if (value == "full") {
        cfg.model = ModelConfig::full();
      } else if (value == "desk") {
        cfg.model = ModelConfig::desk();
      } else {
        throw ConfigError("unknown preset '" + value + "'");
      }
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown config key '" + key + "'");
    it->second(cfg, key, value);
  }
  cfg.model.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string format_model_config(const ModelConfig& m) {
  std::ostringstream os;
  os << "frame_size = " << m.frame_size << "\n"
     << "hop = " << m.hop << "\n"
     << "context = " << m.context << "\n"
     << "bands = " << m.bands << "\n"
     << "conv_kernel = " << m.conv_kernel << "\n"
     << "local_kernel = " << m.local_kernel << "\n"
     << "pool = " << m.pool << "\n"
     << "shared_lstm = " << join(m.shared_lstm) << "\n"
     << "branch_lstm = " << m.branch_lstm << "\n"
     << "saaf_intervals = " << m.saaf_intervals << "\n"
     << "sfir_units = " << m.sfir_units << "\n"
     << "sfir_interval = " << m.sfir_interval << "\n"
     << "dnn_saaf = " << join(m.dnn_saaf) << "\n"
     << "se_lstm = " << join(m.se_lstm) << "\n"
     << "dropout = " << num(m.dropout) << "\n"
     << "sample_rate = " << m.sample_rate << "\n";
  return os.str();
}

ModelConfig parse_model_config(const std::string& text) { return parse_config(text).model; }

std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  os << format_model_config(c.model);
  os << "alpha_time = " << num(c.loss.alpha_time) << "\n"
     << "alpha_spec = " << num(c.loss.alpha_spec) << "\n"
     << "pre_emphasis = " << num(c.loss.pre_emphasis) << "\n"
     << "learning_rate = " << num(c.train.learning_rate) << "\n"
     << "finetune_factor = " << num(c.train.finetune_factor) << "\n"
     << "finetune = " << (c.train.finetune ? "true" : "false") << "\n"
     << "patience = " << c.train.patience << "\n"
     << "max_epochs = " << c.train.max_epochs << "\n"
     << "pretrain_max_epochs = " << c.train.pretrain_max_epochs << "\n"
     << "lipschitz = " << num(c.train.lipschitz) << "\n"
     << "lipschitz_weight = " << num(c.train.lipschitz_weight) << "\n"
     << "val_frac = " << num(c.train.val_frac) << "\n"
     << "test_frac = " << num(c.train.test_frac) << "\n"
     << "normalize = " << (c.train.normalize ? "true" : "false") << "\n"
     << "fadeout_s = " << num(c.train.fadeout_s) << "\n"
     << "seed = " << c.train.seed << "\n";
  return os.str();
}

}  // namespace neuroverb
