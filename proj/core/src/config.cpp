#include "sipgd/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sipgd {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text) {
  ConfigFile cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": unterminated section");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty section name");
      }
      cfg.sections[section];
      continue;
    }
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    cfg.sections[section][key] = value;
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

std::string ConfigFile::get(const std::string& section, const std::string& key,
                            const std::string& fallback) const {
  auto s = sections.find(section);
  if (s == sections.end()) return fallback;
  auto k = s->second.find(key);
  return k == s->second.end() ? fallback : k->second;
}

std::string ConfigFile::require(const std::string& section, const std::string& key) const {
  if (!has(section, key)) {
    throw std::invalid_argument("config: missing required key [" + section + "] " + key);
  }
  return get(section, key, "");
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  return std::stod(get(section, key, ""));
}

int ConfigFile::get_int(const std::string& section, const std::string& key, int fallback) const {
  if (!has(section, key)) return fallback;
  return std::stoi(get(section, key, ""));
}

uint64_t ConfigFile::get_u64(const std::string& section, const std::string& key,
                             uint64_t fallback) const {
  if (!has(section, key)) return fallback;
  return std::stoull(get(section, key, ""));
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string v = get(section, key, "");
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: bad boolean '" + v + "' for [" + section + "] " + key);
}

std::vector<double> ConfigFile::get_doubles(const std::string& section, const std::string& key,
                                            const std::vector<double>& fallback) const {
  if (!has(section, key)) return fallback;
  std::istringstream is(get(section, key, ""));
  std::vector<double> out;
  double v;
  while (is >> v) out.push_back(v);
  return out;
}

std::vector<int> ConfigFile::get_ints(const std::string& section, const std::string& key,
                                      const std::vector<int>& fallback) const {
  if (!has(section, key)) return fallback;
  std::istringstream is(get(section, key, ""));
  std::vector<int> out;
  int v;
  while (is >> v) out.push_back(v);
  return out;
}

std::string ConfigFile::canonical() const {
  std::ostringstream os;
  for (const auto& [sec, kv] : sections) {
    os << "[" << sec << "]\n";
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
  }
  return os.str();
}

std::string hash_string(const std::string& text) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_hash(const ConfigFile& cfg) { return hash_string(cfg.canonical()); }

TrainSpec parse_train_spec(const ConfigFile& cfg) {
  TrainSpec spec;
  spec.hash = config_hash(cfg);
  spec.train_data = cfg.get("dataset", "train", "moons:500:0.1:7");
  spec.test_data = cfg.get("dataset", "test", "");
  spec.arch = cfg.get("model", "arch", spec.arch);

  DefenseConfig& d = spec.defense;
  d.method = parse_defense_method(cfg.get("defense", "method", "at"));
  d.si = cfg.get_bool("defense", "si", false);
  d.beta = cfg.get_double("defense", "beta", d.beta);
  double lambda_default = d.method == DefenseMethod::ALP ? 3.0 : 6.0;
  d.lambda = cfg.get_double("defense", "lambda", lambda_default);
  d.alpha_alp = cfg.get_double("defense", "alpha", d.alpha_alp);
  d.s = cfg.get_double("defense", "s", d.s);
  d.m = cfg.get_double("defense", "m", d.m);

  d.inner_attack.epsilon = cfg.get_double("inner_attack", "eps", d.inner_attack.epsilon);
  d.inner_attack.eta = cfg.get_double("inner_attack", "eta", d.inner_attack.epsilon / 4.0);
  d.inner_attack.steps = cfg.get_int("inner_attack", "steps", 10);
  d.inner_attack.restarts = cfg.get_int("inner_attack", "restarts", 1);
  d.inner_attack.clip_init = cfg.get_bool("inner_attack", "clip_init", true);

  d.optimizer.lr = cfg.get_double("optimizer", "lr", d.optimizer.lr);
  d.optimizer.momentum = cfg.get_double("optimizer", "momentum", d.optimizer.momentum);
  d.optimizer.weight_decay = cfg.get_double("optimizer", "weight_decay", d.optimizer.weight_decay);
  d.optimizer.epochs = cfg.get_int("optimizer", "epochs", d.optimizer.epochs);
  d.optimizer.milestones = cfg.get_ints("optimizer", "milestones", d.optimizer.milestones);
  d.optimizer.batch_size = cfg.get_int("optimizer", "batch_size", d.optimizer.batch_size);

  d.seed = cfg.get_u64("run", "seed", d.seed);
  d.inner_attack.seed = cfg.get_u64("run", "attack_seed", d.seed * 31 + 1);
  d.probe_size = cfg.get_int("run", "probe_size", d.probe_size);
  d.probe_enabled = cfg.get_bool("run", "probe", true);
  return spec;
}

}  // namespace sipgd
