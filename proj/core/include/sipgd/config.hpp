#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sipgd/defenses.hpp"

namespace sipgd {

// Flat INI-style configuration:
//   - '#' or ';' starts a comment (whole line)
//   - [section] headers
//   - key = value entries within a section; values keep internal spaces
//   - list values are whitespace-separated
struct ConfigFile {
  std::map<std::string, std::map<std::string, std::string>> sections;

  static ConfigFile parse(const std::string& text);
  static ConfigFile load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  std::string get(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  std::string require(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  uint64_t get_u64(const std::string& section, const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<int> get_ints(const std::string& section, const std::string& key,
                            const std::vector<int>& fallback) const;

  // Canonical serialization (sorted sections/keys) used for hashing.
  std::string canonical() const;
};

// FNV-1a 64-bit over the canonical form, as a fixed-width hex string.
std::string config_hash(const ConfigFile& cfg);
std::string hash_string(const std::string& text);

// A full training run description assembled from a config file.
struct TrainSpec {
  std::string train_data;  // dataset descriptor
  std::string test_data;   // probe/eval descriptor ("" = derive from train)
  std::string arch = "mlp 2 128 128 2";
  DefenseConfig defense;
  std::string hash;  // config hash of the source file
};

TrainSpec parse_train_spec(const ConfigFile& cfg);

}  // namespace sipgd
