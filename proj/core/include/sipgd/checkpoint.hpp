#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sipgd/network.hpp"

namespace sipgd {

// Serialized model state. Binary layout (all integers little-endian):
//   bytes 0..7   magic "SIPGDCKP"
//   u32          format version (1)
//   u32          epoch
//   u64          rng seed recorded at save time
//   str          architecture descriptor      (u32 length + bytes)
//   str          config hash                  (u32 length + bytes)
//   u64          parameter count
//   f64[count]   parameters, IEEE-754 little-endian, in Network::parameters() order
struct Checkpoint {
  std::string arch;
  std::vector<double> params;
  uint32_t epoch = 0;
  uint64_t seed = 0;
  std::string config_hash;

  static Checkpoint from_network(const Network& net, uint32_t epoch, uint64_t seed,
                                 const std::string& config_hash);
  Network to_network() const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace sipgd
