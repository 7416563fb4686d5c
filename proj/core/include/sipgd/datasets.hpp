#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "sipgd/tensor.hpp"

namespace sipgd {

// Labeled inputs in [0,1]. Read-only after construction.
struct Dataset {
  Tensor inputs;            // [n, d] or [n, c, h, w]
  std::vector<int> labels;  // values in [0, num_classes)
  int num_classes = 0;
  std::string split;        // "train" / "test" / caller-defined
  std::string provenance;   // how the data was produced

  int size() const { return static_cast<int>(labels.size()); }
  Dataset slice(int begin, int count) const;
};

// Two interleaved half-circles in [0,1]^2, K = 2. Deterministic per seed.
Dataset gen_two_moons(int n, double noise_sd, uint64_t seed);

// K gaussian blobs on a circle in [0,1]^2. Deterministic per seed.
Dataset gen_gaussian_blobs(int n, int k, double sd, uint64_t seed);

// IDX container parsing errors, distinguished by kind.
class IdxError : public std::runtime_error {
 public:
  enum class Kind { BadMagic, Truncated, CountMismatch };
  IdxError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Loads an IDX image/label pair (unsigned-byte payloads). Pixels are scaled
// by 1/255 into [0,1]; images come out as [n, 1, h, w].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Writes tensors back out as IDX files (test fixtures, round-trips).
void save_idx_images(const std::string& path, const Tensor& images);
void save_idx_labels(const std::string& path, const std::vector<int>& labels);

// Parses a dataset descriptor:
//   moons:<n>:<noise>:<seed>
//   blobs:<n>:<k>:<sd>:<seed>
//   idx:<images_path>:<labels_path>
Dataset load_descriptor(const std::string& descriptor);

}  // namespace sipgd
