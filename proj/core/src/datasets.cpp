#include "sipgd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "sipgd/rng.hpp"

namespace sipgd {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IdxError(IdxError::Kind::Truncated, "truncated IDX header in " + path);
  return (static_cast<uint32_t>(b[0]) << 24) | (static_cast<uint32_t>(b[1]) << 16) |
         (static_cast<uint32_t>(b[2]) << 8) | static_cast<uint32_t>(b[3]);
}

void write_be32(std::ostream& out, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

// Reads an IDX file of unsigned bytes; returns dims + payload.
void read_idx(const std::string& path, std::vector<int>& dims, std::vector<unsigned char>& payload) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxError::Kind::Truncated, "cannot open IDX file " + path);
  unsigned char head[4];
  in.read(reinterpret_cast<char*>(head), 4);
  if (!in) throw IdxError(IdxError::Kind::Truncated, "truncated IDX header in " + path);
  if (head[0] != 0 || head[1] != 0) {
    throw IdxError(IdxError::Kind::BadMagic, "bad IDX magic in " + path);
  }
  if (head[2] != 0x08) {
    throw IdxError(IdxError::Kind::BadMagic, "unsupported IDX type byte in " + path +
                                                 " (only unsigned byte 0x08 is supported)");
  }
  int ndim = head[3];
  if (ndim < 1 || ndim > 4) {
    throw IdxError(IdxError::Kind::BadMagic, "unsupported IDX dimension count in " + path);
  }
  dims.clear();
  int64_t total = 1;
  for (int i = 0; i < ndim; ++i) {
    uint32_t d = read_be32(in, path);
    dims.push_back(static_cast<int>(d));
    total *= d;
  }
  payload.resize(static_cast<size_t>(total));
  in.read(reinterpret_cast<char*>(payload.data()), total);
  if (in.gcount() != total) {
    throw IdxError(IdxError::Kind::Truncated, "truncated IDX payload in " + path);
  }
}

}  // namespace

Dataset Dataset::slice(int begin, int count) const {
  if (begin < 0 || count <= 0 || begin + count > size()) {
    throw std::invalid_argument("dataset slice out of range");
  }
  Shape s = inputs.shape();
  int64_t stride = 1;
  for (size_t i = 1; i < s.size(); ++i) stride *= s[i];
  const auto& src = inputs.data();
  std::vector<double> data(src.begin() + begin * stride, src.begin() + (begin + count) * stride);
  Shape out_shape = s;
  out_shape[0] = count;
  Dataset out;
  out.inputs = Tensor::from(out_shape, std::move(data));
  out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  out.num_classes = num_classes;
  out.split = split;
  out.provenance = provenance + " [slice " + std::to_string(begin) + "+" + std::to_string(count) + "]";
  return out;
}

Dataset gen_two_moons(int n, double noise_sd, uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("gen_two_moons: n must be positive");
  Rng rng(seed);
  std::vector<double> data(static_cast<size_t>(n) * 2);
  std::vector<int> labels(static_cast<size_t>(n));
  // Nominal moon span (before noise): x in [-1, 2], y in [-0.5, 1].
  // A fixed affine map takes a padded box into [0,1]^2 so the geometry,
  // and with it the meaning of an epsilon in input units, never depends
  // on the sample.
  const double x_lo = -1.4, x_hi = 2.4, y_lo = -0.9, y_hi = 1.4;
  for (int i = 0; i < n; ++i) {
    int cls = i % 2;
    double t = rng.uniform(0.0, kPi);
    double px, py;
    if (cls == 0) {
      px = std::cos(t);
      py = std::sin(t);
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
    }
    px += noise_sd * rng.normal();
    py += noise_sd * rng.normal();
    data[static_cast<size_t>(i) * 2] = clamp01((px - x_lo) / (x_hi - x_lo));
    data[static_cast<size_t>(i) * 2 + 1] = clamp01((py - y_lo) / (y_hi - y_lo));
    labels[static_cast<size_t>(i)] = cls;
  }
  Dataset out;
  out.inputs = Tensor::from({n, 2}, std::move(data));
  out.labels = std::move(labels);
  out.num_classes = 2;
  out.provenance = "moons:" + std::to_string(n) + " noise=" + std::to_string(noise_sd) +
                   " seed=" + std::to_string(seed);
  return out;
}

Dataset gen_gaussian_blobs(int n, int k, double sd, uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("gen_gaussian_blobs: n must be positive");
  if (k < 2) throw std::invalid_argument("gen_gaussian_blobs: k must be >= 2");
  Rng rng(seed);
  std::vector<double> data(static_cast<size_t>(n) * 2);
  std::vector<int> labels(static_cast<size_t>(n));
  const double radius = 0.35;
  for (int i = 0; i < n; ++i) {
    int cls = i % k;
    double a = 2.0 * kPi * cls / k;
    double px = 0.5 + radius * std::cos(a) + sd * rng.normal();
    double py = 0.5 + radius * std::sin(a) + sd * rng.normal();
    data[static_cast<size_t>(i) * 2] = clamp01(px);
    data[static_cast<size_t>(i) * 2 + 1] = clamp01(py);
    labels[static_cast<size_t>(i)] = cls;
  }
  Dataset out;
  out.inputs = Tensor::from({n, 2}, std::move(data));
  out.labels = std::move(labels);
  out.num_classes = k;
  out.provenance = "blobs:" + std::to_string(n) + " k=" + std::to_string(k) +
                   " sd=" + std::to_string(sd) + " seed=" + std::to_string(seed);
  return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::vector<int> img_dims, lbl_dims;
  std::vector<unsigned char> img_bytes, lbl_bytes;
  read_idx(images_path, img_dims, img_bytes);
  read_idx(labels_path, lbl_dims, lbl_bytes);

  if (img_dims.size() != 3) {
    throw IdxError(IdxError::Kind::BadMagic, "expected 3-D image IDX (count,h,w) in " + images_path);
  }
  if (lbl_dims.size() != 1) {
    throw IdxError(IdxError::Kind::BadMagic, "expected 1-D label IDX in " + labels_path);
  }
  if (img_dims[0] != lbl_dims[0]) {
    throw IdxError(IdxError::Kind::CountMismatch,
                   "image count " + std::to_string(img_dims[0]) + " != label count " +
                       std::to_string(lbl_dims[0]));
  }
  int n = img_dims[0], h = img_dims[1], w = img_dims[2];
  std::vector<double> data(img_bytes.size());
  for (size_t i = 0; i < img_bytes.size(); ++i) data[i] = img_bytes[i] / 255.0;
  std::vector<int> labels(lbl_bytes.begin(), lbl_bytes.end());
  int k = 0;
  for (int y : labels) k = std::max(k, y + 1);
  Dataset out;
  out.inputs = Tensor::from({n, 1, h, w}, std::move(data));
  out.labels = std::move(labels);
  out.num_classes = std::max(k, 2);
  out.provenance = "idx:" + images_path + "," + labels_path;
  return out;
}

void save_idx_images(const std::string& path, const Tensor& images) {
  if (images.ndim() != 4 || images.dim(1) != 1) {
    throw std::invalid_argument("save_idx_images expects [n,1,h,w] images");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  unsigned char head[4] = {0, 0, 0x08, 3};
  out.write(reinterpret_cast<char*>(head), 4);
  write_be32(out, static_cast<uint32_t>(images.dim(0)));
  write_be32(out, static_cast<uint32_t>(images.dim(2)));
  write_be32(out, static_cast<uint32_t>(images.dim(3)));
  for (double v : images.data()) {
    double scaled = std::round(clamp01(v) * 255.0);
    unsigned char b = static_cast<unsigned char>(scaled);
    out.write(reinterpret_cast<char*>(&b), 1);
  }
}

void save_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  unsigned char head[4] = {0, 0, 0x08, 1};
  out.write(reinterpret_cast<char*>(head), 4);
  write_be32(out, static_cast<uint32_t>(labels.size()));
  for (int y : labels) {
    unsigned char b = static_cast<unsigned char>(y);
    out.write(reinterpret_cast<char*>(&b), 1);
  }
}

Dataset load_descriptor(const std::string& descriptor) {
  std::vector<std::string> parts;
  std::stringstream ss(descriptor);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(item);
  if (parts.empty()) throw std::invalid_argument("empty dataset descriptor");
  const std::string& kind = parts[0];
  try {
    if (kind == "moons") {
      if (parts.size() != 4) throw std::invalid_argument("");
      return gen_two_moons(std::stoi(parts[1]), std::stod(parts[2]), std::stoull(parts[3]));
    }
    if (kind == "blobs") {
      if (parts.size() != 5) throw std::invalid_argument("");
      return gen_gaussian_blobs(std::stoi(parts[1]), std::stoi(parts[2]), std::stod(parts[3]),
                                std::stoull(parts[4]));
    }
    if (kind == "idx") {
      if (parts.size() != 3) throw std::invalid_argument("");
      return load_idx(parts[1], parts[2]);
    }
  } catch (const std::invalid_argument&) {
    throw std::invalid_argument(
        "malformed dataset descriptor '" + descriptor +
        "' (expected moons:<n>:<noise>:<seed>, blobs:<n>:<k>:<sd>:<seed>, or idx:<images>:<labels>)");
  }
  throw std::invalid_argument("unknown dataset kind '" + kind + "' in descriptor");
}

}  // namespace sipgd
