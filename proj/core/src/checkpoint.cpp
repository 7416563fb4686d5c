#include "sipgd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sipgd {

namespace {

constexpr char kMagic[8] = {'S', 'I', 'P', 'G', 'D', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<char*>(b), 8);
}

void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

std::string get_str(std::istream& in, const std::string& path) {
  uint32_t n = get_u32(in, path);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("truncated checkpoint " + path);
  return s;
}

}  // namespace

Checkpoint Checkpoint::from_network(const Network& net, uint32_t epoch, uint64_t seed,
                                    const std::string& config_hash) {
  Checkpoint ck;
  ck.arch = net.arch();
  ck.epoch = epoch;
  ck.seed = seed;
  ck.config_hash = config_hash;
  for (const Tensor& p : net.parameters()) {
    const auto& d = p.data();
    ck.params.insert(ck.params.end(), d.begin(), d.end());
  }
  return ck;
}

Network Checkpoint::to_network() const {
  Network net = Network::init(arch, 0);
  std::vector<Tensor> tensors;
  size_t at = 0;
  for (const Tensor& p : net.parameters()) {
    size_t n = static_cast<size_t>(p.size());
    if (at + n > params.size()) throw std::runtime_error("checkpoint parameter block too short");
    tensors.push_back(Tensor::from(p.shape(), std::vector<double>(params.begin() + at,
                                                                  params.begin() + at + n)));
    at += n;
  }
  if (at != params.size()) throw std::runtime_error("checkpoint parameter block too long");
  return net.with_parameters(tensors);
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(kMagic, 8);
  put_u32(out, kVersion);
  put_u32(out, epoch);
  put_u64(out, seed);
  put_str(out, arch);
  put_str(out, config_hash);
  put_u64(out, static_cast<uint64_t>(params.size()));
  for (double v : params) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  }
  if (!out) throw std::runtime_error("write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("bad checkpoint magic in " + path);
  }
  uint32_t version = get_u32(in, path);
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.epoch = get_u32(in, path);
  ck.seed = get_u64(in, path);
  ck.arch = get_str(in, path);
  ck.config_hash = get_str(in, path);
  uint64_t count = get_u64(in, path);
  ck.params.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    uint64_t bits = get_u64(in, path);
    double v;
    std::memcpy(&v, &bits, 8);
    ck.params[i] = v;
  }
  return ck;
}

}  // namespace sipgd
