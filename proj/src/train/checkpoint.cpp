#include "train/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "core/error.hpp"

namespace stnet {

namespace {

constexpr char kMagic[8] = {'S', 'T', 'N', 'E', 'T', 'C', 'K', 'P'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) data_error("truncated checkpoint " + path);
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string take_string(std::istream& in, const std::string& path) {
  uint64_t len = take<uint64_t>(in, path);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) data_error("truncated checkpoint " + path);
  return s;
}

void put_tensors(std::ostream& out, const std::vector<std::pair<std::string, Tensor<float>>>& ts) {
  put<uint32_t>(out, static_cast<uint32_t>(ts.size()));
  for (const auto& [name, t] : ts) {
    put_string(out, name);
    put<uint8_t>(out, static_cast<uint8_t>(t.ndim()));
    for (int d : t.shape) put<uint32_t>(out, static_cast<uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.ptr()),
              static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
  }
}

std::vector<std::pair<std::string, Tensor<float>>> take_tensors(std::istream& in,
                                                                const std::string& path) {
  uint32_t n = take<uint32_t>(in, path);
  std::vector<std::pair<std::string, Tensor<float>>> ts;
  ts.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    std::string name = take_string(in, path);
    uint8_t ndim = take<uint8_t>(in, path);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(take<uint32_t>(in, path));
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.ptr()),
            static_cast<std::streamsize>(sizeof(float) * static_cast<size_t>(t.numel())));
    if (!in) data_error("truncated checkpoint " + path);
    ts.emplace_back(std::move(name), std::move(t));
  }
  return ts;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) data_error("cannot write checkpoint " + path);
  out.write(kMagic, sizeof(kMagic));
  put<uint32_t>(out, kVersion);
  put_string(out, config_json);
  put<uint32_t>(out, epoch);
  put<uint64_t>(out, step);
  put<double>(out, best_val_f1);
  for (double v : stats.mean) put<double>(out, v);
  for (double v : stats.stddev) put<double>(out, v);
  put_string(out, rng_state);
  put_tensors(out, tensors);
  put<uint8_t>(out, has_optimizer ? 1 : 0);
  if (has_optimizer) {
    put<uint64_t>(out, adam_t);
    put_tensors(out, adam_m);
    put_tensors(out, adam_v);
  }
  if (!out) data_error("failed writing checkpoint " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) data_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    data_error(path + " is not a checkpoint file");
  uint32_t version = take<uint32_t>(in, path);
  if (version != kVersion)
    data_error(path + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config_json = take_string(in, path);
  ck.epoch = take<uint32_t>(in, path);
  ck.step = take<uint64_t>(in, path);
  ck.best_val_f1 = take<double>(in, path);
  for (double& v : ck.stats.mean) v = take<double>(in, path);
  for (double& v : ck.stats.stddev) v = take<double>(in, path);
  ck.rng_state = take_string(in, path);
  ck.tensors = take_tensors(in, path);
  ck.has_optimizer = take<uint8_t>(in, path) != 0;
  if (ck.has_optimizer) {
    ck.adam_t = take<uint64_t>(in, path);
    ck.adam_m = take_tensors(in, path);
    ck.adam_v = take_tensors(in, path);
  }
  return ck;
}

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

}  // namespace stnet
