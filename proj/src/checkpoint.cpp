#include "checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "errors.hpp"

namespace moaecr {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'A', 'E', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T read_pod(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw DataError(path + ": truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(
    const std::string& path, const std::string& config_text,
    const std::vector<std::pair<std::string, Tensor>>& params) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot open " + tmp + " for writing");
    f.write(kMagic, sizeof kMagic);
    write_pod(f, kVersion);
    write_pod(f, static_cast<uint64_t>(config_text.size()));
    f.write(config_text.data(),
            static_cast<std::streamsize>(config_text.size()));
    write_pod(f, static_cast<uint64_t>(params.size()));
    for (const auto& [name, tensor] : params) {
      write_pod(f, static_cast<uint64_t>(name.size()));
      f.write(name.data(), static_cast<std::streamsize>(name.size()));
      write_pod(f, static_cast<uint32_t>(tensor.rank()));
      for (int64_t dim : tensor.shape()) write_pod(f, dim);
      const auto data = tensor.data();
      f.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!f.good()) throw DataError("write to " + tmp + " failed");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot move " + tmp + " to " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open " + path);
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw DataError(path + ": not a parameter container");
  }
  const auto version = read_pod<uint32_t>(f, path);
  if (version != kVersion) {
    throw DataError(path + ": unsupported container version " +
                    std::to_string(version));
  }
  Checkpoint ckpt;
  const auto config_len = read_pod<uint64_t>(f, path);
  ckpt.config_text.resize(config_len);
  f.read(ckpt.config_text.data(), static_cast<std::streamsize>(config_len));
  if (!f) throw DataError(path + ": truncated checkpoint");

  const auto count = read_pod<uint64_t>(f, path);
  for (uint64_t i = 0; i < count; ++i) {
    NamedArray arr;
    const auto name_len = read_pod<uint64_t>(f, path);
    arr.name.resize(name_len);
    f.read(arr.name.data(), static_cast<std::streamsize>(name_len));
    const auto rank = read_pod<uint32_t>(f, path);
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      const auto dim = read_pod<int64_t>(f, path);
      if (dim < 0) throw DataError(path + ": negative dimension");
      arr.shape.push_back(dim);
      numel *= dim;
    }
    arr.values.resize(static_cast<size_t>(numel));
    f.read(reinterpret_cast<char*>(arr.values.data()),
           static_cast<std::streamsize>(arr.values.size() * sizeof(double)));
    if (!f) throw DataError(path + ": truncated checkpoint");
    ckpt.arrays.push_back(std::move(arr));
  }
  return ckpt;
}

void load_into(const Checkpoint& ckpt,
               const std::vector<std::pair<std::string, Tensor>>& params) {
  if (ckpt.arrays.size() != params.size()) {
    throw DataError("checkpoint has " + std::to_string(ckpt.arrays.size()) +
                    " arrays, model expects " + std::to_string(params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    const NamedArray& arr = ckpt.arrays[i];
    const auto& [name, tensor] = params[i];
    if (arr.name != name) {
      throw DataError("checkpoint array '" + arr.name + "' where '" + name +
                      "' was expected");
    }
    if (arr.shape != tensor.shape()) {
      throw DataError("checkpoint array '" + arr.name + "' has shape " +
                      shape_str(arr.shape) + ", expected " +
                      shape_str(tensor.shape()));
    }
    Tensor handle = tensor;  // shares the node; parameters stay mutable
    auto dst = handle.data_mut();
    std::copy(arr.values.begin(), arr.values.end(), dst.begin());
  }
}

}  // namespace moaecr
