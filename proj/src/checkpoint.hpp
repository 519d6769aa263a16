#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace moaecr {

// Flat ordered parameter container. Layout (little endian):
//   magic "MOAECKPT", u32 version = 1,
//   u64 config length, config bytes,
//   u64 array count, then per array:
//     u64 name length, name bytes,
//     u32 rank, i64 dims..., f64 values...
// Doubles are stored verbatim, so round trips are bit exact.
struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  std::string config_text;
  std::vector<NamedArray> arrays;
};

void save_checkpoint(
    const std::string& path, const std::string& config_text,
    const std::vector<std::pair<std::string, Tensor>>& params);

Checkpoint load_checkpoint(const std::string& path);

// Copies values into matching parameters; names and shapes must line up
// one to one, in order.
void load_into(const Checkpoint& ckpt,
               const std::vector<std::pair<std::string, Tensor>>& params);

}  // namespace moaecr
