#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "uma/tensor.hpp"

namespace uma {

using NamedTensors = std::map<std::string, Tensor>;

// Binary parameter file:
//   "UMA1"
//   repeated until EOF:
//     u32 name length, UTF-8 name bytes, u32 rank, rank x u32 dims,
//     prod(dims) x f64 values
// All integers and reals little-endian. Tensors are written in name order.

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::string& bytes);

}  // namespace uma
