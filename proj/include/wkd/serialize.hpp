#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "wkd/tensor.hpp"

namespace wkd::tn {

// Versioned binary parameter file:
//   magic "WKDT" | u32 version | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rank | u64 dims[rank] |
//               f32 payload (IEEE-754, little-endian)
inline constexpr std::uint32_t kTensorFileVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

void save_tensors(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

}  // namespace wkd::tn
