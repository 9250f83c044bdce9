#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "place/hash.hpp"
#include "place/tensor.hpp"

namespace place {

// On disk: magic "PLCK", u16 version, 32-byte config hash, then named tensors
// until end of file, each as u32 name length, UTF-8 name, u32 rank, u64 dims,
// little-endian float64 payload.
struct Checkpoint {
  Digest config_hash{};
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace place
