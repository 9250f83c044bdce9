#include "place/checkpoint.hpp"

#include <fstream>

#include "place/binary_io.hpp"
#include "place/errors.hpp"

namespace place {

namespace {
constexpr std::string_view kMagic = "PLCK";
constexpr std::uint16_t kVersion = 1;
}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint: missing tensor '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    io::put_bytes(os, kMagic);
    io::put<std::uint16_t>(os, kVersion);
    io::put_bytes(os, std::string_view(reinterpret_cast<const char*>(ckpt.config_hash.data()), 32));
    for (const auto& [name, t] : ckpt.tensors) {
      io::put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
      io::put_bytes(os, name);
      io::put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) io::put<std::uint64_t>(os, d);
      for (double v : t.data()) io::put<double>(os, v);
    }
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  io::expect_magic(is, kMagic, "checkpoint");
  if (io::get<std::uint16_t>(is) != kVersion) throw IoError("checkpoint: unsupported version");
  Checkpoint ckpt;
  const auto h = io::get_bytes(is, 32);
  std::copy(h.begin(), h.end(), ckpt.config_hash.begin());
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto name_len = io::get<std::uint32_t>(is);
    auto name = io::get_bytes(is, name_len);
    const auto rank = io::get<std::uint32_t>(is);
    if (rank == 0 || rank > 8) throw IoError("checkpoint: bad rank for '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = io::get<std::uint64_t>(is);
    std::vector<double> values(numel_of(shape));
    for (auto& v : values) v = io::get<double>(is);
    ckpt.tensors.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  return ckpt;
}

}  // namespace place
