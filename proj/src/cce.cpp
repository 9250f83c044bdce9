#include "place/cce.hpp"

#include <fstream>

#include "place/binary_io.hpp"
#include "place/errors.hpp"

namespace place {

PatchGrid split_patches(const Tensor& pixels, std::size_t patch_size) {
  if (pixels.rank() != 2 || pixels.dim(0) != pixels.dim(1)) {
    throw DimensionError("split_patches: image must be square, got " + shape_str(pixels.shape()));
  }
  const std::size_t side = pixels.dim(0);
  if (patch_size == 0 || side % patch_size != 0) {
    throw ConfigError("split_patches: image side " + std::to_string(side) +
                      " not divisible by patch size " + std::to_string(patch_size));
  }
  const std::size_t g = side / patch_size;
  const std::size_t nc = patch_size * patch_size;
  const auto px = pixels.data();
  std::vector<double> out(g * g * nc);
  for (std::size_t p = 0; p < g * g; ++p) {
    const std::size_t r0 = (p / g) * patch_size, c0 = (p % g) * patch_size;
    for (std::size_t r = 0; r < patch_size; ++r)
      for (std::size_t c = 0; c < patch_size; ++c)
        out[p * nc + r * patch_size + c] = px[(r0 + r) * side + c0 + c];
  }
  return {Tensor::from({g * g, nc}, std::move(out)), patch_size, g};
}

Tensor assemble_patches(const PatchGrid& grid) {
  const std::size_t ps = grid.patch_size, g = grid.grid, side = ps * g, nc = ps * ps;
  const auto v = grid.patches.data();
  std::vector<double> out(side * side);
  for (std::size_t p = 0; p < g * g; ++p) {
    const std::size_t r0 = (p / g) * ps, c0 = (p % g) * ps;
    for (std::size_t r = 0; r < ps; ++r)
      for (std::size_t c = 0; c < ps; ++c) out[(r0 + r) * side + c0 + c] = v[p * nc + r * ps + c];
  }
  return Tensor::from({side, side}, std::move(out));
}

Tensor covariance_matrix(const PatchGrid& grid) {
  const std::size_t np = grid.patches.dim(0), nc = grid.patches.dim(1);
  if (nc < 2) throw ConfigError("covariance_matrix: need at least 2 pixels per patch");
  const auto v = grid.patches.data();
  std::vector<double> centered(np * nc);
  for (std::size_t i = 0; i < np; ++i) {
    double mu = 0.0;
    for (std::size_t k = 0; k < nc; ++k) mu += v[i * nc + k];
    mu /= static_cast<double>(nc);
    for (std::size_t k = 0; k < nc; ++k) centered[i * nc + k] = v[i * nc + k] - mu;
  }
  const double inv = 1.0 / static_cast<double>(nc - 1);
  std::vector<double> sigma(np * np);
  for (std::size_t i = 0; i < np; ++i) {
    for (std::size_t j = i; j < np; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < nc; ++k) acc += centered[i * nc + k] * centered[j * nc + k];
      sigma[i * np + j] = sigma[j * np + i] = acc * inv;
    }
  }
  return Tensor::from({np, np}, std::move(sigma));
}

std::size_t packed_length(std::size_t n_patches) { return n_patches * (n_patches - 1) / 2; }

Tensor pack_upper(const Tensor& sigma) {
  if (sigma.rank() != 2 || sigma.dim(0) != sigma.dim(1)) {
    throw DimensionError("pack_upper: matrix must be square, got " + shape_str(sigma.shape()));
  }
  const std::size_t n = sigma.dim(0);
  if (n < 2) throw DimensionError("pack_upper: need at least 2 patches");
  const auto v = sigma.data();
  std::vector<double> out;
  out.reserve(packed_length(n));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = j + 1; k < n; ++k) out.push_back(v[j * n + k]);
  const std::size_t k = out.size();
  return Tensor::from({k}, std::move(out));
}

Tensor unpack_upper(const Tensor& packed, std::size_t n, std::span<const double> diagonal) {
  if (packed.numel() != packed_length(n)) {
    throw DimensionError("unpack_upper: length " + std::to_string(packed.numel()) + " does not fit " +
                         std::to_string(n) + " patches");
  }
  if (!diagonal.empty() && diagonal.size() != n) throw DimensionError("unpack_upper: diagonal length");
  const auto v = packed.data();
  std::vector<double> out(n * n, 0.0);
  std::size_t idx = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (!diagonal.empty()) out[j * n + j] = diagonal[j];
    for (std::size_t k = j + 1; k < n; ++k) out[j * n + k] = out[k * n + j] = v[idx++];
  }
  return Tensor::from({n, n}, std::move(out));
}

Tensor covariance_target(const Tensor& pixels, std::size_t patch_size, bool full_matrix) {
  const auto sigma = covariance_matrix(split_patches(pixels, patch_size));
  if (full_matrix) return reshape(sigma, {sigma.numel()}).detach();
  return pack_upper(sigma);
}

std::size_t cce_output_length(std::size_t n_patches, bool full_matrix) {
  return full_matrix ? n_patches * n_patches : packed_length(n_patches);
}

CceHead make_cce_head(ParamStore& store, std::size_t width, std::size_t n_patches, bool full_matrix,
                      Initializer& init, const std::string& name) {
  const auto k = cce_output_length(n_patches, full_matrix);
  if (k == 0) throw ConfigError("cce head: patch grid yields no covariance entries");
  // Targets are small; start near zero so the first steps do not blow up the MSE.
  return {store.add(name, init.normal({width, k}, 0.02))};
}

Tensor predict_covariance(const Tensor& u_gr, const CceHead& head) {
  const std::size_t d = head.weight.dim(0);
  if (u_gr.rank() == 1) {
    if (u_gr.dim(0) != d) throw DimensionError("predict_covariance: width mismatch");
    return reshape(matmul(reshape(u_gr, {1, d}), head.weight), {head.outputs()});
  }
  if (u_gr.rank() != 2 || u_gr.dim(1) != d) throw DimensionError("predict_covariance: width mismatch");
  return matmul(u_gr, head.weight);
}

Tensor cce_loss(const Tensor& target, const Tensor& pred) {
  if (target.shape() != pred.shape()) {
    throw DimensionError("cce_loss: target " + shape_str(target.shape()) + " vs prediction " +
                         shape_str(pred.shape()));
  }
  return mean(square(sub(pred, target)));
}

namespace {
constexpr std::string_view kCacheMagic = "PLCT";
constexpr std::uint16_t kCacheVersion = 1;
}  // namespace

void write_target_cache(const std::filesystem::path& path, const TargetCache& cache) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  io::put_bytes(os, kCacheMagic);
  io::put<std::uint16_t>(os, kCacheVersion);
  io::put<std::uint64_t>(os, cache.size());
  for (const auto& [id, values] : cache) {
    io::put<std::uint64_t>(os, id);
    io::put<std::uint64_t>(os, values.size());
    for (double v : values) io::put<double>(os, v);
  }
  if (!os) throw IoError("write failed: " + path.string());
}

TargetCache read_target_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  io::expect_magic(is, kCacheMagic, "target cache");
  if (io::get<std::uint16_t>(is) != kCacheVersion) throw IoError("target cache: unsupported version");
  const auto count = io::get<std::uint64_t>(is);
  TargetCache cache;
  for (std::uint64_t r = 0; r < count; ++r) {
    const auto id = io::get<std::uint64_t>(is);
    const auto len = io::get<std::uint64_t>(is);
    std::vector<double> values(len);
    for (auto& v : values) v = io::get<double>(is);
    cache.emplace(id, std::move(values));
  }
  return cache;
}

}  // namespace place
