#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "place/nn.hpp"
#include "place/tensor.hpp"

namespace place {

// Disjoint row-major tiling of a square image into ps x ps patches.
struct PatchGrid {
  Tensor patches;  // [N_p x N_c], row i = flattened patch i
  std::size_t patch_size = 0;
  std::size_t grid = 0;  // patches per side
  std::size_t n_patches() const { return grid * grid; }
  std::size_t n_pixels() const { return patch_size * patch_size; }
};

PatchGrid split_patches(const Tensor& pixels, std::size_t patch_size);
// Inverse of split_patches.
Tensor assemble_patches(const PatchGrid& grid);

// Sample covariance between patches, each patch's pixels being one variable.
Tensor covariance_matrix(const PatchGrid& grid);

std::size_t packed_length(std::size_t n_patches);
// Strict upper triangle, row-major over pairs j < k.
Tensor pack_upper(const Tensor& sigma);
// Symmetric matrix with the packed off-diagonal entries and `diagonal` on the diagonal.
Tensor unpack_upper(const Tensor& packed, std::size_t n_patches, std::span<const double> diagonal = {});

// Regression target for one image: packed upper triangle, or the full
// row-major matrix when `full_matrix` is set.
Tensor covariance_target(const Tensor& pixels, std::size_t patch_size, bool full_matrix = false);

struct CceHead {
  Tensor weight;  // [D x K]
  std::size_t outputs() const { return weight.dim(1); }
  std::size_t parameter_count() const { return weight.numel(); }
};

// K = N_p (N_p - 1) / 2 packed, or N_p^2 for the full-matrix variant.
std::size_t cce_output_length(std::size_t n_patches, bool full_matrix);
CceHead make_cce_head(ParamStore& store, std::size_t width, std::size_t n_patches, bool full_matrix,
                      Initializer& init, const std::string& name = "cce.head");

// u_gr: [D] or [B x D] -> [K] or [B x K]; a single product, no bias.
Tensor predict_covariance(const Tensor& u_gr, const CceHead& head);

// Mean squared error over all entries (equivalently per-sample mean, batch-averaged).
Tensor cce_loss(const Tensor& target, const Tensor& pred);

// Binary cache of per-sample targets: magic "PLCT", u16 version, u64 count,
// then per record u64 sample id, u64 length, length float64 values. Little-endian.
using TargetCache = std::map<std::uint64_t, std::vector<double>>;
void write_target_cache(const std::filesystem::path& path, const TargetCache& cache);
TargetCache read_target_cache(const std::filesystem::path& path);

}  // namespace place
