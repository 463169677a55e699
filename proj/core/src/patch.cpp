#include "fetalpose/patch.hpp"

#include <algorithm>
#include <stdexcept>

namespace fetalpose {

namespace {

void check_patch(Dims dims, Voxel center, int size) {
  if (size < 8 || size % 2 != 0) throw std::invalid_argument("patch size must be even and >= 8, got " + std::to_string(size));
  const int max_dim = std::max({dims.x, dims.y, dims.z});
  if (size > 2 * max_dim)
    throw std::invalid_argument("patch size " + std::to_string(size) + " exceeds twice the largest volume dim (" +
                                std::to_string(max_dim) + ")");
  if (!dims.contains(center.x, center.y, center.z)) throw std::invalid_argument("patch center lies outside the volume");
}

// Copies a cube of `size` starting at `origin` from src into dst (zero outside src).
void crop(std::span<const float> src, Dims src_dims, Voxel origin, int size, std::span<float> dst) {
  const Dims pd{size, size, size};
  std::fill(dst.begin(), dst.end(), 0.0f);
  const int x_lo = std::max(0, -origin.x), x_hi = std::min(size, src_dims.x - origin.x);
  if (x_lo >= x_hi) return;
  for (int z = 0; z < size; ++z) {
    const int sz = origin.z + z;
    if (sz < 0 || sz >= src_dims.z) continue;
    for (int y = 0; y < size; ++y) {
      const int sy = origin.y + y;
      if (sy < 0 || sy >= src_dims.y) continue;
      const float* from = src.data() + src_dims.index(origin.x + x_lo, sy, sz);
      std::copy(from, from + (x_hi - x_lo), dst.data() + pd.index(x_lo, y, z));
    }
  }
}

}  // namespace

Voxel patch_origin(Voxel center, int size) {
  return {center.x - size / 2, center.y - size / 2, center.z - size / 2};
}

Volume extract_patch(const Volume& volume, Voxel center, int size) {
  check_patch(volume.dims(), center, size);
  Volume out(Dims{size, size, size}, volume.spacing_mm());
  crop(volume.data(), volume.dims(), patch_origin(center, size), size, out.data());
  return out;
}

std::pair<Volume, HeatmapStack> extract_patch(const Volume& volume, const HeatmapStack& targets, Voxel center,
                                              int size) {
  if (targets.dims() != volume.dims()) throw std::invalid_argument("targets are not co-registered with the volume");
  Volume patch = extract_patch(volume, center, size);
  HeatmapStack target_patch(targets.channels(), Dims{size, size, size}, targets.spacing_mm());
  for (int c = 0; c < targets.channels(); ++c)
    crop(targets.channel(c), targets.dims(), patch_origin(center, size), size, target_patch.channel(c));
  return {std::move(patch), std::move(target_patch)};
}

}  // namespace fetalpose
