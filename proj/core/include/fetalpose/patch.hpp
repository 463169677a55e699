#pragma once

#include <utility>

#include "fetalpose/volume.hpp"

namespace fetalpose {

inline constexpr int kDefaultPatchSize = 64;

/// Origin (voxel index of patch voxel 0) for a cubic crop of `size` centred at `center`.
Voxel patch_origin(Voxel center, int size);

/// Cubic crop centred at `center`, zero padded outside the volume.
Volume extract_patch(const Volume& volume, Voxel center, int size = kDefaultPatchSize);

/// Crops the volume and the co-registered targets identically.
std::pair<Volume, HeatmapStack> extract_patch(const Volume& volume, const HeatmapStack& targets,
                                              Voxel center, int size = kDefaultPatchSize);

}  // namespace fetalpose
