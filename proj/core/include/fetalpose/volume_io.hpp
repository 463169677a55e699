#pragma once

#include <filesystem>

#include "fetalpose/skeleton.hpp"
#include "fetalpose/volume.hpp"

namespace fetalpose {

/// `<base>.vol.json` sidecar + `<base>.vol.raw` little-endian f32 payload.
/// `base` is the path without extension.
void write_volume(const std::filesystem::path& base, const Volume& volume);
Volume read_volume(const std::filesystem::path& base);

/// Same pair of files with an extra "channels" entry; channel-major payload.
void write_heatmaps(const std::filesystem::path& base, const HeatmapStack& heatmaps,
                    const SkeletonSpec& skeleton = fetal_skeleton());
HeatmapStack read_heatmaps(const std::filesystem::path& base);

/// Pose JSON: {"ankle_L": [x, y, z], ...} in voxel coordinates.
void write_pose(const std::filesystem::path& file, const Pose& pose,
                const SkeletonSpec& skeleton = fetal_skeleton());
Pose read_pose(const std::filesystem::path& file, const SkeletonSpec& skeleton = fetal_skeleton());

/// Strips a trailing ".vol.json" / ".vol.raw" / ".vol" so either form may be passed.
std::filesystem::path volume_base(const std::filesystem::path& p);

}  // namespace fetalpose
