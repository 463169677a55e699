#pragma once

#include <array>
#include <random>
#include <span>
#include <utility>

#include "fetalpose/volume.hpp"

namespace fetalpose {

struct AugmentConfig {
  double intensity_lo = 0.8;
  double intensity_hi = 1.2;
  double max_rot_deg = 30.0;
  double flip_prob = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// One sampled augmentation: rotation about the grid centre, then per-axis
/// flips, then intensity scaling. Applies consistently to volumes, heatmap
/// stacks and poses.
struct AugmentTransform {
  Mat3 rotation = Mat3::identity();
  bool rotate = false;
  std::array<bool, 3> flip{false, false, false};
  double intensity = 1.0;

  static AugmentTransform sample(const AugmentConfig& cfg, std::mt19937_64& rng);

  bool any_flip() const { return flip[0] || flip[1] || flip[2]; }
  /// Total number of flips is odd (left/right labels swap).
  bool mirrors() const { return (int(flip[0]) + int(flip[1]) + int(flip[2])) % 2 == 1; }

  Volume apply(const Volume& volume) const;
  /// Geometric part only; channels are permuted through mirror_map on an odd flip count.
  HeatmapStack apply(const HeatmapStack& heatmaps, std::span<const int> mirror_map) const;
  Pose apply(const Pose& pose, Dims dims, std::span<const int> mirror_map) const;

  /// Equivalent to extract_patch(apply(volume), center, size) but only
  /// resamples the voxels of the patch.
  Volume apply_patch(const Volume& volume, Voxel center, int size) const;
};

/// Flips a volume along one axis: x -> (dim-1) - x.
Volume flip_axis(const Volume& volume, int axis);

std::pair<Volume, Pose> augment(const Volume& volume, const Pose& pose, const AugmentConfig& cfg,
                                std::span<const int> mirror_map, std::mt19937_64& rng);

}  // namespace fetalpose
