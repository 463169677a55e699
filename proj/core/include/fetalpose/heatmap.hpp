#pragma once

#include <span>
#include <vector>

#include "fetalpose/volume.hpp"

namespace fetalpose {

struct HeatmapRenderConfig {
  double sigma_voxels = 2.0;
  double peak_amplitude = 1.0;
};

/// Renders one Gaussian channel per keypoint:
///   amp * exp(-|v - x_j|^2 / (2 sigma^2)) at every voxel center v (voxel units).
/// Full support; keypoints outside the grid are allowed.
HeatmapStack render_heatmaps(const Pose& pose, Dims dims, const HeatmapRenderConfig& cfg = {},
                             Vec3 spacing_mm = {1.0, 1.0, 1.0});

struct LocalMaximum {
  Voxel location;
  float value = 0.0f;
};

/// Voxels strictly greater than all 26 neighbours (out-of-grid neighbours
/// ignored) and >= floor_ratio * channel max, value-descending, truncated to
/// L. Equal values keep scan order. With no strict maximum the first global
/// argmax is returned alone.
std::vector<LocalMaximum> top_l_local_maxima(std::span<const float> channel, Dims dims, int L,
                                             double floor_ratio = 0.1);

/// First voxel (scan order) holding the maximum value; NaNs are skipped.
Voxel argmax_voxel(std::span<const float> channel, Dims dims);

}  // namespace fetalpose
