#pragma once

#include <span>
#include <vector>

#include "fetalpose/geometry.hpp"

namespace fetalpose {

/// Scalar intensity grid with physical voxel spacing (mm). x-fastest layout.
class Volume {
 public:
  Volume() = default;
  Volume(Dims dims, Vec3 spacing_mm);
  Volume(Dims dims, Vec3 spacing_mm, std::vector<float> data);

  Dims dims() const { return dims_; }
  Vec3 spacing_mm() const { return spacing_; }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  float& at(int x, int y, int z) { return data_[dims_.index(x, y, z)]; }
  float at(int x, int y, int z) const { return data_[dims_.index(x, y, z)]; }
  /// Zero outside the grid.
  float at_or_zero(int x, int y, int z) const { return dims_.contains(x, y, z) ? at(x, y, z) : 0.0f; }
  /// Trilinear interpolation with zero outside the grid.
  float sample(Vec3 p) const;

  bool all_finite() const;

 private:
  Dims dims_{};
  Vec3 spacing_{1.0, 1.0, 1.0};
  std::vector<float> data_;
};

/// J per-keypoint channels co-registered with a volume.
class HeatmapStack {
 public:
  HeatmapStack() = default;
  HeatmapStack(int channels, Dims dims, Vec3 spacing_mm = {1.0, 1.0, 1.0});

  int channels() const { return channels_; }
  Dims dims() const { return dims_; }
  Vec3 spacing_mm() const { return spacing_; }
  void set_spacing_mm(Vec3 s) { spacing_ = s; }

  std::span<float> channel(int c);
  std::span<const float> channel(int c) const;
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  /// Copy of one channel as a standalone volume.
  Volume channel_volume(int c) const;

 private:
  int channels_ = 0;
  Dims dims_{};
  Vec3 spacing_{1.0, 1.0, 1.0};
  std::vector<float> data_;
};

/// Keypoint coordinates in continuous voxel space (voxel i has center i).
struct Pose {
  std::vector<Vec3> coords;

  int size() const { return static_cast<int>(coords.size()); }
  std::vector<Vec3> in_mm(Vec3 spacing_mm) const;
  bool all_finite() const;
  /// Per-keypoint flag: true when the coordinate lies outside [0, dim-1].
  std::vector<bool> out_of_bounds(Dims dims) const;
};

}  // namespace fetalpose
