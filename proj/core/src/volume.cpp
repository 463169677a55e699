#include "fetalpose/volume.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fetalpose {

namespace {

void check_grid(Dims dims, Vec3 spacing) {
  if (!dims.positive()) throw std::invalid_argument("volume dims must be positive, got " + to_string(dims));
  if (!(spacing.x > 0 && spacing.y > 0 && spacing.z > 0) || !spacing.finite())
    throw std::invalid_argument("voxel spacing must be positive, got " + to_string(spacing));
}

}  // namespace

Volume::Volume(Dims dims, Vec3 spacing_mm) : dims_(dims), spacing_(spacing_mm) {
  check_grid(dims, spacing_mm);
  data_.assign(dims.voxels(), 0.0f);
}

Volume::Volume(Dims dims, Vec3 spacing_mm, std::vector<float> data)
    : dims_(dims), spacing_(spacing_mm), data_(std::move(data)) {
  check_grid(dims, spacing_mm);
  if (data_.size() != dims.voxels())
    throw std::invalid_argument("volume data has " + std::to_string(data_.size()) + " values, dims " +
                                to_string(dims) + " need " + std::to_string(dims.voxels()));
}

float Volume::sample(Vec3 p) const {
  const double fx = std::floor(p.x), fy = std::floor(p.y), fz = std::floor(p.z);
  const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
  const double tx = p.x - fx, ty = p.y - fy, tz = p.z - fz;
  if (x0 < -1 || y0 < -1 || z0 < -1 || x0 >= dims_.x || y0 >= dims_.y || z0 >= dims_.z) return 0.0f;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? tz : 1.0 - tz;
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? ty : 1.0 - ty;
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? tx : 1.0 - tx;
        const double w = wx * wy * wz;
        if (w != 0.0) acc += w * at_or_zero(x0 + dx, y0 + dy, z0 + dz);
      }
    }
  }
  return static_cast<float>(acc);
}

bool Volume::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

HeatmapStack::HeatmapStack(int channels, Dims dims, Vec3 spacing_mm)
    : channels_(channels), dims_(dims), spacing_(spacing_mm) {
  if (channels < 1) throw std::invalid_argument("heatmap stack needs at least one channel");
  if (!dims.positive()) throw std::invalid_argument("heatmap dims must be positive, got " + to_string(dims));
  data_.assign(static_cast<std::size_t>(channels) * dims.voxels(), 0.0f);
}

std::span<float> HeatmapStack::channel(int c) {
  return std::span<float>(data_).subspan(static_cast<std::size_t>(c) * dims_.voxels(), dims_.voxels());
}

std::span<const float> HeatmapStack::channel(int c) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(c) * dims_.voxels(), dims_.voxels());
}

Volume HeatmapStack::channel_volume(int c) const {
  auto ch = channel(c);
  return Volume(dims_, spacing_, std::vector<float>(ch.begin(), ch.end()));
}

std::vector<Vec3> Pose::in_mm(Vec3 spacing_mm) const {
  std::vector<Vec3> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.push_back(hadamard(c, spacing_mm));
  return out;
}

bool Pose::all_finite() const {
  return std::all_of(coords.begin(), coords.end(), [](const Vec3& c) { return c.finite(); });
}

std::vector<bool> Pose::out_of_bounds(Dims dims) const {
  std::vector<bool> flags;
  flags.reserve(coords.size());
  for (const auto& c : coords) {
    bool out = false;
    for (int a = 0; a < 3; ++a) out = out || !(c[a] >= 0.0 && c[a] <= dims[a] - 1.0);
    flags.push_back(out);
  }
  return flags;
}

}  // namespace fetalpose
