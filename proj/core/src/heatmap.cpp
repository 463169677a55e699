#include "fetalpose/heatmap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fetalpose {

HeatmapStack render_heatmaps(const Pose& pose, Dims dims, const HeatmapRenderConfig& cfg, Vec3 spacing_mm) {
  if (!(cfg.sigma_voxels > 0.0)) throw std::invalid_argument("heatmap sigma must be positive");
  if (!dims.positive()) throw std::invalid_argument("heatmap dims must be positive, got " + to_string(dims));
  if (pose.size() < 1) throw std::invalid_argument("pose has no keypoints");
  for (int j = 0; j < pose.size(); ++j)
    if (!pose.coords[static_cast<std::size_t>(j)].finite())
      throw std::invalid_argument("keypoint " + std::to_string(j) + " has non-finite coordinates");

  HeatmapStack out(pose.size(), dims, spacing_mm);
  const double inv = 1.0 / (2.0 * cfg.sigma_voxels * cfg.sigma_voxels);
  std::vector<double> gx(static_cast<std::size_t>(dims.x)), gy(static_cast<std::size_t>(dims.y)),
      gz(static_cast<std::size_t>(dims.z));
  for (int j = 0; j < pose.size(); ++j) {
    const Vec3 p = pose.coords[static_cast<std::size_t>(j)];
    // separable: exp(-(dx^2+dy^2+dz^2)/2s^2) = gx * gy * gz
    for (int i = 0; i < dims.x; ++i) gx[static_cast<std::size_t>(i)] = std::exp(-(i - p.x) * (i - p.x) * inv);
    for (int i = 0; i < dims.y; ++i) gy[static_cast<std::size_t>(i)] = std::exp(-(i - p.y) * (i - p.y) * inv);
    for (int i = 0; i < dims.z; ++i) gz[static_cast<std::size_t>(i)] = std::exp(-(i - p.z) * (i - p.z) * inv);
    auto ch = out.channel(j);
    std::size_t idx = 0;
    for (int z = 0; z < dims.z; ++z)
      for (int y = 0; y < dims.y; ++y) {
        const double yz = cfg.peak_amplitude * gy[static_cast<std::size_t>(y)] * gz[static_cast<std::size_t>(z)];
        for (int x = 0; x < dims.x; ++x) ch[idx++] = static_cast<float>(yz * gx[static_cast<std::size_t>(x)]);
      }
  }
  return out;
}

Voxel argmax_voxel(std::span<const float> channel, Dims dims) {
  std::size_t best = 0;
  float best_value = -std::numeric_limits<float>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < channel.size(); ++i) {
    const float v = channel[i];
    if (std::isnan(v)) continue;
    if (!found || v > best_value) {
      best = i;
      best_value = v;
      found = true;
    }
  }
  const int x = static_cast<int>(best % static_cast<std::size_t>(dims.x));
  const int y = static_cast<int>((best / static_cast<std::size_t>(dims.x)) % static_cast<std::size_t>(dims.y));
  const int z = static_cast<int>(best / (static_cast<std::size_t>(dims.x) * static_cast<std::size_t>(dims.y)));
  return {x, y, z};
}

std::vector<LocalMaximum> top_l_local_maxima(std::span<const float> channel, Dims dims, int L, double floor_ratio) {
  if (L < 1) throw std::invalid_argument("L must be at least 1");
  if (!(floor_ratio >= 0.0 && floor_ratio < 1.0)) throw std::invalid_argument("floor_ratio must lie in [0, 1)");
  if (channel.size() != dims.voxels()) throw std::invalid_argument("channel size does not match dims");

  float max_value = -std::numeric_limits<float>::infinity();
  bool any_finite = false;
  for (float v : channel)
    if (std::isfinite(v)) {
      any_finite = true;
      max_value = std::max(max_value, v);
    }
  if (!any_finite) throw std::invalid_argument("heatmap channel has no finite values");

  const float floor_value = static_cast<float>(floor_ratio * max_value);
  std::vector<LocalMaximum> found;
  for (int z = 0; z < dims.z; ++z)
    for (int y = 0; y < dims.y; ++y)
      for (int x = 0; x < dims.x; ++x) {
        const float v = channel[dims.index(x, y, z)];
        if (!std::isfinite(v) || v < floor_value) continue;
        bool strict = true;
        for (int dz = -1; dz <= 1 && strict; ++dz)
          for (int dy = -1; dy <= 1 && strict; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (dx == 0 && dy == 0 && dz == 0) continue;
              const int nx = x + dx, ny = y + dy, nz = z + dz;
              if (!dims.contains(nx, ny, nz)) continue;
              if (!(v > channel[dims.index(nx, ny, nz)])) {
                strict = false;
                break;
              }
            }
        if (strict) found.push_back({{x, y, z}, v});
      }

  if (found.empty()) {
    const Voxel at = argmax_voxel(channel, dims);
    return {{at, channel[dims.index(at.x, at.y, at.z)]}};
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const LocalMaximum& a, const LocalMaximum& b) { return a.value > b.value; });
  if (found.size() > static_cast<std::size_t>(L)) found.resize(static_cast<std::size_t>(L));
  return found;
}

}  // namespace fetalpose
