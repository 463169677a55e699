#include "fetalpose/augment.hpp"

#include <algorithm>
#include <numbers>
#include <stdexcept>

namespace fetalpose {

void AugmentConfig::validate() const {
  if (!(intensity_lo > 0.0 && intensity_lo <= intensity_hi))
    throw std::invalid_argument("intensity range must satisfy 0 < lo <= hi");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw std::invalid_argument("flip_prob must lie in [0, 1]");
  if (!(max_rot_deg >= 0.0 && max_rot_deg <= 180.0)) throw std::invalid_argument("max_rot_deg must lie in [0, 180]");
}

AugmentTransform AugmentTransform::sample(const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  AugmentTransform t;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double max_rad = cfg.max_rot_deg * std::numbers::pi / 180.0;
  double angles[3];
  for (double& a : angles) a = (2.0 * unit(rng) - 1.0) * max_rad;
  if (max_rad > 0.0) {
    t.rotation = Mat3::rotation_z(angles[2]) * Mat3::rotation_y(angles[1]) * Mat3::rotation_x(angles[0]);
    t.rotate = true;
  }
  for (auto& f : t.flip) f = unit(rng) < cfg.flip_prob;
  const double u = unit(rng);
  t.intensity = cfg.intensity_lo + (cfg.intensity_hi - cfg.intensity_lo) * u;
  return t;
}

Volume flip_axis(const Volume& volume, int axis) {
  const Dims d = volume.dims();
  Volume out(d, volume.spacing_mm());
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        int s[3] = {x, y, z};
        s[axis] = d[axis] - 1 - s[axis];
        out.at(x, y, z) = volume.at(s[0], s[1], s[2]);
      }
  return out;
}

namespace {

Vec3 grid_center(Dims d) { return {(d.x - 1) * 0.5, (d.y - 1) * 0.5, (d.z - 1) * 0.5}; }

Volume geometric(const AugmentTransform& t, const Volume& in) {
  Volume out = in;
  if (t.rotate) {
    const Dims d = in.dims();
    const Vec3 c = grid_center(d);
    const Mat3 inverse = t.rotation.transposed();
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y; ++y) {
        // source = c + R^T (v - c), linear in x
        const Vec3 row = c + inverse * (Vec3{0.0, double(y), double(z)} - c);
        const Vec3 step{inverse(0, 0), inverse(1, 0), inverse(2, 0)};
        for (int x = 0; x < d.x; ++x) out.at(x, y, z) = in.sample(row + step * double(x));
      }
  }
  for (int a = 0; a < 3; ++a)
    if (t.flip[static_cast<std::size_t>(a)]) out = flip_axis(out, a);
  return out;
}

}  // namespace

Volume AugmentTransform::apply(const Volume& volume) const {
  Volume out = geometric(*this, volume);
  if (intensity != 1.0)
    for (float& v : out.data()) v = static_cast<float>(v * intensity);
  return out;
}

HeatmapStack AugmentTransform::apply(const HeatmapStack& heatmaps, std::span<const int> mirror_map) const {
  const bool swap = mirrors();
  if (swap && mirror_map.size() != static_cast<std::size_t>(heatmaps.channels()))
    throw std::invalid_argument("mirror map does not match heatmap channel count");
  HeatmapStack out(heatmaps.channels(), heatmaps.dims(), heatmaps.spacing_mm());
  for (int j = 0; j < heatmaps.channels(); ++j) {
    const int src = swap ? mirror_map[static_cast<std::size_t>(j)] : j;
    const Volume moved = geometric(*this, heatmaps.channel_volume(src));
    std::copy(moved.data().begin(), moved.data().end(), out.channel(j).begin());
  }
  return out;
}

Pose AugmentTransform::apply(const Pose& pose, Dims dims, std::span<const int> mirror_map) const {
  const bool swap = mirrors();
  if (swap && mirror_map.size() != pose.coords.size())
    throw std::invalid_argument("mirror map does not match pose keypoint count");
  const Vec3 c = grid_center(dims);
  std::vector<Vec3> moved;
  moved.reserve(pose.coords.size());
  for (Vec3 p : pose.coords) {
    if (rotate) p = c + rotation * (p - c);
    for (int a = 0; a < 3; ++a)
      if (flip[static_cast<std::size_t>(a)]) p[a] = (dims[a] - 1) - p[a];
    moved.push_back(p);
  }
  Pose out;
  out.coords.resize(moved.size());
  for (std::size_t j = 0; j < moved.size(); ++j)
    out.coords[j] = swap ? moved[static_cast<std::size_t>(mirror_map[j])] : moved[j];
  return out;
}

std::pair<Volume, Pose> augment(const Volume& volume, const Pose& pose, const AugmentConfig& cfg,
                                std::span<const int> mirror_map, std::mt19937_64& rng) {
  const AugmentTransform t = AugmentTransform::sample(cfg, rng);
  return {t.apply(volume), t.apply(pose, volume.dims(), mirror_map)};
}

}  // namespace fetalpose

namespace fetalpose {

Volume AugmentTransform::apply_patch(const Volume& volume, Voxel center, int size) const {
  const Dims d = volume.dims();
  const Vec3 c = grid_center(d);
  const Mat3 inverse = rotation.transposed();
  Volume out(Dims{size, size, size}, volume.spacing_mm());
  const Voxel origin{center.x - size / 2, center.y - size / 2, center.z - size / 2};
  for (int z = 0; z < size; ++z)
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        int v[3] = {origin.x + x, origin.y + y, origin.z + z};
        if (!d.contains(v[0], v[1], v[2])) continue;
        for (int a = 0; a < 3; ++a)
          if (flip[static_cast<std::size_t>(a)]) v[a] = d[a] - 1 - v[a];
        float value;
        if (rotate)
          value = volume.sample(c + inverse * (Vec3{double(v[0]), double(v[1]), double(v[2])} - c));
        else
          value = volume.at(v[0], v[1], v[2]);
        out.at(x, y, z) = intensity != 1.0 ? static_cast<float>(value * intensity) : value;
      }
  return out;
}

}  // namespace fetalpose
