#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "fetalpose/skeleton.hpp"
#include "fetalpose/volume.hpp"

namespace fetalpose {

inline constexpr double kMinGestationalAge = 25.0;
inline constexpr double kMaxGestationalAge = 35.0;

struct PhantomConfig {
  double ga_weeks = 30.0;
  Dims dims{120, 120, 80};
  Vec3 spacing_mm{3.0, 3.0, 3.0};
  double blob_radius_mm = 6.0;   // Gaussian sigma of keypoint blobs
  double limb_intensity = 0.5;   // capsule intensity on the bone axis
  double limb_radius_mm = 4.0;   // Gaussian falloff of capsules
  double background_noise_sigma = 0.05;
  int margin_voxels = 3;         // keypoints kept this far inside the grid
  std::uint64_t seed = 0;

  void validate() const;
};

/// Parameters the generator samples from; serialized with every dataset so
/// recovered statistics can be checked against them.
struct GeneratorTruth {
  /// Bone length / r_t per skeleton edge (edge order of the skeleton), mean 1.
  std::vector<double> proportions;
  /// Scale law r_t = scale_base_mm * (1 + scale_slope * (t - scale_ref_ga)).
  double scale_base_mm = 40.0;
  double scale_slope = 0.04;
  double scale_ref_ga = 25.0;
  /// Parent->child bone direction in the body frame (x left, y anterior, z cranial).
  std::vector<Vec3> directions;
  /// Half-angle of the cone each bone direction is drawn from.
  std::vector<double> cone_deg;
  /// Relative sigma of per-bone length jitter.
  double length_jitter = 0.04;
  /// Per-keypoint blob amplitude and radius multiplier.
  std::vector<double> keypoint_amplitude;
  std::vector<double> keypoint_radius_scale;

  double r_t(double ga_weeks) const { return scale_base_mm * (1.0 + scale_slope * (ga_weeks - scale_ref_ga)); }
  void validate(const SkeletonSpec& skeleton) const;

  /// Curled fetal posture for fetal_skeleton(). Left-side blobs are wider
  /// than right-side ones so the two sides are distinguishable in appearance.
  static GeneratorTruth fetal_default();
};

/// Forward-kinematic pose sample rooted at skeleton.edges' common parent,
/// rotated uniformly at random and placed inside cfg.dims (voxel coords).
/// Throws std::runtime_error after 100 failed placements.
Pose sample_pose(const PhantomConfig& cfg, const GeneratorTruth& truth, const SkeletonSpec& skeleton,
                 std::mt19937_64& rng);

/// Gaussian keypoint blobs + Gaussian-falloff capsules along the edges +
/// i.i.d. background noise, clipped at zero.
Volume render_phantom(const Pose& pose, const SkeletonSpec& skeleton, const GeneratorTruth& truth,
                      const PhantomConfig& cfg, std::mt19937_64& rng);

}  // namespace fetalpose
