#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fetalpose/heatmap.hpp"
#include "fetalpose/skeleton.hpp"
#include "fetalpose/volume.hpp"

namespace fetalpose {

struct EnergyParams {
  double alpha = 1.0;
  int L = 3;
  double clamp_eps = 1e-6;
  /// Local maxima below floor_ratio * channel max are not candidates.
  double floor_ratio = 0.1;

  void validate() const;
};

struct Candidate {
  Vec3 location;  // voxel coordinates
  double value = 0.0;
};

/// MRF node states: per keypoint, value-descending candidate locations.
struct CandidateSet {
  std::vector<std::vector<Candidate>> states;
  Vec3 spacing_mm{1.0, 1.0, 1.0};

  int keypoints() const { return static_cast<int>(states.size()); }
  /// Product of state counts (saturates at UINT64_MAX).
  std::uint64_t configurations() const;
  void validate() const;
};

struct EdgeStats {
  int i = 0;
  int j = 0;
  double mu = 1.0;   // mean normalized length
  double var = 1.0;  // variance of normalized length
};

/// Normalized bone-length statistics plus the affine scale model r_t.
struct BoneStats {
  std::vector<EdgeStats> edges;  // skeleton edge order
  double slope = 0.0;
  double intercept = 1.0;
  std::array<double, 2> ga_range{25.0, 35.0};

  double r_t(double ga_weeks) const { return slope * ga_weeks + intercept; }
  /// Throws std::invalid_argument unless edges match the skeleton, var > 0,
  /// and r_t > 0 over ga_range.
  void validate(const SkeletonSpec& skeleton) const;
};

/// -log(clamp(value, eps, 1)).
double unary_energy(double heatmap_value, const EnergyParams& params = {});

/// alpha * (|xi - xj|_mm / r_t - mu)^2 / var. Positions in mm.
/// Throws for an unknown edge index or t outside the stats' GA range.
double pairwise_energy(Vec3 xi_mm, Vec3 xj_mm, int edge, const BoneStats& stats, double ga_weeks,
                       const EnergyParams& params = {});

struct EnergyBreakdown {
  std::vector<double> unary;     // per keypoint
  std::vector<double> pairwise;  // per skeleton edge
  double total = 0.0;
};

/// Sum of unaries in keypoint order then pairwise terms in edge order.
EnergyBreakdown energy_terms(const CandidateSet& candidates, std::span<const int> config,
                             const SkeletonSpec& skeleton, const BoneStats& stats, double ga_weeks,
                             const EnergyParams& params = {});
double total_energy(const CandidateSet& candidates, std::span<const int> config, const SkeletonSpec& skeleton,
                    const BoneStats& stats, double ga_weeks, const EnergyParams& params = {});

struct MapResult {
  std::vector<int> config;  // chosen state index per keypoint
  Pose pose;
  double energy = 0.0;      // total_energy(config)
};

/// Relative slack under which two energies count as tied; both solvers pick
/// the lexicographically smallest state tuple among tied minimizers.
inline constexpr double kTieTolerance = 1e-9;

/// Exact MAP on a tree by min-sum message passing (leaves to root, then
/// backtrack), with tied minimizers resolved to the lexicographically
/// smallest state tuple. Throws std::invalid_argument for non-tree skeletons.
MapResult map_inference_bp(const CandidateSet& candidates, const SkeletonSpec& skeleton, const BoneStats& stats,
                           double ga_weeks, const EnergyParams& params = {});

inline constexpr std::uint64_t kBruteForceLimit = 200'000'000;

/// Exhaustive enumeration in lexicographic order. Throws std::length_error
/// when the state space exceeds kBruteForceLimit.
MapResult brute_force_map(const CandidateSet& candidates, const SkeletonSpec& skeleton, const BoneStats& stats,
                          double ga_weeks, const EnergyParams& params = {});

/// Per-channel global argmax (first in scan order).
Pose argmax_baseline(const HeatmapStack& heatmaps);

/// Top-L strict local maxima per channel; values reported unclamped.
CandidateSet extract_candidates(const HeatmapStack& heatmaps, const EnergyParams& params = {});

struct LabeledPose {
  Pose pose;  // voxel coordinates
  double ga_weeks = 30.0;
  Vec3 spacing_mm{3.0, 3.0, 3.0};
};

inline constexpr double kBoneVarianceFloor = 1e-4;

/// Least-squares fit of per-sample mean bone length against GA for r_t, then
/// per-edge mean/variance of length / r_t. Constant r_t when every sample
/// shares one GA.
BoneStats estimate_bone_stats(std::span<const LabeledPose> poses, const SkeletonSpec& skeleton = fetal_skeleton());

/// {"edges":[{"i","j","mu","var"}],"ga_model":{"slope","intercept"}}
void write_bone_stats(const std::filesystem::path& file, const BoneStats& stats);
BoneStats read_bone_stats(const std::filesystem::path& file);

}  // namespace fetalpose
