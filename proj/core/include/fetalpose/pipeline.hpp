#pragma once

#include <optional>

#include "fetalpose/hourglass.hpp"
#include "fetalpose/mrf.hpp"

namespace fetalpose {

struct PaddedVolume {
  Volume volume;
  Voxel offset;  // padded index = original index + offset
};

/// Symmetric zero padding of each axis up to the next multiple of divisor
/// (the extra voxel of an odd pad goes to the high side).
PaddedVolume pad_to_multiple(const Volume& volume, int divisor);

/// Stage 1: full-volume forward pass, cropped back to the input grid.
HeatmapStack predict_heatmaps(const Hourglass<float>& model, const Volume& volume);

struct Prediction {
  HeatmapStack heatmaps;
  Voxel pad;               // low-side padding applied before the forward pass
  Pose baseline;           // argmax per channel
  CandidateSet candidates;
  std::optional<MapResult> refined;
  double stage1_ms = 0.0;
  double stage2_ms = 0.0;  // candidate extraction + inference
};

/// Both stages. Refinement runs only when stats is given.
Prediction run_pipeline(const Hourglass<float>& model, const Volume& volume, const BoneStats* stats,
                        double ga_weeks, const EnergyParams& params = {},
                        const SkeletonSpec& skeleton = fetal_skeleton());

/// Stage 2 on an existing heatmap stack.
MapResult refine_pose(const HeatmapStack& heatmaps, const BoneStats& stats, double ga_weeks,
                      const EnergyParams& params = {}, const SkeletonSpec& skeleton = fetal_skeleton(),
                      CandidateSet* candidates_out = nullptr);

/// Volume as a [1, Z, Y, X] tensor and back.
Tensor<float> to_tensor(const Volume& volume);

}  // namespace fetalpose
