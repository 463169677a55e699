#include "fetalpose/pipeline.hpp"

#include <chrono>
#include <stdexcept>

namespace fetalpose {

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PaddedVolume pad_to_multiple(const Volume& volume, int divisor) {
  if (divisor < 1) throw std::invalid_argument("divisor must be >= 1");
  const Dims d = volume.dims();
  if (!d.positive()) throw std::invalid_argument("cannot pad an empty volume");
  Dims out;
  Voxel lo;
  for (int a = 0; a < 3; ++a) {
    const int target = (d[a] + divisor - 1) / divisor * divisor;
    out[a] = target;
    const int low = (target - d[a]) / 2;
    (a == 0 ? lo.x : a == 1 ? lo.y : lo.z) = low;
  }
  PaddedVolume p{Volume(out, volume.spacing_mm()), lo};
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) p.volume.at(x + lo.x, y + lo.y, z + lo.z) = volume.at(x, y, z);
  return p;
}

Tensor<float> to_tensor(const Volume& volume) {
  const auto src = volume.data();
  return Tensor<float>(activation_shape(1, volume.dims()), std::vector<float>(src.begin(), src.end()));
}

namespace {

HeatmapStack crop_output(const Tensor<float>& out, Voxel offset, Dims dims, Vec3 spacing) {
  const Dims pd = out.spatial();
  HeatmapStack h(out.channels(), dims, spacing);
  for (int c = 0; c < out.channels(); ++c) {
    auto dst = h.channel(c);
    const float* src = out.data() + static_cast<std::size_t>(c) * pd.voxels();
    for (int z = 0; z < dims.z; ++z)
      for (int y = 0; y < dims.y; ++y)
        for (int x = 0; x < dims.x; ++x)
          dst[dims.index(x, y, z)] = src[pd.index(x + offset.x, y + offset.y, z + offset.z)];
  }
  return h;
}

HeatmapStack stage1(const Hourglass<float>& model, const Volume& volume, Voxel* pad_out) {
  if (model.config().in_channels != 1) throw std::invalid_argument("the pipeline expects a single-channel model");
  const PaddedVolume padded = pad_to_multiple(volume, model.config().divisor());
  if (pad_out) *pad_out = padded.offset;
  const Tensor<float> out = model.infer(to_tensor(padded.volume));
  return crop_output(out, padded.offset, volume.dims(), volume.spacing_mm());
}

}  // namespace

HeatmapStack predict_heatmaps(const Hourglass<float>& model, const Volume& volume) {
  return stage1(model, volume, nullptr);
}

MapResult refine_pose(const HeatmapStack& heatmaps, const BoneStats& stats, double ga_weeks,
                      const EnergyParams& params, const SkeletonSpec& skeleton, CandidateSet* candidates_out) {
  if (heatmaps.channels() != skeleton.size())
    throw std::invalid_argument("heatmap stack has " + std::to_string(heatmaps.channels()) + " channels, skeleton " +
                                std::to_string(skeleton.size()) + " keypoints");
  CandidateSet c = extract_candidates(heatmaps, params);
  MapResult r = map_inference_bp(c, skeleton, stats, ga_weeks, params);
  if (candidates_out) *candidates_out = std::move(c);
  return r;
}

Prediction run_pipeline(const Hourglass<float>& model, const Volume& volume, const BoneStats* stats,
                        double ga_weeks, const EnergyParams& params, const SkeletonSpec& skeleton) {
  Prediction p;
  auto t0 = std::chrono::steady_clock::now();
  p.heatmaps = stage1(model, volume, &p.pad);
  p.baseline = argmax_baseline(p.heatmaps);
  p.stage1_ms = ms_since(t0);
  if (stats) {
    t0 = std::chrono::steady_clock::now();
    p.refined = refine_pose(p.heatmaps, *stats, ga_weeks, params, skeleton, &p.candidates);
    p.stage2_ms = ms_since(t0);
  }
  return p;
}

}  // namespace fetalpose
