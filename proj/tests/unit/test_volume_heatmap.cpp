#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "fetalpose/heatmap.hpp"
#include "fetalpose/patch.hpp"
#include "fetalpose/volume.hpp"
#include "fetalpose/volume_io.hpp"
#include "oracles.hpp"

using namespace fetalpose;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "fetalpose_unit" / name;
  fs::create_directories(p);
  return p;
}

Volume ramp(Dims d) {
  Volume v(d, {1, 1, 1});
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) v.at(x, y, z) = static_cast<float>(x + 100 * y + 10000 * z + 1);
  return v;
}

}  // namespace

TEST(Volume, RejectsBadConstruction) {
  EXPECT_THROW(Volume(Dims{0, 2, 2}, {1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(Volume(Dims{2, 2, 2}, {1, 0, 1}), std::invalid_argument);
  EXPECT_THROW(Volume(Dims{2, 2, 2}, {1, 1, 1}, std::vector<float>(7)), std::invalid_argument);
}

TEST(Volume, TrilinearSampleInterpolatesAndZerosOutside) {
  Volume v(Dims{2, 2, 2}, {1, 1, 1});
  v.at(1, 0, 0) = 2.0f;
  EXPECT_FLOAT_EQ(v.sample({0.5, 0, 0}), 1.0f);
  EXPECT_FLOAT_EQ(v.sample({1, 0, 0}), 2.0f);
  EXPECT_FLOAT_EQ(v.sample({5, 0, 0}), 0.0f);
}

TEST(Pose, FlagsOutOfBoundsWithoutRejecting) {
  Pose p{{{0, 0, 0}, {4.5, 0, 0}, {-0.1, 1, 1}}};
  const auto f = p.out_of_bounds(Dims{5, 5, 5});
  EXPECT_FALSE(f[0]);
  EXPECT_TRUE(f[1]);
  EXPECT_TRUE(f[2]);
  const auto mm = p.in_mm({3, 2, 1});
  EXPECT_DOUBLE_EQ(mm[1].x, 13.5);
}

TEST(RenderHeatmaps, PeakIsOneOnVoxelCentre) {
  const Dims d{16, 16, 16};
  const HeatmapStack h = render_heatmaps(Pose{{{5, 6, 7}}}, d);
  EXPECT_EQ(h.channel(0)[d.index(5, 6, 7)], 1.0f);
}

TEST(RenderHeatmaps, OneSigmaEquivalentOffset) {
  const Dims d{16, 16, 16};
  const HeatmapStack h = render_heatmaps(Pose{{{5, 6, 7}}}, d, {2.0, 1.0});
  EXPECT_NEAR(h.channel(0)[d.index(7, 6, 7)], 0.606531, 1e-6);
}

TEST(RenderHeatmaps, MatchesClosedFormEverywhere) {
  const Dims d{9, 7, 5};
  const Pose p{{{2.3, 4.1, 1.7}, {8.0, 0.5, 3.2}}};
  const HeatmapStack h = render_heatmaps(p, d, {1.5, 0.7});
  double worst = 0.0;
  for (int c = 0; c < 2; ++c)
    for (int z = 0; z < d.z; ++z)
      for (int y = 0; y < d.y; ++y)
        for (int x = 0; x < d.x; ++x) {
          const Vec3 q = Vec3{double(x), double(y), double(z)} - p.coords[static_cast<std::size_t>(c)];
          const double ref = 0.7 * oracle::gaussian(dot(q, q), 1.5);
          worst = std::max(worst, std::abs(h.channel(c)[d.index(x, y, z)] - ref));
        }
  EXPECT_LT(worst, 1e-7);
}

TEST(RenderHeatmaps, FarOutsideKeypointGivesNegligibleChannel) {
  const Dims d{10, 10, 10};
  const HeatmapStack h = render_heatmaps(Pose{{{-20.0 - 9.0, 5, 5}}}, d, {2.0, 1.0});
  for (float v : h.channel(0)) EXPECT_LT(v, 1e-20f);
}

TEST(RenderHeatmaps, RejectsNonFiniteKeypoint) {
  EXPECT_THROW(render_heatmaps(Pose{{{std::nan(""), 1, 1}}}, Dims{4, 4, 4}), std::invalid_argument);
}

TEST(LocalMaxima, SingleGaussianHasOneCandidate) {
  const Dims d{20, 20, 20};
  const HeatmapStack h = render_heatmaps(Pose{{{7, 8, 9}}}, d);
  const auto m = top_l_local_maxima(h.channel(0), d, 3);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].location, (Voxel{7, 8, 9}));
}

TEST(LocalMaxima, TwoEqualGaussiansGiveTwoCandidates) {
  const Dims d{32, 12, 12};
  HeatmapStack a = render_heatmaps(Pose{{{5, 6, 6}, {25, 6, 6}}}, d);
  std::vector<float> sum(d.voxels());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a.channel(0)[i] + a.channel(1)[i];
  const auto m = top_l_local_maxima(sum, d, 3);
  ASSERT_EQ(m.size(), 2u);
  // Exhaustive 26-neighbour oracle.
  int strict = 0;
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        bool is_max = true;
        for (int dz = -1; dz <= 1; ++dz)
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
              if ((dx || dy || dz) && d.contains(x + dx, y + dy, z + dz) &&
                  !(sum[d.index(x, y, z)] > sum[d.index(x + dx, y + dy, z + dz)]))
                is_max = false;
        strict += is_max;
      }
  EXPECT_EQ(strict, 2);
  EXPECT_EQ(m[0].location, (Voxel{5, 6, 6}));  // equal values keep scan order
  EXPECT_EQ(m[1].location, (Voxel{25, 6, 6}));
}

TEST(LocalMaxima, ConstantChannelFallsBackToArgmax) {
  const Dims d{4, 4, 4};
  std::vector<float> c(d.voxels(), 0.3f);
  const auto m = top_l_local_maxima(c, d, 3);
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0].location, (Voxel{0, 0, 0}));
}

TEST(LocalMaxima, FloorRatioDropsWeakPeaksAndTruncatesToL) {
  const Dims d{40, 8, 8};
  std::vector<float> c(d.voxels(), 0.0f);
  c[d.index(5, 4, 4)] = 1.0f;
  c[d.index(15, 4, 4)] = 0.5f;
  c[d.index(25, 4, 4)] = 0.3f;
  c[d.index(35, 4, 4)] = 0.05f;
  EXPECT_EQ(top_l_local_maxima(c, d, 10, 0.1).size(), 3u);
  const auto two = top_l_local_maxima(c, d, 2, 0.1);
  ASSERT_EQ(two.size(), 2u);
  EXPECT_FLOAT_EQ(two[1].value, 0.5f);
}

TEST(LocalMaxima, AllNonFiniteRejected) {
  const Dims d{2, 2, 2};
  std::vector<float> c(d.voxels(), std::nanf(""));
  EXPECT_THROW(top_l_local_maxima(c, d, 1), std::invalid_argument);
}

TEST(Argmax, TiesResolveToScanOrder) {
  const Dims d{4, 4, 4};
  std::vector<float> c(d.voxels(), 0.0f);
  c[d.index(3, 1, 0)] = 2.0f;
  c[d.index(1, 2, 3)] = 2.0f;
  EXPECT_EQ(argmax_voxel(c, d), (Voxel{3, 1, 0}));
}

TEST(Patch, FullSizePatchAtCentreEqualsVolume) {
  const Volume v = ramp({16, 16, 16});
  const Volume p = extract_patch(v, Voxel{8, 8, 8}, 16);
  ASSERT_EQ(p.dims(), v.dims());
  for (std::size_t i = 0; i < v.data().size(); ++i) EXPECT_EQ(p.data()[i], v.data()[i]);
}

TEST(Patch, CornerPatchIsSevenEighthsPadding) {
  const Volume v = ramp({64, 64, 64});
  const Volume p = extract_patch(v, Voxel{0, 0, 0}, 64);
  std::size_t zeros = 0;
  for (float f : p.data()) zeros += f == 0.0f;
  EXPECT_EQ(zeros * 8, p.data().size() * 7);
}

TEST(Patch, DefaultSizeIs64) {
  const Volume v = ramp({40, 36, 34});
  EXPECT_EQ(extract_patch(v, Voxel{10, 10, 10}).dims(), (Dims{64, 64, 64}));
}

TEST(Patch, OverlappingPatchesAgree) {
  const Volume v = ramp({20, 18, 16});
  const Voxel a{6, 7, 8}, b{11, 9, 6};
  const int s = 10;
  const Volume pa = extract_patch(v, a, s), pb = extract_patch(v, b, s);
  const Voxel oa = patch_origin(a, s), ob = patch_origin(b, s);
  int shared = 0;
  for (int z = 0; z < s; ++z)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        const int gx = oa.x + x, gy = oa.y + y, gz = oa.z + z;
        const int bx = gx - ob.x, by = gy - ob.y, bz = gz - ob.z;
        if (bx < 0 || by < 0 || bz < 0 || bx >= s || by >= s || bz >= s) continue;
        EXPECT_EQ(pa.at(x, y, z), pb.at(bx, by, bz));
        ++shared;
      }
  EXPECT_GT(shared, 0);
}

TEST(Patch, TargetsCroppedIdentically) {
  const Volume v = ramp({12, 12, 12});
  const HeatmapStack h = render_heatmaps(Pose{{{3, 4, 5}}}, v.dims());
  const auto [pv, ph] = extract_patch(v, h, Voxel{4, 4, 4}, 8);
  const Voxel o = patch_origin(Voxel{4, 4, 4}, 8);
  EXPECT_EQ(ph.channel(0)[ph.dims().index(3 - o.x, 4 - o.y, 5 - o.z)], 1.0f);
  EXPECT_EQ(pv.at(3 - o.x, 4 - o.y, 5 - o.z), v.at(3, 4, 5));
}

TEST(Patch, RejectsBadSizesAndCentres) {
  const Volume v = ramp({8, 8, 8});
  EXPECT_THROW(extract_patch(v, Voxel{1, 1, 1}, 7), std::invalid_argument);
  EXPECT_THROW(extract_patch(v, Voxel{1, 1, 1}, 4), std::invalid_argument);
  EXPECT_THROW(extract_patch(v, Voxel{1, 1, 1}, 32), std::invalid_argument);
  EXPECT_THROW(extract_patch(v, Voxel{9, 1, 1}, 8), std::invalid_argument);
}

TEST(VolumeIo, RoundTripIsBitExact) {
  const fs::path dir = scratch("io");
  Volume v(Dims{5, 4, 3}, {3.0, 2.5, 1.25});
  std::mt19937 rng(1);
  for (float& f : v.data()) f = std::uniform_real_distribution<float>(-1, 1)(rng);
  write_volume(dir / "vol", v);
  EXPECT_TRUE(fs::exists(dir / "vol.vol.json"));
  EXPECT_TRUE(fs::exists(dir / "vol.vol.raw"));
  const Volume r = read_volume(dir / "vol.vol.json");
  EXPECT_EQ(r.dims(), v.dims());
  EXPECT_EQ(r.spacing_mm().y, 2.5);
  for (std::size_t i = 0; i < v.data().size(); ++i) EXPECT_EQ(r.data()[i], v.data()[i]);
}

TEST(VolumeIo, HeatmapsAndPoseRoundTrip) {
  const fs::path dir = scratch("io");
  Pose p;
  for (int j = 0; j < 15; ++j) p.coords.push_back({j * 1.5, 2.0, 3.25});
  const HeatmapStack h = render_heatmaps(p, Dims{8, 6, 5}, {}, {3, 3, 3});
  write_heatmaps(dir / "hm", h);
  const HeatmapStack r = read_heatmaps(dir / "hm");
  ASSERT_EQ(r.channels(), 15);
  for (std::size_t i = 0; i < h.data().size(); ++i) ASSERT_EQ(r.data()[i], h.data()[i]);
  write_pose(dir / "p.json", p);
  const Pose q = read_pose(dir / "p.json");
  for (int j = 0; j < 15; ++j) EXPECT_EQ(q.coords[static_cast<std::size_t>(j)].x, p.coords[static_cast<std::size_t>(j)].x);
}

TEST(VolumeIo, MissingFileIsRuntimeError) {
  EXPECT_THROW(read_volume(scratch("io") / "does_not_exist"), std::runtime_error);
}
