#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fetalpose/augment.hpp"
#include "fetalpose/heatmap.hpp"
#include "fetalpose/patch.hpp"
#include "fetalpose/skeleton.hpp"

using namespace fetalpose;

namespace {

Volume noise_volume(Dims d, unsigned seed) {
  Volume v(d, {3, 3, 3});
  std::mt19937 rng(seed);
  for (float& f : v.data()) f = std::uniform_real_distribution<float>(0, 1)(rng);
  return v;
}

float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST(Augment, DegenerateConfigIsIdentity) {
  const Volume v = noise_volume({10, 9, 8}, 1);
  const Pose p{{{1.5, 2.0, 3.0}, {7.0, 1.0, 4.25}}};
  AugmentConfig cfg;
  cfg.max_rot_deg = 0;
  cfg.flip_prob = 0;
  cfg.intensity_lo = cfg.intensity_hi = 1.0;
  std::mt19937_64 rng(3);
  const std::vector<int> mirror{1, 0};
  const auto [v2, p2] = augment(v, p, cfg, mirror, rng);
  for (std::size_t i = 0; i < v.data().size(); ++i) ASSERT_EQ(v2.data()[i], v.data()[i]);
  for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(p2.coords[j].x, p.coords[j].x);
}

TEST(Augment, XFlipSwapsLeftAndRightLabels) {
  // keypoint 0 = ankle_L, 1 = ankle_R
  const Dims d{20, 10, 10};
  const Pose p{{{3.0, 4.0, 5.0}, {15.0, 4.0, 5.0}}};
  AugmentTransform t;
  t.flip = {true, false, false};
  const std::vector<int> mirror{1, 0};
  const Pose q = t.apply(p, d, mirror);
  EXPECT_EQ(q.coords[0].x, 19.0 - 15.0);  // new left = mirrored old right
  EXPECT_EQ(q.coords[1].x, 19.0 - 3.0);
  EXPECT_EQ(q.coords[0].y, 4.0);
}

TEST(Augment, EvenFlipCountKeepsLabels) {
  AugmentTransform t;
  t.flip = {true, true, false};
  EXPECT_FALSE(t.mirrors());
  const Pose p{{{3.0, 4.0, 5.0}, {15.0, 4.0, 5.0}}};
  const Pose q = t.apply(p, Dims{20, 10, 10}, std::vector<int>{1, 0});
  EXPECT_EQ(q.coords[0].x, 16.0);
  EXPECT_EQ(q.coords[0].y, 5.0);
}

TEST(Augment, QuarterTurnAboutZPermutesCoordinates) {
  const Dims d{21, 21, 11};
  const Vec3 c{10, 10, 5};
  const Pose p{{c + Vec3{4, 0, 0}}};
  AugmentTransform t;
  t.rotation = Mat3::rotation_z(std::numbers::pi / 2);
  t.rotate = true;
  const Pose q = t.apply(p, d, std::vector<int>{0});
  EXPECT_NEAR(q.coords[0].x, 10.0, 1e-12);
  EXPECT_NEAR(q.coords[0].y, 14.0, 1e-12);
  EXPECT_NEAR(q.coords[0].z, 5.0, 1e-12);

  const HeatmapStack h = render_heatmaps(p, d);
  const HeatmapStack moved = t.apply(h, std::vector<int>{0});
  const HeatmapStack direct = render_heatmaps(q, d);
  EXPECT_LE(max_abs_diff(moved.data(), direct.data()), 0.05f);
}

TEST(Augment, LabelConsistencyUnderRandomTransforms) {
  const SkeletonSpec& sk = fetal_skeleton();
  const Dims d{40, 40, 32};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.3, 0.7);
  AugmentConfig cfg;  // defaults: +-30 deg, flips at 0.5
  // trilinear error of a unit Gaussian: h^2/8 * |f''| <= 1/(8 sigma^2) per axis
  const double sigma = HeatmapRenderConfig{}.sigma_voxels;
  const float interp_bound = static_cast<float>(3.0 / (8.0 * sigma * sigma));
  for (int trial = 0; trial < 5; ++trial) {
    Pose p;
    for (int j = 0; j < sk.size(); ++j) p.coords.push_back({u(rng) * d.x, u(rng) * d.y, u(rng) * d.z});
    const AugmentTransform t = AugmentTransform::sample(cfg, rng);
    const HeatmapStack moved = t.apply(render_heatmaps(p, d), sk.mirror_map);
    const HeatmapStack direct = render_heatmaps(t.apply(p, d, sk.mirror_map), d);
    EXPECT_LE(max_abs_diff(moved.data(), direct.data()), interp_bound) << "trial " << trial;
  }
}

TEST(Augment, FlipIsAnInvolution) {
  const Volume v = noise_volume({7, 6, 5}, 4);
  for (int a = 0; a < 3; ++a) {
    const Volume back = flip_axis(flip_axis(v, a), a);
    for (std::size_t i = 0; i < v.data().size(); ++i) ASSERT_EQ(back.data()[i], v.data()[i]);
  }
  // Dyadic coordinates make (N-1) - ((N-1) - p) exact.
  std::mt19937_64 rng(5);
  Pose p;
  for (int j = 0; j < 15; ++j)
    p.coords.push_back({std::uniform_int_distribution<int>(0, 1500)(rng) / 256.0,
                        std::uniform_int_distribution<int>(0, 1500)(rng) / 256.0,
                        std::uniform_int_distribution<int>(0, 1200)(rng) / 256.0});
  AugmentTransform t;
  t.flip = {true, false, true};
  const Dims d{7, 6, 5};
  const Pose back = t.apply(t.apply(p, d, fetal_skeleton().mirror_map), d, fetal_skeleton().mirror_map);
  for (std::size_t j = 0; j < 15; ++j) {
    EXPECT_EQ(back.coords[j].x, p.coords[j].x);
    EXPECT_EQ(back.coords[j].z, p.coords[j].z);
  }
}

TEST(Augment, IntensityScalesValues) {
  const Volume v = noise_volume({5, 5, 5}, 9);
  AugmentTransform t;
  t.intensity = 1.25;
  const Volume s = t.apply(v);
  for (std::size_t i = 0; i < v.data().size(); ++i) EXPECT_FLOAT_EQ(s.data()[i], v.data()[i] * 1.25f);
}

TEST(Augment, SampledFactorsStayInConfiguredRanges) {
  AugmentConfig cfg;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 200; ++i) {
    const AugmentTransform t = AugmentTransform::sample(cfg, rng);
    EXPECT_GE(t.intensity, 0.8);
    EXPECT_LE(t.intensity, 1.2);
  }
}

TEST(Augment, PatchPathMatchesFullVolumePath) {
  const Volume v = noise_volume({24, 22, 20}, 2);
  AugmentConfig cfg;
  cfg.flip_prob = 0.5;
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 4; ++trial) {
    const AugmentTransform t = AugmentTransform::sample(cfg, rng);
    const Voxel centre{5 + 3 * trial, 11, 9};
    const Volume a = t.apply_patch(v, centre, 12);
    const Volume b = extract_patch(t.apply(v), centre, 12);
    EXPECT_LE(max_abs_diff(a.data(), b.data()), 1e-5f);
  }
}

TEST(Augment, ConfigValidation) {
  AugmentConfig c;
  c.intensity_lo = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.flip_prob = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.max_rot_deg = 181;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
