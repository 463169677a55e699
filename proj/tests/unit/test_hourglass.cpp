#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "fetalpose/checkpoint.hpp"
#include "fetalpose/hourglass.hpp"
#include "oracles.hpp"

using namespace fetalpose;
namespace fs = std::filesystem;

namespace {

Tensor<float> smooth_input(Dims d, unsigned seed) {
  // Random blobs so every layer sees structured, non-constant input.
  Tensor<float> t(activation_shape(1, d));
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> centres;
  for (int k = 0; k < 12; ++k) centres.push_back({u(rng) * d.x, u(rng) * d.y, u(rng) * d.z});
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x) {
        double v = 0.0;
        for (const Vec3& c : centres) {
          const Vec3 q = Vec3{double(x), double(y), double(z)} - c;
          v += oracle::gaussian(dot(q, q), 3.0);
        }
        t[d.index(x, y, z)] = static_cast<float>(v);
      }
  return t;
}

Tensor<float> shifted(const Tensor<float>& t, Voxel s) {
  const Dims d = t.spatial();
  Tensor<float> out(t.shape());
  for (int z = 0; z < d.z; ++z)
    for (int y = 0; y < d.y; ++y)
      for (int x = 0; x < d.x; ++x)
        if (d.contains(x - s.x, y - s.y, z - s.z)) out[d.index(x, y, z)] = t[d.index(x - s.x, y - s.y, z - s.z)];
  return out;
}

// Max |a(v) - b(v + offset)| over channels and voxels v of `a` at least `margin` from its border.
float interior_diff(const Tensor<float>& a, const Tensor<float>& b, Voxel offset, int margin) {
  const Dims da = a.spatial(), db = b.spatial();
  float worst = 0.0f;
  for (int c = 0; c < a.channels(); ++c)
    for (int z = margin; z < da.z - margin; ++z)
      for (int y = margin; y < da.y - margin; ++y)
        for (int x = margin; x < da.x - margin; ++x) {
          const float va = a[static_cast<std::size_t>(c) * da.voxels() + da.index(x, y, z)];
          const float vb = b[static_cast<std::size_t>(c) * db.voxels() + db.index(x + offset.x, y + offset.y, z + offset.z)];
          worst = std::max(worst, std::abs(va - vb));
        }
  return worst;
}

}  // namespace

TEST(Hourglass, ParamCountMatchesLayerByLayerSum) {
  const HourglassConfig cfg{1, 8, 2, 1, 15};
  std::mt19937_64 rng(1);
  const auto model = Hourglass<float>::build(cfg, rng);
  EXPECT_EQ(model.param_count(), oracle::hourglass_params_by_enumeration(cfg));
  EXPECT_EQ(model.param_count(), 19471u);
  EXPECT_EQ(hourglass_param_count(cfg), 19471u);
  for (const HourglassConfig c : {HourglassConfig{1, 16, 3, 1, 15}, HourglassConfig{2, 5, 1, 2, 3}, HourglassConfig{1, 4, 4, 3, 7}})
    EXPECT_EQ(hourglass_param_count(c), oracle::hourglass_params_by_enumeration(c));
}

TEST(Hourglass, SingleConvCountsWeightAndBias) {
  EXPECT_EQ(ParamTensor<float>("w", Tensor<float>({1, 1, 1, 1, 1})).value.size() +
                ParamTensor<float>("b", Tensor<float>({1})).value.size(),
            2u);
}

TEST(Hourglass, NamesAreUniqueAndHeadHasJChannels) {
  std::mt19937_64 rng(2);
  const auto m = Hourglass<float>::build({1, 4, 2, 2, 15}, rng);
  std::set<std::string> names;
  for (const auto& p : m.params()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  EXPECT_EQ(m.param("head.w").value.dim(0), 15);
}

TEST(Hourglass, SameSeedIsBitIdentical) {
  std::mt19937_64 a(42), b(42);
  const auto ma = Hourglass<float>::build({1, 8, 2, 1, 15}, a);
  const auto mb = Hourglass<float>::build({1, 8, 2, 1, 15}, b);
  for (std::size_t i = 0; i < ma.params().size(); ++i)
    for (std::size_t k = 0; k < ma.params()[i].value.size(); ++k)
      ASSERT_EQ(ma.params()[i].value[k], mb.params()[i].value[k]);
}

TEST(Hourglass, InitIsFanInScaledWithZeroBias) {
  std::mt19937_64 rng(3);
  const auto m = Hourglass<float>::build({1, 16, 3, 1, 15}, rng);
  for (const auto& p : m.params()) {
    if (p.value.rank() == 1) {
      for (float v : p.value.values()) ASSERT_EQ(v, 0.0f);
      continue;
    }
    const auto& s = p.value.shape();
    const double bound = std::sqrt(6.0 / (s[1] * s[2] * s[3] * s[4]));
    for (float v : p.value.values()) ASSERT_LE(std::abs(v), bound + 1e-7) << p.name;
  }
}

TEST(Hourglass, ZeroHeadGivesZeroHeatmaps) {
  std::mt19937_64 rng(4);
  auto m = Hourglass<float>::build({1, 4, 2, 1, 3}, rng, false);
  m.param("head.w").value.fill(0.0f);
  m.param("head.b").value.fill(0.0f);
  const auto out = m.infer(smooth_input({8, 8, 8}, 1));
  for (float v : out.values()) ASSERT_EQ(v, 0.0f);
}

TEST(Hourglass, DefaultBuildStartsFromZeroHeatmaps) {
  std::mt19937_64 rng(4);
  const auto m = Hourglass<float>::build({1, 4, 2, 1, 3}, rng);
  const auto out = m.infer(smooth_input({8, 8, 8}, 2));
  for (float v : out.values()) ASSERT_EQ(v, 0.0f);
  for (float v : m.param("enc0.res0.conv1.w").value.values()) ASSERT_LE(std::abs(v), 1.0f);
}

TEST(Hourglass, OutputKeepsSpatialDimsWithJChannels) {
  std::mt19937_64 rng(5);
  const auto m = Hourglass<float>::build({1, 2, 3, 1, 15}, rng);
  const auto out = m.infer(Tensor<float>(activation_shape(1, {64, 64, 64}), 0.5f));
  EXPECT_EQ(out.shape(), (std::vector<int>{15, 64, 64, 64}));
}

TEST(Hourglass, IndivisibleDimsReportPadding) {
  std::mt19937_64 rng(6);
  const auto m = Hourglass<float>::build({1, 2, 3, 1, 2}, rng);
  try {
    m.infer(Tensor<float>(activation_shape(1, {20, 16, 16})));
    FAIL() << "expected rejection";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("pad axis x by 4"), std::string::npos) << e.what();
  }
}

TEST(Hourglass, ShiftByDivisorShiftsInterior) {
  for (int S : {1, 2}) {
    std::mt19937_64 rng(7);
    const HourglassConfig cfg{1, 4, S, 1, 3};
    const auto m = Hourglass<float>::build(cfg, rng, false);
    const int n = S == 1 ? 32 : 72;
    const int margin = S == 1 ? 12 : 30;  // receptive-field radius plus the shift
    const Tensor<float> x = smooth_input({n, n, n}, 3);
    const int s = cfg.divisor();
    const auto a = m.infer(x);
    const auto b = m.infer(shifted(x, {s, s, s}));
    EXPECT_LE(interior_diff(a, b, {s, s, s}, margin + s), 1e-4f) << "S=" << S;
  }
}

TEST(Hourglass, PatchForwardEqualsCropOfLargerForward) {
  std::mt19937_64 rng(8);
  const HourglassConfig cfg{1, 4, 2, 1, 3};
  const auto m = Hourglass<float>::build(cfg, rng, false);
  const Dims big{104, 104, 104};
  const Tensor<float> x = smooth_input(big, 9);
  const int p = 72;
  const Voxel o{16, 8, 24};  // multiples of 2^S keep the pooling grid aligned
  Tensor<float> patch(activation_shape(1, {p, p, p}));
  for (int z = 0; z < p; ++z)
    for (int y = 0; y < p; ++y)
      for (int xx = 0; xx < p; ++xx) patch[Dims{p, p, p}.index(xx, y, z)] = x[big.index(xx + o.x, y + o.y, z + o.z)];
  EXPECT_LE(interior_diff(m.infer(patch), m.infer(x), o, 30), 1e-4f);
}

TEST(Hourglass, EndToEndGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  const HourglassConfig cfg{1, 2, 1, 1, 2};
  auto model = Hourglass<double>::build(cfg, rng, false);
  for (auto& p : model.params())
    if (p.value.rank() == 1)
      for (double& v : p.value.values()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  Tensor<double> x = oracle::random_tensor({1, 8, 8, 8}, rng, 0.0, 1.0);
  const Tensor<double> target = oracle::random_tensor({2, 8, 8, 8}, rng, 0.0, 1.0);
  model.zero_grad();
  Tape<double> tape(true);
  const auto in = tape.input(x);
  const auto out = model.forward(tape, in);
  tape.backward(out, mse_backward(tape.value(out), target));
  auto loss = [&] { return mse_loss(model.infer(x), target); };
  const Tensor<double> gx = tape.grad(in);
  EXPECT_LT(oracle::relative_error(gx.values(), oracle::numeric_gradient(x.values(), loss)), 1e-3);
  for (auto& p : model.params()) {
    const std::vector<double> analytic(p.grad.values().begin(), p.grad.values().end());
    EXPECT_LT(oracle::relative_error(analytic, oracle::numeric_gradient(p.value.values(), loss)), 1e-3) << p.name;
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const fs::path dir = fs::temp_directory_path() / "fetalpose_unit" / "ckpt";
  std::mt19937_64 rng(11);
  const auto m = Hourglass<float>::build({1, 4, 2, 1, 15}, rng, false);
  save_checkpoint(dir / "model", m);
  const auto r = load_checkpoint(dir / "model.ckpt.json");
  EXPECT_TRUE(r.config() == m.config());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    EXPECT_EQ(r.params()[i].name, m.params()[i].name);
    for (std::size_t k = 0; k < m.params()[i].value.size(); ++k) ASSERT_EQ(r.params()[i].value[k], m.params()[i].value[k]);
  }
}

TEST(Checkpoint, MissingOrTruncatedFilesAreRuntimeErrors) {
  const fs::path dir = fs::temp_directory_path() / "fetalpose_unit" / "ckpt_bad";
  EXPECT_THROW(load_checkpoint(dir / "nothing"), std::runtime_error);
  std::mt19937_64 rng(12);
  save_checkpoint(dir / "model", Hourglass<float>::build({1, 2, 1, 1, 2}, rng));
  fs::resize_file(dir / "model.ckpt.bin", 10);
  EXPECT_THROW(load_checkpoint(dir / "model"), std::runtime_error);
}
