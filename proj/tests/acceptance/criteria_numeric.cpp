// Criteria with closed-form or finite-difference references: gradients,
// rendering, metric arithmetic and the learning-rate schedule.

#include <cmath>
#include <random>

#include "acceptance.hpp"
#include "fetalpose/heatmap.hpp"
#include "fetalpose/hourglass.hpp"
#include "fetalpose/layers.hpp"
#include "fetalpose/metrics.hpp"
#include "fetalpose/tape.hpp"
#include "fetalpose/trainer.hpp"
#include "oracles.hpp"

namespace fetalpose::acceptance {

namespace {

using T = Tensor<double>;

constexpr double kLayerTolerance = 1e-4;
constexpr double kEndToEndTolerance = 1e-3;

struct GradReport {
  double worst = 0.0;
  std::string worst_name;
  void add(const std::string& name, double err) {
    if (worst_name.empty() || err > worst) {
      worst = err;
      worst_name = name;
    }
  }
};

// Projected-loss gradient checks for each layer in 64-bit mode.
GradReport layer_gradients(std::mt19937_64& rng) {
  GradReport rep;
  for (int k : {3, 1}) {
    T x = oracle::random_tensor({2, 5, 4, 6}, rng);
    T w = oracle::random_tensor({3, 2, k, k, k}, rng);
    T b = oracle::random_tensor({3}, rng);
    const T proj = oracle::random_tensor({3, 5, 4, 6}, rng);
    auto loss = [&] { return oracle::dot(conv3d_forward(x, w, b), proj); };
    T gx(x.shape()), gw(w.shape()), gb(b.shape());
    conv3d_backward(x, w, proj, &gx, gw, gb);
    const std::string tag = "conv" + std::to_string(k);
    rep.add(tag + ".input", oracle::relative_error(gx.values(), oracle::numeric_gradient(x.values(), loss)));
    rep.add(tag + ".weights", oracle::relative_error(gw.values(), oracle::numeric_gradient(w.values(), loss)));
    rep.add(tag + ".bias", oracle::relative_error(gb.values(), oracle::numeric_gradient(b.values(), loss)));
  }
  {
    T x = oracle::random_tensor({2, 4, 4, 4}, rng);
    for (double& v : x.values()) v += v >= 0 ? 0.1 : -0.1;  // keep away from the kink
    const T proj = oracle::random_tensor(x.shape(), rng);
    T g(x.shape());
    relu_backward(relu_forward(x), proj, g);
    rep.add("relu", oracle::relative_error(g.values(),
                                           oracle::numeric_gradient(x.values(), [&] { return oracle::dot(relu_forward(x), proj); })));
  }
  {
    T a = oracle::random_tensor({2, 3, 3, 3}, rng), b = oracle::random_tensor({2, 3, 3, 3}, rng);
    const T proj = oracle::random_tensor(a.shape(), rng);
    auto loss = [&] { return oracle::dot(add_forward(a, b), proj); };
    rep.add("add.a", oracle::relative_error(proj.values(), oracle::numeric_gradient(a.values(), loss)));
    rep.add("add.b", oracle::relative_error(proj.values(), oracle::numeric_gradient(b.values(), loss)));
  }
  {
    T x = oracle::random_tensor({2, 4, 6, 4}, rng);
    const T proj = oracle::random_tensor({2, 2, 3, 2}, rng);
    T g(x.shape());
    maxpool2_backward(maxpool2_forward(x).argmax, proj, g);
    rep.add("maxpool2", oracle::relative_error(g.values(), oracle::numeric_gradient(x.values(), [&] {
                                                 return oracle::dot(maxpool2_forward(x).output, proj);
                                               })));
  }
  {
    T x = oracle::random_tensor({2, 2, 3, 2}, rng);
    const T proj = oracle::random_tensor({2, 4, 6, 4}, rng);
    T g(x.shape());
    upsample_nearest2_backward(proj, g);
    rep.add("upsample2", oracle::relative_error(g.values(), oracle::numeric_gradient(x.values(), [&] {
                                                  return oracle::dot(upsample_nearest2_forward(x), proj);
                                                })));
  }
  {
    T p = oracle::random_tensor({2, 3, 3, 3}, rng);
    const T t = oracle::random_tensor(p.shape(), rng);
    const T g = mse_backward(p, t);
    rep.add("mse", oracle::relative_error(g.values(), oracle::numeric_gradient(p.values(), [&] { return mse_loss(p, t); })));
  }
  return rep;
}

GradReport end_to_end_gradients(std::mt19937_64& rng) {
  GradReport rep;
  const HourglassConfig cfg{1, 2, 1, 1, 2};
  Hourglass<double> model = Hourglass<double>::build(cfg, rng, false);
  for (auto& p : model.params())
    if (p.value.rank() == 1)
      for (double& v : p.value.values()) v = std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
  T x = oracle::random_tensor({1, 8, 8, 8}, rng, 0.0, 1.0);
  const T target = oracle::random_tensor({2, 8, 8, 8}, rng, 0.0, 1.0);

  model.zero_grad();
  Tape<double> tape(true);
  const auto in = tape.input(x);
  const auto out = model.forward(tape, in);
  tape.backward(out, mse_backward(tape.value(out), target));
  const T grad_x = tape.grad(in);

  auto loss = [&] { return mse_loss(model.infer(x), target); };
  rep.add("input", oracle::relative_error(grad_x.values(), oracle::numeric_gradient(x.values(), loss)));
  for (auto& p : model.params()) {
    const std::vector<double> analytic(p.grad.values().begin(), p.grad.values().end());
    rep.add(p.name, oracle::relative_error(analytic, oracle::numeric_gradient(p.value.values(), loss)));
  }
  return rep;
}

}  // namespace

Outcome gradient_correctness(const Context&) {
  Stopwatch clock;
  std::mt19937_64 rng(31337);
  const GradReport layers = layer_gradients(rng);
  const GradReport e2e = end_to_end_gradients(rng);
  const double secs = clock.seconds();
  Checks checks;
  checks.expect(layers.worst < kLayerTolerance, cat("layer ", layers.worst_name, " rel err ", layers.worst));
  checks.expect(e2e.worst < kEndToEndTolerance, cat("end-to-end ", e2e.worst_name, " rel err ", e2e.worst));
  checks.expect(secs <= 120.0, cat("runtime ", secs, " s exceeds 120 s"));
  return checks.outcome(cat("worst layer rel err ", layers.worst, " (", layers.worst_name, ", limit 1e-4), worst ",
                            "end-to-end rel err ", e2e.worst, " (", e2e.worst_name, ", limit 1e-3)"));
}

Outcome rendering_identities(const Context&) {
  Checks checks;
  const Dims dims{40, 36, 32};
  const HeatmapRenderConfig cfg{2.0, 1.0};

  Pose on_voxel{{{10.0, 12.0, 9.0}, {30.0, 20.0, 16.0}}};
  const HeatmapStack h = render_heatmaps(on_voxel, dims, cfg);
  const float peak = h.channel(0)[dims.index(10, 12, 9)];
  const float offset = h.channel(0)[dims.index(12, 12, 9)];
  checks.expect(peak == 1.0f, cat("peak ", peak));
  checks.expect(std::abs(offset - std::exp(-0.5)) <= 1e-6, cat("value at 2 voxels ", offset));
  for (int c = 0; c < 2; ++c) {
    const Voxel a = argmax_voxel(h.channel(c), dims);
    checks.expect(a.center().x == on_voxel.coords[c].x && a.center().y == on_voxel.coords[c].y &&
                      a.center().z == on_voxel.coords[c].z,
                  "on-voxel argmax moved");
  }

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    Pose p;
    for (int j = 0; j < 15; ++j) p.coords.push_back({u(rng) * (dims.x - 1), u(rng) * (dims.y - 1), u(rng) * (dims.z - 1)});
    const HeatmapStack r = render_heatmaps(p, dims, cfg);
    for (int j = 0; j < 15; ++j) {
      const Vec3 a = argmax_voxel(r.channel(j), dims).center();
      for (int ax = 0; ax < 3; ++ax) worst = std::max(worst, std::abs(a[ax] - p.coords[static_cast<std::size_t>(j)][ax]));
    }
  }
  checks.expect(worst <= 0.5, cat("round trip off by ", worst, " voxels"));
  return checks.outcome(cat("peak ", peak, ", value at (2,0,0) ", offset, " vs exp(-0.5)=", std::exp(-0.5),
                            ", render/argmax worst per-axis error ", worst, " voxel over 3000 keypoints"));
}

Outcome metric_unit_checks(const Context&) {
  Checks checks;
  const Vec3 spacing{3.0, 3.0, 3.0};
  auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };
  const double t5 = round2(kPckThresholdsMm[0] / spacing.x);
  const double t10 = round2(kPckThresholdsMm[1] / spacing.x);
  checks.expect(t5 == 1.67, cat("5 mm = ", t5, " voxels"));
  checks.expect(t10 == 3.33, cat("10 mm = ", t10, " voxels"));

  const std::vector<double> errs{4.0, 12.0};
  const double p = pck(errs, 10.0);
  checks.expect(p == 0.5, cat("PCK({4,12}, 10) = ", p));

  // The same arithmetic through the pose-error path: 4 voxels -> 12 mm.
  const Pose truth{{{0, 0, 0}, {0, 0, 0}}};
  const Pose pred{{{4.0 / 3.0, 0, 0}, {0, 4, 0}}};
  const auto e = keypoint_errors(pred, truth, spacing);
  checks.expect(std::abs(e[0] - 4.0) < 1e-12 && e[1] == 12.0, "voxel-to-mm conversion");
  checks.expect(pck(e, 10.0) == 0.5, "PCK via keypoint errors");
  return checks.outcome(cat("5 mm = ", t5, " voxels, 10 mm = ", t10, " voxels at 3 mm; PCK({4,12} mm, 10 mm) = ", p));
}

Outcome optimizer_schedule(const Context&) {
  Checks checks;
  const TrainConfig cfg;
  checks.expect(lr_schedule(0.0, cfg) == 5e-3, cat("lr(0) = ", lr_schedule(0.0, cfg)));
  int boundaries = 0;
  double start = 0.0, period = cfg.restart_t0;
  while (start + period <= cfg.epochs) {
    const double boundary = start + period;
    const double half = start + period / 2.0;
    const double at_boundary = lr_schedule(boundary, cfg);
    const double at_half = lr_schedule(half, cfg);
    checks.expect(at_boundary == cfg.lr_max, cat("lr at restart ", boundary, " = ", at_boundary));
    checks.expect(std::abs(at_half - cfg.lr_max / 2.0) <= 1e-18, cat("lr at half period ", half, " = ", at_half));
    checks.expect(at_half == oracle::cosine_restart_lr(half, cfg.lr_max, cfg.restart_t0, cfg.restart_tmult),
                  "half-period value differs from the reference formula");
    const double just_before = lr_schedule(std::nextafter(boundary, 0.0), cfg);
    checks.expect(just_before >= 0.0 && just_before < 1e-15, cat("lr just before restart ", boundary, " = ", just_before));
    ++boundaries;
    start += period;
    period *= cfg.restart_tmult;
  }
  for (double t = 0.0; t < cfg.epochs; t += 0.37) {
    const double lr = lr_schedule(t, cfg);
    checks.expect(lr >= 0.0 && lr <= cfg.lr_max, cat("lr(", t, ") out of range"));
  }
  return checks.outcome(cat("lr(0) = ", lr_schedule(0.0, cfg), ", ", boundaries,
                            " restart boundaries return to lr_max, half periods = lr_max/2"));
}

}  // namespace fetalpose::acceptance
