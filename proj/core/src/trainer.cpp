#include "fetalpose/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "fetalpose/heatmap.hpp"
#include "fetalpose/patch.hpp"
#include "fetalpose/pipeline.hpp"
#include "fetalpose/skeleton.hpp"

namespace fetalpose {

void TrainConfig::validate() const {
  if (!(lr_max > 0)) throw std::invalid_argument("lr_max must be positive");
  if (!(weight_decay >= 0)) throw std::invalid_argument("weight_decay must be non-negative");
  if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (patches_per_volume < 1) throw std::invalid_argument("patches_per_volume must be >= 1");
  if (patch_size < 8 || patch_size % 2 != 0) throw std::invalid_argument("patch_size must be even and >= 8");
  if (!(restart_t0 > 0)) throw std::invalid_argument("restart_t0 must be positive");
  if (!(restart_tmult >= 1)) throw std::invalid_argument("restart_tmult must be >= 1");
  if (!(keypoint_centered_fraction >= 0 && keypoint_centered_fraction <= 1))
    throw std::invalid_argument("keypoint_centered_fraction must lie in [0, 1]");
  if (center_jitter < 0) throw std::invalid_argument("center_jitter must be non-negative");
  if (!(head_lr_scale > 0)) throw std::invalid_argument("head_lr_scale must be positive");
  if (!(heatmap_sigma > 0)) throw std::invalid_argument("heatmap_sigma must be positive");
  if (!(foreground_weight >= 0)) throw std::invalid_argument("foreground_weight must be non-negative");
  augment.validate();
}

double lr_schedule(double epoch_fraction, const TrainConfig& cfg) {
  if (!(epoch_fraction >= 0)) throw std::invalid_argument("epoch fraction must be non-negative");
  double start = 0.0, period = cfg.restart_t0;
  while (epoch_fraction >= start + period) {
    start += period;
    period *= cfg.restart_tmult;
  }
  const double t_cur = epoch_fraction - start;
  return 0.5 * cfg.lr_max * (1.0 + std::cos(std::numbers::pi * t_cur / period));
}

template <typename T>
AdamState<T> AdamState<T>::init(const std::vector<ParamTensor<T>>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.value.size(), T(0));
    s.v.emplace_back(p.value.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(std::vector<ParamTensor<T>>& params, AdamState<T>& state, double lr, double weight_decay,
               const AdamHyper& hyper) {
  if (state.m.size() != params.size() || state.v.size() != params.size())
    throw std::invalid_argument("optimizer state does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].value.size() || params[i].grad.size() != params[i].value.size())
      throw std::invalid_argument("optimizer state shape mismatch for " + params[i].name);
    if (!params[i].grad.all_finite()) throw std::domain_error("non-finite gradient in " + params[i].name + "; step rejected");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  const double decay = lr * weight_decay;
  if (!state.lr_scale.empty() && state.lr_scale.size() != params.size())
    throw std::invalid_argument("lr_scale does not match the parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double rate = state.lr_scale.empty() ? lr : lr * state.lr_scale[i];
    auto theta = params[i].value.values();
    auto g = params[i].grad.values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double gk = g[k];
      const double mk = hyper.beta1 * m[k] + (1.0 - hyper.beta1) * gk;
      const double vk = hyper.beta2 * v[k] + (1.0 - hyper.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      double th = theta[k];
      th -= rate * (mk / c1) / (std::sqrt(vk / c2) + hyper.eps);
      th -= decay * th;
      theta[k] = static_cast<T>(th);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(std::vector<ParamTensor<float>>&, AdamState<float>&, double, double, const AdamHyper&);
template void adam_step(std::vector<ParamTensor<double>>&, AdamState<double>&, double, double, const AdamHyper&);

bool TrainReport::same_trajectory(const TrainReport& o) const {
  return train_loss == o.train_loss && val_loss == o.val_loss && lr == o.lr && step_loss == o.step_loss &&
         steps == o.steps;
}

namespace {

struct PatchExample {
  Tensor<float> input;
  Tensor<float> target;
};

Voxel clamp_into(Vec3 p, Dims d) {
  auto c = [](double v, int hi) { return std::clamp(static_cast<int>(std::lround(v)), 0, hi - 1); };
  return {c(p.x, d.x), c(p.y, d.y), c(p.z, d.z)};
}

Tensor<float> targets_tensor(const Pose& pose, Voxel origin, int size, double sigma) {
  Pose local;
  for (const Vec3& c : pose.coords) local.coords.push_back(c - Vec3{double(origin.x), double(origin.y), double(origin.z)});
  HeatmapStack h = render_heatmaps(local, Dims{size, size, size}, HeatmapRenderConfig{sigma, 1.0});
  std::vector<float> values(h.data().begin(), h.data().end());
  return Tensor<float>(activation_shape(pose.size(), Dims{size, size, size}), std::move(values));
}

PatchExample make_example(const Volume& volume, const Pose& pose, Voxel center, int size, double sigma,
                          const AugmentTransform* t) {
  Volume patch = t ? t->apply_patch(volume, center, size) : extract_patch(volume, center, size);
  return {to_tensor(patch), targets_tensor(pose, patch_origin(center, size), size, sigma)};
}

double evaluate(const Hourglass<float>& model, const std::vector<PatchExample>& examples, float foreground_weight) {
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) total += mse_loss(model.infer(ex.input), ex.target, foreground_weight);
  return total / static_cast<double>(examples.size());
}

}  // namespace

TrainReport train(Hourglass<float>& model, const Dataset& data, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.train.empty()) throw std::invalid_argument("training split is empty");
  const SkeletonSpec& skeleton = fetal_skeleton();
  for (const auto& s : data.train)
    if (s.pose.size() != model.config().out_channels)
      throw std::invalid_argument("sample " + s.id + " has " + std::to_string(s.pose.size()) +
                                  " keypoints, model predicts " + std::to_string(model.config().out_channels));
  // keypoint sets other than the fetal skeleton have no known left/right pairing
  std::vector<int> mirror(static_cast<std::size_t>(model.config().out_channels));
  std::iota(mirror.begin(), mirror.end(), 0);
  if (model.config().out_channels == skeleton.size()) mirror = skeleton.mirror_map;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int P = cfg.patch_size;

  std::vector<PatchExample> val;
  for (int k = 0; k < cfg.max_val_patches && !data.val.empty(); ++k) {
    const Sample& s = data.val[static_cast<std::size_t>(k) % data.val.size()];
    const Vec3 kp = s.pose.coords[static_cast<std::size_t>(k) % s.pose.coords.size()];
    val.push_back(make_example(s.volume, s.pose, clamp_into(kp, s.volume.dims()), P, cfg.heatmap_sigma, nullptr));
  }

  const std::size_t n_items = data.train.size() * static_cast<std::size_t>(cfg.patches_per_volume);
  const std::size_t steps_per_epoch = (n_items + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size);
  AdamState<float> state = AdamState<float>::init(model.params());
  for (const auto& p : model.params()) state.lr_scale.push_back(p.name.starts_with("head.") ? cfg.head_lr_scale : 1.0);
  TrainReport report;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n_items);
    for (std::size_t i = 0; i < n_items; ++i) order[i] = i % data.train.size();
    std::shuffle(order.begin(), order.end(), rng);

    report.lr.push_back(lr_schedule(static_cast<double>(epoch), cfg));
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const double progress = epoch + static_cast<double>(step) / static_cast<double>(steps_per_epoch);
      const double lr = lr_schedule(progress, cfg);
      const std::size_t b0 = step * static_cast<std::size_t>(cfg.batch_size);
      const std::size_t b1 = std::min(n_items, b0 + static_cast<std::size_t>(cfg.batch_size));
      const float scale = 1.0f / static_cast<float>(b1 - b0);
      model.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t b = b0; b < b1; ++b) {
        const Sample& s = data.train[order[b]];
        const AugmentTransform t = AugmentTransform::sample(cfg.augment, rng);
        const Pose pose = t.apply(s.pose, s.volume.dims(), mirror);
        Voxel center;
        if (unit(rng) < cfg.keypoint_centered_fraction) {
          std::uniform_int_distribution<int> pick(0, pose.size() - 1);
          std::uniform_int_distribution<int> jitter(-cfg.center_jitter, cfg.center_jitter);
          const Vec3 kp = pose.coords[static_cast<std::size_t>(pick(rng))];
          const Vec3 jittered = kp + Vec3{double(jitter(rng)), double(jitter(rng)), double(jitter(rng))};
          center = clamp_into(jittered, s.volume.dims());
        } else {
          const Dims d = s.volume.dims();
          center = {std::uniform_int_distribution<int>(0, d.x - 1)(rng), std::uniform_int_distribution<int>(0, d.y - 1)(rng),
                    std::uniform_int_distribution<int>(0, d.z - 1)(rng)};
        }
        const PatchExample ex = make_example(s.volume, pose, center, P, cfg.heatmap_sigma, &t);

        Tape<float> tape;
        const auto x = tape.input(ex.input);
        const auto y = model.forward(tape, x);
        const auto fg = static_cast<float>(cfg.foreground_weight);
        const double loss = mse_loss(tape.value(y), ex.target, fg);
        if (!std::isfinite(loss))
          throw std::runtime_error("non-finite loss at step " + std::to_string(report.steps) + " (epoch " +
                                   std::to_string(epoch) + ")");
        tape.backward(y, mse_backward(tape.value(y), ex.target, scale, fg));
        batch_loss += loss * scale;
      }
      adam_step(model.params(), state, lr, cfg.weight_decay);
      epoch_loss += batch_loss;
      report.step_loss.push_back(batch_loss);
      ++report.steps;
    }
    report.train_loss.push_back(epoch_loss / static_cast<double>(steps_per_epoch));
    report.val_loss.push_back(evaluate(model, val, static_cast<float>(cfg.foreground_weight)));
    report.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    if (on_epoch) on_epoch(epoch, report);
  }
  return report;
}

}  // namespace fetalpose
