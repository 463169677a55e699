#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fetalpose/augment.hpp"
#include "fetalpose/dataset.hpp"
#include "fetalpose/hourglass.hpp"

namespace fetalpose {

struct TrainConfig {
  double lr_max = 5e-3;
  double weight_decay = 1e-4;
  int epochs = 200;
  int batch_size = 2;
  int patch_size = 64;
  /// Patches drawn per training volume per epoch.
  int patches_per_volume = 1;
  double restart_t0 = 10.0;  // epochs
  double restart_tmult = 2.0;
  double keypoint_centered_fraction = 0.7;
  int center_jitter = 16;  // voxels
  AugmentConfig augment;
  double heatmap_sigma = 2.0;
  /// Loss weight 1 + foreground_weight * target; 0 is plain MSE.
  double foreground_weight = 0.0;
  /// Learning-rate multiplier for the output head.
  double head_lr_scale = 1.0;
  /// Validation patches evaluated per epoch (0 disables validation).
  int max_val_patches = 8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Cosine annealing with warm restarts: eta = 0.5 * lr_max * (1 + cos(pi * T_cur / T_i)),
/// T_0 = restart_t0 epochs, each period T_mult times the previous one.
double lr_schedule(double epoch_fraction, const TrainConfig& cfg);

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment buffers, one per parameter tensor.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  /// Optional per-tensor learning-rate multiplier (empty means 1).
  std::vector<double> lr_scale;
  long step = 0;

  static AdamState init(const std::vector<ParamTensor<T>>& params);
};

/// Bias-corrected Adam step followed by decoupled weight decay
/// (theta -= lr * wd * theta). Throws std::domain_error, leaving params and
/// state untouched, when any gradient is non-finite.
template <typename T>
void adam_step(std::vector<ParamTensor<T>>& params, AdamState<T>& state, double lr, double weight_decay,
               const AdamHyper& hyper = {});

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> lr;  // learning rate at the start of each epoch
  std::vector<double> seconds;
  std::vector<double> step_loss;  // mean batch loss of every optimizer step
  long steps = 0;

  /// Everything except wall-clock.
  bool same_trajectory(const TrainReport& other) const;
};

/// Called after each epoch with (epoch index, report so far).
using EpochCallback = std::function<void(int, const TrainReport&)>;

/// Patch-based MSE training. Deterministic for a fixed config and seed.
/// Throws std::invalid_argument for an empty training split and
/// std::runtime_error naming the step index on a non-finite loss.
TrainReport train(Hourglass<float>& model, const Dataset& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

}  // namespace fetalpose
