#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "fetalpose/tape.hpp"
#include "fetalpose/tensor.hpp"
#include "fetalpose/volume.hpp"

namespace fetalpose {

struct HourglassConfig {
  int in_channels = 1;
  int base_channels = 16;      // C, shared by every scale
  int num_scales = 3;          // S downsamplings
  int resblocks_per_scale = 1; // R
  int out_channels = 15;       // J

  void validate() const;
  /// Spatial dims must be multiples of this (2^S).
  int divisor() const { return 1 << num_scales; }
  friend bool operator==(const HourglassConfig&, const HourglassConfig&) = default;
};

/// Single 3D hourglass: resblock encoder with max-pool downsampling, a
/// bottleneck, and a decoder that upsamples (nearest + conv3) and adds the
/// encoder feature of the same scale. Linear 1x1x1 head.
///
/// Resblock: conv3 -> relu -> conv3, plus identity skip (1x1x1 projection
/// when channel counts differ), relu after the sum.
template <typename T>
class Hourglass {
 public:
  Hourglass() = default;

  /// Fan-in scaled uniform init (weights in +-sqrt(6/fan_in), zero bias).
  /// The head starts at zero unless zero_head is false.
  static Hourglass build(const HourglassConfig& cfg, std::mt19937_64& rng, bool zero_head = true);
  /// Same topology with all parameters zero.
  static Hourglass zeros(const HourglassConfig& cfg);

  const HourglassConfig& config() const { return config_; }
  std::vector<ParamTensor<T>>& params() { return params_; }
  const std::vector<ParamTensor<T>>& params() const { return params_; }
  ParamTensor<T>& param(std::string_view name);
  const ParamTensor<T>& param(std::string_view name) const;

  std::size_t param_count() const;
  void zero_grad();

  /// Records the forward pass of one [in_channels, Z, Y, X] sample on a tape.
  typename Tape<T>::Value forward(Tape<T>& tape, typename Tape<T>::Value input);
  /// Gradient-free forward pass. Throws if spatial dims are not multiples of 2^S.
  Tensor<T> infer(const Tensor<T>& input) const;

  /// Throws std::invalid_argument naming the required padding.
  void check_input(const Tensor<T>& input) const;

  template <typename U>
  Hourglass<U> cast() const {
    Hourglass<U> out = Hourglass<U>::zeros(config_);
    for (std::size_t i = 0; i < params_.size(); ++i) out.params()[i].value = params_[i].value.template cast<U>();
    return out;
  }

 private:
  struct Conv {
    int weights = -1;
    int bias = -1;
  };
  struct ResBlock {
    Conv first;
    Conv second;
    std::optional<Conv> projection;
  };

  template <typename Exec, typename Self>
  static typename Exec::Value run(Self& self, Exec& exec, typename Exec::Value x);

  Conv add_conv(const std::string& name, int in_ch, int out_ch, int k);
  ResBlock add_resblock(const std::string& name, int in_ch, int out_ch);
  void layout();

  HourglassConfig config_;
  std::vector<ParamTensor<T>> params_;
  std::vector<std::vector<ResBlock>> encoder_;
  std::vector<ResBlock> bottleneck_;
  std::vector<Conv> up_convs_;
  std::vector<std::vector<ResBlock>> decoder_;
  Conv head_;
};

/// Closed-form scalar parameter count for a config.
std::size_t hourglass_param_count(const HourglassConfig& cfg);

extern template class Hourglass<float>;
extern template class Hourglass<double>;

}  // namespace fetalpose
