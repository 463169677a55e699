#include "fetalpose/hourglass.hpp"

#include <cmath>
#include <stdexcept>

namespace fetalpose {

void HourglassConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("in_channels must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
  if (num_scales < 1) throw std::invalid_argument("num_scales must be >= 1");
  if (num_scales > 10) throw std::invalid_argument("num_scales must be <= 10");
  if (resblocks_per_scale < 1) throw std::invalid_argument("resblocks_per_scale must be >= 1");
  if (out_channels < 1) throw std::invalid_argument("out_channels must be >= 1");
}

std::size_t hourglass_param_count(const HourglassConfig& cfg) {
  cfg.validate();
  const std::size_t C = static_cast<std::size_t>(cfg.base_channels);
  const std::size_t in = static_cast<std::size_t>(cfg.in_channels);
  const std::size_t S = static_cast<std::size_t>(cfg.num_scales);
  const std::size_t R = static_cast<std::size_t>(cfg.resblocks_per_scale);
  auto conv = [](std::size_t ci, std::size_t co, std::size_t k) { return co * ci * k * k * k + co; };
  auto resblock = [&](std::size_t ci, std::size_t co) {
    return conv(ci, co, 3) + conv(co, co, 3) + (ci != co ? conv(ci, co, 1) : 0);
  };
  std::size_t total = resblock(in, C) + (S * R - 1) * resblock(C, C);  // encoder
  total += R * resblock(C, C);                                         // bottleneck
  total += S * (conv(C, C, 3) + R * resblock(C, C));                   // decoder
  total += conv(C, static_cast<std::size_t>(cfg.out_channels), 1);     // head
  return total;
}

template <typename T>
typename Hourglass<T>::Conv Hourglass<T>::add_conv(const std::string& name, int in_ch, int out_ch, int k) {
  Conv c;
  c.weights = static_cast<int>(params_.size());
  params_.emplace_back(name + ".w", Tensor<T>({out_ch, in_ch, k, k, k}));
  c.bias = static_cast<int>(params_.size());
  params_.emplace_back(name + ".b", Tensor<T>({out_ch}));
  return c;
}

template <typename T>
typename Hourglass<T>::ResBlock Hourglass<T>::add_resblock(const std::string& name, int in_ch, int out_ch) {
  ResBlock r;
  r.first = add_conv(name + ".conv1", in_ch, out_ch, 3);
  r.second = add_conv(name + ".conv2", out_ch, out_ch, 3);
  if (in_ch != out_ch) r.projection = add_conv(name + ".proj", in_ch, out_ch, 1);
  return r;
}

template <typename T>
void Hourglass<T>::layout() {
  const HourglassConfig& c = config_;
  const int C = c.base_channels;
  encoder_.assign(static_cast<std::size_t>(c.num_scales), {});
  decoder_.assign(static_cast<std::size_t>(c.num_scales), {});
  for (int s = 0; s < c.num_scales; ++s)
    for (int r = 0; r < c.resblocks_per_scale; ++r) {
      const int in = (s == 0 && r == 0) ? c.in_channels : C;
      encoder_[static_cast<std::size_t>(s)].push_back(
          add_resblock("enc" + std::to_string(s) + ".res" + std::to_string(r), in, C));
    }
  for (int r = 0; r < c.resblocks_per_scale; ++r) bottleneck_.push_back(add_resblock("mid.res" + std::to_string(r), C, C));
  up_convs_.resize(static_cast<std::size_t>(c.num_scales));
  for (int s = c.num_scales - 1; s >= 0; --s) {
    up_convs_[static_cast<std::size_t>(s)] = add_conv("dec" + std::to_string(s) + ".up", C, C, 3);
    for (int r = 0; r < c.resblocks_per_scale; ++r)
      decoder_[static_cast<std::size_t>(s)].push_back(
          add_resblock("dec" + std::to_string(s) + ".res" + std::to_string(r), C, C));
  }
  head_ = add_conv("head", C, c.out_channels, 1);
}

template <typename T>
Hourglass<T> Hourglass<T>::zeros(const HourglassConfig& cfg) {
  cfg.validate();
  Hourglass h;
  h.config_ = cfg;
  h.layout();
  return h;
}

template <typename T>
Hourglass<T> Hourglass<T>::build(const HourglassConfig& cfg, std::mt19937_64& rng, bool zero_head) {
  Hourglass h = zeros(cfg);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  // Convs that close a residual branch are shrunk by 1/sqrt(#additions) so the
  // un-normalized stack keeps unit-scale activations; the linear head uses the
  // variance-preserving bound without the ReLU gain. A zero head starts
  // training from all-zero heatmaps instead of a random field that the first
  // updates would otherwise fight.
  const int additions = (2 * cfg.num_scales + 1) * cfg.resblocks_per_scale + cfg.num_scales;
  const double branch_scale = 1.0 / std::sqrt(static_cast<double>(additions));
  for (auto& p : h.params_) {
    if (p.value.rank() != 5) continue;  // biases stay zero
    const auto& s = p.value.shape();
    const double fan_in = static_cast<double>(s[1]) * s[2] * s[3] * s[4];
    double bound = std::sqrt(6.0 / fan_in);
    if (p.name.ends_with(".conv2.w") || p.name.ends_with(".up.w")) bound *= branch_scale;
    if (p.name == "head.w") bound = zero_head ? 0.0 : std::sqrt(3.0 / fan_in);
    for (T& v : p.value.values()) v = static_cast<T>(bound * unit(rng));
  }
  return h;
}

template <typename T>
ParamTensor<T>& Hourglass<T>::param(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("no parameter named " + std::string(name));
}

template <typename T>
const ParamTensor<T>& Hourglass<T>::param(std::string_view name) const {
  return const_cast<Hourglass&>(*this).param(name);
}

template <typename T>
std::size_t Hourglass<T>::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Hourglass<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void Hourglass<T>::check_input(const Tensor<T>& input) const {
  if (input.rank() != 4 || input.channels() != config_.in_channels)
    throw std::invalid_argument("hourglass input must be [" + std::to_string(config_.in_channels) + ",Z,Y,X], got " +
                                shape_string(input.shape()));
  const Dims d = input.spatial();
  const int m = config_.divisor();
  for (int a = 0; a < 3; ++a)
    if (d[a] % m != 0) {
      const int need = (d[a] + m - 1) / m * m;
      throw std::invalid_argument("spatial dims " + to_string(d) + " must be multiples of " + std::to_string(m) +
                                  "; pad axis " + std::string(1, "xyz"[a]) + " by " + std::to_string(need - d[a]) +
                                  " voxels");
    }
}

template <typename T>
template <typename Exec, typename Self>
typename Exec::Value Hourglass<T>::run(Self& self, Exec& exec, typename Exec::Value x) {
  using V = typename Exec::Value;
  auto conv = [&](const V& in, const Conv& c) {
    return exec.conv3d(in, self.params_[static_cast<std::size_t>(c.weights)], self.params_[static_cast<std::size_t>(c.bias)]);
  };
  auto resblock = [&](const V& in, const ResBlock& r) {
    V t = exec.relu(conv(in, r.first));
    t = conv(t, r.second);
    V sum = r.projection ? exec.add(t, conv(in, *r.projection)) : exec.add(t, in);
    return exec.relu(sum);
  };

  const int S = self.config_.num_scales;
  std::vector<V> skips;
  V h = std::move(x);
  for (int s = 0; s < S; ++s) {
    for (const auto& r : self.encoder_[static_cast<std::size_t>(s)]) h = resblock(h, r);
    skips.push_back(h);
    h = exec.maxpool2(h);
  }
  for (const auto& r : self.bottleneck_) h = resblock(h, r);
  for (int s = S - 1; s >= 0; --s) {
    h = conv(exec.upsample_nearest2(h), self.up_convs_[static_cast<std::size_t>(s)]);
    h = exec.add(h, skips[static_cast<std::size_t>(s)]);
    skips[static_cast<std::size_t>(s)] = V{};
    for (const auto& r : self.decoder_[static_cast<std::size_t>(s)]) h = resblock(h, r);
  }
  return conv(h, self.head_);
}

template <typename T>
typename Tape<T>::Value Hourglass<T>::forward(Tape<T>& tape, typename Tape<T>::Value input) {
  check_input(tape.value(input));
  return run(*this, tape, input);
}

template <typename T>
Tensor<T> Hourglass<T>::infer(const Tensor<T>& input) const {
  check_input(input);
  Eager<T> exec;
  return run(*this, exec, input);
}

template class Hourglass<float>;
template class Hourglass<double>;

}  // namespace fetalpose
