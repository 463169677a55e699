#include "fetalpose/layers.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <stdexcept>
#include <string>

namespace fetalpose {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename T>
using ConstMapRM = Eigen::Map<const RowMat<T>, Eigen::Unaligned, Eigen::OuterStride<>>;

// Target number of output voxels per im2col chunk; keeps the column buffer cache-sized.
constexpr std::size_t kChunkVoxels = 4096;

struct ConvGeometry {
  int ci = 0, co = 0;
  int kz = 1, ky = 1, kx = 1;
  Dims d;
  std::size_t voxels = 0;
  int k() const { return ci * kz * ky * kx; }
  bool pointwise() const { return kz == 1 && ky == 1 && kx == 1; }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  if (input.rank() != 4) throw std::invalid_argument("conv3d input must be [C,Z,Y,X], got " + shape_string(input.shape()));
  if (weights.rank() != 5)
    throw std::invalid_argument("conv3d weights must be [Co,Ci,kz,ky,kx], got " + shape_string(weights.shape()));
  ConvGeometry g;
  g.co = weights.dim(0);
  g.ci = weights.dim(1);
  g.kz = weights.dim(2);
  g.ky = weights.dim(3);
  g.kx = weights.dim(4);
  if (input.dim(0) != g.ci)
    throw std::invalid_argument("conv3d input channels: input has " + std::to_string(input.dim(0)) +
                                ", weights expect " + std::to_string(g.ci));
  for (int e : {g.kz, g.ky, g.kx})
    if (e != 1 && e != 3) throw std::invalid_argument("conv3d kernel extent must be 1 or 3, got " + std::to_string(e));
  if (bias.rank() != 1 || bias.dim(0) != g.co)
    throw std::invalid_argument("conv3d bias: expected [" + std::to_string(g.co) + "], got " + shape_string(bias.shape()));
  g.d = input.spatial();
  g.voxels = g.d.voxels();
  return g;
}

// Rows [row_begin, row_end) of the (z, y) row index space, each X voxels long.
template <typename T>
void im2col(const T* in, const ConvGeometry& g, int row_begin, int row_end, T* col) {
  const int X = g.d.x, Y = g.d.y, Z = g.d.z;
  const std::size_t n = static_cast<std::size_t>(row_end - row_begin) * static_cast<std::size_t>(X);
  const int pz = g.kz / 2, py = g.ky / 2, px = g.kx / 2;
  std::size_t k = 0;
  for (int c = 0; c < g.ci; ++c) {
    const T* plane = in + static_cast<std::size_t>(c) * g.voxels;
    for (int dz = 0; dz < g.kz; ++dz)
      for (int dy = 0; dy < g.ky; ++dy)
        for (int dx = 0; dx < g.kx; ++dx, ++k) {
          T* dst = col + k * n;
          const int shift = dx - px;
          const int x_lo = std::max(0, -shift), x_hi = std::min(X, X - shift);
          for (int r = row_begin; r < row_end; ++r, dst += X) {
            const int y = r % Y, z = r / Y;
            const int sy = y + dy - py, sz = z + dz - pz;
            if (sy < 0 || sy >= Y || sz < 0 || sz >= Z || x_lo >= x_hi) {
              std::fill(dst, dst + X, T(0));
              continue;
            }
            const T* src = plane + (static_cast<std::size_t>(sz) * Y + sy) * X;
            std::fill(dst, dst + x_lo, T(0));
            std::copy(src + x_lo + shift, src + x_hi + shift, dst + x_lo);
            std::fill(dst + x_hi, dst + X, T(0));
          }
        }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, int row_begin, int row_end, T* grad_in) {
  const int X = g.d.x, Y = g.d.y, Z = g.d.z;
  const std::size_t n = static_cast<std::size_t>(row_end - row_begin) * static_cast<std::size_t>(X);
  const int pz = g.kz / 2, py = g.ky / 2, px = g.kx / 2;
  std::size_t k = 0;
  for (int c = 0; c < g.ci; ++c) {
    T* plane = grad_in + static_cast<std::size_t>(c) * g.voxels;
    for (int dz = 0; dz < g.kz; ++dz)
      for (int dy = 0; dy < g.ky; ++dy)
        for (int dx = 0; dx < g.kx; ++dx, ++k) {
          const T* src = col + k * n;
          const int shift = dx - px;
          const int x_lo = std::max(0, -shift), x_hi = std::min(X, X - shift);
          for (int r = row_begin; r < row_end; ++r, src += X) {
            const int y = r % Y, z = r / Y;
            const int sy = y + dy - py, sz = z + dz - pz;
            if (sy < 0 || sy >= Y || sz < 0 || sz >= Z) continue;
            T* dst = plane + (static_cast<std::size_t>(sz) * Y + sy) * X + shift;
            for (int x = x_lo; x < x_hi; ++x) dst[x] += src[x];
          }
        }
  }
}

int rows_per_chunk(const ConvGeometry& g) {
  return std::max<int>(1, static_cast<int>(kChunkVoxels / static_cast<std::size_t>(g.d.x)));
}

void check_same(const std::vector<int>& a, const std::vector<int>& b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

}  // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  const ConvGeometry g = conv_geometry(input, weights, bias);
  Tensor<T> out(activation_shape(g.co, g.d));
  const Eigen::Index N = static_cast<Eigen::Index>(g.voxels);
  ConstMapRM<T> W(weights.data(), g.co, g.k(), Eigen::OuterStride<>(g.k()));
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> b(bias.data(), g.co);

  if (g.pointwise()) {
    ConstMapRM<T> in(input.data(), g.ci, N, Eigen::OuterStride<>(N));
    MapRM<T> o(out.data(), g.co, N, Eigen::OuterStride<>(N));
    o.noalias() = W * in;
    o.colwise() += b;
    return out;
  }

  const int rows = g.d.y * g.d.z;
  const int chunk = rows_per_chunk(g);
  AlignedVector<T> col(static_cast<std::size_t>(g.k()) * static_cast<std::size_t>(chunk) * static_cast<std::size_t>(g.d.x));
  for (int r0 = 0; r0 < rows; r0 += chunk) {
    const int r1 = std::min(rows, r0 + chunk);
    const Eigen::Index n = static_cast<Eigen::Index>(r1 - r0) * g.d.x;
    im2col(input.data(), g, r0, r1, col.data());
    ConstMapRM<T> C(col.data(), g.k(), n, Eigen::OuterStride<>(n));
    MapRM<T> o(out.data() + static_cast<std::size_t>(r0) * g.d.x, g.co, n, Eigen::OuterStride<>(N));
    o.noalias() = W * C;
    o.colwise() += b;
  }
  return out;
}

template <typename T>
void conv3d_backward(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& grad_output,
                     Tensor<T>* grad_input, Tensor<T>& grad_weights, Tensor<T>& grad_bias) {
  const ConvGeometry g = conv_geometry(input, weights, grad_bias);
  check_same(grad_output.shape(), activation_shape(g.co, g.d), "conv3d grad_output");
  check_same(grad_weights.shape(), weights.shape(), "conv3d grad_weights");
  if (grad_input) check_same(grad_input->shape(), input.shape(), "conv3d grad_input");

  const Eigen::Index N = static_cast<Eigen::Index>(g.voxels);
  ConstMapRM<T> W(weights.data(), g.co, g.k(), Eigen::OuterStride<>(g.k()));
  MapRM<T> dW(grad_weights.data(), g.co, g.k(), Eigen::OuterStride<>(g.k()));
  ConstMapRM<T> dO(grad_output.data(), g.co, N, Eigen::OuterStride<>(N));
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(grad_bias.data(), g.co);
  db += dO.rowwise().sum();

  if (g.pointwise()) {
    ConstMapRM<T> in(input.data(), g.ci, N, Eigen::OuterStride<>(N));
    dW.noalias() += dO * in.transpose();
    if (grad_input) {
      MapRM<T> dI(grad_input->data(), g.ci, N, Eigen::OuterStride<>(N));
      dI.noalias() += W.transpose() * dO;
    }
    return;
  }

  const int rows = g.d.y * g.d.z;
  const int chunk = rows_per_chunk(g);
  const std::size_t cap = static_cast<std::size_t>(g.k()) * static_cast<std::size_t>(chunk) * static_cast<std::size_t>(g.d.x);
  AlignedVector<T> col(cap);
  AlignedVector<T> dcol(grad_input ? cap : 0);
  for (int r0 = 0; r0 < rows; r0 += chunk) {
    const int r1 = std::min(rows, r0 + chunk);
    const Eigen::Index n = static_cast<Eigen::Index>(r1 - r0) * g.d.x;
    im2col(input.data(), g, r0, r1, col.data());
    ConstMapRM<T> C(col.data(), g.k(), n, Eigen::OuterStride<>(n));
    ConstMapRM<T> dOc(grad_output.data() + static_cast<std::size_t>(r0) * g.d.x, g.co, n, Eigen::OuterStride<>(N));
    dW.noalias() += dOc * C.transpose();
    if (grad_input) {
      MapRM<T> dC(dcol.data(), g.k(), n, Eigen::OuterStride<>(n));
      dC.noalias() = W.transpose() * dOc;
      col2im_add(dcol.data(), g, r0, r1, grad_input->data());
    }
  }
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (T& v : out.values()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
void relu_backward(const Tensor<T>& output, const Tensor<T>& grad_output, Tensor<T>& grad_input) {
  check_same(output.shape(), grad_output.shape(), "relu backward");
  check_same(output.shape(), grad_input.shape(), "relu backward");
  const std::size_t n = output.size();
  for (std::size_t i = 0; i < n; ++i)
    if (output[i] > T(0)) grad_input[i] += grad_output[i];
}

template <typename T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b) {
  check_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a;
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out[i] += b[i];
  return out;
}

template <typename T>
PoolResult<T> maxpool2_forward(const Tensor<T>& input) {
  if (input.rank() != 4) throw std::invalid_argument("maxpool2 input must be [C,Z,Y,X]");
  const Dims d = input.spatial();
  for (int a = 0; a < 3; ++a)
    if (d[a] % 2 != 0)
      throw std::invalid_argument("maxpool2 needs even spatial dims, got " + to_string(d));
  const Dims h{d.x / 2, d.y / 2, d.z / 2};
  PoolResult<T> r{Tensor<T>(activation_shape(input.channels(), h)), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (int c = 0; c < input.channels(); ++c) {
    const std::size_t base = static_cast<std::size_t>(c) * d.voxels();
    for (int z = 0; z < h.z; ++z)
      for (int y = 0; y < h.y; ++y)
        for (int x = 0; x < h.x; ++x, ++o) {
          std::size_t best = base + d.index(2 * x, 2 * y, 2 * z);
          T best_v = input[best];
          for (int dz = 0; dz < 2; ++dz)
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i = base + d.index(2 * x + dx, 2 * y + dy, 2 * z + dz);
                if (input[i] > best_v) {
                  best_v = input[i];
                  best = i;
                }
              }
          r.output[o] = best_v;
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
  }
  return r;
}

template <typename T>
void maxpool2_backward(const std::vector<std::uint32_t>& argmax, const Tensor<T>& grad_output, Tensor<T>& grad_input) {
  if (argmax.size() != grad_output.size()) throw std::invalid_argument("maxpool2 backward: argmax size mismatch");
  for (std::size_t o = 0; o < argmax.size(); ++o) grad_input[argmax[o]] += grad_output[o];
}

template <typename T>
Tensor<T> upsample_nearest2_forward(const Tensor<T>& input) {
  if (input.rank() != 4) throw std::invalid_argument("upsample input must be [C,Z,Y,X]");
  const Dims d = input.spatial();
  const Dims u{2 * d.x, 2 * d.y, 2 * d.z};
  Tensor<T> out(activation_shape(input.channels(), u));
  std::size_t o = 0;
  for (int c = 0; c < input.channels(); ++c) {
    const T* src = input.data() + static_cast<std::size_t>(c) * d.voxels();
    for (int z = 0; z < u.z; ++z)
      for (int y = 0; y < u.y; ++y) {
        const T* row = src + d.index(0, y / 2, z / 2);
        for (int x = 0; x < u.x; ++x) out[o++] = row[x / 2];
      }
  }
  return out;
}

template <typename T>
void upsample_nearest2_backward(const Tensor<T>& grad_output, Tensor<T>& grad_input) {
  const Dims d = grad_input.spatial();
  const Dims u = grad_output.spatial();
  if (u.x != 2 * d.x || u.y != 2 * d.y || u.z != 2 * d.z || grad_output.channels() != grad_input.channels())
    throw std::invalid_argument("upsample backward: shape mismatch");
  std::size_t o = 0;
  for (int c = 0; c < grad_input.channels(); ++c) {
    T* dst = grad_input.data() + static_cast<std::size_t>(c) * d.voxels();
    for (int z = 0; z < u.z; ++z)
      for (int y = 0; y < u.y; ++y) {
        T* row = dst + d.index(0, y / 2, z / 2);
        for (int x = 0; x < u.x; ++x) row[x / 2] += grad_output[o++];
      }
  }
}

template <typename T>
T mse_loss(const Tensor<T>& pred, const Tensor<T>& target, T foreground_weight) {
  check_same(pred.shape(), target.shape(), "mse");
  if (!(foreground_weight >= T(0))) throw std::invalid_argument("foreground weight must be non-negative");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += (1.0 + static_cast<double>(foreground_weight) * static_cast<double>(target[i])) * d * d;
  }
  return static_cast<T>(acc / static_cast<double>(pred.size()));
}

template <typename T>
Tensor<T> mse_backward(const Tensor<T>& pred, const Tensor<T>& target, T scale, T foreground_weight) {
  check_same(pred.shape(), target.shape(), "mse");
  if (!(foreground_weight >= T(0))) throw std::invalid_argument("foreground weight must be non-negative");
  Tensor<T> g(pred.shape());
  const T k = scale * T(2) / static_cast<T>(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = k * (T(1) + foreground_weight * target[i]) * (pred[i] - target[i]);
  return g;
}

#define FETALPOSE_INSTANTIATE_LAYERS(T)                                                                            \
  template Tensor<T> conv3d_forward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template void conv3d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>*, Tensor<T>&,     \
                                Tensor<T>&);                                                                       \
  template Tensor<T> relu_forward(const Tensor<T>&);                                                               \
  template void relu_backward(const Tensor<T>&, const Tensor<T>&, Tensor<T>&);                                     \
  template Tensor<T> add_forward(const Tensor<T>&, const Tensor<T>&);                                              \
  template PoolResult<T> maxpool2_forward(const Tensor<T>&);                                                       \
  template void maxpool2_backward(const std::vector<std::uint32_t>&, const Tensor<T>&, Tensor<T>&);                \
  template Tensor<T> upsample_nearest2_forward(const Tensor<T>&);                                                  \
  template void upsample_nearest2_backward(const Tensor<T>&, Tensor<T>&);                                          \
  template T mse_loss(const Tensor<T>&, const Tensor<T>&, T);                                                      \
  template Tensor<T> mse_backward(const Tensor<T>&, const Tensor<T>&, T, T);

FETALPOSE_INSTANTIATE_LAYERS(float)
FETALPOSE_INSTANTIATE_LAYERS(double)

}  // namespace fetalpose
