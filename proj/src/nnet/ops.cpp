#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "rowlane/error.hpp"
#include "rowlane/nnet.hpp"

namespace rowlane::nnet {

namespace {

using RowMajorMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int pooled_extent(int in, int kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// Unfolds input patches into a (C*KH*KW) x (OH*OW) row-major matrix.
void im2col(const Tensor3& input, const ConvLayer& g, int out_h, int out_w, std::vector<float>& cols) {
  const int in_h = input.height();
  const int in_w = input.width();
  const std::size_t out_hw = static_cast<std::size_t>(out_h) * out_w;
  cols.assign(static_cast<std::size_t>(g.in_channels) * g.kernel_h * g.kernel_w * out_hw, 0.0f);
  float* dst = cols.data();
  for (int c = 0; c < g.in_channels; ++c) {
    const float* src = input.channel(c).data();
    for (int ky = 0; ky < g.kernel_h; ++ky) {
      for (int kx = 0; kx < g.kernel_w; ++kx) {
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ky;
          float* row = dst + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= in_h) continue;
          const float* src_row = src + static_cast<std::size_t>(iy) * in_w;
          if (g.stride == 1) {
            const int x0 = std::max(0, g.padding - kx);
            const int x1 = std::min(out_w, in_w + g.padding - kx);
            for (int ox = x0; ox < x1; ++ox) row[ox] = src_row[ox - g.padding + kx];
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * g.stride - g.padding + kx;
              if (ix >= 0 && ix < in_w) row[ox] = src_row[ix];
            }
          }
        }
        dst += out_hw;
      }
    }
  }
}

void check_bn(const Tensor3& input, const BatchNormParams& p) {
  const auto c = static_cast<std::size_t>(input.channels());
  if (p.gamma.size() != c || p.beta.size() != c || p.mean.size() != c || p.var.size() != c) {
    throw InvalidInput("batch norm: parameter lengths must equal channel count " + std::to_string(c));
  }
  for (float v : p.var) {
    if (!(v >= 0.0f)) throw InvalidInput("batch norm: negative variance");
  }
}

}  // namespace

Tensor3 conv2d(const Tensor3& input, std::span<const float> kernel, const ConvLayer& g,
               std::span<const float> bias) {
  if (g.stride < 1 || g.padding < 0 || g.kernel_h < 1 || g.kernel_w < 1) {
    throw InvalidInput("conv2d: invalid geometry");
  }
  if (input.channels() != g.in_channels) {
    throw InvalidInput("conv2d: input has " + std::to_string(input.channels()) + " channels, expected " +
                       std::to_string(g.in_channels));
  }
  const std::size_t patch = static_cast<std::size_t>(g.in_channels) * g.kernel_h * g.kernel_w;
  if (kernel.size() != patch * g.out_channels) throw InvalidInput("conv2d: kernel size mismatch");
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(g.out_channels)) {
    throw InvalidInput("conv2d: bias size mismatch");
  }
  const int out_h = pooled_extent(input.height(), g.kernel_h, g.stride, g.padding);
  const int out_w = pooled_extent(input.width(), g.kernel_w, g.stride, g.padding);
  if (out_h < 1 || out_w < 1) throw InvalidInput("conv2d: kernel larger than padded input");

  Tensor3 out({g.out_channels, out_h, out_w});
  const auto out_hw = static_cast<Eigen::Index>(out_h) * out_w;
  Eigen::Map<const RowMajorMatrix> weights(kernel.data(), g.out_channels, static_cast<Eigen::Index>(patch));
  Eigen::Map<RowMajorMatrix> result(out.data().data(), g.out_channels, out_hw);

  const bool pointwise = g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
  if (pointwise) {
    Eigen::Map<const RowMajorMatrix> cols(input.data().data(), g.in_channels, out_hw);
    result.noalias() = weights * cols;
  } else {
    std::vector<float> buffer;
    im2col(input, g, out_h, out_w, buffer);
    Eigen::Map<const RowMajorMatrix> cols(buffer.data(), static_cast<Eigen::Index>(patch), out_hw);
    result.noalias() = weights * cols;
  }
  if (!bias.empty()) {
    for (int c = 0; c < g.out_channels; ++c) result.row(c).array() += bias[c];
  }
  return out;
}

Tensor3 batch_norm_inference(const Tensor3& input, const BatchNormParams& p) {
  check_bn(input, p);
  Tensor3 out = input;
  const std::size_t plane = static_cast<std::size_t>(input.height()) * input.width();
  auto data = out.data();
  for (int c = 0; c < input.channels(); ++c) {
    const float scale = p.gamma[c] / std::sqrt(p.var[c] + p.epsilon);
    const float shift = p.beta[c] - scale * p.mean[c];
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) data[i] = scale * data[i] + shift;
  }
  return out;
}

Tensor3 relu(Tensor3 input) {
  for (float& v : input.data()) v = std::max(v, 0.0f);
  return input;
}

Tensor3 max_pool(const Tensor3& input, int kernel, int stride, int padding) {
  if (kernel < 1 || stride < 1 || padding < 0 || padding >= kernel) {
    throw InvalidInput("max_pool: invalid geometry");
  }
  if (input.height() + 2 * padding < kernel || input.width() + 2 * padding < kernel) {
    throw InvalidInput("max_pool: input smaller than the pooling window");
  }
  const int out_h = pooled_extent(input.height(), kernel, stride, padding);
  const int out_w = pooled_extent(input.width(), kernel, stride, padding);
  Tensor3 out({input.channels(), out_h, out_w});
  for (int c = 0; c < input.channels(); ++c) {
    for (int oy = 0; oy < out_h; ++oy) {
      const int y0 = std::max(0, oy * stride - padding);
      const int y1 = std::min(input.height(), oy * stride - padding + kernel);
      for (int ox = 0; ox < out_w; ++ox) {
        const int x0 = std::max(0, ox * stride - padding);
        const int x1 = std::min(input.width(), ox * stride - padding + kernel);
        float best = -std::numeric_limits<float>::infinity();
        for (int y = y0; y < y1; ++y) {
          for (int x = x0; x < x1; ++x) best = std::max(best, input.at(c, y, x));
        }
        out.at(c, oy, ox) = best;
      }
    }
  }
  return out;
}

std::vector<float> fully_connected(std::span<const float> input, std::span<const float> weights,
                                   std::span<const float> bias, int out_features) {
  if (out_features < 1 || weights.size() != input.size() * static_cast<std::size_t>(out_features)) {
    throw InvalidInput("fully_connected: weight matrix is not out x in");
  }
  if (!bias.empty() && bias.size() != static_cast<std::size_t>(out_features)) {
    throw InvalidInput("fully_connected: bias size mismatch");
  }
  std::vector<float> out(static_cast<std::size_t>(out_features));
  Eigen::Map<const RowMajorMatrix> w(weights.data(), out_features, static_cast<Eigen::Index>(input.size()));
  Eigen::Map<const Eigen::VectorXf> x(input.data(), static_cast<Eigen::Index>(input.size()));
  Eigen::Map<Eigen::VectorXf> y(out.data(), out_features);
  y.noalias() = w * x;
  if (!bias.empty()) y += Eigen::Map<const Eigen::VectorXf>(bias.data(), out_features);
  return out;
}

Tensor3 basic_block_forward(const Tensor3& input, const BasicBlockParams& p) {
  const auto& b = p.layout;
  if (input.channels() != b.in_channels) throw InvalidInput("basic block: input channel mismatch");
  if (b.has_projection() == p.projection_kernel.empty()) {
    throw InvalidInput("basic block: projection must be present iff stride > 1 or channels change");
  }
  const ConvLayer conv1{3, 3, b.stride, 1, b.in_channels, b.out_channels, false};
  const ConvLayer conv2{3, 3, 1, 1, b.out_channels, b.out_channels, false};

  Tensor3 y = relu(batch_norm_inference(conv2d(input, p.conv1_kernel, conv1), p.bn1));
  y = batch_norm_inference(conv2d(y, p.conv2_kernel, conv2), p.bn2);

  auto acc = y.data();
  if (b.has_projection()) {
    const ConvLayer proj{1, 1, b.stride, 0, b.in_channels, b.out_channels, false};
    const Tensor3 shortcut = batch_norm_inference(conv2d(input, p.projection_kernel, proj), p.projection_bn);
    const auto s = shortcut.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s[i];
  } else {
    const auto s = input.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s[i];
  }
  return relu(std::move(y));
}

}  // namespace rowlane::nnet
