#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rowlane/grid.hpp"

namespace rowlane::nnet {

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t volume() const noexcept {
    return static_cast<std::size_t>(channels) * height * width;
  }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Activation tensor in channel-first (C, H, W) order. A flat vector is held
/// as (n, 1, 1).
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Shape3 shape, float fill = 0.0f);
  Tensor3(Shape3 shape, std::vector<float> data);

  const Shape3& shape() const noexcept { return shape_; }
  int channels() const noexcept { return shape_.channels; }
  int height() const noexcept { return shape_.height; }
  int width() const noexcept { return shape_.width; }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<float> data() noexcept { return data_; }
  std::span<const float> data() const noexcept { return data_; }
  std::span<const float> channel(int c) const {
    return data().subspan(static_cast<std::size_t>(c) * shape_.height * shape_.width,
                          static_cast<std::size_t>(shape_.height) * shape_.width);
  }

  /// Same data viewed as (C*H*W, 1, 1).
  Tensor3 flattened() const&;
  Tensor3 flattened() &&;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * shape_.height + y) * shape_.width + x;
  }

  Shape3 shape_;
  std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Layer descriptors

struct ConvLayer {
  int kernel_h = 3;
  int kernel_w = 3;
  int stride = 1;
  int padding = 0;
  int in_channels = 1;
  int out_channels = 1;
  bool bias = false;
};

struct BatchNormLayer {
  int channels = 1;
  float epsilon = 1e-5f;
};

struct ReluLayer {};

/// Windows extend over -inf padding; padding must stay below the kernel size.
struct MaxPoolLayer {
  int kernel = 2;
  int stride = 2;
  int padding = 0;
};

/// ResNet basic block: conv3x3(stride)-bn-relu-conv3x3-bn, plus a shortcut
/// that is a 1x1 conv + bn projection iff stride > 1 or channels change.
struct ResidualBlockLayer {
  int in_channels = 64;
  int out_channels = 64;
  int stride = 1;

  bool has_projection() const noexcept { return stride > 1 || in_channels != out_channels; }
};

struct FlattenLayer {};

struct FullyConnectedLayer {
  int in_features = 1;
  int out_features = 1;
};

/// Identity at inference.
struct DropoutLayer {
  float rate = 0.5f;
};

using LayerDesc = std::variant<ConvLayer, BatchNormLayer, ReluLayer, MaxPoolLayer, ResidualBlockLayer,
                               FlattenLayer, FullyConnectedLayer, DropoutLayer>;

std::string layer_kind(const LayerDesc& layer);

/// Output geometry of the classifier head: lanes x anchors x classes.
struct OutputShape {
  int lanes = 4;
  int anchors = 36;
  int classes = 151;

  std::size_t volume() const noexcept { return static_cast<std::size_t>(lanes) * anchors * classes; }
  friend bool operator==(const OutputShape&, const OutputShape&) = default;
};

struct NetworkSpec {
  Shape3 input{3, 288, 800};
  std::vector<LayerDesc> layers;
  OutputShape output;

  /// ResNet-18 with its last stage removed (7x7/2 stem, 3x3/2 max pool, three
  /// stages of two basic blocks at 64/128/256 channels), then 2x2 max pool,
  /// 1x1 conv to 8 channels, flatten, dropout, FC to 2048, ReLU, dropout, FC
  /// to lanes*anchors*(cells+1). With the default 288x800 input the flatten
  /// is 8*9*25 = 1800 wide.
  static NetworkSpec resnet14(const GridSpec& grid = GridSpec::culane(), Shape3 input = {3, 288, 800});
};

/// Output shape after each layer. Throws ConfigError when adjacent layers are
/// incompatible or the final layer does not produce output.volume() values.
std::vector<Shape3> infer_shapes(const NetworkSpec& spec);

/// Shape propagation for an arbitrary layer run starting from `input`.
std::vector<Shape3> infer_shapes(std::span<const LayerDesc> layers, Shape3 input);

/// Multiply-accumulates: k_h*k_w*C_in*C_out*H_out*W_out per conv (projection
/// shortcuts included) and in*out per fully-connected layer. Pooling,
/// normalization, activations and dropout cost nothing.
std::uint64_t count_macs(std::span<const LayerDesc> layers, Shape3 input);
std::uint64_t count_macs(const NetworkSpec& spec);

/// Per-layer MAC counts in layer order.
std::vector<std::uint64_t> layer_macs(std::span<const LayerDesc> layers, Shape3 input);

// ---------------------------------------------------------------------------
// Weights

struct ParamBlock {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const noexcept;
  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

/// Parameter blocks keyed by "<layer>.<role>". Layers inside a residual block
/// use a dotted sub-index: "<block>.<sub>.<role>" with sub 0 = conv1,
/// 1 = bn1, 2 = conv2, 3 = bn2, 4 = projection conv, 5 = projection bn.
/// Roles: kernel (conv, O x I x KH x KW), bias, weight (FC, out x in),
/// gamma, beta, mean, var.
struct WeightBundle {
  std::map<std::string, ParamBlock> params;

  const ParamBlock& get(const std::string& name) const;
  friend bool operator==(const WeightBundle&, const WeightBundle&) = default;
};

struct ParamRequirement {
  std::string name;
  std::vector<std::uint32_t> dims;
};

/// Every parameter block the spec expects, in layer order.
std::vector<ParamRequirement> parameter_layout(const NetworkSpec& spec);

/// Throws ConfigError listing missing, unexpected and mis-shaped blocks.
void validate_weights(const NetworkSpec& spec, const WeightBundle& weights);

/// He-initialized kernels, unit batch-norm statistics with small jitter,
/// small biases. Deterministic for a given seed.
WeightBundle random_weights(const NetworkSpec& spec, std::uint64_t seed);

/// "SWLW" container: magic, u32 version (1), u32 record count, then per
/// record u16 name length, name bytes, u8 rank, rank x u32 dims and the
/// little-endian f32 payload. Records are written in name order.
std::vector<std::uint8_t> write_weights(const WeightBundle& weights);
WeightBundle read_weights(std::span<const std::uint8_t> bytes);

WeightBundle load_weights(const std::filesystem::path& path);
void save_weights(const WeightBundle& weights, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Primitive operators

/// Cross-correlation. `kernel` is (out, in, kh, kw); `bias` is empty or has
/// `out_channels` entries.
Tensor3 conv2d(const Tensor3& input, std::span<const float> kernel, const ConvLayer& geometry,
               std::span<const float> bias = {});

struct BatchNormParams {
  std::span<const float> gamma;
  std::span<const float> beta;
  std::span<const float> mean;
  std::span<const float> var;
  float epsilon = 1e-5f;
};

Tensor3 batch_norm_inference(const Tensor3& input, const BatchNormParams& params);

Tensor3 relu(Tensor3 input);

Tensor3 max_pool(const Tensor3& input, int kernel, int stride, int padding = 0);

/// y = W x + b with W stored row-major as (out, in). `bias` may be empty.
std::vector<float> fully_connected(std::span<const float> input, std::span<const float> weights,
                                   std::span<const float> bias, int out_features);

struct BasicBlockParams {
  ResidualBlockLayer layout;
  std::span<const float> conv1_kernel;
  BatchNormParams bn1;
  std::span<const float> conv2_kernel;
  BatchNormParams bn2;
  // Empty unless layout.has_projection().
  std::span<const float> projection_kernel;
  BatchNormParams projection_bn;
};

/// relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)).
Tensor3 basic_block_forward(const Tensor3& input, const BasicBlockParams& params);

// ---------------------------------------------------------------------------
// Network

/// Called after each top-level layer with its index and output activation.
using LayerObserver = std::function<void(std::size_t layer, const Tensor3& activation)>;

/// A validated spec bound to its weights. Immutable; forward() is const and
/// may be called concurrently.
class Network {
 public:
  /// Throws ConfigError if the spec is inconsistent or weights do not match.
  Network(NetworkSpec spec, WeightBundle weights);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const WeightBundle& weights() const noexcept { return weights_; }

  /// Raw activations of the final layer. `input` must match spec().input.
  Tensor3 run(const Tensor3& input, const LayerObserver& observer = {}) const;

  /// run() reshaped to lanes x anchors x classes.
  ScoreTensor forward(const Tensor3& input, const LayerObserver& observer = {}) const;

 private:
  NetworkSpec spec_;
  WeightBundle weights_;
};

/// One-shot convenience wrapper around Network.
ScoreTensor forward(const Tensor3& image, const NetworkSpec& spec, const WeightBundle& weights);

}  // namespace rowlane::nnet
