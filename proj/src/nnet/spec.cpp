#include <string>

#include "rowlane/error.hpp"
#include "rowlane/nnet.hpp"

namespace rowlane::nnet {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string shape_str(const Shape3& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

int window_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

Shape3 conv_out(const ConvLayer& c, const Shape3& in, std::size_t index) {
  if (in.channels != c.in_channels) {
    throw ConfigError("layer " + std::to_string(index) + " (conv): expects " + std::to_string(c.in_channels) +
                      " input channels, got " + shape_str(in));
  }
  if (c.stride < 1 || c.padding < 0 || c.kernel_h < 1 || c.kernel_w < 1 || c.out_channels < 1) {
    throw ConfigError("layer " + std::to_string(index) + " (conv): invalid geometry");
  }
  const Shape3 out{c.out_channels, window_out(in.height, c.kernel_h, c.stride, c.padding),
                   window_out(in.width, c.kernel_w, c.stride, c.padding)};
  if (out.height < 1 || out.width < 1) {
    throw ConfigError("layer " + std::to_string(index) + " (conv): kernel larger than input " + shape_str(in));
  }
  return out;
}

Shape3 layer_out(const LayerDesc& layer, const Shape3& in, std::size_t index) {
  const auto idx = std::to_string(index);
  return std::visit(
      Overloaded{
          [&](const ConvLayer& c) { return conv_out(c, in, index); },
          [&](const BatchNormLayer& b) {
            if (b.channels != in.channels) throw ConfigError("layer " + idx + " (batchnorm): channel mismatch");
            return in;
          },
          [&](const ReluLayer&) { return in; },
          [&](const MaxPoolLayer& m) {
            if (m.kernel < 1 || m.stride < 1 || m.padding < 0 || m.padding >= m.kernel ||
                in.height + 2 * m.padding < m.kernel || in.width + 2 * m.padding < m.kernel) {
              throw ConfigError("layer " + idx + " (maxpool): invalid window for input " + shape_str(in));
            }
            return Shape3{in.channels, window_out(in.height, m.kernel, m.stride, m.padding),
                          window_out(in.width, m.kernel, m.stride, m.padding)};
          },
          [&](const ResidualBlockLayer& r) {
            const Shape3 mid = conv_out({3, 3, r.stride, 1, r.in_channels, r.out_channels, false}, in, index);
            return conv_out({3, 3, 1, 1, r.out_channels, r.out_channels, false}, mid, index);
          },
          [&](const FlattenLayer&) { return Shape3{static_cast<int>(in.volume()), 1, 1}; },
          [&](const FullyConnectedLayer& f) {
            if (in.height != 1 || in.width != 1 || in.channels != f.in_features) {
              throw ConfigError("layer " + idx + " (fc): expects flat input of " + std::to_string(f.in_features) +
                                ", got " + shape_str(in));
            }
            return Shape3{f.out_features, 1, 1};
          },
          [&](const DropoutLayer& d) {
            if (!(d.rate >= 0.0f && d.rate < 1.0f)) throw ConfigError("layer " + idx + " (dropout): rate outside [0,1)");
            return in;
          },
      },
      layer);
}

std::uint64_t conv_macs(const ConvLayer& c, const Shape3& out) {
  return static_cast<std::uint64_t>(c.kernel_h) * c.kernel_w * c.in_channels * c.out_channels * out.height *
         out.width;
}

std::vector<std::uint32_t> dims(std::initializer_list<int> d) {
  std::vector<std::uint32_t> v;
  for (int x : d) v.push_back(static_cast<std::uint32_t>(x));
  return v;
}

void conv_params(std::vector<ParamRequirement>& out, const std::string& prefix, const ConvLayer& c) {
  out.push_back({prefix + ".kernel", dims({c.out_channels, c.in_channels, c.kernel_h, c.kernel_w})});
  if (c.bias) out.push_back({prefix + ".bias", dims({c.out_channels})});
}

void bn_params(std::vector<ParamRequirement>& out, const std::string& prefix, int channels) {
  for (const char* role : {"gamma", "beta", "mean", "var"}) out.push_back({prefix + "." + role, dims({channels})});
}

}  // namespace

Tensor3::Tensor3(Shape3 shape, float fill) : shape_(shape), data_(shape.volume(), fill) {}

Tensor3::Tensor3(Shape3 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.volume()) throw InvalidInput("tensor: data length does not match shape");
}

Tensor3 Tensor3::flattened() const& { return Tensor3({static_cast<int>(shape_.volume()), 1, 1}, data_); }

Tensor3 Tensor3::flattened() && {
  shape_ = {static_cast<int>(shape_.volume()), 1, 1};
  return std::move(*this);
}

std::string layer_kind(const LayerDesc& layer) {
  return std::visit(Overloaded{
                        [](const ConvLayer&) { return std::string("conv"); },
                        [](const BatchNormLayer&) { return std::string("batchnorm"); },
                        [](const ReluLayer&) { return std::string("relu"); },
                        [](const MaxPoolLayer&) { return std::string("maxpool"); },
                        [](const ResidualBlockLayer&) { return std::string("residual"); },
                        [](const FlattenLayer&) { return std::string("flatten"); },
                        [](const FullyConnectedLayer&) { return std::string("fc"); },
                        [](const DropoutLayer&) { return std::string("dropout"); },
                    },
                    layer);
}

NetworkSpec NetworkSpec::resnet14(const GridSpec& grid, Shape3 input) {
  grid.validate();
  NetworkSpec s;
  s.input = input;
  s.output = {grid.num_lanes, grid.num_anchors, grid.row_length()};
  auto& l = s.layers;
  l.emplace_back(ConvLayer{7, 7, 2, 3, input.channels, 64, false});
  l.emplace_back(BatchNormLayer{64});
  l.emplace_back(ReluLayer{});
  l.emplace_back(MaxPoolLayer{3, 2, 1});
  l.emplace_back(ResidualBlockLayer{64, 64, 1});
  l.emplace_back(ResidualBlockLayer{64, 64, 1});
  l.emplace_back(ResidualBlockLayer{64, 128, 2});
  l.emplace_back(ResidualBlockLayer{128, 128, 1});
  l.emplace_back(ResidualBlockLayer{128, 256, 2});
  l.emplace_back(ResidualBlockLayer{256, 256, 1});
  l.emplace_back(MaxPoolLayer{2, 2, 0});
  l.emplace_back(ConvLayer{1, 1, 1, 0, 256, 8, true});
  l.emplace_back(FlattenLayer{});

  // Flatten width depends on the input resolution.
  const auto shapes = infer_shapes(l, input);
  const int flat = shapes.back().channels;
  l.emplace_back(DropoutLayer{0.5f});
  l.emplace_back(FullyConnectedLayer{flat, 2048});
  l.emplace_back(ReluLayer{});
  l.emplace_back(DropoutLayer{0.5f});
  l.emplace_back(FullyConnectedLayer{2048, static_cast<int>(s.output.volume())});
  return s;
}

std::vector<Shape3> infer_shapes(std::span<const LayerDesc> layers, Shape3 input) {
  if (input.channels < 1 || input.height < 1 || input.width < 1) throw ConfigError("network: empty input shape");
  std::vector<Shape3> shapes;
  shapes.reserve(layers.size());
  Shape3 cur = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    cur = layer_out(layers[i], cur, i);
    shapes.push_back(cur);
  }
  return shapes;
}

std::vector<Shape3> infer_shapes(const NetworkSpec& spec) {
  if (spec.layers.empty()) throw ConfigError("network: no layers");
  auto shapes = infer_shapes(spec.layers, spec.input);
  if (shapes.back().volume() != spec.output.volume()) {
    throw ConfigError("network: final layer yields " + std::to_string(shapes.back().volume()) +
                      " values, output shape needs " + std::to_string(spec.output.volume()));
  }
  return shapes;
}

std::vector<std::uint64_t> layer_macs(std::span<const LayerDesc> layers, Shape3 input) {
  const auto shapes = infer_shapes(layers, input);
  std::vector<std::uint64_t> macs(layers.size(), 0);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Shape3& out = shapes[i];
    if (const auto* c = std::get_if<ConvLayer>(&layers[i])) {
      macs[i] = conv_macs(*c, out);
    } else if (const auto* r = std::get_if<ResidualBlockLayer>(&layers[i])) {
      macs[i] = conv_macs({3, 3, r->stride, 1, r->in_channels, r->out_channels, false}, out) +
                conv_macs({3, 3, 1, 1, r->out_channels, r->out_channels, false}, out);
      if (r->has_projection()) macs[i] += conv_macs({1, 1, r->stride, 0, r->in_channels, r->out_channels, false}, out);
    } else if (const auto* f = std::get_if<FullyConnectedLayer>(&layers[i])) {
      macs[i] = static_cast<std::uint64_t>(f->in_features) * f->out_features;
    }
  }
  return macs;
}

std::uint64_t count_macs(std::span<const LayerDesc> layers, Shape3 input) {
  std::uint64_t total = 0;
  for (auto m : layer_macs(layers, input)) total += m;
  return total;
}

std::uint64_t count_macs(const NetworkSpec& spec) {
  infer_shapes(spec);
  return count_macs(spec.layers, spec.input);
}

std::vector<ParamRequirement> parameter_layout(const NetworkSpec& spec) {
  std::vector<ParamRequirement> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const std::string idx = std::to_string(i);
    const auto& layer = spec.layers[i];
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      conv_params(out, idx, *c);
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      bn_params(out, idx, b->channels);
    } else if (const auto* r = std::get_if<ResidualBlockLayer>(&layer)) {
      conv_params(out, idx + ".0", {3, 3, r->stride, 1, r->in_channels, r->out_channels, false});
      bn_params(out, idx + ".1", r->out_channels);
      conv_params(out, idx + ".2", {3, 3, 1, 1, r->out_channels, r->out_channels, false});
      bn_params(out, idx + ".3", r->out_channels);
      if (r->has_projection()) {
        conv_params(out, idx + ".4", {1, 1, r->stride, 0, r->in_channels, r->out_channels, false});
        bn_params(out, idx + ".5", r->out_channels);
      }
    } else if (const auto* f = std::get_if<FullyConnectedLayer>(&layer)) {
      out.push_back({idx + ".weight", dims({f->out_features, f->in_features})});
      out.push_back({idx + ".bias", dims({f->out_features})});
    }
  }
  return out;
}

}  // namespace rowlane::nnet
