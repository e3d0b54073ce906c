#include <string>

#include "rowlane/error.hpp"
#include "rowlane/nnet.hpp"

namespace rowlane::nnet {

namespace {

std::span<const float> values(const WeightBundle& w, const std::string& name) {
  return w.get(name).values;
}

BatchNormParams bn(const WeightBundle& w, const std::string& prefix, float epsilon) {
  return {values(w, prefix + ".gamma"), values(w, prefix + ".beta"), values(w, prefix + ".mean"),
          values(w, prefix + ".var"), epsilon};
}

constexpr float kBlockEpsilon = 1e-5f;

Tensor3 run_layers(const NetworkSpec& spec, const WeightBundle& weights, const Tensor3& input,
                   const LayerObserver& observer) {
  if (!(input.shape() == spec.input)) {
    throw InvalidInput("forward: input must be " + std::to_string(spec.input.channels) + "x" +
                       std::to_string(spec.input.height) + "x" + std::to_string(spec.input.width) +
                       " (channels x height x width)");
  }
  Tensor3 x = input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const std::string idx = std::to_string(i);
    const auto& layer = spec.layers[i];
    if (const auto* c = std::get_if<ConvLayer>(&layer)) {
      x = conv2d(x, values(weights, idx + ".kernel"), *c,
                 c->bias ? values(weights, idx + ".bias") : std::span<const float>{});
    } else if (const auto* b = std::get_if<BatchNormLayer>(&layer)) {
      x = batch_norm_inference(x, bn(weights, idx, b->epsilon));
    } else if (std::holds_alternative<ReluLayer>(layer)) {
      x = relu(std::move(x));
    } else if (const auto* m = std::get_if<MaxPoolLayer>(&layer)) {
      x = max_pool(x, m->kernel, m->stride, m->padding);
    } else if (const auto* r = std::get_if<ResidualBlockLayer>(&layer)) {
      BasicBlockParams p{*r,
                         values(weights, idx + ".0.kernel"),
                         bn(weights, idx + ".1", kBlockEpsilon),
                         values(weights, idx + ".2.kernel"),
                         bn(weights, idx + ".3", kBlockEpsilon),
                         {},
                         {}};
      if (r->has_projection()) {
        p.projection_kernel = values(weights, idx + ".4.kernel");
        p.projection_bn = bn(weights, idx + ".5", kBlockEpsilon);
      }
      x = basic_block_forward(x, p);
    } else if (std::holds_alternative<FlattenLayer>(layer)) {
      x = std::move(x).flattened();
    } else if (const auto* f = std::get_if<FullyConnectedLayer>(&layer)) {
      auto y = fully_connected(x.data(), values(weights, idx + ".weight"), values(weights, idx + ".bias"),
                               f->out_features);
      x = Tensor3({f->out_features, 1, 1}, std::move(y));
    }
    // Dropout: identity at inference.
    if (observer) observer(i, x);
  }
  return x;
}

ScoreTensor to_scores(const OutputShape& shape, const Tensor3& out) {
  const auto flat = out.data();
  return ScoreTensor(shape.lanes, shape.anchors, shape.classes, std::vector<double>(flat.begin(), flat.end()));
}

}  // namespace

Network::Network(NetworkSpec spec, WeightBundle weights) : spec_(std::move(spec)), weights_(std::move(weights)) {
  infer_shapes(spec_);
  validate_weights(spec_, weights_);
}

Tensor3 Network::run(const Tensor3& input, const LayerObserver& observer) const {
  return run_layers(spec_, weights_, input, observer);
}

ScoreTensor Network::forward(const Tensor3& input, const LayerObserver& observer) const {
  return to_scores(spec_.output, run(input, observer));
}

ScoreTensor forward(const Tensor3& image, const NetworkSpec& spec, const WeightBundle& weights) {
  infer_shapes(spec);
  validate_weights(spec, weights);
  return to_scores(spec.output, run_layers(spec, weights, image, {}));
}

}  // namespace rowlane::nnet
