#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rowlane/error.hpp"
#include "rowlane/nnet.hpp"

using namespace rowlane;
using namespace rowlane::nnet;

namespace {

float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  REQUIRE(a.size() == b.size());
  float d = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

struct BnBlock {
  std::vector<float> gamma, beta, mean, var;
  BatchNormParams params() const { return {gamma, beta, mean, var, 1e-5f}; }
};

BnBlock identity_bn(int c) {
  return {std::vector<float>(c, 1.0f), std::vector<float>(c, 0.0f), std::vector<float>(c, 0.0f),
          std::vector<float>(c, 1.0f)};
}

BnBlock random_bn(std::mt19937_64& rng, int c) {
  return {oracle::random_floats(rng, c, 0.5f, 1.5f), oracle::random_floats(rng, c), oracle::random_floats(rng, c),
          oracle::random_floats(rng, c, 0.2f, 2.0f)};
}

}  // namespace

TEST_SUITE("conv2d") {
  TEST_CASE("1x1 identity kernel reproduces the input") {
    std::mt19937_64 rng(1);
    const Tensor3 x = oracle::random_tensor(rng, {3, 5, 4});
    std::vector<float> k(9, 0.0f);
    for (int c = 0; c < 3; ++c) k[c * 3 + c] = 1.0f;
    const Tensor3 y = conv2d(x, k, {1, 1, 1, 0, 3, 3, false});
    CHECK(y == x);
  }

  TEST_CASE("box sum on constant input") {
    const Tensor3 x({1, 5, 5}, 1.0f);
    const std::vector<float> k(9, 1.0f);
    const Tensor3 y = conv2d(x, k, {3, 3, 1, 0, 1, 1, false});
    CHECK(y.shape() == Shape3{1, 3, 3});
    for (float v : y.data()) CHECK(v == 9.0f);
  }

  TEST_CASE("strided padded conv matches the naive loop oracle") {
    std::mt19937_64 rng(2);
    const Tensor3 x = oracle::random_tensor(rng, {3, 8, 8});
    const auto k = oracle::random_floats(rng, 4 * 3 * 3 * 3);
    const auto b = oracle::random_floats(rng, 4);
    const Tensor3 y = conv2d(x, k, {3, 3, 2, 1, 3, 4, true}, b);
    const Tensor3 ref = oracle::conv2d(x, k, 4, 3, 3, 2, 1, b);
    CHECK(y.shape() == Shape3{4, 4, 4});
    CHECK(max_abs_diff(y.data(), ref.data()) <= 1e-4f);
  }

  TEST_CASE("random geometries match the oracle") {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> ch(1, 6), sp(4, 12), kk(1, 5), st(1, 3), pd(0, 2);
    for (int trial = 0; trial < 40; ++trial) {
      const int ci = ch(rng), co = ch(rng), kh = kk(rng), kw = kk(rng), s = st(rng), p = pd(rng);
      const Tensor3 x = oracle::random_tensor(rng, {ci, sp(rng) + kh, sp(rng) + kw});
      const auto k = oracle::random_floats(rng, static_cast<std::size_t>(co * ci * kh * kw));
      const Tensor3 y = conv2d(x, k, {kh, kw, s, p, ci, co, false});
      const Tensor3 ref = oracle::conv2d(x, k, co, kh, kw, s, p, {});
      REQUIRE(y.shape() == ref.shape());
      CHECK(max_abs_diff(y.data(), ref.data()) <= 1e-4f);
    }
  }

  TEST_CASE("shape mismatch errors") {
    const Tensor3 x({2, 4, 4});
    CHECK_THROWS_AS(conv2d(x, std::vector<float>(9), {3, 3, 1, 0, 1, 1, false}), InvalidInput);
    CHECK_THROWS_AS(conv2d(x, std::vector<float>(17), {3, 3, 1, 0, 2, 1, false}), InvalidInput);
    CHECK_THROWS_AS(conv2d(x, std::vector<float>(18), {3, 3, 0, 0, 2, 1, false}), InvalidInput);
    CHECK_THROWS_AS(conv2d(x, std::vector<float>(2 * 25), {5, 5, 1, 0, 2, 1, false}, std::vector<float>(1)),
                    InvalidInput);
    CHECK_THROWS_AS(conv2d(x, std::vector<float>(2 * 49), {7, 7, 1, 0, 2, 1, false}), InvalidInput);
  }
}

TEST_SUITE("batch_norm_inference") {
  TEST_CASE("identity parameters with zero epsilon") {
    std::mt19937_64 rng(4);
    const Tensor3 x = oracle::random_tensor(rng, {3, 4, 5});
    BnBlock bn = identity_bn(3);
    BatchNormParams p = bn.params();
    p.epsilon = 0.0f;
    CHECK(batch_norm_inference(x, p) == x);
  }

  TEST_CASE("zero gamma yields beta") {
    std::mt19937_64 rng(5);
    const Tensor3 x = oracle::random_tensor(rng, {2, 3, 3});
    BnBlock bn = random_bn(rng, 2);
    bn.gamma.assign(2, 0.0f);
    const Tensor3 y = batch_norm_inference(x, bn.params());
    for (int c = 0; c < 2; ++c)
      for (float v : y.channel(c)) CHECK(v == bn.beta[c]);
  }

  TEST_CASE("random parameters match the scalar formula") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor3 x = oracle::random_tensor(rng, {5, 6, 7});
      const BnBlock bn = random_bn(rng, 5);
      const Tensor3 ref = oracle::batch_norm(x, bn.gamma, bn.beta, bn.mean, bn.var, 1e-5);
      CHECK(max_abs_diff(batch_norm_inference(x, bn.params()).data(), ref.data()) <= 1e-6f);
    }
  }

  TEST_CASE("negative variance and length mismatch are rejected") {
    const Tensor3 x({2, 2, 2});
    BnBlock bn = identity_bn(2);
    bn.var[1] = -0.5f;
    CHECK_THROWS_AS(batch_norm_inference(x, bn.params()), InvalidInput);
    CHECK_THROWS_AS(batch_norm_inference(x, identity_bn(3).params()), InvalidInput);
  }
}

TEST_SUITE("relu") {
  TEST_CASE("clamps negatives, keeps positives, idempotent") {
    CHECK(relu(Tensor3({1, 2, 2}, -3.0f)) == Tensor3({1, 2, 2}, 0.0f));
    CHECK(relu(Tensor3({1, 2, 2}, 2.5f)) == Tensor3({1, 2, 2}, 2.5f));
    std::mt19937_64 rng(7);
    const Tensor3 x = oracle::random_tensor(rng, {3, 4, 4});
    CHECK(relu(relu(x)) == relu(x));
  }
}

TEST_SUITE("max_pool") {
  TEST_CASE("constant input") {
    const Tensor3 y = max_pool(Tensor3({2, 6, 4}, 1.5f), 2, 2);
    CHECK(y == Tensor3({2, 3, 2}, 1.5f));
  }

  TEST_CASE("2x2 window picks the maximum") {
    const Tensor3 x({1, 2, 2}, {1, 2, 3, 4});
    const Tensor3 y = max_pool(x, 2, 2);
    CHECK(y.shape() == Shape3{1, 1, 1});
    CHECK(y.at(0, 0, 0) == 4.0f);
  }

  TEST_CASE("18x50 feature map pools to 9x25 and matches the oracle") {
    std::mt19937_64 rng(8);
    const Tensor3 x = oracle::random_tensor(rng, {4, 18, 50});
    const Tensor3 y = max_pool(x, 2, 2);
    CHECK(y.shape() == Shape3{4, 9, 25});
    CHECK(y == oracle::max_pool(x, 2, 2, 0));
  }

  TEST_CASE("padded 3x3/2 window matches the oracle") {
    std::mt19937_64 rng(9);
    const Tensor3 x = oracle::random_tensor(rng, {3, 12, 10});
    const Tensor3 y = max_pool(x, 3, 2, 1);
    CHECK(y.shape() == Shape3{3, 6, 5});
    CHECK(y == oracle::max_pool(x, 3, 2, 1));
  }

  TEST_CASE("window larger than input") { CHECK_THROWS_AS(max_pool(Tensor3({1, 1, 3}), 2, 2), InvalidInput); }
}

TEST_SUITE("fully_connected") {
  TEST_CASE("identity and zero weights") {
    const std::vector<float> x = {1.0f, -2.0f, 3.0f};
    std::vector<float> eye(9, 0.0f);
    for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0f;
    CHECK(fully_connected(x, eye, std::vector<float>(3, 0.0f), 3) == x);
    const std::vector<float> b = {0.5f, 0.25f};
    CHECK(fully_connected(x, std::vector<float>(6, 0.0f), b, 2) == b);
  }

  TEST_CASE("1800 -> 2048 matches the dot-product oracle") {
    std::mt19937_64 rng(10);
    const auto x = oracle::random_floats(rng, 1800);
    const auto w = oracle::random_floats(rng, 1800 * 2048);
    const auto b = oracle::random_floats(rng, 2048);
    CHECK(max_abs_diff(fully_connected(x, w, b, 2048), oracle::fully_connected(x, w, b, 2048)) <= 1e-3f);
  }

  TEST_CASE("shape mismatch") {
    CHECK_THROWS_AS(fully_connected(std::vector<float>(3), std::vector<float>(5), {}, 2), InvalidInput);
    CHECK_THROWS_AS(fully_connected(std::vector<float>(3), std::vector<float>(6), std::vector<float>(3), 2),
                    InvalidInput);
  }
}

TEST_SUITE("basic_block_forward") {
  TEST_CASE("zero convs with identity shortcut give relu(x)") {
    std::mt19937_64 rng(11);
    const Tensor3 x = oracle::random_tensor(rng, {4, 5, 5});
    const std::vector<float> zeros(4 * 4 * 9, 0.0f);
    BnBlock bn = identity_bn(4);
    BatchNormParams p = bn.params();
    p.epsilon = 0.0f;
    BasicBlockParams params{{4, 4, 1}, zeros, p, zeros, p, {}, {}};
    CHECK(basic_block_forward(x, params) == relu(x));
  }

  TEST_CASE("stride-2 projection block halves spatial dims") {
    std::mt19937_64 rng(12);
    const Tensor3 x = oracle::random_tensor(rng, {2, 8, 6});
    const auto k1 = oracle::random_floats(rng, 3 * 2 * 9);
    const auto k2 = oracle::random_floats(rng, 3 * 3 * 9);
    const auto kp = oracle::random_floats(rng, 3 * 2);
    const BnBlock bn = identity_bn(3);
    BasicBlockParams params{{2, 3, 2}, k1, bn.params(), k2, bn.params(), kp, bn.params()};
    CHECK(basic_block_forward(x, params).shape() == Shape3{3, 4, 3});
  }

  TEST_CASE("matches composition of oracle primitives") {
    std::mt19937_64 rng(13);
    for (bool project : {false, true}) {
      const int ci = 3, co = project ? 5 : 3, stride = project ? 2 : 1;
      const Tensor3 x = oracle::random_tensor(rng, {ci, 9, 7});
      const auto k1 = oracle::random_floats(rng, co * ci * 9, -0.3f, 0.3f);
      const auto k2 = oracle::random_floats(rng, co * co * 9, -0.3f, 0.3f);
      const auto kp = oracle::random_floats(rng, co * ci, -0.3f, 0.3f);
      const BnBlock bn1 = random_bn(rng, co), bn2 = random_bn(rng, co), bnp = random_bn(rng, co);
      BasicBlockParams params{{ci, co, stride}, k1, bn1.params(), k2, bn2.params(), {}, {}};
      if (project) {
        params.projection_kernel = kp;
        params.projection_bn = bnp.params();
      }
      const Tensor3 y = basic_block_forward(x, params);

      auto bn_ref = [](const Tensor3& t, const BnBlock& b) { return oracle::batch_norm(t, b.gamma, b.beta, b.mean, b.var, 1e-5); };
      auto relu_ref = [](Tensor3 t) {
        for (float& v : t.data()) v = v > 0.0f ? v : 0.0f;
        return t;
      };
      Tensor3 main = relu_ref(bn_ref(oracle::conv2d(x, k1, co, 3, 3, stride, 1, {}), bn1));
      main = bn_ref(oracle::conv2d(main, k2, co, 3, 3, 1, 1, {}), bn2);
      const Tensor3 shortcut = project ? bn_ref(oracle::conv2d(x, kp, co, 1, 1, stride, 0, {}), bnp) : x;
      for (std::size_t i = 0; i < main.data().size(); ++i) main.data()[i] += shortcut.data()[i];
      const Tensor3 ref = relu_ref(main);
      CHECK(max_abs_diff(y.data(), ref.data()) <= 1e-4f);
    }
  }

  TEST_CASE("projection presence must follow the layout") {
    const Tensor3 x({2, 4, 4});
    const std::vector<float> k(2 * 2 * 9);
    const BnBlock bn = identity_bn(2);
    BasicBlockParams params{{2, 2, 1}, k, bn.params(), k, bn.params(), std::vector<float>(4), bn.params()};
    CHECK_THROWS_AS(basic_block_forward(x, params), InvalidInput);
  }
}

TEST_SUITE("network spec") {
  TEST_CASE("canonical topology shapes") {
    const NetworkSpec spec = NetworkSpec::resnet14();
    const auto shapes = infer_shapes(spec);
    CHECK(shapes[9] == Shape3{256, 18, 50});   // backbone output
    CHECK(shapes[10] == Shape3{256, 9, 25});   // 2x2 max pool
    CHECK(shapes[11] == Shape3{8, 9, 25});     // 1x1 channel reduction
    CHECK(shapes[12] == Shape3{1800, 1, 1});   // flatten
    CHECK(shapes[14] == Shape3{2048, 1, 1});   // hidden FC
    CHECK(shapes.back() == Shape3{4 * 36 * 151, 1, 1});
  }

  TEST_CASE("incompatible layers are configuration errors") {
    NetworkSpec spec;
    spec.input = {3, 8, 8};
    spec.layers = {ConvLayer{3, 3, 1, 1, 4, 8, false}};
    CHECK_THROWS_AS(infer_shapes(spec), ConfigError);
    spec.layers = {FlattenLayer{}, FullyConnectedLayer{100, 10}};
    CHECK_THROWS_AS(infer_shapes(spec), ConfigError);
    spec.layers = {FlattenLayer{}, FullyConnectedLayer{192, 10}};
    spec.output = {1, 2, 3};
    CHECK_THROWS_AS(infer_shapes(spec), ConfigError);
  }

  TEST_CASE("MAC formula on single layers") {
    const std::vector<LayerDesc> conv = {ConvLayer{1, 1, 1, 0, 256, 8, true}};
    CHECK(count_macs(conv, {256, 9, 25}) == 460800u);
    const std::vector<LayerDesc> fc = {FullyConnectedLayer{1800, 2048}};
    CHECK(count_macs(fc, {1800, 1, 1}) == 3686400u);
    const std::vector<LayerDesc> free = {ReluLayer{}, BatchNormLayer{4}, MaxPoolLayer{2, 2, 0}, DropoutLayer{}};
    CHECK(count_macs(free, {4, 8, 8}) == 0u);
  }

  TEST_CASE("projection shortcut MACs are included") {
    const std::vector<LayerDesc> block = {ResidualBlockLayer{64, 128, 2}};
    const std::uint64_t expected = 9ull * 64 * 128 * 36 * 100 + 9ull * 128 * 128 * 36 * 100 + 64ull * 128 * 36 * 100;
    CHECK(count_macs(block, {64, 72, 200}) == expected);
  }

  TEST_CASE("MAC count is additive over layer concatenation") {
    const NetworkSpec spec = NetworkSpec::resnet14();
    const auto shapes = infer_shapes(spec);
    const std::span<const LayerDesc> all(spec.layers);
    for (std::size_t cut = 1; cut < all.size(); ++cut) {
      CHECK(count_macs(all, spec.input) ==
            count_macs(all.first(cut), spec.input) + count_macs(all.subspan(cut), shapes[cut - 1]));
    }
  }

  TEST_CASE("canonical network is within 3% of 6.52 GMACs") {
    const double gmacs = static_cast<double>(count_macs(NetworkSpec::resnet14())) / 1e9;
    CHECK(std::abs(gmacs - 6.52) / 6.52 <= 0.03);
  }
}

TEST_SUITE("weights") {
  TEST_CASE("random weights satisfy the layout; tampering is reported") {
    const NetworkSpec spec = NetworkSpec::resnet14();
    WeightBundle w = random_weights(spec, 1);
    CHECK_NOTHROW(validate_weights(spec, w));
    CHECK(w.params.count("4.0.kernel") == 1);
    CHECK(w.params.count("6.4.kernel") == 1);
    CHECK(w.params.count("4.4.kernel") == 0);

    WeightBundle extra = w;
    extra.params["99.kernel"] = {{1}, {0.0f}};
    CHECK_THROWS_WITH_AS(validate_weights(spec, extra), doctest::Contains("unexpected 99.kernel"), ConfigError);

    WeightBundle missing = w;
    missing.params.erase("1.gamma");
    CHECK_THROWS_WITH_AS(validate_weights(spec, missing), doctest::Contains("missing 1.gamma"), ConfigError);

    WeightBundle reshaped = w;
    reshaped.params["11.bias"] = {{9}, std::vector<float>(9)};
    CHECK_THROWS_AS(validate_weights(spec, reshaped), ConfigError);
  }

  TEST_CASE("SWLW byte layout") {
    WeightBundle w;
    w.params["0.bias"] = {{2}, {1.0f, -2.0f}};
    const auto bytes = write_weights(w);
    const std::vector<std::uint8_t> expected = {
        'S', 'W', 'L', 'W', 1, 0, 0, 0, 1, 0, 0, 0,  // magic, version, count
        6,   0,   '0', '.', 'b', 'i', 'a', 's',      // name
        1,   2,   0,   0,   0,                       // rank, dims
        0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0};
    CHECK(bytes == expected);
    CHECK(read_weights(bytes) == w);
  }

  TEST_CASE("SWLW round trip and corruption") {
    const NetworkSpec spec = NetworkSpec::resnet14(GridSpec::culane(), {3, 64, 128});
    const WeightBundle w = random_weights(spec, 2);
    const auto bytes = write_weights(w);
    CHECK(read_weights(bytes) == w);
    CHECK(write_weights(read_weights(bytes)) == bytes);

    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(read_weights(bad), FormatError);
    bad = bytes;
    bad[4] = 2;
    CHECK_THROWS_AS(read_weights(bad), FormatError);
    CHECK_THROWS_AS(read_weights(std::span(bytes).first(bytes.size() - 3)), FormatError);
    CHECK_THROWS_AS(read_weights(std::span(bytes).first(10)), FormatError);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("tiny three-layer network matches hand-composed oracle") {
    NetworkSpec spec;
    spec.input = {1, 8, 8};
    spec.layers = {ConvLayer{3, 3, 1, 1, 1, 2, true}, ReluLayer{}, MaxPoolLayer{2, 2, 0}, FlattenLayer{},
                   FullyConnectedLayer{32, 6}};
    spec.output = {1, 2, 3};
    const WeightBundle w = random_weights(spec, 3);
    std::mt19937_64 rng(14);
    const Tensor3 x = oracle::random_tensor(rng, spec.input);

    Tensor3 ref = oracle::conv2d(x, w.get("0.kernel").values, 2, 3, 3, 1, 1, w.get("0.bias").values);
    for (float& v : ref.data()) v = std::max(v, 0.0f);
    ref = oracle::max_pool(ref, 2, 2, 0);
    const std::vector<float> flat(ref.data().begin(), ref.data().end());
    const auto out = oracle::fully_connected(flat, w.get("4.weight").values, w.get("4.bias").values, 6);

    const ScoreTensor s = forward(x, spec, w);
    REQUIRE(s.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(s.values()[i] - out[i]) <= 1e-4);
  }

  TEST_CASE("dropout is identity; observer sees every layer") {
    NetworkSpec spec;
    spec.input = {1, 2, 2};
    spec.layers = {FlattenLayer{}, DropoutLayer{0.9f}, FullyConnectedLayer{4, 2}};
    spec.output = {1, 1, 2};
    const WeightBundle w = random_weights(spec, 4);
    const Network net(spec, w);
    const Tensor3 x({1, 2, 2}, {1, 2, 3, 4});
    std::vector<std::size_t> seen;
    net.forward(x, [&](std::size_t i, const Tensor3& a) {
      seen.push_back(i);
      if (i == 1) CHECK(a.data()[3] == 4.0f);
    });
    CHECK(seen == std::vector<std::size_t>{0, 1, 2});
  }

  TEST_CASE("wrong input shape and mismatched weights") {
    NetworkSpec spec;
    spec.input = {1, 2, 2};
    spec.layers = {FlattenLayer{}, FullyConnectedLayer{4, 2}};
    spec.output = {1, 1, 2};
    const WeightBundle w = random_weights(spec, 5);
    CHECK_THROWS_AS(forward(Tensor3({1, 3, 2}), spec, w), InvalidInput);
    WeightBundle bad = w;
    bad.params.erase("1.bias");
    CHECK_THROWS_AS(Network(spec, bad), ConfigError);
  }

  TEST_CASE("forward is deterministic") {
    const NetworkSpec spec = NetworkSpec::resnet14(GridSpec::culane(), {3, 64, 160});
    const Network net(spec, random_weights(spec, 6));
    std::mt19937_64 rng(15);
    const Tensor3 x = oracle::random_tensor(rng, spec.input);
    CHECK(net.forward(x) == net.forward(x));
  }
}
