#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "topoforge/adam.hpp"
#include "topoforge/error.hpp"
#include "topoforge/layers.hpp"
#include "support/oracles.hpp"

using namespace topoforge;
using namespace topoforge::nn;
using namespace topoforge::oracle;

TEST(Conv, IdentityKernel) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({2, 3, 4, 5}, rng);
  Tensor w({3, 3, 1, 1, 1});
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  EXPECT_EQ(conv_forward(x, w, Tensor({3}), {1, 1, 1}, {0, 0, 0}), x);
}

TEST(Conv, AllOnesCountsOverlap) {
  const Tensor x({1, 1, 5, 5}, 1.0);
  const Tensor w({1, 1, 1, 3, 3}, 1.0);
  const Tensor y = conv_forward(x, w, Tensor({1}), {1, 1, 1}, {0, 1, 1});
  ASSERT_EQ(y.shape(), (std::vector<std::size_t>{1, 1, 5, 5}));
  EXPECT_EQ(y[0], 4.0);
  EXPECT_EQ(y[2], 6.0);
  EXPECT_EQ(y[12], 9.0);
  EXPECT_EQ(y[24], 4.0);
  EXPECT_EQ(y[10], 6.0);
}

TEST(Conv, OutputSizeAndChannelCheck) {
  const Tensor x({1, 2, 7, 9});
  const Tensor w({4, 2, 1, 3, 3});
  EXPECT_EQ(conv_forward(x, w, Tensor({4}), {1, 2, 2}, {0, 0, 0}).shape(),
            (std::vector<std::size_t>{1, 4, 3, 4}));
  EXPECT_THROW(conv_forward(Tensor({1, 3, 7, 9}), w, Tensor({4}), {1, 1, 1}, {0, 1, 1}), Error);
}

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, Conv2d) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()));
  Tensor x = random_tensor({2, 3, 4, 4}, rng);
  Tensor w = random_tensor({2, 3, 1, 3, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  const Tensor r = random_tensor({2, 2, 4, 4}, rng);
  const Triple s{1, 1, 1}, p{0, 1, 1};
  const auto loss = [&] { return dot(conv_forward(x, w, b, s, p), r); };
  const ConvGrads g = conv_backward(x, w, r, s, p);
  EXPECT_LE(fd_error(x, g.dx, loss), 1e-6);
  EXPECT_LE(fd_error(w, g.dw, loss), 1e-6);
  EXPECT_LE(fd_error(b, g.db, loss), 1e-6);
}

TEST_P(GradientCheck, Conv3dStrided) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) + 100);
  Tensor x = random_tensor({1, 2, 3, 4, 5}, rng);
  Tensor w = random_tensor({3, 2, 3, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  const Triple s{1, 2, 2}, p{1, 1, 1};
  const Tensor y0 = conv_forward(x, w, b, s, p);
  const Tensor r = random_tensor(y0.shape(), rng);
  const auto loss = [&] { return dot(conv_forward(x, w, b, s, p), r); };
  const ConvGrads g = conv_backward(x, w, r, s, p);
  EXPECT_LE(fd_error(x, g.dx, loss), 1e-6);
  EXPECT_LE(fd_error(w, g.dw, loss), 1e-6);
  EXPECT_LE(fd_error(b, g.db, loss), 1e-6);
}

TEST_P(GradientCheck, ConvTranspose) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) + 200);
  Tensor x = random_tensor({2, 3, 3, 4}, rng);
  Tensor w = random_tensor({3, 2, 1, 2, 3}, rng);
  Tensor b = random_tensor({2}, rng);
  const Triple s{1, 2, 3}, p{0, 0, 0};
  const Tensor y0 = conv_transpose_forward(x, w, b, s, p);
  ASSERT_EQ(y0.shape(), (std::vector<std::size_t>{2, 2, 6, 12}));
  const Tensor r = random_tensor(y0.shape(), rng);
  const auto loss = [&] { return dot(conv_transpose_forward(x, w, b, s, p), r); };
  const ConvGrads g = conv_transpose_backward(x, w, r, s, p);
  EXPECT_LE(fd_error(x, g.dx, loss), 1e-6);
  EXPECT_LE(fd_error(w, g.dw, loss), 1e-6);
  EXPECT_LE(fd_error(b, g.db, loss), 1e-6);
}

TEST_P(GradientCheck, MaxPool) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) + 300);
  Tensor x = random_tensor({2, 2, 4, 6}, rng);
  const Triple k{1, 2, 2};
  const PoolResult p0 = maxpool_forward(x, k, k);
  const Tensor r = random_tensor(p0.y.shape(), rng);
  const auto loss = [&] { return dot(maxpool_forward(x, k, k).y, r); };
  EXPECT_LE(fd_error(x, maxpool_backward(r, p0.argmax, x.shape()), loss), 1e-6);
}

TEST_P(GradientCheck, Relu) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(GetParam()) + 400);
  Tensor x = random_tensor({1, 2, 5, 5}, rng);
  for (double& v : x.storage()) v += v > 0 ? 0.01 : -0.01;  // keep clear of the kink
  const Tensor r = random_tensor(x.shape(), rng);
  const auto loss = [&] { return dot(relu_forward(x), r); };
  EXPECT_LE(fd_error(x, relu_backward(x, r), loss), 1e-6);
}

TEST_P(GradientCheck, SequentialStack) {
  const auto seed = static_cast<std::uint64_t>(GetParam());
  std::vector<Layer> layers{make_layer(LayerSpec::conv(2, 2, 3), seed),
                            make_layer(LayerSpec::relu(2, 3), 0),
                            make_layer(LayerSpec::max_pool(2, 3, {1, 2, 2}), 0),
                            make_layer(LayerSpec::conv_transpose(2, 3, 2, {1, 2, 2}), seed + 1),
                            make_layer(LayerSpec::conv(2, 2, 1), seed + 2)};
  Sequential net(std::move(layers));
  std::mt19937_64 rng(seed + 500);
  Tensor x = random_tensor({2, 2, 4, 6}, rng);
  const Tensor t = random_tensor({2, 1, 4, 6}, rng);
  const auto loss = [&] {
    const Tensor y = net.forward(x);
    return mse_loss(y.values(), t.values());
  };
  ForwardTrace trace;
  const Tensor y = net.forward(x, &trace);
  auto grads = net.zero_grads();
  net.backward(trace, Tensor(y.shape(), mse_grad(y.values(), t.values())), grads);
  for (std::size_t l : {0u, 3u, 4u}) {
    EXPECT_LE(fd_error(net.layers()[l].weight, grads[l].dw, loss), 1e-6) << "layer " << l;
    EXPECT_LE(fd_error(net.layers()[l].bias, grads[l].db, loss), 1e-6) << "layer " << l;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Values(1, 2, 3, 4, 5));

TEST(ConvTranspose, NearestNeighbourUpsampling) {
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({1, 2, 3, 4}, rng);
  Tensor w({2, 2, 1, 2, 2});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t q = 0; q < 4; ++q) w[(c * 2 + c) * 4 + q] = 1.0;
  const Tensor y = conv_transpose_forward(x, w, Tensor({2}), {1, 2, 2}, {0, 0, 0});
  ASSERT_EQ(y.shape(), (std::vector<std::size_t>{1, 2, 6, 8}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(y[(c * 6 + i) * 8 + j], x[(c * 3 + i / 2) * 4 + j / 2]);
}

TEST(ConvTranspose, AdjointOfConvolution) {
  std::mt19937_64 rng(6);
  for (const Triple s : {Triple{1, 1, 1}, Triple{1, 2, 2}, Triple{2, 2, 1}}) {
    const Tensor w = random_tensor({3, 2, 3, 3, 3}, rng);
    const Tensor image({2, 2, 6, 7, 8});
    const Triple p{1, 1, 1};
    const Tensor shape_probe = conv_forward(image, w, Tensor({3}), s, p);
    const Tensor z = random_tensor(shape_probe.shape(), rng);
    const Tensor via_conv = conv_backward(image, w, z, s, p).dx;
    Tensor via_transpose = conv_transpose_forward(z, w, Tensor({2}), s, p);
    // Transposed output may be shorter than the image when strides do not divide evenly.
    ASSERT_EQ(via_transpose.rank(), 5u);
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t d = 0; d < via_transpose.dim(2); ++d)
          for (std::size_t h = 0; h < via_transpose.dim(3); ++h)
            for (std::size_t q = 0; q < via_transpose.dim(4); ++q) {
              const double a = via_transpose[(((n * 2 + c) * via_transpose.dim(2) + d) * via_transpose.dim(3) + h) *
                                                 via_transpose.dim(4) + q];
              const double b = via_conv[(((n * 2 + c) * 6 + d) * 7 + h) * 8 + q];
              EXPECT_NEAR(a, b, 1e-12);
            }
  }
}

TEST(MaxPool, MatchesBruteForceWindows) {
  std::mt19937_64 rng(10);
  const Tensor x = random_tensor({2, 3, 6, 8}, rng);
  const PoolResult p = maxpool_forward(x, {1, 2, 2}, {1, 2, 2});
  ASSERT_EQ(p.y.shape(), (std::vector<std::size_t>{2, 3, 3, 4}));
  for (std::size_t plane = 0; plane < 6; ++plane)
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 4; ++j) {
        double best = -1e300;
        for (std::size_t a = 0; a < 2; ++a)
          for (std::size_t b = 0; b < 2; ++b) best = std::max(best, x[plane * 48 + (2 * i + a) * 8 + 2 * j + b]);
        EXPECT_EQ(p.y[(plane * 3 + i) * 4 + j], best);
      }
}

TEST(MaxPool, TiesRouteToLowestIndex) {
  const Tensor x({1, 1, 2, 4}, 0.25);
  const PoolResult p = maxpool_forward(x, {1, 2, 2}, {1, 2, 2});
  for (double v : p.y.storage()) EXPECT_EQ(v, 0.25);
  EXPECT_EQ(p.argmax, (std::vector<std::size_t>{0, 2}));
  const Tensor dx = maxpool_backward(Tensor({1, 1, 1, 2}, 1.0), p.argmax, x.shape());
  EXPECT_EQ(dx.to_vector(), (std::vector<double>{1, 0, 1, 0, 0, 0, 0, 0}));
}

TEST(Activation, ReluAndMse) {
  const Tensor x({1, 1, 1, 4}, std::vector<double>{-2.0, -0.0, 0.5, 3.0});
  EXPECT_EQ(relu_forward(x).to_vector(), (std::vector<double>{0.0, 0.0, 0.5, 3.0}));
  const std::vector<double> a{0.3, 0.7};
  EXPECT_EQ(mse_loss(a, a), 0.0);
  EXPECT_NEAR(mse_loss(std::vector<double>{0.49}, std::vector<double>{0.51}), 0.0004, 1e-16);
  EXPECT_THROW(mse_loss(a, std::vector<double>{1.0}), Error);
}

TEST(Sequential, FrozenLayersGetNoGradient) {
  std::vector<Layer> layers{make_layer(LayerSpec::conv(2, 2, 4), 1), make_layer(LayerSpec::relu(2, 4), 0),
                            make_layer(LayerSpec::conv(2, 4, 1), 2)};
  layers[0].frozen = true;
  Sequential net(std::move(layers));
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({1, 2, 5, 5}, rng);
  ForwardTrace trace;
  const Tensor y = net.forward(x, &trace);
  auto grads = net.zero_grads();
  net.backward(trace, Tensor(y.shape(), 1.0), grads);
  for (double v : grads[0].dw.storage()) EXPECT_EQ(v, 0.0);
  for (double v : grads[0].db.storage()) EXPECT_EQ(v, 0.0);
  double mag = 0.0;
  for (double v : grads[2].dw.storage()) mag += std::abs(v);
  EXPECT_GT(mag, 0.0);
}

TEST(Sequential, ForwardIsReproducible) {
  std::vector<Layer> layers{make_layer(LayerSpec::conv(3, 2, 4), 7), make_layer(LayerSpec::relu(3, 4), 0),
                            make_layer(LayerSpec::max_pool(3, 4, {2, 2, 2}), 0)};
  Sequential net(std::move(layers));
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({1, 2, 4, 6, 8}, rng);
  const Tensor a = net.forward(x);
  EXPECT_EQ(a, net.forward(x));
  EXPECT_EQ(a.shape(), (std::vector<std::size_t>{1, 4, 2, 3, 4}));
  EXPECT_EQ(make_layer(LayerSpec::conv(2, 5, 16), 9).weight, make_layer(LayerSpec::conv(2, 5, 16), 9).weight);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  std::vector<double> p{1.0, -2.0, 3.5};
  const std::vector<double> g(3, 0.0);
  AdamState st;
  std::span<double> ps[] = {p};
  std::span<const double> gs[] = {g};
  for (int i = 0; i < 5; ++i) adam_step(ps, gs, st);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.5}));
  EXPECT_EQ(st.step, 5u);
}

TEST(Adam, FirstStepMovesByAlpha) {
  std::vector<double> p{0.0, 0.0, 0.0};
  const std::vector<double> g{0.37, -12.0, 4e-3};
  AdamState st;
  std::span<double> ps[] = {p};
  std::span<const double> gs[] = {g};
  adam_step(ps, gs, st);
  for (std::size_t i = 0; i < 3; ++i) {
    // Bias correction makes the first step alpha * g / (|g| + eps).
    EXPECT_NEAR(p[i], -1e-3 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
    EXPECT_NEAR(p[i], -1e-3 * (g[i] > 0 ? 1 : -1), 1e-8);
  }
  std::vector<double> wrong(2, 0.0);
  std::span<const double> bad[] = {wrong};
  EXPECT_THROW(adam_step(ps, bad, st), Error);
}

TEST(Adam, MinimisesQuadratic) {
  std::vector<double> x{5.0};
  std::vector<double> g{0.0};
  AdamState st;
  st.config.alpha = 0.1;
  std::span<double> ps[] = {x};
  std::span<const double> gs[] = {g};
  int steps = 0;
  while (std::abs(x[0]) >= 1e-2 && steps < 2000) {
    g[0] = 2 * x[0];
    adam_step(ps, gs, st);
    ++steps;
  }
  EXPECT_LT(std::abs(x[0]), 1e-2);
  EXPECT_LE(steps, 2000);
}
