#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "oracles.hpp"
#include "spectranet/tensorops.hpp"

using namespace spectranet;

namespace {

Tensor3 from_values(std::initializer_list<double> values) {
  Tensor3 t(1, 1, static_cast<long>(values.size()));
  long i = 0;
  for (double v : values) t.at(0, 0, i++) = v;
  return t;
}

}  // namespace

TEST_CASE("conv transpose spreads a single input across the kernel") {
  ConvTransposeLayer layer;
  layer.in_channels = layer.out_channels = 1;
  layer.kernel = 4;
  layer.stride = 4;
  layer.weight = Eigen::MatrixXd::Ones(1, 4);
  layer.bias = Eigen::VectorXd::Zero(1);

  const Tensor3 y = conv_transpose_forward(from_values({1.0}), layer);
  CHECK(y.length == 4);
  for (long t = 0; t < 4; ++t) CHECK(y.at(0, 0, t) == doctest::Approx(1.0));
}

TEST_CASE("conv transpose output length is (Lt-1)*stride + kernel") {
  ConvTransposeLayer layer;
  layer.in_channels = layer.out_channels = 1;
  layer.kernel = 4;
  layer.stride = 4;
  layer.weight = Eigen::MatrixXd::Ones(1, 4);
  layer.bias = Eigen::VectorXd::Zero(1);
  CHECK(conv_transpose_forward(from_values({1.0, 0.0}), layer).length == 8);
}

TEST_CASE("conv transpose matches the naive loop implementation") {
  RngStream rng(7, "test-conv-oracle");
  for (int trial = 0; trial < 10; ++trial) {
    auto layer = oracles::random_layer(3, 4, 8, 4, 2, 2, rng);
    Tensor3 x(2, 3, 5);
    oracles::fill_normal(x, rng);
    const Tensor3 fast = conv_transpose_forward(x, layer);
    const Tensor3 slow = oracles::naive_conv_transpose(x, layer);
    REQUIRE(fast.same_shape(slow));
    CHECK((fast.m - slow.m).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conv transpose with k == stride and no crop maps Lt to stride*Lt") {
  RngStream rng(8, "test-conv-len");
  for (long lt : {1L, 3L, 7L}) {
    auto layer = oracles::random_layer(2, 3, 4, 4, 0, 0, rng);
    Tensor3 x(1, 2, lt);
    oracles::fill_normal(x, rng);
    CHECK(conv_transpose_forward(x, layer).length == 4 * lt);
  }
}

TEST_CASE("conv transpose rejects channel mismatch") {
  RngStream rng(9, "test-conv-shape");
  auto layer = oracles::random_layer(3, 2, 4, 4, 0, 0, rng);
  Tensor3 x(1, 5, 4);
  CHECK_THROWS_AS(conv_transpose_forward(x, layer), contract_error);
}

TEST_CASE("conv transpose backward: zero grad gives zero gradients") {
  RngStream rng(10, "test-conv-bwd0");
  auto layer = oracles::random_layer(2, 3, 8, 4, 2, 2, rng);
  Tensor3 x(2, 2, 4);
  oracles::fill_normal(x, rng);
  const Tensor3 zero(2, 3, layer.out_length(4));
  auto grads = conv_transpose_backward(x, layer, zero);
  CHECK(grads.x.m.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.weight.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.bias.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("conv transpose backward: bias gradient sums grad_out over batch and time") {
  RngStream rng(11, "test-conv-bias");
  auto layer = oracles::random_layer(1, 1, 4, 4, 0, 0, rng);
  Tensor3 x(2, 1, 3);
  oracles::fill_normal(x, rng);
  Tensor3 g(2, 1, 12);
  oracles::fill_normal(g, rng);
  auto grads = conv_transpose_backward(x, layer, g);
  CHECK(grads.bias(0) == doctest::Approx(g.m.sum()).epsilon(1e-12));
}

TEST_CASE("conv transpose backward matches finite differences") {
  RngStream rng(12, "test-conv-fd");
  for (int trial = 0; trial < 5; ++trial) {
    auto layer = oracles::random_layer(2, 3, 8, 4, 2, 2, rng);
    Tensor3 x(2, 2, 4);
    oracles::fill_normal(x, rng);
    Tensor3 g(2, 3, layer.out_length(4));
    oracles::fill_normal(g, rng);

    auto objective = [&] {
      return conv_transpose_forward(x, layer).m.cwiseProduct(g.m).sum();
    };
    auto grads = conv_transpose_backward(x, layer, g);
    CHECK(oracles::max_grad_err(objective, x.m.data(), grads.x.m.data(), x.m.size()) < 1e-6);
    CHECK(oracles::max_grad_err(objective, layer.weight.data(), grads.weight.data(),
                                layer.weight.size()) < 1e-6);
    CHECK(oracles::max_grad_err(objective, layer.bias.data(), grads.bias.data(),
                                layer.bias.size()) < 1e-6);
  }
}

TEST_CASE("batchnorm batch-stats output has zero mean and unit variance per channel") {
  RngStream rng(13, "test-bn-stats");
  Tensor3 x(3, 2, 16);
  oracles::fill_normal(x, rng, 3.0);
  x.m.array() += 5.0;
  auto bn = BatchNormLayer::identity(2);
  const Tensor3 y = batchnorm_forward(x, bn, BnMode::kBatchStats);
  for (long c = 0; c < 2; ++c) {
    const double mean = y.m.col(c).mean();
    const double var = (y.m.col(c).array() - mean).square().mean();
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // epsilon correction
  }
}

TEST_CASE("batchnorm running-stats mode with identity stats is the identity map") {
  RngStream rng(14, "test-bn-id");
  Tensor3 x(2, 3, 5);
  oracles::fill_normal(x, rng);
  auto bn = BatchNormLayer::identity(3);
  bn.epsilon = 0.0;
  const Tensor3 y = batchnorm_forward(x, bn, BnMode::kRunningStats);
  CHECK((y.m - x.m).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(bn.running_mean.cwiseAbs().maxCoeff() == 0.0);  // nothing mutated
}

TEST_CASE("batchnorm running statistics blend with momentum 0.1") {
  // Two-element batch, one channel, one time step: batch mean 3, var 4.
  Tensor3 x(2, 1, 1);
  x.at(0, 0, 0) = 1.0;
  x.at(1, 0, 0) = 5.0;
  auto bn = BatchNormLayer::identity(1);
  bn.running_mean(0) = 2.0;
  bn.running_var(0) = 1.0;
  batchnorm_forward(x, bn, BnMode::kBatchStats);
  CHECK(bn.running_mean(0) == doctest::Approx(0.9 * 2.0 + 0.1 * 3.0).epsilon(1e-15));
  CHECK(bn.running_var(0) == doctest::Approx(0.9 * 1.0 + 0.1 * 4.0).epsilon(1e-15));
}

TEST_CASE("batchnorm backward: zero grad gives zeros") {
  RngStream rng(15, "test-bn-bwd0");
  Tensor3 x(2, 2, 3);
  oracles::fill_normal(x, rng);
  auto bn = BatchNormLayer::identity(2);
  BatchNormTrace trace;
  batchnorm_forward(x, bn, BnMode::kBatchStats, &trace);
  const Tensor3 zero(2, 2, 3);
  auto grads = batchnorm_backward(x, bn, BnMode::kBatchStats, trace, zero);
  CHECK(grads.x.m.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.gamma.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grads.beta.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batchnorm running-stats backward is the per-channel affine derivative") {
  RngStream rng(16, "test-bn-affine");
  Tensor3 x(2, 2, 4);
  oracles::fill_normal(x, rng);
  auto bn = BatchNormLayer::identity(2);
  bn.gamma << 2.0, -1.5;
  bn.running_var << 4.0, 0.25;
  bn.running_mean << 1.0, -2.0;
  BatchNormTrace trace;
  batchnorm_forward(x, bn, BnMode::kRunningStats, &trace);
  Tensor3 g(2, 2, 4);
  oracles::fill_normal(g, rng);
  auto grads = batchnorm_backward(x, bn, BnMode::kRunningStats, trace, g);
  for (long c = 0; c < 2; ++c) {
    const double scale = bn.gamma(c) / std::sqrt(bn.running_var(c) + bn.epsilon);
    CHECK((grads.x.m.col(c) - scale * g.m.col(c)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("batchnorm batch-stats backward matches finite differences") {
  RngStream rng(17, "test-bn-fd");
  for (int trial = 0; trial < 5; ++trial) {
    Tensor3 x(2, 2, 5);
    oracles::fill_normal(x, rng);
    auto bn = BatchNormLayer::identity(2);
    oracles::fill_normal(bn.gamma, rng);
    oracles::fill_normal(bn.beta, rng);
    Tensor3 g(2, 2, 5);
    oracles::fill_normal(g, rng);

    auto objective = [&] {
      BatchNormLayer probe = bn;  // keep running stats out of the probe
      return batchnorm_forward(x, probe, BnMode::kBatchStats).m.cwiseProduct(g.m).sum();
    };
    BatchNormLayer fwd = bn;
    BatchNormTrace trace;
    batchnorm_forward(x, fwd, BnMode::kBatchStats, &trace);
    auto grads = batchnorm_backward(x, bn, BnMode::kBatchStats, trace, g);
    CHECK(oracles::max_grad_err(objective, x.m.data(), grads.x.m.data(), x.m.size()) < 1e-6);
    CHECK(oracles::max_grad_err(objective, bn.gamma.data(), grads.gamma.data(), 2) < 1e-6);
    CHECK(oracles::max_grad_err(objective, bn.beta.data(), grads.beta.data(), 2) < 1e-6);
  }
}

TEST_CASE("relu forward and its subgradient at zero") {
  const Tensor3 x = from_values({-1.0, 0.0, 2.0});
  const Tensor3 y = relu_forward(x);
  CHECK(y.at(0, 0, 0) == 0.0);
  CHECK(y.at(0, 0, 1) == 0.0);
  CHECK(y.at(0, 0, 2) == 2.0);

  const Tensor3 g = from_values({5.0, 5.0, 5.0});
  const Tensor3 gx = relu_backward(x, g);
  CHECK(gx.at(0, 0, 0) == 0.0);
  CHECK(gx.at(0, 0, 1) == 0.0);  // derivative defined as 0 at exactly 0
  CHECK(gx.at(0, 0, 2) == 5.0);
}

TEST_CASE("relu backward matches finite differences away from the kink") {
  RngStream rng(18, "test-relu-fd");
  Tensor3 x(2, 3, 7);
  oracles::fill_normal(x, rng);
  for (long i = 0; i < x.m.size(); ++i) {
    if (std::abs(x.m.data()[i]) < 1e-3) x.m.data()[i] = 0.5;
  }
  Tensor3 g(2, 3, 7);
  oracles::fill_normal(g, rng);
  auto objective = [&] { return relu_forward(x).m.cwiseProduct(g.m).sum(); };
  auto gx = relu_backward(x, g);
  CHECK(oracles::max_grad_err(objective, x.m.data(), gx.m.data(), x.m.size()) < 1e-6);
}

TEST_CASE("masked mse ignores masked entries") {
  const Tensor3 y = from_values({1.0, 2.0});
  const Tensor3 yhat = from_values({1.0, 4.0});
  const Tensor3 mask1 = from_values({1.0, 0.0});
  CHECK(masked_mse(y, yhat, mask1) == 0.0);
  const Tensor3 full = from_values({1.0, 1.0});
  CHECK(masked_mse(y, yhat, full) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("masked mse equals plain mse on the observed subset") {
  RngStream rng(19, "test-mse-subset");
  Tensor3 y(2, 3, 8), yhat(2, 3, 8), mask(2, 3, 8);
  oracles::fill_normal(y, rng);
  oracles::fill_normal(yhat, rng);
  for (long i = 0; i < mask.m.size(); ++i) mask.m.data()[i] = rng.uniform() < 0.6 ? 1.0 : 0.0;

  double sum = 0.0;
  long count = 0;
  for (long i = 0; i < mask.m.size(); ++i) {
    if (mask.m.data()[i] != 0.0) {
      const double d = yhat.m.data()[i] - y.m.data()[i];
      sum += d * d;
      ++count;
    }
  }
  REQUIRE(count > 0);
  CHECK(masked_mse(y, yhat, mask) == doctest::Approx(sum / count).epsilon(1e-14));
}

TEST_CASE("masked mse with full mask equals plain mse") {
  RngStream rng(20, "test-mse-full");
  Tensor3 y(1, 2, 16), yhat(1, 2, 16);
  oracles::fill_normal(y, rng);
  oracles::fill_normal(yhat, rng);
  Tensor3 mask(1, 2, 16);
  mask.m.setOnes();
  const double plain = (yhat.m - y.m).squaredNorm() / yhat.m.size();
  CHECK(std::abs(masked_mse(y, yhat, mask) - plain) <= 1e-15);
}

TEST_CASE("masked mse rejects an empty mask and NaN never leaks through") {
  Tensor3 y = from_values({1.0, 2.0});
  y.at(0, 0, 1) = std::nan("");
  const Tensor3 yhat = from_values({1.0, 4.0});
  const Tensor3 mask = from_values({1.0, 0.0});
  CHECK(masked_mse(y, yhat, mask) == 0.0);
  CHECK(masked_mse_backward(y, yhat, mask).all_finite());

  const Tensor3 empty = from_values({0.0, 0.0});
  CHECK_THROWS_AS(masked_mse(y, yhat, empty), empty_mask_error);
  CHECK_THROWS_AS(masked_mse_backward(y, yhat, empty), empty_mask_error);
}

TEST_CASE("masked mse gradient matches finite differences") {
  RngStream rng(21, "test-mse-fd");
  Tensor3 y(2, 2, 6), yhat(2, 2, 6), mask(2, 2, 6);
  oracles::fill_normal(y, rng);
  oracles::fill_normal(yhat, rng);
  for (long i = 0; i < mask.m.size(); ++i) mask.m.data()[i] = rng.uniform() < 0.7 ? 1.0 : 0.0;
  auto objective = [&] { return masked_mse(y, yhat, mask); };
  auto grad = masked_mse_backward(y, yhat, mask);
  CHECK(oracles::max_grad_err(objective, yhat.m.data(), grad.m.data(), yhat.m.size()) < 1e-6);
}

TEST_CASE("forwards are deterministic") {
  RngStream rng(22, "test-det");
  auto layer = oracles::random_layer(3, 2, 8, 4, 2, 2, rng);
  Tensor3 x(2, 3, 6);
  oracles::fill_normal(x, rng);
  const Tensor3 a = conv_transpose_forward(x, layer);
  const Tensor3 b = conv_transpose_forward(x, layer);
  CHECK(a.m == b.m);

  auto bn = BatchNormLayer::identity(2);
  const Tensor3 c = batchnorm_forward(a, bn, BnMode::kRunningStats);
  const Tensor3 d = batchnorm_forward(a, bn, BnMode::kRunningStats);
  CHECK(c.m == d.m);
}
