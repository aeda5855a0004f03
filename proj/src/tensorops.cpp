#include "spectranet/tensorops.hpp"

#include <string>

namespace spectranet {

namespace {

void check_same_shape(const Tensor3& a, const Tensor3& b, const char* what) {
  if (!a.same_shape(b)) {
    throw contract_error(std::string(what) + ": shape (" +
                         std::to_string(a.batch) + "," + std::to_string(a.channels) +
                         "," + std::to_string(a.length) + ") vs (" +
                         std::to_string(b.batch) + "," + std::to_string(b.channels) +
                         "," + std::to_string(b.length) + ")");
  }
}

}  // namespace

Tensor3 conv_transpose_forward(const Tensor3& x, const ConvTransposeLayer& layer) {
  if (x.channels != layer.in_channels) {
    throw contract_error("conv_transpose_forward: expected " +
                         std::to_string(layer.in_channels) + " input channels, got " +
                         std::to_string(x.channels));
  }
  const long out_len = layer.out_length(x.length);
  if (out_len <= 0) {
    throw contract_error("conv_transpose_forward: crop (" +
                         std::to_string(layer.crop_left) + "," +
                         std::to_string(layer.crop_right) +
                         ") leaves no output for input length " +
                         std::to_string(x.length));
  }

  // One GEMM produces every (input position, output channel, tap) product;
  // the taps are then scattered onto the strided output grid.
  const Eigen::MatrixXd taps = x.m * layer.weight;  // (B*Lt) x (C_out*k)

  Tensor3 out(x.batch, layer.out_channels, out_len);
  for (long co = 0; co < layer.out_channels; ++co) {
    for (long r = 0; r < layer.kernel; ++r) {
      const auto tap = taps.col(co * layer.kernel + r);
      for (long b = 0; b < x.batch; ++b) {
        double* dst = out.m.col(co).data() + b * out_len;
        const double* src = tap.data() + b * x.length;
        for (long j = 0; j < x.length; ++j) {
          const long u = j * layer.stride + r - layer.crop_left;
          if (u >= 0 && u < out_len) dst[u] += src[j];
        }
      }
    }
    out.m.col(co).array() += layer.bias(co);
  }
  return out;
}

ConvTransposeGrads conv_transpose_backward(const Tensor3& x,
                                           const ConvTransposeLayer& layer,
                                           const Tensor3& grad_out,
                                           bool want_param_grads) {
  if (x.channels != layer.in_channels) {
    throw contract_error("conv_transpose_backward: expected " +
                         std::to_string(layer.in_channels) + " input channels, got " +
                         std::to_string(x.channels));
  }
  const long out_len = layer.out_length(x.length);
  if (grad_out.batch != x.batch || grad_out.channels != layer.out_channels ||
      grad_out.length != out_len) {
    throw contract_error("conv_transpose_backward: grad_out shape (" +
                         std::to_string(grad_out.batch) + "," +
                         std::to_string(grad_out.channels) + "," +
                         std::to_string(grad_out.length) + "), expected (" +
                         std::to_string(x.batch) + "," +
                         std::to_string(layer.out_channels) + "," +
                         std::to_string(out_len) + ")");
  }

  // Gather grad_out back onto the (input position, channel, tap) grid, the
  // adjoint of the forward scatter.
  Eigen::MatrixXd gathered =
      Eigen::MatrixXd::Zero(x.batch * x.length, layer.out_channels * layer.kernel);
  for (long co = 0; co < layer.out_channels; ++co) {
    for (long r = 0; r < layer.kernel; ++r) {
      double* dst = gathered.col(co * layer.kernel + r).data();
      for (long b = 0; b < x.batch; ++b) {
        const double* src = grad_out.m.col(co).data() + b * out_len;
        for (long j = 0; j < x.length; ++j) {
          const long u = j * layer.stride + r - layer.crop_left;
          if (u >= 0 && u < out_len) dst[b * x.length + j] = src[u];
        }
      }
    }
  }

  ConvTransposeGrads grads;
  grads.x = Tensor3::uninit(x.batch, x.channels, x.length);
  grads.x.m.noalias() = gathered * layer.weight.transpose();
  if (want_param_grads) {
    grads.weight.noalias() = x.m.transpose() * gathered;
    grads.bias = grad_out.m.colwise().sum();
  }
  return grads;
}

Tensor3 batchnorm_forward(const Tensor3& x, BatchNormLayer& layer, BnMode mode,
                          BatchNormTrace* trace) {
  if (x.channels != layer.gamma.size()) {
    throw contract_error("batchnorm_forward: expected " +
                         std::to_string(layer.gamma.size()) + " channels, got " +
                         std::to_string(x.channels));
  }
  const long n = x.m.rows();
  Eigen::VectorXd mean(x.channels), var(x.channels);
  if (mode == BnMode::kBatchStats) {
    mean = x.m.colwise().mean();
    for (long c = 0; c < x.channels; ++c) {
      var(c) = (x.m.col(c).array() - mean(c)).square().sum() / static_cast<double>(n);
    }
    layer.running_mean = (1.0 - layer.momentum) * layer.running_mean + layer.momentum * mean;
    layer.running_var = (1.0 - layer.momentum) * layer.running_var + layer.momentum * var;
  } else {
    mean = layer.running_mean;
    var = layer.running_var;
  }

  const Eigen::ArrayXd inv_std = (var.array() + layer.epsilon).rsqrt();
  Tensor3 out = Tensor3::uninit(x.batch, x.channels, x.length);
  for (long c = 0; c < x.channels; ++c) {
    out.m.col(c) =
        ((x.m.col(c).array() - mean(c)) * (inv_std(c) * layer.gamma(c)) + layer.beta(c))
            .matrix();
  }
  if (trace) {
    trace->mean = mean;
    trace->inv_std = inv_std.matrix();
  }
  return out;
}

BatchNormGrads batchnorm_backward(const Tensor3& x, const BatchNormLayer& layer,
                                  BnMode mode, const BatchNormTrace& trace,
                                  const Tensor3& grad_out, bool want_param_grads) {
  check_same_shape(x, grad_out, "batchnorm_backward");
  const double n = static_cast<double>(x.m.rows());

  BatchNormGrads grads;
  grads.x = Tensor3::uninit(x.batch, x.channels, x.length);
  if (want_param_grads) {
    grads.gamma = Eigen::VectorXd::Zero(x.channels);
    grads.beta = Eigen::VectorXd::Zero(x.channels);
  }

  for (long c = 0; c < x.channels; ++c) {
    const Eigen::ArrayXd xhat = (x.m.col(c).array() - trace.mean(c)) * trace.inv_std(c);
    const Eigen::ArrayXd g = grad_out.m.col(c).array();
    const double sum_g = g.sum();
    const double sum_gx = (g * xhat).sum();
    if (want_param_grads) {
      grads.gamma(c) = sum_gx;
      grads.beta(c) = sum_g;
    }
    const double scale = layer.gamma(c) * trace.inv_std(c);
    if (mode == BnMode::kBatchStats) {
      // The normalizing statistics depend on x, so their derivative shows up
      // as the two mean-removal terms.
      grads.x.m.col(c) = (scale * (g - sum_g / n - xhat * (sum_gx / n))).matrix();
    } else {
      grads.x.m.col(c) = (scale * g).matrix();
    }
  }
  return grads;
}

Tensor3 relu_forward(const Tensor3& x) {
  Tensor3 out = Tensor3::uninit(x.batch, x.channels, x.length);
  out.m = x.m.cwiseMax(0.0);
  return out;
}

Tensor3 relu_backward(const Tensor3& x, const Tensor3& grad_out) {
  check_same_shape(x, grad_out, "relu_backward");
  Tensor3 grad = Tensor3::uninit(x.batch, x.channels, x.length);
  grad.m = (x.m.array() > 0.0).select(grad_out.m, 0.0);
  return grad;
}

double masked_mse(const Tensor3& y, const Tensor3& yhat, const Tensor3& mask) {
  check_same_shape(y, yhat, "masked_mse");
  check_same_shape(y, mask, "masked_mse");
  const double count = mask.m.sum();
  if (count <= 0.0) throw empty_mask_error();
  // select() keeps NaNs stored at masked-out positions from reaching the sum.
  const Eigen::MatrixXd diff = (mask.m.array() != 0.0).select(yhat.m - y.m, 0.0);
  return diff.squaredNorm() / count;
}

Tensor3 masked_mse_backward(const Tensor3& y, const Tensor3& yhat,
                            const Tensor3& mask) {
  check_same_shape(y, yhat, "masked_mse_backward");
  check_same_shape(y, mask, "masked_mse_backward");
  const double count = mask.m.sum();
  if (count <= 0.0) throw empty_mask_error();
  Tensor3 grad = Tensor3::uninit(y.batch, y.channels, y.length);
  grad.m = (mask.m.array() != 0.0).select((2.0 / count) * (yhat.m - y.m), 0.0);
  return grad;
}

}  // namespace spectranet
