#pragma once

#include <Eigen/Dense>

#include "spectranet/errors.hpp"

namespace spectranet {

/// Dense rank-3 array (batch, channels, time) backed by a single Eigen
/// matrix. Row b*length + t holds all channels of batch element b at time t,
/// so every channel is one contiguous column and per-channel statistics are
/// column reductions. All values are real64.
struct Tensor3 {
  long batch = 0;
  long channels = 0;
  long length = 0;
  Eigen::MatrixXd m;  // (batch * length) x channels

  Tensor3() = default;
  Tensor3(long b, long c, long l)
      : batch(b), channels(c), length(l), m(Eigen::MatrixXd::Zero(b * l, c)) {}

  static Tensor3 zeros(long b, long c, long l) { return Tensor3(b, c, l); }

  /// Allocation without the zero fill, for outputs that overwrite every cell.
  static Tensor3 uninit(long b, long c, long l) {
    Tensor3 t;
    t.batch = b;
    t.channels = c;
    t.length = l;
    t.m.resize(b * l, c);
    return t;
  }

  double& at(long b, long c, long t) { return m(b * length + t, c); }
  double at(long b, long c, long t) const { return m(b * length + t, c); }

  /// The (length x channels) slab of one batch element.
  auto element(long b) { return m.middleRows(b * length, length); }
  auto element(long b) const { return m.middleRows(b * length, length); }

  bool same_shape(const Tensor3& o) const {
    return batch == o.batch && channels == o.channels && length == o.length;
  }
  bool all_finite() const { return m.allFinite(); }
};

/// 1-d transposed convolution over the time axis.
///
/// The weight covers (in_channels, out_channels, kernel) and is stored as an
/// in_channels x (out_channels * kernel) matrix with column co*kernel + r
/// holding tap r of output channel co. Input position j contributes to output
/// positions j*stride + r - crop_left for r in [0, kernel). The raw output
/// length (len_in - 1) * stride + kernel is trimmed by crop_left/crop_right.
struct ConvTransposeLayer {
  long in_channels = 0;
  long out_channels = 0;
  long kernel = 1;
  long stride = 1;
  long crop_left = 0;
  long crop_right = 0;
  Eigen::MatrixXd weight;  // in_channels x (out_channels * kernel)
  Eigen::VectorXd bias;    // out_channels

  long out_length(long len_in) const {
    return (len_in - 1) * stride + kernel - crop_left - crop_right;
  }
};

/// Per-channel batch normalization state. running_var must stay strictly
/// positive; in running-stats mode the layer is a fixed per-channel affine
/// map and forward mutates nothing.
struct BatchNormLayer {
  Eigen::VectorXd gamma, beta;
  Eigen::VectorXd running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormLayer identity(long channels) {
    BatchNormLayer bn;
    bn.gamma = Eigen::VectorXd::Ones(channels);
    bn.beta = Eigen::VectorXd::Zero(channels);
    bn.running_mean = Eigen::VectorXd::Zero(channels);
    bn.running_var = Eigen::VectorXd::Ones(channels);
    return bn;
  }
};

enum class BnMode { kBatchStats, kRunningStats };

/// Statistics the forward pass actually normalized with; needed by backward.
struct BatchNormTrace {
  Eigen::VectorXd mean;
  Eigen::VectorXd inv_std;
};

Tensor3 conv_transpose_forward(const Tensor3& x, const ConvTransposeLayer& layer);

struct ConvTransposeGrads {
  Tensor3 x;
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

/// Gradients of the scalar <grad_out, forward(x)> w.r.t. x, weight and bias.
/// Weight/bias gradients are skipped when want_param_grads is false (latent
/// inference only needs the input gradient).
ConvTransposeGrads conv_transpose_backward(const Tensor3& x,
                                           const ConvTransposeLayer& layer,
                                           const Tensor3& grad_out,
                                           bool want_param_grads = true);

/// Batch-stats mode normalizes each channel over (batch, time) with the
/// biased variance and folds the batch statistics into the running ones with
/// the configured momentum. Running-stats mode applies the stored affine map.
Tensor3 batchnorm_forward(const Tensor3& x, BatchNormLayer& layer, BnMode mode,
                          BatchNormTrace* trace = nullptr);

struct BatchNormGrads {
  Tensor3 x;
  Eigen::VectorXd gamma, beta;
};

BatchNormGrads batchnorm_backward(const Tensor3& x, const BatchNormLayer& layer,
                                  BnMode mode, const BatchNormTrace& trace,
                                  const Tensor3& grad_out,
                                  bool want_param_grads = true);

Tensor3 relu_forward(const Tensor3& x);

/// Subgradient with derivative 0 at exactly 0.
Tensor3 relu_backward(const Tensor3& x, const Tensor3& grad_out);

/// Mean of squared errors over mask==1 entries. Masked-out entries never
/// enter arithmetic (they may hold NaN). Throws empty_mask_error when the
/// mask has no observed entry.
double masked_mse(const Tensor3& y, const Tensor3& yhat, const Tensor3& mask);

/// d masked_mse / d yhat = 2 (yhat - y) * mask / count.
Tensor3 masked_mse_backward(const Tensor3& y, const Tensor3& yhat,
                            const Tensor3& mask);

}  // namespace spectranet
