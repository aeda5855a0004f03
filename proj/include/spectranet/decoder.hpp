#pragma once

#include <cstdint>
#include <filesystem>

#include "spectranet/rng.hpp"
#include "spectranet/spectral.hpp"
#include "spectranet/tensorops.hpp"

namespace spectranet {

/// Architecture of the top-down generator. The embedding of temporal length
/// d_t is upsampled 4x by each of the first two layers, so d_t must equal
/// window / 16 and the stride-1 output layer preserves the window length.
struct DecoderHyper {
  int window = 128;   // generated length, ref_len + horizon
  int ref_len = 104;  // reconstruction part used for latent inference
  int horizon = 24;   // forecast part
  int features = 7;   // output channels, one filter bank per feature
  int d_t = 8;        // embedding temporal length, window / 16
  int kernel = 4;
  int n1 = 128;  // hidden channels after layer 1
  int n2 = 64;   // hidden channels after layer 2
  int degree = 3;     // max trend polynomial degree in the basis
  int max_freq = -1;  // cap on harmonic index, negative = window / 2
  LatentMode mode = LatentMode::kBasis;

  /// Embedding channel count d implied by the basis parameters.
  long embedding_channels() const;
  /// Throws config_error on any inconsistency (lengths, divisibility, crops).
  void validate() const;
};

struct DecoderParams {
  DecoderHyper hyper;
  ConvTransposeLayer conv1, conv2, conv3;
  BatchNormLayer bn1, bn2;
};

/// Builds a decoder with fan-in-scaled uniform weights (+-sqrt(1/(C_in*k))),
/// zero biases and identity batch norm. Draws come from `rng` in layer order.
DecoderParams make_decoder(const DecoderHyper& hyper, RngStream& rng);

/// Number of learnable parameters (conv weights and biases, bn gamma/beta).
long param_count(const DecoderHyper& hyper);

/// Activations saved by the forward pass for the backward pass.
struct DecoderTrace {
  Tensor3 input;             // embedding batch
  Tensor3 pre_bn1, post_bn1, act1;
  Tensor3 pre_bn2, post_bn2, act2;
  BatchNormTrace bn1, bn2;
};

/// Embedding batch (B, d, d_t) -> window batch (B, features, window):
/// two ConvTranspose -> BN -> ReLU stages at stride 4, then a bare stride-1
/// ConvTranspose. Batch-stats mode updates the running BN statistics.
Tensor3 decoder_forward(const Tensor3& embedding, DecoderParams& params,
                        BnMode mode, DecoderTrace* trace = nullptr);

struct DecoderGrads {
  Tensor3 embedding;
  Eigen::MatrixXd w1, w2, w3;
  Eigen::VectorXd b1, b2, b3;
  Eigen::VectorXd gamma1, beta1, gamma2, beta2;
};

/// Reverse-order chain rule through the three stages. Parameter gradients are
/// skipped when want_param_grads is false.
DecoderGrads decoder_backward(const DecoderTrace& trace, const DecoderParams& params,
                              const Tensor3& grad_out, BnMode mode,
                              bool want_param_grads = true);

/// One generated window split into its two time slices, (features x ref_len)
/// and (features x horizon).
struct WindowOutput {
  Eigen::MatrixXd reconstruction;
  Eigen::MatrixXd forecast;
};

/// Splits batch element b of a decoder output into reconstruction/forecast.
WindowOutput split_output(const Tensor3& y, long b, int ref_len);

/// Serializes the decoder (hyper fields, basis parameters, seed, then all
/// parameter and running-stat arrays as little-endian real64 in declared
/// order). load(save(x)) is bit-identical.
void save_model(const DecoderParams& params, const std::filesystem::path& path,
                std::uint64_t seed);

struct LoadedModel {
  DecoderParams params;
  std::uint64_t seed = 0;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace spectranet
