#pragma once

#include <unordered_map>

#include "spectranet/decoder.hpp"
#include "spectranet/rng.hpp"
#include "spectranet/spectral.hpp"
#include "spectranet/window.hpp"

namespace spectranet {

struct InferenceConfig {
  int iters_train = 25;   // gradient-descent steps inside each training step
  int iters_eval = 300;   // gradient-descent steps at evaluation origins
  double step_size = 1.0;
  double init_std = 1.0;  // scale of the Gaussian latent initialization
};

/// Warm-start store: window start index -> last inferred latent.
struct LatentCache {
  std::unordered_map<long, Eigen::VectorXd> entries;

  void store(long start, Eigen::VectorXd z) { entries[start] = std::move(z); }
  const Eigen::VectorXd* get(long start) const {
    const auto it = entries.find(start);
    return it == entries.end() ? nullptr : &it->second;
  }
  long size() const { return static_cast<long>(entries.size()); }
};

struct InferenceResult {
  Eigen::MatrixXd z;     // latent_dim x B, best iterate per window
  Eigen::VectorXd loss;  // masked reference MSE at the returned latents
};

/// Plain gradient descent on the masked reconstruction error of the
/// normalized reference slices, independently per window (batch norm runs in
/// running-stats mode, so windows never interact). Returns the best iterate
/// seen per window, which for iters = 0 is the initialization itself. The
/// loss reads only reference entries with mask 1; nothing else can influence
/// the result.
InferenceResult infer_latent(const Tensor3& ref_values, const Tensor3& ref_mask,
                             Eigen::MatrixXd z0, DecoderParams& params,
                             const LatentMap& map, long iters, double step_size);

/// Single-window convenience: normalizes the context, warm-starts from the
/// cache when the start index is present, otherwise draws z0 ~ N(0, init_std^2)
/// from `rng`. Throws empty_mask_error when the reference has no observed
/// entry (callers skip such windows).
InferenceResult infer_window(const WindowContext& ctx, DecoderParams& params,
                             const LatentMap& map, const InferenceConfig& cfg,
                             bool eval_iters, const LatentCache* cache,
                             RngStream& rng);

/// Stacks the normalized reference slices of one window into B=1 tensors.
void ref_tensors(const WindowContext& ctx, Tensor3& values, Tensor3& mask);

}  // namespace spectranet
