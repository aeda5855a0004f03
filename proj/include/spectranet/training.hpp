#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "spectranet/decoder.hpp"
#include "spectranet/evaluation.hpp"
#include "spectranet/inference.hpp"
#include "spectranet/window.hpp"

namespace spectranet {

struct TrainConfig {
  double learning_rate = 1e-3;
  int steps = 500;
  int batch_size = 32;
  std::uint64_t seed = 1;
  InferenceConfig inference;
  bool grid_check = false;  // enforce membership in the published grid
};

/// Which loss a hook observation came from: the latent-inference loss (reads
/// only reference entries) or the learning-step loss (reads the full window).
enum class LossScope { kInference, kLearning };

/// Optional instrumentation: called once per loss evaluation site per step
/// with the exact mask the loss summed over and the reference length.
struct TrainHooks {
  std::function<void(LossScope, const Tensor3& mask, long ref_len)> on_loss;
};

struct TraceRow {
  int step = 0;
  double inference_loss = 0.0;  // mean best reference loss across the batch
  double learning_loss = 0.0;  // full-window masked MSE driving the update
};

struct TrainResult {
  DecoderParams params;
  LatentCache cache;
  std::vector<TraceRow> trace;
};

/// Uniform window starts over [ref_len, T - horizon], with replacement.
/// Windows whose reference slice has no observed entry are redrawn (bounded
/// retries, then config_error).
std::vector<long> sample_windows(const MultivariateSeries& series, int count,
                                 int ref_len, int horizon, RngStream& rng);

/// Adam first/second moments mirroring the learnable parameters.
struct AdamState {
  std::vector<Eigen::VectorXd> m, v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  explicit AdamState(DecoderParams& params);
};

/// Standard bias-corrected Adam step over all learnable arrays.
void adam_update(DecoderParams& params, const DecoderGrads& grads, AdamState& state,
                 double learning_rate);

/// Throws config_error naming every field outside the published grid.
void validate_grid(const DecoderHyper& hyper, const TrainConfig& cfg);

/// Alternates the inference step (latents by gradient descent, warm-started
/// from the cache) and the learning step (one Adam update of the decoder on
/// the full-window masked MSE with the latents fixed) over randomly sampled,
/// per-window-normalized batches. `series` is the training slice.
TrainResult train(const MultivariateSeries& series, const DecoderHyper& hyper,
                  const TrainConfig& cfg, const TrainHooks* hooks = nullptr);

/// Candidate values for random search; defaults are the published grid.
struct TuneGrid {
  std::vector<double> learning_rates{1e-4, 5e-4, 1e-3, 5e-3};
  std::vector<int> steps{500, 1000};
  std::vector<int> batch_sizes{8, 16, 32};
  std::vector<int> iters_train{25, 50};
  std::vector<int> iters_eval{300, 1000};
  std::vector<double> step_sizes{0.2, 1.0, 2.0};
  std::vector<int> kernels{4, 8};
  std::vector<std::pair<int, int>> filters{{256, 128}, {128, 64}};
  std::vector<int> windows{128, 256, 512};
};

struct TuneCandidate {
  TrainConfig cfg;
  DecoderHyper hyper;
  double val_mse = 0.0;
  bool failed = false;  // configuration did not fit the data (e.g. window too long)
};

struct TuneResult {
  long best = -1;
  std::vector<TuneCandidate> candidates;
};

/// Random search: samples `budget` configurations uniformly from the grid,
/// trains each on [0, train_end) and scores it by rolling forecast MSE on
/// [train_end, val_end). The horizon and feature count come from base_hyper;
/// sampled windows resize ref_len and d_t around the fixed horizon.
TuneResult tune(const MultivariateSeries& series, const SplitPoints& splits,
                const DecoderHyper& base_hyper, const TrainConfig& base_cfg,
                const TuneGrid& grid, int budget, std::uint64_t seed);

}  // namespace spectranet
