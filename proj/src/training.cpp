#include "spectranet/training.hpp"

#include "spectranet/memtune.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace spectranet {

namespace {

constexpr int kResampleBudget = 200;  // draws per batch slot before giving up

std::vector<Eigen::Map<Eigen::VectorXd>> learnable_views(DecoderParams& p) {
  std::vector<Eigen::Map<Eigen::VectorXd>> views;
  auto add = [&](double* data, long n) { views.emplace_back(data, n); };
  add(p.conv1.weight.data(), p.conv1.weight.size());
  add(p.conv1.bias.data(), p.conv1.bias.size());
  add(p.bn1.gamma.data(), p.bn1.gamma.size());
  add(p.bn1.beta.data(), p.bn1.beta.size());
  add(p.conv2.weight.data(), p.conv2.weight.size());
  add(p.conv2.bias.data(), p.conv2.bias.size());
  add(p.bn2.gamma.data(), p.bn2.gamma.size());
  add(p.bn2.beta.data(), p.bn2.beta.size());
  add(p.conv3.weight.data(), p.conv3.weight.size());
  add(p.conv3.bias.data(), p.conv3.bias.size());
  return views;
}

std::vector<Eigen::Map<const Eigen::VectorXd>> grad_views(const DecoderGrads& g) {
  std::vector<Eigen::Map<const Eigen::VectorXd>> views;
  auto add = [&](const double* data, long n) { views.emplace_back(data, n); };
  add(g.w1.data(), g.w1.size());
  add(g.b1.data(), g.b1.size());
  add(g.gamma1.data(), g.gamma1.size());
  add(g.beta1.data(), g.beta1.size());
  add(g.w2.data(), g.w2.size());
  add(g.b2.data(), g.b2.size());
  add(g.gamma2.data(), g.gamma2.size());
  add(g.beta2.data(), g.beta2.size());
  add(g.w3.data(), g.w3.size());
  add(g.b3.data(), g.b3.size());
  return views;
}

template <class T>
bool contains(const std::vector<T>& values, const T& v) {
  return std::find(values.begin(), values.end(), v) != values.end();
}

bool contains_close(const std::vector<double>& values, double v) {
  return std::any_of(values.begin(), values.end(), [&](double g) {
    return std::abs(g - v) <= 1e-12 * std::max(1.0, std::abs(g));
  });
}

}  // namespace

std::vector<long> sample_windows(const MultivariateSeries& series, int count,
                                 int ref_len, int horizon, RngStream& rng) {
  const long lo = ref_len;
  const long hi = series.length() - horizon;
  if (hi < lo) {
    throw config_error("training region of length " + std::to_string(series.length()) +
                       " is shorter than one window (" +
                       std::to_string(ref_len + horizon) + ")");
  }
  std::vector<long> starts;
  starts.reserve(count);
  for (int i = 0; i < count; ++i) {
    bool found = false;
    for (int attempt = 0; attempt < kResampleBudget; ++attempt) {
      const long t = rng.uniform_int(lo, hi);
      if (series.mask.middleCols(t - ref_len, ref_len).sum() > 0.0) {
        starts.push_back(t);
        found = true;
        break;
      }
    }
    if (!found) {
      throw config_error("no window with an observed reference found after " +
                         std::to_string(kResampleBudget) + " draws");
    }
  }
  return starts;
}

AdamState::AdamState(DecoderParams& params) {
  for (const auto& view : learnable_views(params)) {
    m.push_back(Eigen::VectorXd::Zero(view.size()));
    v.push_back(Eigen::VectorXd::Zero(view.size()));
  }
}

void adam_update(DecoderParams& params, const DecoderGrads& grads, AdamState& state,
                 double learning_rate) {
  auto views = learnable_views(params);
  const auto gviews = grad_views(grads);
  if (views.size() != state.m.size()) {
    throw contract_error("adam_update: state does not match parameter layout");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (views[i].size() != gviews[i].size()) {
      throw contract_error("adam_update: gradient shape mismatch in group " +
                           std::to_string(i));
    }
    auto& m = state.m[i];
    auto& v = state.v[i];
    m = state.beta1 * m + (1.0 - state.beta1) * gviews[i];
    v.array() = state.beta2 * v.array() + (1.0 - state.beta2) * gviews[i].array().square();
    views[i].array() -=
        learning_rate * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.epsilon);
  }
}

void validate_grid(const DecoderHyper& hyper, const TrainConfig& cfg) {
  const TuneGrid grid;
  std::ostringstream bad;
  if (!contains_close(grid.learning_rates, cfg.learning_rate))
    bad << "learning_rate " << cfg.learning_rate << "; ";
  if (!contains(grid.steps, cfg.steps)) bad << "steps " << cfg.steps << "; ";
  if (!contains(grid.batch_sizes, cfg.batch_size))
    bad << "batch_size " << cfg.batch_size << "; ";
  if (cfg.seed < 1 || cfg.seed > 10) bad << "seed " << cfg.seed << " (grid is [1,10]); ";
  if (!contains(grid.iters_train, cfg.inference.iters_train))
    bad << "iters_train " << cfg.inference.iters_train << "; ";
  if (!contains(grid.iters_eval, cfg.inference.iters_eval))
    bad << "iters_eval " << cfg.inference.iters_eval << "; ";
  if (!contains_close(grid.step_sizes, cfg.inference.step_size))
    bad << "step_size " << cfg.inference.step_size << "; ";
  if (hyper.degree != 3) bad << "degree " << hyper.degree << " (grid is {3}); ";
  if (!contains(grid.windows, hyper.window)) bad << "window " << hyper.window << "; ";
  if (!contains(grid.kernels, hyper.kernel)) bad << "kernel " << hyper.kernel << "; ";
  if (!contains(grid.filters, std::pair<int, int>{hyper.n1, hyper.n2}))
    bad << "filters (" << hyper.n1 << "," << hyper.n2 << "); ";
  const std::string msg = bad.str();
  if (!msg.empty()) throw config_error("outside the published grid: " + msg);
}

TrainResult train(const MultivariateSeries& series, const DecoderHyper& hyper,
                  const TrainConfig& cfg, const TrainHooks* hooks) {
  tune_allocator();
  hyper.validate();
  if (cfg.grid_check) validate_grid(hyper, cfg);
  if (cfg.batch_size < 1) throw config_error("batch_size must be >= 1");
  if (cfg.steps < 0) throw config_error("steps must be >= 0");
  if (series.features() != hyper.features) {
    throw config_error("dataset has " + std::to_string(series.features()) +
                       " features, decoder expects " + std::to_string(hyper.features));
  }

  RngStream init_rng(cfg.seed, "weights-init");
  RngStream sampling_rng(cfg.seed, "window-sampling");
  RngStream latent_rng(cfg.seed, "latent-init");

  TrainResult result{make_decoder(hyper, init_rng), {}, {}};
  if (cfg.steps == 0) return result;

  const LatentMap map{build_basis(hyper.degree, hyper.window, hyper.d_t, hyper.max_freq),
                      hyper.mode};
  AdamState adam(result.params);
  result.trace.reserve(cfg.steps);

  for (int step = 1; step <= cfg.steps; ++step) {
    const std::vector<long> starts =
        sample_windows(series, cfg.batch_size, hyper.ref_len, hyper.horizon, sampling_rng);
    std::vector<WindowContext> contexts;
    contexts.reserve(starts.size());
    for (const long t : starts) {
      contexts.push_back(make_window(series, t, hyper.ref_len, hyper.horizon));
    }
    const WindowBatch batch = make_batch(std::move(contexts));

    // inference step: per-window latents, warm-started when seen before
    Eigen::MatrixXd z0(map.latent_dim(), batch.size());
    for (long i = 0; i < batch.size(); ++i) {
      if (const Eigen::VectorXd* warm = result.cache.get(starts[i])) {
        z0.col(i) = *warm;
      } else {
        for (long row = 0; row < z0.rows(); ++row) {
          z0(row, i) = latent_rng.normal(0.0, cfg.inference.init_std);
        }
      }
    }
    const InferenceResult inferred =
        infer_latent(batch.ref_values, batch.ref_mask, std::move(z0), result.params,
                     map, cfg.inference.iters_train, cfg.inference.step_size);
    if (hooks && hooks->on_loss) {
      hooks->on_loss(LossScope::kInference, batch.ref_mask, hyper.ref_len);
    }
    for (long i = 0; i < batch.size(); ++i) {
      result.cache.store(starts[i], inferred.z.col(i));
    }

    // learning step: one Adam update on the full-window loss, latents fixed
    const Tensor3 embedding = embed_batch(inferred.z, map);
    DecoderTrace trace;
    const Tensor3 yhat =
        decoder_forward(embedding, result.params, BnMode::kBatchStats, &trace);
    const double learning_loss = masked_mse(batch.full_values, yhat, batch.full_mask);
    if (hooks && hooks->on_loss) {
      hooks->on_loss(LossScope::kLearning, batch.full_mask, hyper.ref_len);
    }
    const Tensor3 grad_yhat =
        masked_mse_backward(batch.full_values, yhat, batch.full_mask);
    const DecoderGrads grads =
        decoder_backward(trace, result.params, grad_yhat, BnMode::kBatchStats, true);
    adam_update(result.params, grads, adam, cfg.learning_rate);

    const double inference_loss = inferred.loss.mean();
    result.trace.push_back({step, inference_loss, learning_loss});
    if (!std::isfinite(learning_loss) || !std::isfinite(inference_loss)) {
      throw divergence_error("non-finite loss at step " + std::to_string(step) +
                             " (inference " + std::to_string(inference_loss) +
                             ", learning " + std::to_string(learning_loss) + ")");
    }
  }
  return result;
}

TuneResult tune(const MultivariateSeries& series, const SplitPoints& splits,
                const DecoderHyper& base_hyper, const TrainConfig& base_cfg,
                const TuneGrid& grid, int budget, std::uint64_t seed) {
  if (budget < 1) throw config_error("tune budget must be >= 1");
  if (splits.val_end <= splits.train_end) {
    throw config_error("tune needs a non-empty validation split");
  }
  RngStream rng(seed, "tuning");
  auto pick = [&](const auto& options) {
    return options[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<long>(options.size()) - 1))];
  };

  TuneResult result;
  double best_mse = std::numeric_limits<double>::infinity();
  for (int i = 0; i < budget; ++i) {
    TuneCandidate cand;
    cand.cfg = base_cfg;
    cand.cfg.learning_rate = pick(grid.learning_rates);
    cand.cfg.steps = pick(grid.steps);
    cand.cfg.batch_size = pick(grid.batch_sizes);
    cand.cfg.inference.iters_train = pick(grid.iters_train);
    cand.cfg.inference.iters_eval = pick(grid.iters_eval);
    cand.cfg.inference.step_size = pick(grid.step_sizes);
    cand.hyper = base_hyper;
    cand.hyper.window = pick(grid.windows);
    cand.hyper.kernel = pick(grid.kernels);
    const auto [n1, n2] = pick(grid.filters);
    cand.hyper.n1 = n1;
    cand.hyper.n2 = n2;
    cand.hyper.ref_len = cand.hyper.window - cand.hyper.horizon;
    cand.hyper.d_t = cand.hyper.window / 16;

    try {
      cand.hyper.validate();
      if (splits.train_end < cand.hyper.window ||
          splits.train_end < cand.hyper.ref_len + cand.hyper.horizon) {
        throw config_error("window longer than the training split");
      }
      const MultivariateSeries train_slice = slice(series, 0, splits.train_end);
      const TrainResult trained = train(train_slice, cand.hyper, cand.cfg);

      EvalConfig eval;
      eval.iters_eval = cand.cfg.inference.iters_eval;
      eval.step_size = cand.cfg.inference.step_size;
      eval.init_std = cand.cfg.inference.init_std;
      eval.seed = cand.cfg.seed;
      const LatentMap map{build_basis(cand.hyper.degree, cand.hyper.window,
                                      cand.hyper.d_t, cand.hyper.max_freq),
                          cand.hyper.mode};
      const ForecastReport report =
          rolling_forecast(series, nullptr, splits.train_end, splits.val_end,
                           trained.params, map, eval);
      if (report.forecast.count == 0) throw config_error("no evaluable origins");
      cand.val_mse = report.forecast.mse;
    } catch (const config_error&) {
      cand.failed = true;
      cand.val_mse = std::numeric_limits<double>::infinity();
    } catch (const divergence_error&) {
      cand.failed = true;
      cand.val_mse = std::numeric_limits<double>::infinity();
    }

    if (!cand.failed && cand.val_mse < best_mse) {
      best_mse = cand.val_mse;
      result.best = i;
    }
    result.candidates.push_back(std::move(cand));
  }
  if (result.best < 0) {
    throw config_error("every sampled configuration failed on this dataset");
  }
  return result;
}

}  // namespace spectranet
