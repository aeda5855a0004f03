#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spectranet/data.hpp"
#include "spectranet/decoder.hpp"
#include "spectranet/inference.hpp"

namespace spectranet {

struct EvalConfig {
  int iters_eval = 300;
  double step_size = 1.0;
  double init_std = 1.0;
  std::uint64_t seed = 1;
  int threads = 1;
};

struct MetricPair {
  double mse = 0.0;
  double mae = 0.0;
  long count = 0;
};

/// Means over eval_mask == 1 entries; masked entries never enter arithmetic.
MetricPair metrics(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred,
                   const Eigen::MatrixXd& eval_mask);

struct OriginRecord {
  long origin = 0;
  bool skipped = false;                // reference window fully masked
  Eigen::MatrixXd reconstruction;      // M x ref_len, input units
  Eigen::MatrixXd forecast;            // M x horizon, input units
};

struct ForecastReport {
  long begin = 0, end = 0;
  std::vector<OriginRecord> origins;
  long skipped = 0;
  MetricPair forecast;              // units of the (possibly normalized) inputs
  MetricPair forecast_original;     // global normalization inverted
  MetricPair imputation;
  MetricPair imputation_original;
  Eigen::MatrixXd imputed_values;   // M x (end - begin), NaN where uncovered
  Eigen::MatrixXd imputed_coverage; // 0/1, covered by some reference window
};

/// Rolling multi-step forecasting over [begin, end): origins every `horizon`
/// steps (the last horizon may be cut short by `end`). Each origin reads only
/// timestamps before itself: the reference window is normalized, the latent
/// is inferred with iters_eval fresh-initialized gradient-descent steps and
/// the decoded window is mapped back to input units. Forecast metrics cover
/// observed entries of `observed`; imputation metrics compare reconstructions
/// at masked-out points against `truth` where it is itself observed (pass
/// nullptr when no pre-occlusion truth exists). `scaler` supplies the
/// original-unit metric variants.
ForecastReport rolling_forecast(const MultivariateSeries& observed,
                                const MultivariateSeries* truth, long begin, long end,
                                const DecoderParams& params, const LatentMap& map,
                                const EvalConfig& cfg,
                                const GlobalScaler* scaler = nullptr);

/// Overlap resolution for reconstructions: each covered timestamp takes the
/// value from the latest origin whose reference window contains it.
/// Returns (values, coverage) over [begin, end).
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> assemble_imputation(
    const std::vector<OriginRecord>& origins, long ref_len, long begin, long end,
    long features);

/// Per-feature mean of observed entries in [0, train_end).
MultivariateSeries impute_mean(const MultivariateSeries& series, long train_end);

/// Last observed value carried forward; a leading gap takes the first
/// observed value.
MultivariateSeries impute_naive(const MultivariateSeries& series);

/// Straight line between the nearest observed neighbours, clamped to the
/// nearest observed value at the boundaries.
MultivariateSeries impute_linear(const MultivariateSeries& series);

enum class BaselineForecaster { kNaiveLast, kWindowMean };

/// Forecast metrics for the trivial forecasters, evaluated with the same
/// rolling origins and observed-entry convention as rolling_forecast.
/// `inputs` is the series the forecaster reads (typically after imputation);
/// `observed` supplies the evaluation ground truth.
MetricPair baseline_forecast_metrics(const MultivariateSeries& inputs,
                                     const MultivariateSeries& observed, long begin,
                                     long end, int ref_len, int horizon,
                                     BaselineForecaster kind);

struct SummaryRow {
  std::string dataset;
  std::string split = "test";
  double occlusion_prob = 0.0;
  std::uint64_t seed = 0;
  long origins = 0;
  long skipped = 0;
  MetricPair forecast, forecast_original, imputation, imputation_original;
};

void write_summary_csv(const std::vector<SummaryRow>& rows,
                       const std::filesystem::path& path);

/// Long-format dump: index, feature, kind (forecast/imputation), truth,
/// prediction, observed flag.
void write_predictions_csv(const ForecastReport& report,
                           const MultivariateSeries& observed,
                           const MultivariateSeries* truth,
                           const std::filesystem::path& path);

}  // namespace spectranet
