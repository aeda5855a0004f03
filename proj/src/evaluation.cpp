#include "spectranet/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <atomic>
#include <thread>

#include "spectranet/memtune.hpp"
#include "spectranet/window.hpp"

namespace spectranet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct MetricAccumulator {
  double se = 0.0, ae = 0.0;
  long count = 0;

  void add(double truth, double pred) {
    const double err = pred - truth;
    se += err * err;
    ae += std::abs(err);
    ++count;
  }
  MetricPair finish() const {
    if (count == 0) return {0.0, 0.0, 0};
    return {se / static_cast<double>(count), ae / static_cast<double>(count), count};
  }
};

void evaluate_one_origin(const MultivariateSeries& observed, long origin,
                         const DecoderParams& shared_params, const LatentMap& map,
                         const EvalConfig& cfg, OriginRecord& record) {
  record.origin = origin;
  const int ref_len = shared_params.hyper.ref_len;
  const WindowContext ctx = make_eval_window(observed, origin, ref_len);
  if (ctx.observed_ref() == 0) {
    record.skipped = true;
    return;
  }
  DecoderParams params = shared_params;  // running-stats mode only, private copy
  InferenceConfig inf_cfg;
  inf_cfg.iters_eval = cfg.iters_eval;
  inf_cfg.step_size = cfg.step_size;
  inf_cfg.init_std = cfg.init_std;
  RngStream rng(cfg.seed, "eval-init", static_cast<std::uint64_t>(origin));
  const InferenceResult inferred =
      infer_window(ctx, params, map, inf_cfg, /*eval_iters=*/true, nullptr, rng);

  const Tensor3 embedding = embed_batch(inferred.z, map);
  const Tensor3 y = decoder_forward(embedding, params, BnMode::kRunningStats);
  const WindowOutput normalized = split_output(y, 0, ref_len);
  const WindowOutput out = denormalize_output(ctx, normalized);
  record.reconstruction = out.reconstruction;
  record.forecast = out.forecast;
}

}  // namespace

MetricPair metrics(const Eigen::MatrixXd& y_true, const Eigen::MatrixXd& y_pred,
                   const Eigen::MatrixXd& eval_mask) {
  if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols() ||
      y_true.rows() != eval_mask.rows() || y_true.cols() != eval_mask.cols()) {
    throw contract_error("metrics: shape mismatch");
  }
  MetricAccumulator acc;
  for (long c = 0; c < y_true.cols(); ++c) {
    for (long r = 0; r < y_true.rows(); ++r) {
      if (eval_mask(r, c) != 0.0) acc.add(y_true(r, c), y_pred(r, c));
    }
  }
  if (acc.count == 0) throw empty_mask_error();
  return acc.finish();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> assemble_imputation(
    const std::vector<OriginRecord>& origins, long ref_len, long begin, long end,
    long features) {
  Eigen::MatrixXd values = Eigen::MatrixXd::Constant(features, end - begin, kNaN);
  Eigen::MatrixXd coverage = Eigen::MatrixXd::Zero(features, end - begin);
  // ascending origins: later reference windows overwrite earlier ones, so
  // every timestamp ends up with the value from the latest window covering it
  for (const OriginRecord& rec : origins) {
    if (rec.skipped) continue;
    const long lo = std::max(rec.origin - ref_len, begin);
    const long hi = std::min(rec.origin, end);
    for (long u = lo; u < hi; ++u) {
      const long col = u - (rec.origin - ref_len);
      values.col(u - begin) = rec.reconstruction.col(col);
      coverage.col(u - begin).setOnes();
    }
  }
  return {std::move(values), std::move(coverage)};
}

ForecastReport rolling_forecast(const MultivariateSeries& observed,
                                const MultivariateSeries* truth, long begin, long end,
                                const DecoderParams& params, const LatentMap& map,
                                const EvalConfig& cfg, const GlobalScaler* scaler) {
  tune_allocator();
  const int ref_len = params.hyper.ref_len;
  const int horizon = params.hyper.horizon;
  if (begin < ref_len) {
    throw config_error("evaluation region starts at " + std::to_string(begin) +
                       " but needs " + std::to_string(ref_len) + " steps of history");
  }
  if (end <= begin || end > observed.length()) {
    throw config_error("bad evaluation region [" + std::to_string(begin) + ", " +
                       std::to_string(end) + ")");
  }
  if (truth && (truth->features() != observed.features() ||
                truth->length() != observed.length())) {
    throw contract_error("rolling_forecast: truth series shape mismatch");
  }

  ForecastReport report;
  report.begin = begin;
  report.end = end;
  for (long t = begin; t < end; t += horizon) report.origins.emplace_back();
  for (std::size_t i = 0; i < report.origins.size(); ++i) {
    report.origins[i].origin = begin + static_cast<long>(i) * horizon;
  }

  const int threads = std::max(cfg.threads, 1);
  if (threads == 1 || report.origins.size() < 2) {
    for (OriginRecord& rec : report.origins) {
      evaluate_one_origin(observed, rec.origin, params, map, cfg, rec);
    }
  } else {
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < report.origins.size();
             i = next.fetch_add(1)) {
          evaluate_one_origin(observed, report.origins[i].origin, params, map, cfg,
                              report.origins[i]);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  for (const OriginRecord& rec : report.origins) {
    if (rec.skipped) ++report.skipped;
  }

  // forecast metrics on observed entries of the evaluation region
  MetricAccumulator fc_norm, fc_orig;
  for (const OriginRecord& rec : report.origins) {
    if (rec.skipped) continue;
    for (long h = 0; h < horizon && rec.origin + h < end; ++h) {
      const long u = rec.origin + h;
      for (long f = 0; f < observed.features(); ++f) {
        if (!observed.observed(f, u)) continue;
        const double pred = rec.forecast(f, h);
        const double target = observed.values(f, u);
        fc_norm.add(target, pred);
        if (scaler) {
          fc_orig.add(scaler->to_original(f, target), scaler->to_original(f, pred));
        } else {
          fc_orig.add(target, pred);
        }
      }
    }
  }
  report.forecast = fc_norm.finish();
  report.forecast_original = fc_orig.finish();

  auto [imputed, coverage] =
      assemble_imputation(report.origins, ref_len, begin, end, observed.features());
  report.imputed_values = std::move(imputed);
  report.imputed_coverage = std::move(coverage);

  if (truth) {
    MetricAccumulator im_norm, im_orig;
    for (long u = begin; u < end; ++u) {
      for (long f = 0; f < observed.features(); ++f) {
        if (observed.observed(f, u)) continue;            // only occluded points
        if (!truth->observed(f, u)) continue;             // ground truth must exist
        if (report.imputed_coverage(f, u - begin) == 0.0) continue;
        const double pred = report.imputed_values(f, u - begin);
        const double target = truth->values(f, u);
        im_norm.add(target, pred);
        if (scaler) {
          im_orig.add(scaler->to_original(f, target), scaler->to_original(f, pred));
        } else {
          im_orig.add(target, pred);
        }
      }
    }
    report.imputation = im_norm.finish();
    report.imputation_original = im_orig.finish();
  }
  return report;
}

MultivariateSeries impute_mean(const MultivariateSeries& series, long train_end) {
  if (train_end < 1 || train_end > series.length()) {
    throw contract_error("impute_mean: train_end out of range");
  }
  MultivariateSeries out = series;
  std::string starved;
  for (long f = 0; f < series.features(); ++f) {
    double sum = 0.0;
    long count = 0;
    for (long t = 0; t < train_end; ++t) {
      if (series.observed(f, t)) {
        sum += series.values(f, t);
        ++count;
      }
    }
    if (count == 0) {
      starved += (starved.empty() ? "" : ", ") +
                 (f < static_cast<long>(series.feature_names.size())
                      ? series.feature_names[f]
                      : std::to_string(f));
      continue;
    }
    const double mean = sum / static_cast<double>(count);
    for (long t = 0; t < series.length(); ++t) {
      if (!series.observed(f, t)) out.values(f, t) = mean;
    }
  }
  if (!starved.empty()) {
    throw contract_error("impute_mean: no observed training entries for feature(s): " +
                         starved);
  }
  out.mask.setOnes();
  return out;
}

MultivariateSeries impute_naive(const MultivariateSeries& series) {
  MultivariateSeries out = series;
  std::string starved;
  for (long f = 0; f < series.features(); ++f) {
    long first = -1;
    for (long t = 0; t < series.length(); ++t) {
      if (series.observed(f, t)) {
        first = t;
        break;
      }
    }
    if (first < 0) {
      starved += (starved.empty() ? "" : ", ") +
                 (f < static_cast<long>(series.feature_names.size())
                      ? series.feature_names[f]
                      : std::to_string(f));
      continue;
    }
    double last = series.values(f, first);
    for (long t = 0; t < series.length(); ++t) {
      if (series.observed(f, t)) {
        last = series.values(f, t);
      } else {
        out.values(f, t) = t < first ? series.values(f, first) : last;
      }
    }
  }
  if (!starved.empty()) {
    throw contract_error("impute_naive: no observed entries for feature(s): " + starved);
  }
  out.mask.setOnes();
  return out;
}

MultivariateSeries impute_linear(const MultivariateSeries& series) {
  MultivariateSeries out = impute_naive(series);  // boundary behaviour
  for (long f = 0; f < series.features(); ++f) {
    long prev = -1;
    for (long t = 0; t < series.length(); ++t) {
      if (!series.observed(f, t)) continue;
      if (prev >= 0 && t - prev > 1) {
        const double lo = series.values(f, prev);
        const double hi = series.values(f, t);
        for (long u = prev + 1; u < t; ++u) {
          const double w = static_cast<double>(u - prev) / static_cast<double>(t - prev);
          out.values(f, u) = lo + w * (hi - lo);
        }
      }
      prev = t;
    }
  }
  return out;
}

MetricPair baseline_forecast_metrics(const MultivariateSeries& inputs,
                                     const MultivariateSeries& observed, long begin,
                                     long end, int ref_len, int horizon,
                                     BaselineForecaster kind) {
  if (inputs.length() != observed.length() || inputs.features() != observed.features()) {
    throw contract_error("baseline_forecast_metrics: series shape mismatch");
  }
  if (begin < ref_len || end <= begin) {
    throw config_error("baseline_forecast_metrics: bad evaluation region");
  }
  MetricAccumulator acc;
  for (long t = begin; t < end; t += horizon) {
    for (long f = 0; f < inputs.features(); ++f) {
      const double level =
          kind == BaselineForecaster::kNaiveLast
              ? inputs.values(f, t - 1)
              : inputs.values.row(f).segment(t - ref_len, ref_len).mean();
      for (long h = 0; h < horizon && t + h < end; ++h) {
        if (observed.observed(f, t + h)) acc.add(observed.values(f, t + h), level);
      }
    }
  }
  return acc.finish();
}

void write_summary_csv(const std::vector<SummaryRow>& rows,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw csv_error("cannot open for writing: " + path.string(), 0);
  out << "dataset,split,p_o,seed,origins,skipped,"
         "forecast_mse,forecast_mae,forecast_points,"
         "forecast_mse_original,forecast_mae_original,"
         "imputation_mse,imputation_mae,imputation_points,"
         "imputation_mse_original,imputation_mae_original\n";
  for (const SummaryRow& r : rows) {
    out << r.dataset << ',' << r.split << ',' << fmt(r.occlusion_prob) << ',' << r.seed
        << ',' << r.origins << ',' << r.skipped << ',' << fmt(r.forecast.mse) << ','
        << fmt(r.forecast.mae) << ',' << r.forecast.count << ','
        << fmt(r.forecast_original.mse) << ',' << fmt(r.forecast_original.mae) << ','
        << fmt(r.imputation.mse) << ',' << fmt(r.imputation.mae) << ','
        << r.imputation.count << ',' << fmt(r.imputation_original.mse) << ','
        << fmt(r.imputation_original.mae) << '\n';
  }
}

void write_predictions_csv(const ForecastReport& report,
                           const MultivariateSeries& observed,
                           const MultivariateSeries* truth,
                           const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw csv_error("cannot open for writing: " + path.string(), 0);
  auto name = [&](long f) {
    return f < static_cast<long>(observed.feature_names.size())
               ? observed.feature_names[f]
               : "f" + std::to_string(f + 1);
  };
  out << "index,feature,kind,truth,prediction,observed\n";
  for (const OriginRecord& rec : report.origins) {
    if (rec.skipped) continue;
    for (long h = 0; h < rec.forecast.cols() && rec.origin + h < report.end; ++h) {
      const long u = rec.origin + h;
      for (long f = 0; f < observed.features(); ++f) {
        const double t_val = truth && truth->observed(f, u) ? truth->values(f, u)
                             : observed.observed(f, u)      ? observed.values(f, u)
                                                            : kNaN;
        out << u << ',' << name(f) << ",forecast,"
            << (std::isnan(t_val) ? "" : fmt(t_val)) << ',' << fmt(rec.forecast(f, h))
            << ',' << (observed.observed(f, u) ? 1 : 0) << '\n';
      }
    }
  }
  for (long u = report.begin; u < report.end; ++u) {
    for (long f = 0; f < observed.features(); ++f) {
      if (observed.observed(f, u)) continue;
      if (report.imputed_coverage(f, u - report.begin) == 0.0) continue;
      const double t_val = truth && truth->observed(f, u) ? truth->values(f, u) : kNaN;
      out << u << ',' << name(f) << ",imputation,"
          << (std::isnan(t_val) ? "" : fmt(t_val)) << ','
          << fmt(report.imputed_values(f, u - report.begin)) << ",0\n";
    }
  }
}

}  // namespace spectranet
