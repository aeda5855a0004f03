#include "spectranet/window.hpp"

#include <cmath>

namespace spectranet {

namespace {

constexpr double kSigmaFloor = 1e-5;

void fill_stats(WindowContext& ctx) {
  const long features = ctx.ref_values.rows();
  ctx.mu = Eigen::VectorXd::Zero(features);
  ctx.sigma = Eigen::VectorXd::Ones(features);
  for (long f = 0; f < features; ++f) {
    double sum = 0.0;
    long count = 0;
    for (long t = 0; t < ctx.ref_len(); ++t) {
      if (ctx.ref_mask(f, t) != 0.0) {
        sum += ctx.ref_values(f, t);
        ++count;
      }
    }
    if (count < 2) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (long t = 0; t < ctx.ref_len(); ++t) {
      if (ctx.ref_mask(f, t) != 0.0) {
        const double d = ctx.ref_values(f, t) - mean;
        ss += d * d;
      }
    }
    ctx.mu(f) = mean;
    ctx.sigma(f) = std::max(std::sqrt(ss / static_cast<double>(count)), kSigmaFloor);
  }
}

}  // namespace

WindowContext make_window(const MultivariateSeries& series, long start, int ref_len,
                          int horizon) {
  if (start - ref_len < 0 || start + horizon > series.length()) {
    throw contract_error("make_window: window [" + std::to_string(start - ref_len) +
                         ", " + std::to_string(start + horizon) +
                         ") outside series of length " + std::to_string(series.length()));
  }
  WindowContext ctx;
  ctx.start = start;
  ctx.ref_values = series.values.middleCols(start - ref_len, ref_len);
  ctx.ref_mask = series.mask.middleCols(start - ref_len, ref_len);
  ctx.full_values = series.values.middleCols(start - ref_len, ref_len + horizon);
  ctx.full_mask = series.mask.middleCols(start - ref_len, ref_len + horizon);
  fill_stats(ctx);
  return ctx;
}

WindowContext make_eval_window(const MultivariateSeries& series, long start,
                               int ref_len) {
  if (start - ref_len < 0 || start > series.length()) {
    throw contract_error("make_eval_window: reference outside series");
  }
  WindowContext ctx;
  ctx.start = start;
  ctx.ref_values = series.values.middleCols(start - ref_len, ref_len);
  ctx.ref_mask = series.mask.middleCols(start - ref_len, ref_len);
  fill_stats(ctx);
  return ctx;
}

Eigen::MatrixXd normalize_values(const WindowContext& ctx, const Eigen::MatrixXd& values,
                                 const Eigen::MatrixXd& mask) {
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (long f = 0; f < values.rows(); ++f) {
    out.row(f) = (mask.row(f).array() != 0.0)
                     .select((values.row(f).array() - ctx.mu(f)) / ctx.sigma(f), 0.0);
  }
  return out;
}

Eigen::MatrixXd denormalize_values(const WindowContext& ctx,
                                   const Eigen::MatrixXd& values) {
  Eigen::MatrixXd out(values.rows(), values.cols());
  for (long f = 0; f < values.rows(); ++f) {
    out.row(f) = values.row(f).array() * ctx.sigma(f) + ctx.mu(f);
  }
  return out;
}

WindowOutput denormalize_output(const WindowContext& ctx, const WindowOutput& out) {
  return {denormalize_values(ctx, out.reconstruction),
          denormalize_values(ctx, out.forecast)};
}

WindowBatch make_batch(std::vector<WindowContext> windows) {
  if (windows.empty()) throw contract_error("make_batch: no windows");
  const long b = static_cast<long>(windows.size());
  const long features = windows.front().ref_values.rows();
  const long ref_len = windows.front().ref_len();
  const long window = windows.front().window();

  WindowBatch batch;
  batch.ref_values = Tensor3(b, features, ref_len);
  batch.ref_mask = Tensor3(b, features, ref_len);
  batch.full_values = Tensor3(b, features, window);
  batch.full_mask = Tensor3(b, features, window);
  for (long i = 0; i < b; ++i) {
    const WindowContext& w = windows[i];
    if (w.ref_values.rows() != features || w.ref_len() != ref_len ||
        w.window() != window) {
      throw contract_error("make_batch: windows disagree on shape");
    }
    batch.ref_values.element(i) = normalize_values(w, w.ref_values, w.ref_mask).transpose();
    batch.ref_mask.element(i) = w.ref_mask.transpose();
    batch.full_values.element(i) =
        normalize_values(w, w.full_values, w.full_mask).transpose();
    batch.full_mask.element(i) = w.full_mask.transpose();
  }
  batch.windows = std::move(windows);
  return batch;
}

}  // namespace spectranet
