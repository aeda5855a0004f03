#pragma once

#include <vector>

#include "spectranet/data.hpp"
#include "spectranet/decoder.hpp"
#include "spectranet/tensorops.hpp"

namespace spectranet {

/// One sampled window anchored at origin `start`: the reference slice covers
/// [start - ref_len, start), the full window adds the next `horizon` steps.
/// mu/sigma hold per-feature statistics of the observed reference entries
/// (mean 0 / scale 1 when fewer than two are observed; sigma floored at 1e-5).
struct WindowContext {
  long start = 0;
  Eigen::MatrixXd ref_values, ref_mask;    // M x L
  Eigen::MatrixXd full_values, full_mask;  // M x (L + H)
  Eigen::VectorXd mu, sigma;

  long ref_len() const { return ref_values.cols(); }
  long window() const { return full_values.cols(); }
  long observed_ref() const { return static_cast<long>(ref_mask.sum()); }
};

/// Builds the full window; requires start - ref_len >= 0 and
/// start + horizon <= length.
WindowContext make_window(const MultivariateSeries& series, long start, int ref_len,
                          int horizon);

/// Reference-only variant for evaluation origins near the end of a series:
/// the full slices are left empty and only the reference part is filled.
WindowContext make_eval_window(const MultivariateSeries& series, long start,
                               int ref_len);

/// (values - mu) / sigma per feature, with masked-out cells set to 0 so NaN
/// never reaches downstream arithmetic.
Eigen::MatrixXd normalize_values(const WindowContext& ctx, const Eigen::MatrixXd& values,
                                 const Eigen::MatrixXd& mask);

/// Maps a generated window back to the input scale, inverting the per-window
/// standardization.
WindowOutput denormalize_output(const WindowContext& ctx, const WindowOutput& out);

Eigen::MatrixXd denormalize_values(const WindowContext& ctx,
                                   const Eigen::MatrixXd& values);

/// A batch of windows as normalized tensors, ready for inference (reference
/// slices) and the learning step (full slices).
struct WindowBatch {
  std::vector<WindowContext> windows;
  Tensor3 ref_values, ref_mask;
  Tensor3 full_values, full_mask;

  long size() const { return static_cast<long>(windows.size()); }
};

WindowBatch make_batch(std::vector<WindowContext> windows);

}  // namespace spectranet
