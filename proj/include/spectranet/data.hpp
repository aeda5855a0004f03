#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spectranet/errors.hpp"

namespace spectranet {

/// Multivariate series as an (features x timestamps) value matrix with an
/// aligned 0/1 observation mask. Missing positions hold NaN and mask 0; the
/// two representations are kept consistent at every mutation.
struct MultivariateSeries {
  Eigen::MatrixXd values;  // M x T, NaN where mask == 0
  Eigen::MatrixXd mask;    // M x T in {0, 1}
  std::vector<std::string> feature_names;
  std::vector<std::string> timestamps;  // optional, size T when present

  long features() const { return values.rows(); }
  long length() const { return values.cols(); }
  bool observed(long m, long t) const { return mask(m, t) != 0.0; }
  long observed_count() const { return static_cast<long>(mask.sum()); }
};

/// Chronological train/val/test fractions; all positive, summing to 1.
struct SplitSpec {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct SplitPoints {
  long train_end = 0;  // [0, train_end) is train
  long val_end = 0;    // [train_end, val_end) is val, rest is test
};

struct SplitSeries {
  MultivariateSeries train, val, test;
};

/// Occlusion protocol: time is cut into disjoint segments of `segment`
/// timestamps (the last one may be shorter) and every (feature, segment)
/// pair is masked out independently with probability `prob`.
struct OcclusionSpec {
  long segment = 10;
  double prob = 0.0;
  std::uint64_t seed = 1;
};

/// Seven independent features on a regular grid over [0, 5]: each is
/// cos(i_low t) + cos(i_high t) + noise with i_low ~ U(5, 50),
/// i_high ~ U(100, 300) and noise ~ N(0, 0.001). Feature f draws from the
/// ("simulated7", f) stream, so features are independently reproducible.
MultivariateSeries simulate7(long timestamps, std::uint64_t seed);

/// Adds slope * (x(t) - x(begin)) to values in [begin, end), where x is the
/// series' [0, 5] grid coordinate. `anchored` = false skips re-basing at the
/// region boundary and uses slope * x(t) directly (introduces a level jump).
void shift_trend(MultivariateSeries& series, double slope, long begin, long end,
                 bool anchored = true);

/// Multiplies values in [begin, end) by `factor`.
void shift_magnitude(MultivariateSeries& series, double factor, long begin, long end);

MultivariateSeries occlude(const MultivariateSeries& series, const OcclusionSpec& spec);

/// CSV with a header row. The first column is treated as timestamps when its
/// header names one ("timestamp", "time", "date", "datetime", "ds", "index",
/// case-insensitive) or its first data cell does not parse as a number.
/// Empty cells and "nan" (any case) are missing values.
MultivariateSeries load_csv(const std::filesystem::path& path);

/// Inverse of load_csv; missing cells are written empty, values with enough
/// digits to round-trip exactly.
void save_csv(const MultivariateSeries& series, const std::filesystem::path& path);

SplitPoints split_points(long timestamps, const SplitSpec& spec);

/// Contiguous chronological slices. Any slice shorter than min_len is a
/// config_error (pass the window size when slices must hold whole windows).
SplitSeries split(const MultivariateSeries& series, const SplitSpec& spec,
                  long min_len = 0);

MultivariateSeries slice(const MultivariateSeries& series, long begin, long end);

/// Per-feature standardization fitted on observed entries of [0, train_end).
/// Features with fewer than two observed entries get mean 0 / scale 1; the
/// scale is floored at 1e-5.
struct GlobalScaler {
  Eigen::VectorXd mean, scale;

  void apply(MultivariateSeries& series) const;
  double to_original(long feature, double v) const {
    return v * scale(feature) + mean(feature);
  }
};

GlobalScaler fit_scaler(const MultivariateSeries& series, long train_end);

/// Flat key=value dataset description. Either `csv` plus split fractions, or
/// three explicit per-split files. Unknown keys are rejected.
struct DatasetManifest {
  std::string name = "dataset";
  std::filesystem::path csv;                       // single-file form
  std::filesystem::path train_csv, val_csv, test_csv;  // pre-split form
  SplitSpec fractions;
  OcclusionSpec occlusion;
  bool normalize = true;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// A manifest resolved into memory: the occluded (training-visible) series,
/// the pre-occlusion truth, chronological split points and the fitted global
/// scaler. Occlusion is applied over the whole timeline with the manifest's
/// spec; both series are standardized with statistics of the occluded train
/// region when the manifest asks for normalization.
struct LoadedDataset {
  std::string name;
  MultivariateSeries observed;  // after occlusion (and normalization)
  MultivariateSeries truth;     // before occlusion (same normalization)
  SplitPoints splits;
  GlobalScaler scaler;
  bool normalized = false;
};

LoadedDataset load_dataset(const DatasetManifest& manifest, long min_split_len = 0);

}  // namespace spectranet
