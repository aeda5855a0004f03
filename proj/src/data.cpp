#include "spectranet/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "spectranet/rng.hpp"

namespace spectranet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kScaleFloor = 1e-5;

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

bool parse_double(const std::string& token, double& out) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc{} && ptr == end;
}

bool is_missing_token(const std::string& token) {
  return token.empty() || lower(token) == "nan";
}

bool is_timestamp_header(const std::string& header) {
  static const std::array<const char*, 6> names = {"timestamp", "time",  "date",
                                                   "datetime",  "ds",    "index"};
  const std::string h = lower(header);
  return std::find(names.begin(), names.end(), h) != names.end();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

MultivariateSeries simulate7(long timestamps, std::uint64_t seed) {
  if (timestamps < 2) throw contract_error("simulate7: need at least 2 timestamps");
  const long features = 7;
  MultivariateSeries s;
  s.values.resize(features, timestamps);
  s.mask = Eigen::MatrixXd::Ones(features, timestamps);
  for (long f = 0; f < features; ++f) {
    RngStream rng(seed, "simulate7", static_cast<std::uint64_t>(f));
    const double f_low = rng.uniform(5.0, 50.0);
    const double f_high = rng.uniform(100.0, 300.0);
    for (long t = 0; t < timestamps; ++t) {
      const double x = 5.0 * static_cast<double>(t) / static_cast<double>(timestamps - 1);
      s.values(f, t) = std::cos(f_low * x) + std::cos(f_high * x) +
                       rng.normal(0.0, std::sqrt(0.001));
    }
    s.feature_names.push_back("y" + std::to_string(f + 1));
  }
  return s;
}

void shift_trend(MultivariateSeries& series, double slope, long begin, long end,
                 bool anchored) {
  const long t_max = series.length();
  if (begin < 0 || end > t_max || begin > end) {
    throw contract_error("shift_trend: region out of range");
  }
  if (t_max < 2) return;
  auto coord = [&](long t) {
    return 5.0 * static_cast<double>(t) / static_cast<double>(t_max - 1);
  };
  const double base = anchored ? coord(begin) : 0.0;
  for (long t = begin; t < end; ++t) {
    series.values.col(t).array() += slope * (coord(t) - base);
  }
}

void shift_magnitude(MultivariateSeries& series, double factor, long begin, long end) {
  if (begin < 0 || end > series.length() || begin > end) {
    throw contract_error("shift_magnitude: region out of range");
  }
  for (long t = begin; t < end; ++t) series.values.col(t) *= factor;
}

MultivariateSeries occlude(const MultivariateSeries& series, const OcclusionSpec& spec) {
  if (spec.segment < 1) throw contract_error("occlude: segment length must be >= 1");
  MultivariateSeries out = series;
  RngStream rng(spec.seed, "occlusion");
  for (long f = 0; f < out.features(); ++f) {
    for (long begin = 0; begin < out.length(); begin += spec.segment) {
      const long end = std::min(begin + spec.segment, out.length());
      if (rng.uniform() < spec.prob) {
        for (long t = begin; t < end; ++t) {
          out.mask(f, t) = 0.0;
          out.values(f, t) = kNaN;
        }
      }
    }
  }
  return out;
}

MultivariateSeries load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw csv_error("cannot open: " + path.string(), 0);

  std::string line;
  if (!std::getline(in, line)) throw csv_error("empty file: " + path.string(), 0);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> header = split_line(line);
  if (header.empty()) throw csv_error("empty header row", 1);

  std::vector<std::vector<std::string>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.peek() == std::char_traits<char>::eof()) break;
    rows.push_back(split_line(line));
    if (rows.back().size() != header.size()) {
      throw csv_error("row " + std::to_string(line_no) + " has " +
                          std::to_string(rows.back().size()) + " cells, header has " +
                          std::to_string(header.size()),
                      line_no);
    }
  }
  if (rows.empty()) throw csv_error("no data rows", 1);

  bool has_timestamps = is_timestamp_header(header[0]);
  if (!has_timestamps && header.size() > 1) {
    double ignored;
    const std::string& probe = rows.front().front();
    if (!is_missing_token(probe) && !parse_double(probe, ignored)) has_timestamps = true;
  }

  const long first_feature = has_timestamps ? 1 : 0;
  const long features = static_cast<long>(header.size()) - first_feature;
  if (features < 1) throw csv_error("no feature columns", 1);
  const long timestamps = static_cast<long>(rows.size());

  MultivariateSeries s;
  s.values.resize(features, timestamps);
  s.mask.resize(features, timestamps);
  s.feature_names.assign(header.begin() + first_feature, header.end());
  for (long t = 0; t < timestamps; ++t) {
    const auto& row = rows[t];
    if (has_timestamps) s.timestamps.push_back(row[0]);
    for (long f = 0; f < features; ++f) {
      const std::string& cell = row[first_feature + f];
      if (is_missing_token(cell)) {
        s.values(f, t) = kNaN;
        s.mask(f, t) = 0.0;
      } else {
        double v;
        if (!parse_double(cell, v)) {
          throw csv_error("non-numeric cell '" + cell + "' at row " +
                              std::to_string(t + 2) + ", column " +
                              std::to_string(first_feature + f + 1),
                          t + 2, first_feature + f + 1);
        }
        s.values(f, t) = v;
        s.mask(f, t) = 1.0;
      }
    }
  }
  return s;
}

void save_csv(const MultivariateSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw csv_error("cannot open for writing: " + path.string(), 0);
  const bool has_ts = !series.timestamps.empty();
  if (has_ts && static_cast<long>(series.timestamps.size()) != series.length()) {
    throw contract_error("save_csv: timestamp count does not match length");
  }
  if (has_ts) out << "timestamp,";
  for (long f = 0; f < series.features(); ++f) {
    out << (f ? "," : "")
        << (f < static_cast<long>(series.feature_names.size())
                ? series.feature_names[f]
                : "f" + std::to_string(f + 1));
  }
  out << '\n';
  for (long t = 0; t < series.length(); ++t) {
    if (has_ts) out << series.timestamps[t] << ',';
    for (long f = 0; f < series.features(); ++f) {
      if (f) out << ',';
      if (series.observed(f, t)) out << format_value(series.values(f, t));
    }
    out << '\n';
  }
  if (!out) throw csv_error("write failed: " + path.string(), 0);
}

SplitPoints split_points(long timestamps, const SplitSpec& spec) {
  if (spec.train <= 0.0 || spec.val <= 0.0 || spec.test <= 0.0) {
    throw config_error("split fractions must all be positive");
  }
  if (std::abs(spec.train + spec.val + spec.test - 1.0) > 1e-9) {
    throw config_error("split fractions must sum to 1");
  }
  SplitPoints p;
  p.train_end = static_cast<long>(std::floor(spec.train * static_cast<double>(timestamps)));
  p.val_end = p.train_end +
              static_cast<long>(std::floor(spec.val * static_cast<double>(timestamps)));
  return p;
}

MultivariateSeries slice(const MultivariateSeries& series, long begin, long end) {
  if (begin < 0 || end > series.length() || begin > end) {
    throw contract_error("slice: range [" + std::to_string(begin) + ", " +
                         std::to_string(end) + ") out of bounds");
  }
  MultivariateSeries out;
  out.values = series.values.middleCols(begin, end - begin);
  out.mask = series.mask.middleCols(begin, end - begin);
  out.feature_names = series.feature_names;
  if (!series.timestamps.empty()) {
    out.timestamps.assign(series.timestamps.begin() + begin,
                          series.timestamps.begin() + end);
  }
  return out;
}

SplitSeries split(const MultivariateSeries& series, const SplitSpec& spec,
                  long min_len) {
  const SplitPoints p = split_points(series.length(), spec);
  const long lens[3] = {p.train_end, p.val_end - p.train_end,
                        series.length() - p.val_end};
  for (const long len : lens) {
    if (len < std::max(min_len, 1L)) {
      throw config_error("split slice of length " + std::to_string(len) +
                         " is shorter than required " +
                         std::to_string(std::max(min_len, 1L)));
    }
  }
  return {slice(series, 0, p.train_end), slice(series, p.train_end, p.val_end),
          slice(series, p.val_end, series.length())};
}

GlobalScaler fit_scaler(const MultivariateSeries& series, long train_end) {
  if (train_end < 1 || train_end > series.length()) {
    throw contract_error("fit_scaler: train_end out of range");
  }
  GlobalScaler scaler;
  scaler.mean = Eigen::VectorXd::Zero(series.features());
  scaler.scale = Eigen::VectorXd::Ones(series.features());
  for (long f = 0; f < series.features(); ++f) {
    double sum = 0.0;
    long count = 0;
    for (long t = 0; t < train_end; ++t) {
      if (series.observed(f, t)) {
        sum += series.values(f, t);
        ++count;
      }
    }
    if (count < 2) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (long t = 0; t < train_end; ++t) {
      if (series.observed(f, t)) {
        const double d = series.values(f, t) - mean;
        ss += d * d;
      }
    }
    scaler.mean(f) = mean;
    scaler.scale(f) = std::max(std::sqrt(ss / static_cast<double>(count)), kScaleFloor);
  }
  return scaler;
}

void GlobalScaler::apply(MultivariateSeries& series) const {
  if (mean.size() != series.features()) {
    throw contract_error("GlobalScaler: feature count mismatch");
  }
  for (long f = 0; f < series.features(); ++f) {
    series.values.row(f) = (series.values.row(f).array() - mean(f)) / scale(f);
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open manifest: " + path.string());
  const auto base = path.parent_path();
  auto resolve = [&](const std::string& p) { return base / p; };

  DatasetManifest m;
  bool saw_fraction = false;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error("manifest line " + std::to_string(line_no) +
                         " is not key=value: " + line);
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "name") m.name = value;
      else if (key == "csv") m.csv = resolve(value);
      else if (key == "train_csv") m.train_csv = resolve(value);
      else if (key == "val_csv") m.val_csv = resolve(value);
      else if (key == "test_csv") m.test_csv = resolve(value);
      else if (key == "train_frac") { m.fractions.train = std::stod(value); saw_fraction = true; }
      else if (key == "val_frac") { m.fractions.val = std::stod(value); saw_fraction = true; }
      else if (key == "test_frac") { m.fractions.test = std::stod(value); saw_fraction = true; }
      else if (key == "occlusion_segment") m.occlusion.segment = std::stol(value);
      else if (key == "occlusion_prob") m.occlusion.prob = std::stod(value);
      else if (key == "occlusion_seed") m.occlusion.seed = std::stoull(value);
      else if (key == "normalize") m.normalize = (value == "true" || value == "1");
      else throw config_error("unknown manifest key: " + key);
    } catch (const config_error&) {
      throw;
    } catch (const std::exception&) {
      throw config_error("bad value for manifest key " + key + ": " + value);
    }
  }

  const bool single = !m.csv.empty();
  const bool triple = !m.train_csv.empty() || !m.val_csv.empty() || !m.test_csv.empty();
  if (single == triple) {
    throw config_error("manifest must set either csv or train_csv/val_csv/test_csv");
  }
  if (triple && (m.train_csv.empty() || m.val_csv.empty() || m.test_csv.empty())) {
    throw config_error("manifest with pre-split data needs all three csv paths");
  }
  if (triple && saw_fraction) {
    throw config_error("split fractions only apply to single-csv manifests");
  }
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw config_error("cannot write manifest: " + path.string());
  out << "name=" << manifest.name << '\n';
  if (!manifest.csv.empty()) {
    out << "csv=" << manifest.csv.filename().string() << '\n'
        << "train_frac=" << format_value(manifest.fractions.train) << '\n'
        << "val_frac=" << format_value(manifest.fractions.val) << '\n'
        << "test_frac=" << format_value(manifest.fractions.test) << '\n';
  } else {
    out << "train_csv=" << manifest.train_csv.filename().string() << '\n'
        << "val_csv=" << manifest.val_csv.filename().string() << '\n'
        << "test_csv=" << manifest.test_csv.filename().string() << '\n';
  }
  out << "occlusion_segment=" << manifest.occlusion.segment << '\n'
      << "occlusion_prob=" << format_value(manifest.occlusion.prob) << '\n'
      << "occlusion_seed=" << manifest.occlusion.seed << '\n'
      << "normalize=" << (manifest.normalize ? "true" : "false") << '\n';
}

LoadedDataset load_dataset(const DatasetManifest& manifest, long min_split_len) {
  LoadedDataset ds;
  ds.name = manifest.name;

  if (!manifest.csv.empty()) {
    ds.truth = load_csv(manifest.csv);
    ds.splits = split_points(ds.truth.length(), manifest.fractions);
  } else {
    const MultivariateSeries train = load_csv(manifest.train_csv);
    const MultivariateSeries val = load_csv(manifest.val_csv);
    const MultivariateSeries test = load_csv(manifest.test_csv);
    if (train.features() != val.features() || train.features() != test.features()) {
      throw config_error("split csv files disagree on feature count");
    }
    ds.truth = train;
    ds.truth.values.conservativeResize(Eigen::NoChange,
                                       train.length() + val.length() + test.length());
    ds.truth.mask.conservativeResize(Eigen::NoChange, ds.truth.values.cols());
    ds.truth.values.middleCols(train.length(), val.length()) = val.values;
    ds.truth.values.rightCols(test.length()) = test.values;
    ds.truth.mask.middleCols(train.length(), val.length()) = val.mask;
    ds.truth.mask.rightCols(test.length()) = test.mask;
    if (!train.timestamps.empty() && !val.timestamps.empty() && !test.timestamps.empty()) {
      ds.truth.timestamps.insert(ds.truth.timestamps.end(), val.timestamps.begin(),
                                 val.timestamps.end());
      ds.truth.timestamps.insert(ds.truth.timestamps.end(), test.timestamps.begin(),
                                 test.timestamps.end());
    } else {
      ds.truth.timestamps.clear();
    }
    ds.splits.train_end = train.length();
    ds.splits.val_end = train.length() + val.length();
  }

  const long lens[3] = {ds.splits.train_end, ds.splits.val_end - ds.splits.train_end,
                        ds.truth.length() - ds.splits.val_end};
  for (const long len : lens) {
    if (len < std::max(min_split_len, 1L)) {
      throw config_error("dataset split of length " + std::to_string(len) +
                         " is shorter than required " +
                         std::to_string(std::max(min_split_len, 1L)));
    }
  }

  ds.observed = manifest.occlusion.prob > 0.0 ? occlude(ds.truth, manifest.occlusion)
                                              : ds.truth;
  if (manifest.normalize) {
    ds.scaler = fit_scaler(ds.observed, ds.splits.train_end);
    ds.scaler.apply(ds.observed);
    ds.scaler.apply(ds.truth);
    ds.normalized = true;
  } else {
    ds.scaler.mean = Eigen::VectorXd::Zero(ds.truth.features());
    ds.scaler.scale = Eigen::VectorXd::Ones(ds.truth.features());
  }
  return ds;
}

}  // namespace spectranet
