#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "spectranet/data.hpp"

using namespace spectranet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "spectranet_data_tests";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path);
  out << contents;
}

}  // namespace

TEST_CASE("simulate7 produces 7 fully observed series of the requested length") {
  const MultivariateSeries s = simulate7(20000, 1);
  CHECK(s.features() == 7);
  CHECK(s.length() == 20000);
  CHECK(s.observed_count() == 7 * 20000);
  CHECK(s.values.allFinite());
}

TEST_CASE("simulate7 amplitudes stay within the two-cosine bound") {
  const MultivariateSeries s = simulate7(20000, 2);
  const double bound = 2.0 + 4.0 * std::sqrt(0.001);
  const long outliers = ((s.values.array().abs() > bound).cast<long>()).sum();
  CHECK(outliers <= s.values.size() / 2000);  // vanishing fraction
}

TEST_CASE("simulate7 per-feature means are near zero") {
  const MultivariateSeries s = simulate7(20000, 3);
  for (long f = 0; f < 7; ++f) {
    CHECK(std::abs(s.values.row(f).mean()) < 0.2);
  }
}

TEST_CASE("simulate7 is reproducible and features use distinct substreams") {
  const MultivariateSeries a = simulate7(512, 7);
  const MultivariateSeries b = simulate7(512, 7);
  CHECK(a.values == b.values);
  const MultivariateSeries c = simulate7(512, 8);
  CHECK(a.values != c.values);
  for (long f = 1; f < 7; ++f) {
    CHECK(a.values.row(0) != a.values.row(f));
  }
}

TEST_CASE("trend shift is anchored at the region start") {
  MultivariateSeries s = simulate7(1000, 4);
  MultivariateSeries shifted = s;
  shift_trend(shifted, 6.0, 800, 1000);
  CHECK(shifted.values.leftCols(800) == s.values.leftCols(800));
  CHECK(shifted.values.col(800) == s.values.col(800));  // starts at zero offset
  const double coord_span = 5.0 * (999.0 - 800.0) / 999.0;
  CHECK(shifted.values(0, 999) - s.values(0, 999) ==
        doctest::Approx(6.0 * coord_span).epsilon(1e-12));

  MultivariateSeries zero = s;
  shift_trend(zero, 0.0, 800, 1000);
  CHECK(zero.values == s.values);
}

TEST_CASE("magnitude shift scales the region") {
  MultivariateSeries s = simulate7(1000, 5);
  MultivariateSeries same = s;
  shift_magnitude(same, 1.0, 500, 1000);
  CHECK(same.values == s.values);

  MultivariateSeries halved = s;
  shift_magnitude(halved, 0.5, 0, 1000);
  CHECK(halved.values.cwiseAbs().maxCoeff() ==
        doctest::Approx(0.5 * s.values.cwiseAbs().maxCoeff()).epsilon(1e-15));
}

TEST_CASE("occlusion respects its probability limits") {
  const MultivariateSeries s = simulate7(1000, 6);
  const MultivariateSeries none = occlude(s, {10, 0.0, 1});
  CHECK(none.values == s.values);
  CHECK(none.mask == s.mask);

  const MultivariateSeries all = occlude(s, {10, 1.0, 1});
  CHECK(all.mask.sum() == 0.0);
  CHECK(all.values.array().isNaN().all());
}

TEST_CASE("occluded fraction concentrates around p_o") {
  const MultivariateSeries s = simulate7(20000, 7);
  const MultivariateSeries occ = occlude(s, {100, 0.4, 3});
  const double fraction = 1.0 - occ.mask.sum() / static_cast<double>(occ.mask.size());
  CHECK(fraction == doctest::Approx(0.4).epsilon(0.05));
}

TEST_CASE("occlusion only masks, never edits observed values") {
  const MultivariateSeries s = simulate7(2000, 8);
  const MultivariateSeries occ = occlude(s, {7, 0.5, 9});
  for (long f = 0; f < s.features(); ++f) {
    for (long t = 0; t < s.length(); ++t) {
      if (occ.observed(f, t)) {
        CHECK(occ.values(f, t) == s.values(f, t));
      } else {
        CHECK(std::isnan(occ.values(f, t)));
      }
    }
  }
}

TEST_CASE("csv loader flags ragged and non-numeric input with locations") {
  const fs::path dir = temp_dir();

  write_file(dir / "ragged.csv", "a,b\n1,2\n3\n");
  CHECK_THROWS_WITH_AS(load_csv(dir / "ragged.csv"), doctest::Contains("row 3"),
                       csv_error);

  write_file(dir / "alpha.csv", "a,b\n1,2\n3,oops\n");
  try {
    load_csv(dir / "alpha.csv");
    FAIL("expected csv_error");
  } catch (const csv_error& e) {
    CHECK(e.row == 3);
    CHECK(e.column == 2);
  }

  write_file(dir / "empty.csv", "");
  CHECK_THROWS_AS(load_csv(dir / "empty.csv"), csv_error);

  write_file(dir / "headeronly.csv", "a,b\n");
  CHECK_THROWS_AS(load_csv(dir / "headeronly.csv"), csv_error);
}

TEST_CASE("csv loader reads missing cells into the mask") {
  const fs::path dir = temp_dir();
  write_file(dir / "gaps.csv", "a,b,c\n1,,3\n4,5,NaN\n");
  const MultivariateSeries s = load_csv(dir / "gaps.csv");
  CHECK(s.features() == 3);
  CHECK(s.length() == 2);
  CHECK(s.mask.sum() == 4.0);
  CHECK_FALSE(s.observed(1, 0));
  CHECK_FALSE(s.observed(2, 1));
  CHECK(std::isnan(s.values(1, 0)));
  CHECK(s.values(2, 0) == 3.0);
}

TEST_CASE("csv timestamp column is detected by header name or non-numeric data") {
  const fs::path dir = temp_dir();
  write_file(dir / "ts1.csv", "date,a\n2016-07-01,1\n2016-07-02,2\n");
  const MultivariateSeries s1 = load_csv(dir / "ts1.csv");
  CHECK(s1.features() == 1);
  CHECK(s1.timestamps.size() == 2);
  CHECK(s1.timestamps[0] == "2016-07-01");

  write_file(dir / "ts2.csv", "when,a\nmonday,1\ntuesday,2\n");
  CHECK(load_csv(dir / "ts2.csv").features() == 1);  // data-driven detection

  write_file(dir / "nots.csv", "x,y\n1,2\n3,4\n");
  const MultivariateSeries s3 = load_csv(dir / "nots.csv");
  CHECK(s3.features() == 2);
  CHECK(s3.timestamps.empty());
}

TEST_CASE("csv round trip preserves values and masks") {
  const fs::path dir = temp_dir();
  MultivariateSeries s = simulate7(300, 9);
  s = occlude(s, {11, 0.3, 4});
  save_csv(s, dir / "roundtrip.csv");
  const MultivariateSeries back = load_csv(dir / "roundtrip.csv");
  CHECK(back.mask == s.mask);
  for (long f = 0; f < s.features(); ++f) {
    for (long t = 0; t < s.length(); ++t) {
      if (s.observed(f, t)) {
        CHECK(std::abs(back.values(f, t) - s.values(f, t)) < 1e-12);
      }
    }
  }
  CHECK(back.feature_names == s.feature_names);
}

TEST_CASE("split honours the published fraction arithmetic") {
  const MultivariateSeries s = simulate7(20000, 10);
  const SplitSeries parts = split(s, {0.8, 0.1, 0.1});
  CHECK(parts.train.length() == 16000);
  CHECK(parts.val.length() == 2000);
  CHECK(parts.test.length() == 2000);

  // concatenation reproduces the series
  Eigen::MatrixXd recon(s.features(), s.length());
  recon << parts.train.values, parts.val.values, parts.test.values;
  CHECK(recon == s.values);

  CHECK_THROWS_AS(split(s, {1.0, 0.0, 0.0}), config_error);
  CHECK_THROWS_AS(split(s, {0.5, 0.2, 0.2}), config_error);  // does not sum to 1
  CHECK_THROWS_AS(split(s, {0.98, 0.01, 0.01}, 500), config_error);  // slice too short
}

TEST_CASE("global scaler standardizes using observed train entries") {
  MultivariateSeries s;
  s.values.resize(1, 6);
  s.values << 1.0, 3.0, std::nan(""), 100.0, 200.0, 300.0;
  s.mask.resize(1, 6);
  s.mask << 1, 1, 0, 1, 1, 1;
  const GlobalScaler scaler = fit_scaler(s, 3);  // train = {1, 3}
  CHECK(scaler.mean(0) == doctest::Approx(2.0));
  CHECK(scaler.scale(0) == doctest::Approx(1.0));
  MultivariateSeries t = s;
  scaler.apply(t);
  CHECK(t.values(0, 0) == doctest::Approx(-1.0));
  CHECK(scaler.to_original(0, t.values(0, 0)) == doctest::Approx(1.0));
  CHECK(std::isnan(t.values(0, 2)));
}

TEST_CASE("manifest round trips and rejects unknown keys") {
  const fs::path dir = temp_dir();
  DatasetManifest m;
  m.name = "fixture";
  m.csv = dir / "data.csv";
  m.fractions = {0.6, 0.2, 0.2};
  m.occlusion = {25, 0.4, 11};
  m.normalize = false;
  save_manifest(m, dir / "manifest.txt");
  const DatasetManifest back = load_manifest(dir / "manifest.txt");
  CHECK(back.name == "fixture");
  CHECK(back.csv.filename() == "data.csv");
  CHECK(back.fractions.val == doctest::Approx(0.2));
  CHECK(back.occlusion.segment == 25);
  CHECK(back.occlusion.prob == doctest::Approx(0.4));
  CHECK_FALSE(back.normalize);

  write_file(dir / "bad.txt", "name=x\ncsv=y.csv\nfrobnicate=1\n");
  CHECK_THROWS_WITH_AS(load_manifest(dir / "bad.txt"), doctest::Contains("frobnicate"),
                       config_error);

  write_file(dir / "both.txt", "csv=a.csv\ntrain_csv=b.csv\nval_csv=c.csv\ntest_csv=d.csv\n");
  CHECK_THROWS_AS(load_manifest(dir / "both.txt"), config_error);
}

TEST_CASE("load_dataset occludes, keeps truth and normalizes consistently") {
  const fs::path dir = temp_dir();
  const MultivariateSeries s = simulate7(1000, 12);
  save_csv(s, dir / "sim.csv");

  DatasetManifest m;
  m.name = "sim";
  m.csv = dir / "sim.csv";
  m.fractions = {0.8, 0.1, 0.1};
  m.occlusion = {10, 0.5, 5};
  m.normalize = true;
  const LoadedDataset ds = load_dataset(m);

  CHECK(ds.splits.train_end == 800);
  CHECK(ds.splits.val_end == 900);
  CHECK(ds.observed.length() == 1000);
  CHECK(ds.truth.observed_count() == 7000);           // truth keeps everything
  CHECK(ds.observed.observed_count() < 7000);         // occlusion happened
  // truth and observed agree wherever observed
  for (long f = 0; f < 7; ++f) {
    for (long t = 0; t < 1000; ++t) {
      if (ds.observed.observed(f, t)) {
        CHECK(ds.observed.values(f, t) == ds.truth.values(f, t));
      }
    }
  }
  // normalization used the occluded train region
  double sum = 0.0;
  long count = 0;
  for (long f = 0; f < 7; ++f) {
    for (long t = 0; t < 800; ++t) {
      if (ds.observed.observed(f, t)) {
        sum += ds.observed.values(f, t);
        ++count;
      }
    }
  }
  CHECK(std::abs(sum / count) < 1e-12);
}

TEST_CASE("load_dataset accepts pre-split csv triples") {
  const fs::path dir = temp_dir();
  const MultivariateSeries s = simulate7(500, 13);
  const SplitSeries parts = split(s, {0.8, 0.1, 0.1});
  save_csv(parts.train, dir / "train.csv");
  save_csv(parts.val, dir / "val.csv");
  save_csv(parts.test, dir / "test.csv");

  DatasetManifest m;
  m.name = "triple";
  m.train_csv = dir / "train.csv";
  m.val_csv = dir / "val.csv";
  m.test_csv = dir / "test.csv";
  m.normalize = false;
  const LoadedDataset ds = load_dataset(m);
  CHECK(ds.splits.train_end == 400);
  CHECK(ds.splits.val_end == 450);
  CHECK(ds.truth.length() == 500);
  for (long f = 0; f < 7; ++f) {
    for (long t = 0; t < 500; ++t) {
      CHECK(std::abs(ds.truth.values(f, t) - s.values(f, t)) < 1e-12);
    }
  }
}
