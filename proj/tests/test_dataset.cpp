#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>

#include "dpts/dataset.hpp"
#include "dpts/errors.hpp"

using namespace dpts;

namespace {

const char* kFixture =
    "@problemName Tiny\n"
    "@timeStamps false\n"
    "@missing false\n"
    "@univariate true\n"
    "@dimensions 1\n"
    "@equalLength true\n"
    "@seriesLength 4\n"
    "@classLabel true a b\n"
    "@data\n"
    "1,2,3,4:a\n"
    "0.5,-1,2.25,0:b\n";

bool datasets_equal(const TimeSeriesDataset& x, const TimeSeriesDataset& y) {
  if (x.n() != y.n() || x.channels() != y.channels() || x.length() != y.length()) return false;
  if (x.labels != y.labels || x.class_names != y.class_names) return false;
  auto xv = x.samples.values(), yv = y.samples.values();
  for (size_t i = 0; i < xv.size(); ++i)
    if (xv[i] != yv[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("parse_ts reads the univariate fixture") {
  TimeSeriesDataset d = parse_ts(kFixture);
  CHECK(d.n() == 2);
  CHECK(d.channels() == 1);
  CHECK(d.length() == 4);
  CHECK(d.labels == std::vector<int>{0, 1});
  CHECK(d.class_names == std::vector<std::string>{"a", "b"});
  CHECK(d.samples.values()[2] == 3.0);
  CHECK(d.samples.values()[7] == 0.0);
}

TEST_CASE("parse_ts error paths") {
  SUBCASE("unlabeled dataset") {
    CHECK_THROWS_WITH_AS(parse_ts("@problemName X\n@classLabel false\n@data\n1,2:0\n"),
                         doctest::Contains("unlabeled dataset unsupported"), FormatError);
  }
  SUBCASE("missing @data marker") {
    try {
      parse_ts("@problemName X\n@classLabel true a\n");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("line") != std::string::npos);
      CHECK(std::string(e.what()).find("@data") != std::string::npos);
    }
  }
  SUBCASE("ragged series length") {
    const std::string text =
        "@classLabel true a\n@data\n1,2,3:a\n1,2:a\n";
    CHECK_THROWS_WITH_AS(parse_ts(text), doctest::Contains("ragged"), FormatError);
  }
  SUBCASE("unknown label token") {
    const std::string text = "@classLabel true a b\n@data\n1,2:c\n";
    CHECK_THROWS_WITH_AS(parse_ts(text), doctest::Contains("unknown label"), FormatError);
  }
  SUBCASE("missing value marker rejected") {
    const std::string text = "@classLabel true a\n@data\n1,?:a\n";
    CHECK_THROWS_AS(parse_ts(text), FormatError);
  }
}

TEST_CASE("ts round trip is identity and byte-stable") {
  TimeSeriesDataset d = parse_ts(kFixture);
  const std::string emitted = serialize_ts(d);
  TimeSeriesDataset d2 = parse_ts(emitted);
  CHECK(datasets_equal(d, d2));
  // canonical emission is a fixed point
  CHECK(serialize_ts(d2) == emitted);
  CHECK(emitted == std::string(kFixture));
}

TEST_CASE("parse_csv basics") {
  TimeSeriesDataset d = parse_csv("0,1,2\n", 1, 2);
  CHECK(d.n() == 1);
  CHECK(d.samples.values()[0] == 1.0);
  CHECK(d.samples.values()[1] == 2.0);
  CHECK(d.labels[0] == 0);

  CHECK_THROWS_WITH_AS(parse_csv("0,1,2,3\n", 1, 2), doctest::Contains("row 1"), FormatError);
}

TEST_CASE("csv and ts agree on randomized content") {
  Rng rng(2024);
  const int n = 100, len = 6;
  std::string csv, ts = "@problemName R\n@classLabel true 0 1\n@data\n";
  for (int i = 0; i < n; ++i) {
    const int label = static_cast<int>(rng.below(2));
    std::string vals;
    for (int t = 0; t < len; ++t) {
      const double v = std::round(rng.uniform(-5.0, 5.0) * 1024.0) / 1024.0;
      if (t) vals += ",";
      char buf[32];
      snprintf(buf, sizeof(buf), "%.10g", v);
      vals += buf;
    }
    csv += std::to_string(label) + "," + vals + "\n";
    ts += vals + ":" + std::to_string(label) + "\n";
  }
  TimeSeriesDataset from_csv = parse_csv(csv, 1, len);
  TimeSeriesDataset from_ts = parse_ts(ts);
  CHECK(from_csv.labels == from_ts.labels);
  auto a = from_csv.samples.values(), b = from_ts.samples.values();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("fit_normalizer two-point case") {
  TimeSeriesDataset d;
  d.samples = Tensor::from_values({2, 1, 1}, {0.0, 2.0});
  d.labels = {0, 1};
  d.class_names = {"a", "b"};
  NormalizationMeta meta = fit_normalizer(d);
  REQUIRE(meta.channels.size() == 1);
  CHECK(meta.channels[0].mean == doctest::Approx(1.0));
  CHECK(meta.channels[0].stddev == doctest::Approx(1.0));
  CHECK(meta.channels[0].min == doctest::Approx(-1.0));
  CHECK(meta.channels[0].max == doctest::Approx(1.0));
  CHECK_FALSE(meta.channels[0].constant);
}

TEST_CASE("fit_normalizer flags constant channels and rejects tiny datasets") {
  TimeSeriesDataset d;
  d.samples = Tensor::from_values({2, 2, 2}, {3, 3, 1, 2, 3, 3, 5, 9});
  d.labels = {0, 1};
  d.class_names = {"a", "b"};
  NormalizationMeta meta = fit_normalizer(d);
  CHECK(meta.channels[0].constant);
  CHECK_FALSE(meta.channels[1].constant);

  TimeSeriesDataset single;
  single.samples = Tensor::from_values({1, 1, 2}, {1, 2});
  single.labels = {0};
  single.class_names = {"a"};
  CHECK_THROWS_AS(fit_normalizer(single), ArgumentError);
}

TEST_CASE("apply_normalizer maps train extremes to 0 and 1 exactly") {
  Rng rng(5);
  TimeSeriesDataset d;
  const int n = 20, len = 8;
  d.samples = Tensor::zeros({n, 2, len});
  for (double& v : d.samples.values()) v = rng.uniform(-7.0, 3.0);
  d.labels.assign(n, 0);
  d.labels[1] = 1;
  d.class_names = {"a", "b"};
  NormalizationMeta meta = fit_normalizer(d);
  TimeSeriesDataset norm = apply_normalizer(d, meta);
  for (int ch = 0; ch < 2; ++ch) {
    double mn = 1e9, mx = -1e9;
    auto v = norm.samples.values();
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < len; ++t) {
        const double x = v[(i * 2 + ch) * len + t];
        CHECK(x >= 0.0);
        CHECK(x <= 1.0);
        mn = std::min(mn, x);
        mx = std::max(mx, x);
      }
    CHECK(mn == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mx == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("apply_normalizer clamps out-of-range test values and centers constants") {
  TimeSeriesDataset train;
  train.samples = Tensor::from_values({2, 2, 1}, {0.0, 7.0, 2.0, 7.0});
  train.labels = {0, 1};
  train.class_names = {"a", "b"};
  NormalizationMeta meta = fit_normalizer(train);

  TimeSeriesDataset test;
  test.samples = Tensor::from_values({1, 2, 1}, {100.0, -4.0});
  test.labels = {0};
  test.class_names = {"a", "b"};
  test.split = Split::test;
  TimeSeriesDataset norm = apply_normalizer(test, meta);
  CHECK(norm.samples.values()[0] == 1.0);   // above train max
  CHECK(norm.samples.values()[1] == 0.5);   // constant channel

  TimeSeriesDataset wrong;
  wrong.samples = Tensor::from_values({1, 1, 1}, {0.0});
  wrong.labels = {0};
  wrong.class_names = {"a"};
  CHECK_THROWS_AS(apply_normalizer(wrong, meta), DimensionError);
}

TEST_CASE("make_synthetic determinism and spec validation") {
  SyntheticSpec spec;
  spec.n_per_class = 10;
  spec.length = 32;
  spec.seed = 77;
  auto [tr1, te1] = make_synthetic(spec);
  auto [tr2, te2] = make_synthetic(spec);
  CHECK(datasets_equal(tr1, tr2));
  CHECK(datasets_equal(te1, te2));
  CHECK(tr1.content_hash() == tr2.content_hash());
  CHECK(tr1.n() == 20);

  SyntheticSpec bad = spec;
  bad.length = 8;
  CHECK_THROWS_AS(make_synthetic(bad), ArgumentError);
  bad = spec;
  bad.classes = 5;  // sine_vs_noise is binary
  CHECK_THROWS_AS(make_synthetic(bad), ArgumentError);
}

TEST_CASE("freq_classes dominant DFT bin matches the designed frequency") {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::freq_classes;
  spec.classes = 4;
  spec.n_per_class = 16;
  spec.length = 64;
  spec.seed = 3;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  auto v = train.samples.values();
  const int len = spec.length;
  for (int cls = 0; cls < 4; ++cls) {
    std::vector<double> power(len / 2, 0.0);
    for (int i = 0; i < train.n(); ++i) {
      if (train.labels[i] != cls) continue;
      for (int f = 1; f < len / 2; ++f) {
        double re = 0.0, im = 0.0;
        for (int t = 0; t < len; ++t) {
          const double ang = -2.0 * M_PI * f * t / len;
          re += v[i * len + t] * std::cos(ang);
          im += v[i * len + t] * std::sin(ang);
        }
        power[f] += re * re + im * im;
      }
    }
    int best = 1;
    for (int f = 2; f < len / 2; ++f)
      if (power[f] > power[best]) best = f;
    CHECK(best == cls + 1);
  }
}

TEST_CASE("sample_batch covers the dataset when batch equals n") {
  SyntheticSpec spec;
  spec.n_per_class = 8;
  spec.length = 16;
  spec.seed = 9;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  Rng rng(4);
  auto [batch, labels] = sample_batch(train, train.n(), rng, false);
  CHECK(batch.dim(0) == train.n());
  // permutation: per-class counts preserved
  int c0 = 0;
  for (int y : labels) c0 += (y == 0);
  CHECK(c0 == 8);

  CHECK_THROWS_AS(sample_batch(train, train.n() + 1, rng, false), ArgumentError);
}

TEST_CASE("conditional sampling is roughly class-balanced") {
  SyntheticSpec spec;
  spec.n_per_class = 100;
  spec.length = 16;
  spec.seed = 12;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  Rng rng(2718);
  auto [batch, labels] = sample_batch(train, 100, rng, true);
  (void)batch;
  int c0 = 0;
  for (int y : labels) c0 += (y == 0);
  CHECK(c0 >= 35);
  CHECK(c0 <= 65);
}

TEST_CASE("sample_batch is deterministic under a fixed seed") {
  SyntheticSpec spec;
  spec.n_per_class = 20;
  spec.length = 16;
  spec.seed = 5;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  Rng r1(42), r2(42);
  auto [b1, l1] = sample_batch(train, 12, r1, true);
  auto [b2, l2] = sample_batch(train, 12, r2, true);
  CHECK(l1 == l2);
  auto v1 = b1.values(), v2 = b2.values();
  for (size_t i = 0; i < v1.size(); ++i) CHECK(v1[i] == v2[i]);
}

TEST_CASE("split_off_validation partitions the rows") {
  SyntheticSpec spec;
  spec.n_per_class = 25;
  spec.length = 16;
  spec.seed = 6;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  Rng rng(1);
  auto [fit, val] = split_off_validation(train, 0.2, rng);
  CHECK(fit.n() + val.n() == train.n());
  CHECK(val.n() == 10);
}
