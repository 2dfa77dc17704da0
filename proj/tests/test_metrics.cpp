#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dpts/errors.hpp"
#include "dpts/metrics.hpp"
#include "dpts/rng.hpp"

using namespace dpts;

namespace {

Tensor random_cloud(int n, int d, Rng& rng, double mean = 0.0, double stddev = 1.0) {
  Tensor t = Tensor::zeros({n, d});
  for (double& v : t.values()) v = rng.normal(mean, stddev);
  return t;
}

// Mean silhouette over points with two known clusters in a 2-D embedding.
double silhouette(const Tensor& y, const std::vector<int>& labels) {
  const int n = y.dim(0);
  auto v = y.values();
  auto dist = [&](int i, int j) {
    const double a = v[i * 2] - v[j * 2], b = v[i * 2 + 1] - v[j * 2 + 1];
    return std::sqrt(a * a + b * b);
  };
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double intra = 0.0, inter = 0.0;
    int n_intra = 0, n_inter = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        intra += dist(i, j);
        ++n_intra;
      } else {
        inter += dist(i, j);
        ++n_inter;
      }
    }
    intra /= n_intra;
    inter /= n_inter;
    total += (inter - intra) / std::max(intra, inter);
  }
  return total / n;
}

}  // namespace

TEST_CASE("jacobi_eigh recovers a known spectrum") {
  // A = Q diag(1,4,9) Q^T for a rotation Q
  const double c = std::cos(0.3), s = std::sin(0.3);
  std::vector<double> q = {c, -s, 0, s, c, 0, 0, 0, 1};
  std::vector<double> diag = {1, 0, 0, 0, 4, 0, 0, 0, 9};
  std::vector<double> a(9, 0.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l) a[i * 3 + j] += q[i * 3 + k] * diag[k * 3 + l] * q[j * 3 + l];
  std::vector<double> vals, vecs;
  jacobi_eigh(a, 3, vals, vecs);
  CHECK(vals[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(vals[1] == doctest::Approx(4.0).epsilon(1e-10));
  CHECK(vals[2] == doctest::Approx(9.0).epsilon(1e-10));
  // reconstruct A from the decomposition
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += vals[k] * vecs[i * 3 + k] * vecs[j * 3 + k];
      CHECK(acc == doctest::Approx(a[i * 3 + j]).epsilon(1e-10));
    }
}

TEST_CASE("fid of identical clouds vanishes") {
  Rng rng(8);
  Tensor cloud = random_cloud(24, 6, rng);
  FeatureCloud a{cloud}, b{cloud.detach()};
  CHECK(fid(a, b) < 1e-8);
}

TEST_CASE("fid closed forms on 1-D Gaussian moments") {
  CHECK(fid_from_moments({0.0}, {1.0}, {3.0}, {1.0}, 1) == doctest::Approx(9.0).epsilon(1e-9));
  CHECK(fid_from_moments({0.0}, {4.0}, {0.0}, {1.0}, 1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fid symmetry and non-negativity") {
  Rng rng(99);
  FeatureCloud a{random_cloud(30, 5, rng, 0.0, 1.0)};
  FeatureCloud b{random_cloud(40, 5, rng, 0.7, 1.4)};
  const double ab = fid(a, b), ba = fid(b, a);
  CHECK(ab >= 0.0);
  CHECK(std::abs(ab - ba) < 1e-8);

  FeatureCloud wrong{random_cloud(10, 4, rng)};
  CHECK_THROWS_AS(fid(a, wrong), DimensionError);
}

TEST_CASE("inception score closed forms and bounds") {
  Tensor uniform = Tensor::full({6, 4}, 0.25);
  CHECK(inception_score(uniform) == doctest::Approx(1.0).epsilon(1e-12));

  Tensor onehot = Tensor::zeros({4, 4});
  for (int i = 0; i < 4; ++i) onehot.values()[i * 4 + i] = 1.0;
  CHECK(inception_score(onehot) == doctest::Approx(4.0).epsilon(1e-9));

  Rng rng(12);
  Tensor probs = Tensor::zeros({20, 5});
  for (int i = 0; i < 20; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 5; ++j) {
      probs.values()[i * 5 + j] = rng.uniform(0.01, 1.0);
      sum += probs.values()[i * 5 + j];
    }
    for (int j = 0; j < 5; ++j) probs.values()[i * 5 + j] /= sum;
  }
  const double score = inception_score(probs);
  CHECK(score >= 1.0 - 1e-12);
  CHECK(score <= 5.0 + 1e-12);

  // invariant under row permutation
  Tensor shuffled = probs.detach();
  for (int j = 0; j < 5; ++j) {
    std::swap(shuffled.values()[0 * 5 + j], shuffled.values()[13 * 5 + j]);
    std::swap(shuffled.values()[4 * 5 + j], shuffled.values()[9 * 5 + j]);
  }
  CHECK(inception_score(shuffled) == doctest::Approx(score).epsilon(1e-12));

  Tensor bad = Tensor::full({2, 3}, 0.5);
  CHECK_THROWS_AS(inception_score(bad), ArgumentError);
}

TEST_CASE("weighted f1 hand cases") {
  CHECK(weighted_f1({0, 1, 0, 1}, {0, 1, 0, 1}, 2) == doctest::Approx(1.0));
  CHECK(weighted_f1({0, 0, 1, 1}, {0, 0, 1, 0}, 2) == doctest::Approx(0.733333333333).epsilon(1e-9));
  CHECK(weighted_f1({0, 1}, {1, 0}, 2) == doctest::Approx(0.0));
  CHECK_THROWS_AS(weighted_f1({}, {}, 2), ArgumentError);
}

TEST_CASE("weighted f1 relabeling invariance") {
  Rng rng(31);
  std::vector<int> y_true(60), y_pred(60);
  for (int i = 0; i < 60; ++i) {
    y_true[i] = static_cast<int>(rng.below(3));
    y_pred[i] = static_cast<int>(rng.below(3));
  }
  const double base = weighted_f1(y_true, y_pred, 3);
  // consistent relabeling 0->2, 1->0, 2->1
  const int map[3] = {2, 0, 1};
  std::vector<int> t2(60), p2(60);
  for (int i = 0; i < 60; ++i) {
    t2[i] = map[y_true[i]];
    p2[i] = map[y_pred[i]];
  }
  CHECK(weighted_f1(t2, p2, 3) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("distance stats single pair and cross set") {
  Tensor a = Tensor::from_values({2, 2}, {0, 0, 3, 4});
  DistanceStats s = distance_stats(a);
  CHECK(s.min == doctest::Approx(5.0));
  CHECK(s.mean == doctest::Approx(5.0));
  CHECK(s.max == doctest::Approx(5.0));

  Tensor b = Tensor::from_values({1, 2}, {0, 0});
  DistanceStats cross = distance_stats(a, b);
  CHECK(cross.min == doctest::Approx(0.0));
  CHECK(cross.max == doctest::Approx(5.0));

  CHECK_THROWS_AS(distance_stats(a, Tensor::from_values({1, 3}, {0, 0, 0})), DimensionError);
}

TEST_CASE("distance stats agree with a brute-force oracle at n=50") {
  Rng rng(7);
  Tensor a = random_cloud(50, 7, rng);
  Tensor b = random_cloud(50, 7, rng, 0.4, 2.0);

  // independent oracle
  auto va = a.values();
  auto vb = b.values();
  double wmin = 1e300, wmax = -1e300, wsum = 0.0;
  int64_t wcount = 0;
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) {
      if (j <= i) continue;
      double sq = 0.0;
      for (int t = 0; t < 7; ++t) {
        const double diff = va[i * 7 + t] - va[j * 7 + t];
        sq += diff * diff;
      }
      const double dist = std::sqrt(sq);
      wmin = std::min(wmin, dist);
      wmax = std::max(wmax, dist);
      wsum += dist;
      ++wcount;
    }
  DistanceStats within = distance_stats(a);
  CHECK(std::abs(within.min - wmin) < 1e-12);
  CHECK(std::abs(within.max - wmax) < 1e-12);
  CHECK(std::abs(within.mean - wsum / wcount) < 1e-12);

  double cmin = 1e300, cmax = -1e300, csum = 0.0;
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) {
      double sq = 0.0;
      for (int t = 0; t < 7; ++t) {
        const double diff = va[i * 7 + t] - vb[j * 7 + t];
        sq += diff * diff;
      }
      const double dist = std::sqrt(sq);
      cmin = std::min(cmin, dist);
      cmax = std::max(cmax, dist);
      csum += dist;
    }
  DistanceStats cross = distance_stats(a, b);
  CHECK(std::abs(cross.min - cmin) < 1e-12);
  CHECK(std::abs(cross.max - cmax) < 1e-12);
  CHECK(std::abs(cross.mean - csum / 2500.0) < 1e-12);
}

TEST_CASE("tsne bandwidth search: equidistant neighbors give a uniform row") {
  // regular 4-simplex: 5 points in R^5, all pairwise distances equal
  Tensor x = Tensor::zeros({5, 5});
  for (int i = 0; i < 5; ++i) x.values()[i * 5 + i] = 1.0;
  Tensor cond = tsne_conditional_probabilities(x, 2.0);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 5; ++j) {
      if (i == j) {
        CHECK(cond.values()[i * 5 + j] == 0.0);
      } else {
        CHECK(cond.values()[i * 5 + j] == doctest::Approx(0.25).epsilon(1e-12));
      }
    }
}

TEST_CASE("tsne conditional entropies match log perplexity") {
  Rng rng(17);
  Tensor x = random_cloud(80, 6, rng);
  const double perplexity = 12.0;
  Tensor cond = tsne_conditional_probabilities(x, perplexity);
  for (int i = 0; i < 80; ++i) {
    double h = 0.0;
    for (int j = 0; j < 80; ++j) {
      const double p = cond.values()[i * 80 + j];
      if (p > 0.0) h -= p * std::log(p);
    }
    CHECK(std::abs(h - std::log(perplexity)) < 1e-5);
  }
}

TEST_CASE("tsne joint probabilities are symmetric, non-negative, sum to one") {
  Rng rng(29);
  Tensor x = random_cloud(40, 4, rng);
  Tensor joint = tsne_joint_probabilities(x, 8.0);
  double sum = 0.0;
  for (int i = 0; i < 40; ++i)
    for (int j = 0; j < 40; ++j) {
      const double p = joint.values()[i * 40 + j];
      CHECK(p >= 0.0);
      CHECK(joint.values()[j * 40 + i] == doctest::Approx(p).epsilon(1e-15));
      sum += p;
    }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("tsne separates two well-separated Gaussian clusters") {
  Rng rng(5);
  const int per_cluster = 50, d = 10;
  Tensor x = Tensor::zeros({2 * per_cluster, d});
  std::vector<int> labels(2 * per_cluster);
  for (int i = 0; i < 2 * per_cluster; ++i) {
    const int cls = i % 2;
    labels[i] = cls;
    for (int j = 0; j < d; ++j) {
      x.values()[i * d + j] = rng.normal(cls == 0 ? 0.0 : 20.0, 1.0);
    }
  }
  TsneConfig cfg;
  cfg.perplexity = 30.0;
  cfg.iterations = 1000;
  cfg.seed = 3;
  Tensor y = tsne(x, cfg);
  CHECK(silhouette(y, labels) >= 0.9);
}

TEST_CASE("tsne rejects out-of-range perplexity") {
  Rng rng(1);
  Tensor x = random_cloud(20, 3, rng);
  TsneConfig cfg;
  cfg.perplexity = 10.0;  // (n-1)/3 = 6.33
  CHECK_THROWS_AS(tsne(x, cfg), ArgumentError);
  cfg.perplexity = 1.0;
  CHECK_THROWS_AS(tsne(x, cfg), ArgumentError);
}
