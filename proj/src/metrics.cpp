#include "dpts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpts/errors.hpp"
#include "dpts/rng.hpp"

namespace dpts {

namespace {

// Flatten [n x ...] to per-sample vectors.
std::pair<int, int64_t> sample_view(const Tensor& t) {
  if (!t.defined() || t.rank() < 2) throw DimensionError("expected a tensor with a batch axis");
  return {t.dim(0), t.size() / t.dim(0)};
}

std::vector<double> column_means(std::span<const double> v, int n, int d) {
  std::vector<double> mu(d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) mu[j] += v[i * d + j];
  for (double& m : mu) m /= n;
  return mu;
}

// Unbiased covariance, row-major d x d.
std::vector<double> covariance(std::span<const double> v, const std::vector<double>& mu, int n,
                               int d) {
  std::vector<double> cov(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < n; ++i)
    for (int a = 0; a < d; ++a) {
      const double da = v[i * d + a] - mu[a];
      for (int b = a; b < d; ++b) cov[a * d + b] += da * (v[i * d + b] - mu[b]);
    }
  for (int a = 0; a < d; ++a)
    for (int b = a; b < d; ++b) {
      cov[a * d + b] /= (n - 1);
      cov[b * d + a] = cov[a * d + b];
    }
  return cov;
}

std::vector<double> matmul_square(const std::vector<double>& a, const std::vector<double>& b,
                                  int d) {
  std::vector<double> out(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i)
    for (int k = 0; k < d; ++k) {
      const double aik = a[i * d + k];
      if (aik == 0.0) continue;
      for (int j = 0; j < d; ++j) out[i * d + j] += aik * b[k * d + j];
    }
  return out;
}

// Symmetric square root with negative eigenvalues clamped to zero.
std::vector<double> sqrtm_psd(const std::vector<double>& m, int d) {
  std::vector<double> vals, vecs;
  jacobi_eigh(m, d, vals, vecs);
  std::vector<double> out(static_cast<size_t>(d) * d, 0.0);
  for (int k = 0; k < d; ++k) {
    const double s = std::sqrt(std::max(0.0, vals[k]));
    if (s == 0.0) continue;
    for (int i = 0; i < d; ++i) {
      const double vik = vecs[i * d + k];
      if (vik == 0.0) continue;
      for (int j = 0; j < d; ++j) out[i * d + j] += s * vik * vecs[j * d + k];
    }
  }
  return out;
}

}  // namespace

void jacobi_eigh(std::vector<double> a, int d, std::vector<double>& eigvals,
                 std::vector<double>& eigvecs) {
  if (static_cast<int64_t>(a.size()) != static_cast<int64_t>(d) * d) {
    throw DimensionError("jacobi_eigh: matrix size does not match dimension");
  }
  eigvecs.assign(static_cast<size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) eigvecs[i * d + i] = 1.0;

  double frob = 0.0;
  for (double v : a) frob += v * v;
  const double tol = 1e-14 * std::max(1.0, std::sqrt(frob));

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (std::sqrt(off) < tol) break;
    for (int p = 0; p < d; ++p)
      for (int q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (int k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < d; ++k) {
          const double vkp = eigvecs[k * d + p], vkq = eigvecs[k * d + q];
          eigvecs[k * d + p] = c * vkp - s * vkq;
          eigvecs[k * d + q] = s * vkp + c * vkq;
        }
      }
  }
  eigvals.resize(d);
  for (int i = 0; i < d; ++i) eigvals[i] = a[i * d + i];

  // ascending order, permuting the eigenvector columns along
  std::vector<int> order(d);
  for (int i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](int x, int y) { return eigvals[x] < eigvals[y]; });
  std::vector<double> sorted_vals(d);
  std::vector<double> sorted_vecs(static_cast<size_t>(d) * d);
  for (int j = 0; j < d; ++j) {
    sorted_vals[j] = eigvals[order[j]];
    for (int i = 0; i < d; ++i) sorted_vecs[i * d + j] = eigvecs[i * d + order[j]];
  }
  eigvals = std::move(sorted_vals);
  eigvecs = std::move(sorted_vecs);
}

double fid_from_moments(const std::vector<double>& mean1, const std::vector<double>& cov1,
                        const std::vector<double>& mean2, const std::vector<double>& cov2, int d) {
  if (static_cast<int>(mean1.size()) != d || static_cast<int>(mean2.size()) != d ||
      static_cast<int64_t>(cov1.size()) != static_cast<int64_t>(d) * d ||
      static_cast<int64_t>(cov2.size()) != static_cast<int64_t>(d) * d) {
    throw DimensionError("fid_from_moments: moment sizes do not match dimension");
  }
  double mean_term = 0.0;
  for (int j = 0; j < d; ++j) {
    const double diff = mean1[j] - mean2[j];
    mean_term += diff * diff;
  }
  const std::vector<double> s1 = sqrtm_psd(cov1, d);
  const std::vector<double> inner = matmul_square(matmul_square(s1, cov2, d), s1, d);
  // inner is similar to S1 S2, so Tr((S1 S2)^(1/2)) = sum of sqrt(eig(inner))
  std::vector<double> vals, vecs;
  jacobi_eigh(inner, d, vals, vecs);
  double trace_sqrt = 0.0;
  for (double v : vals) trace_sqrt += std::sqrt(std::max(0.0, v));
  double trace12 = 0.0;
  for (int j = 0; j < d; ++j) trace12 += cov1[j * d + j] + cov2[j * d + j];
  return std::max(0.0, mean_term + trace12 - 2.0 * trace_sqrt);
}

double fid(const FeatureCloud& real, const FeatureCloud& fake) {
  if (!real.features.defined() || !fake.features.defined() || real.features.rank() != 2 ||
      fake.features.rank() != 2) {
    throw DimensionError("fid: feature clouds must be [n x d]");
  }
  if (real.features.dim(1) != fake.features.dim(1)) {
    throw DimensionError("fid: feature dimensions differ, " + shape_str(real.features.shape()) +
                         " vs " + shape_str(fake.features.shape()));
  }
  const int n1 = real.features.dim(0), n2 = fake.features.dim(0), d = real.features.dim(1);
  if (n1 < 2 || n2 < 2) throw ArgumentError("fid: need at least 2 samples per cloud");
  auto v1 = real.features.values();
  auto v2 = fake.features.values();
  const std::vector<double> mu1 = column_means(v1, n1, d);
  const std::vector<double> mu2 = column_means(v2, n2, d);
  return fid_from_moments(mu1, covariance(v1, mu1, n1, d), mu2, covariance(v2, mu2, n2, d), d);
}

double inception_score(const Tensor& probs) {
  if (!probs.defined() || probs.rank() != 2) throw DimensionError("inception_score: probs must be [n x K]");
  const int n = probs.dim(0), k = probs.dim(1);
  auto v = probs.values();
  for (int i = 0; i < n; ++i) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      if (v[i * k + j] < 0.0) throw ArgumentError("inception_score: negative probability");
      sum += v[i * k + j];
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      throw ArgumentError("inception_score: row " + std::to_string(i) + " sums to " +
                          std::to_string(sum));
    }
  }
  std::vector<double> marginal(k, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < k; ++j) marginal[j] += v[i * k + j];
  for (double& m : marginal) m = std::max(m / n, 1e-300);

  double mean_kl = 0.0;
  for (int i = 0; i < n; ++i) {
    double kl = 0.0;
    for (int j = 0; j < k; ++j) {
      const double p = v[i * k + j];
      if (p > 0.0) kl += p * std::log(p / marginal[j]);
    }
    mean_kl += kl;
  }
  return std::exp(mean_kl / n);
}

double weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                   int num_classes) {
  if (y_true.empty()) throw ArgumentError("weighted_f1: empty input");
  if (y_true.size() != y_pred.size()) throw ArgumentError("weighted_f1: length mismatch");
  std::vector<int64_t> tp(num_classes, 0), fp(num_classes, 0), fn(num_classes, 0);
  for (size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= num_classes || p < 0 || p >= num_classes) {
      throw ArgumentError("weighted_f1: label outside [0," + std::to_string(num_classes) + ")");
    }
    if (t == p) {
      ++tp[t];
    } else {
      ++fn[t];
      ++fp[p];
    }
  }
  double score = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    const int64_t support = tp[c] + fn[c];
    if (support == 0) continue;
    const double precision = (tp[c] + fp[c]) ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    const double recall = static_cast<double>(tp[c]) / support;
    const double f1 =
        (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    score += f1 * (static_cast<double>(support) / static_cast<double>(y_true.size()));
  }
  return score;
}

DistanceStats distance_stats(const Tensor& a) {
  auto [n, dim] = sample_view(a);
  if (n < 2) throw ArgumentError("distance_stats: need at least 2 samples for within-set pairs");
  auto v = a.values();
  DistanceStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  int64_t count = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (int64_t t = 0; t < dim; ++t) {
        const double diff = v[i * dim + t] - v[j * dim + t];
        sq += diff * diff;
      }
      const double dist = std::sqrt(sq);
      s.min = std::min(s.min, dist);
      s.max = std::max(s.max, dist);
      total += dist;
      ++count;
    }
  s.mean = total / count;
  return s;
}

DistanceStats distance_stats(const Tensor& a, const Tensor& b) {
  auto [na, da] = sample_view(a);
  auto [nb, db] = sample_view(b);
  if (da != db) throw DimensionError("distance_stats: per-sample dimensions differ");
  auto va = a.values();
  auto vb = b.values();
  DistanceStats s;
  s.min = std::numeric_limits<double>::infinity();
  s.max = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j) {
      double sq = 0.0;
      for (int64_t t = 0; t < da; ++t) {
        const double diff = va[i * da + t] - vb[j * da + t];
        sq += diff * diff;
      }
      const double dist = std::sqrt(sq);
      s.min = std::min(s.min, dist);
      s.max = std::max(s.max, dist);
      total += dist;
    }
  s.mean = total / (static_cast<double>(na) * nb);
  return s;
}

namespace {

std::vector<double> squared_distances(std::span<const double> v, int n, int64_t d) {
  std::vector<double> dist(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double sq = 0.0;
      for (int64_t t = 0; t < d; ++t) {
        const double diff = v[i * d + t] - v[j * d + t];
        sq += diff * diff;
      }
      dist[i * n + j] = sq;
      dist[j * n + i] = sq;
    }
  return dist;
}

// Bisection over the Gaussian precision until the row entropy hits
// log(perplexity); mirrors the usual exact t-SNE search.
void conditional_row(const std::vector<double>& sqdist, int n, int i, double perplexity,
                     double* row) {
  const double target = std::log(perplexity);
  double beta = 1.0, beta_min = -std::numeric_limits<double>::infinity();
  double beta_max = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < 200; ++iter) {
    double sum = 0.0, weighted = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == i) {
        row[j] = 0.0;
        continue;
      }
      const double p = std::exp(-beta * sqdist[i * n + j]);
      row[j] = p;
      sum += p;
      weighted += p * sqdist[i * n + j];
    }
    double diff;
    if (sum <= 0.0) {
      diff = -1.0;  // beta overshot into underflow; treat as entropy below target
    } else {
      const double entropy = std::log(sum) + beta * weighted / sum;
      diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
    }
    if (diff > 0.0) {
      beta_min = beta;
      beta = std::isinf(beta_max) ? beta * 2.0 : 0.5 * (beta + beta_max);
    } else {
      beta_max = beta;
      beta = std::isinf(beta_min) ? beta / 2.0 : 0.5 * (beta + beta_min);
    }
  }
  double sum = 0.0;
  for (int j = 0; j < n; ++j) sum += row[j];
  if (sum <= 0.0) {
    // Entire row underflowed (target entropy unreachable): use the beta -> inf
    // limit, uniform over the minimal-distance neighbors.
    double dmin = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j != i) dmin = std::min(dmin, sqdist[i * n + j]);
    }
    int ties = 0;
    for (int j = 0; j < n; ++j) ties += (j != i && sqdist[i * n + j] == dmin);
    for (int j = 0; j < n; ++j) row[j] = (j != i && sqdist[i * n + j] == dmin) ? 1.0 / ties : 0.0;
    return;
  }
  for (int j = 0; j < n; ++j) row[j] /= sum;
}

}  // namespace

Tensor tsne_conditional_probabilities(const Tensor& x, double perplexity) {
  auto [n, d] = sample_view(x);
  if (perplexity < 1.0 || perplexity > n - 1) {
    throw ArgumentError("tsne: perplexity " + std::to_string(perplexity) + " out of range for n=" +
                        std::to_string(n));
  }
  const std::vector<double> sqdist = squared_distances(x.values(), n, d);
  Tensor p = Tensor::zeros({n, n});
  auto pv = p.values();
  for (int i = 0; i < n; ++i) conditional_row(sqdist, n, i, perplexity, &pv[i * n]);
  return p;
}

Tensor tsne_joint_probabilities(const Tensor& x, double perplexity) {
  Tensor cond = tsne_conditional_probabilities(x, perplexity);
  const int n = cond.dim(0);
  Tensor joint = Tensor::zeros({n, n});
  auto cv = cond.values();
  auto jv = joint.values();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      jv[i * n + j] = std::max((cv[i * n + j] + cv[j * n + i]) / (2.0 * n), i == j ? 0.0 : 1e-12);
    }
  return joint;
}

Tensor tsne(const Tensor& x, const TsneConfig& cfg) {
  auto [n, d] = sample_view(x);
  (void)d;
  if (cfg.perplexity < 2.0 || cfg.perplexity > (n - 1) / 3.0) {
    throw ArgumentError("tsne: perplexity must satisfy 2 <= perplexity <= (n-1)/3");
  }
  Tensor joint = tsne_joint_probabilities(x, cfg.perplexity);
  auto pv = joint.values();

  constexpr int kExaggerationIters = 250;
  constexpr double kExaggeration = 12.0;
  constexpr int kMomentumSwitch = 250;
  for (double& p : pv) p *= kExaggeration;

  Rng rng(cfg.seed);
  std::vector<double> y(static_cast<size_t>(n) * 2);
  for (double& v : y) v = rng.normal(0.0, 1e-2);
  std::vector<double> velocity(y.size(), 0.0);
  std::vector<double> gains(y.size(), 1.0);
  std::vector<double> grad(y.size(), 0.0);
  std::vector<double> q(static_cast<size_t>(n) * n, 0.0);

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    // Student-t kernel and normalizer
    double qsum = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double dy0 = y[i * 2] - y[j * 2];
        const double dy1 = y[i * 2 + 1] - y[j * 2 + 1];
        const double w = 1.0 / (1.0 + dy0 * dy0 + dy1 * dy1);
        q[i * n + j] = w;
        q[j * n + i] = w;
        qsum += 2.0 * w;
      }
    qsum = std::max(qsum, 1e-300);

    std::fill(grad.begin(), grad.end(), 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = q[i * n + j];
        const double coeff = 4.0 * (pv[i * n + j] - w / qsum) * w;
        grad[i * 2] += coeff * (y[i * 2] - y[j * 2]);
        grad[i * 2 + 1] += coeff * (y[i * 2 + 1] - y[j * 2 + 1]);
      }

    const double momentum = iter < kMomentumSwitch ? 0.5 : 0.8;
    for (size_t k = 0; k < y.size(); ++k) {
      gains[k] = (grad[k] > 0.0) != (velocity[k] > 0.0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], 0.01);
      velocity[k] = momentum * velocity[k] - cfg.learning_rate * gains[k] * grad[k];
      y[k] += velocity[k];
    }
    // recentre
    double c0 = 0.0, c1 = 0.0;
    for (int i = 0; i < n; ++i) {
      c0 += y[i * 2];
      c1 += y[i * 2 + 1];
    }
    c0 /= n;
    c1 /= n;
    for (int i = 0; i < n; ++i) {
      y[i * 2] -= c0;
      y[i * 2 + 1] -= c1;
    }

    if (iter + 1 == kExaggerationIters) {
      for (double& p : pv) p /= kExaggeration;
    }
  }
  return Tensor::from_values({n, 2}, std::move(y));
}

}  // namespace dpts
