#include "dpts/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpts/errors.hpp"

namespace dpts {

void PrivacyParams::validate() const {
  if (noise_multiplier < 0.0) throw ArgumentError("privacy: noise multiplier must be >= 0");
  if (clip_bound <= 0.0) throw ArgumentError("privacy: clip bound must be positive");
  if (weight_clip && *weight_clip <= 0.0) throw ArgumentError("privacy: weight clip must be positive");
  if (sampling_rate <= 0.0 || sampling_rate > 1.0) {
    throw ArgumentError("privacy: sampling rate must lie in (0,1]");
  }
  if (delta <= 0.0 || delta >= 1.0) throw ArgumentError("privacy: delta must lie in (0,1)");
}

std::vector<double> clip_per_sample(std::vector<std::vector<double>>& per_sample_grads,
                                    double clip_bound) {
  if (clip_bound <= 0.0) throw ArgumentError("clip_per_sample: clip bound must be positive");
  std::vector<double> norms;
  norms.reserve(per_sample_grads.size());
  for (auto& g : per_sample_grads) {
    double sq = 0.0;
    for (double v : g) sq += v * v;
    const double norm = std::sqrt(sq);
    norms.push_back(norm);
    if (norm > clip_bound) {
      const double scale = clip_bound / norm;
      for (double& v : g) v *= scale;
    }
  }
  return norms;
}

std::vector<double> gaussian_sum(const std::vector<std::vector<double>>& clipped, double sigma,
                                 double clip_bound, Rng& rng) {
  if (clipped.empty()) throw ArgumentError("gaussian_sum: empty gradient list");
  const size_t dim = clipped[0].size();
  std::vector<double> out(dim, 0.0);
  for (const auto& g : clipped) {
    if (g.size() != dim) throw DimensionError("gaussian_sum: ragged gradient list");
    for (size_t i = 0; i < dim; ++i) out[i] += g[i];
  }
  if (sigma > 0.0) {
    const double stddev = sigma * clip_bound;
    for (size_t i = 0; i < dim; ++i) out[i] += rng.normal(0.0, stddev);
  }
  const double inv = 1.0 / static_cast<double>(clipped.size());
  for (double& v : out) v *= inv;
  return out;
}

void weight_clip(std::vector<Tensor>& params, double bound) {
  if (bound <= 0.0) throw ArgumentError("weight_clip: bound must be positive");
  for (Tensor& p : params) {
    for (double& v : p.values()) v = std::clamp(v, -bound, bound);
  }
}

Tensor sanitize_upstream_gradient(const Tensor& per_sample_upstream, double sigma,
                                  double clip_bound, Rng& rng) {
  if (!per_sample_upstream.defined() || per_sample_upstream.rank() < 2) {
    throw DimensionError("sanitize_upstream_gradient: needs a leading batch axis");
  }
  if (clip_bound <= 0.0) throw ArgumentError("sanitize_upstream_gradient: clip bound must be positive");
  const int n = per_sample_upstream.dim(0);
  const int64_t dim = per_sample_upstream.size() / n;
  Tensor out = per_sample_upstream.detach();
  auto v = out.values();
  for (int i = 0; i < n; ++i) {
    double sq = 0.0;
    for (int64_t j = 0; j < dim; ++j) sq += v[i * dim + j] * v[i * dim + j];
    const double norm = std::sqrt(sq);
    if (norm > clip_bound) {
      const double scale = clip_bound / norm;
      for (int64_t j = 0; j < dim; ++j) v[i * dim + j] *= scale;
    }
  }
  if (sigma > 0.0) {
    std::vector<double> noise(static_cast<size_t>(dim));
    const double stddev = sigma * clip_bound;
    for (double& z : noise) z = rng.normal(0.0, stddev);
    for (int i = 0; i < n; ++i)
      for (int64_t j = 0; j < dim; ++j) v[i * dim + j] += noise[static_cast<size_t>(j)];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (double& x : v) x *= inv;
  return out;
}

double rdp_gaussian(double sigma, double alpha) {
  if (alpha <= 1.0) throw ArgumentError("rdp_gaussian: order must exceed 1");
  if (sigma < 0.0) throw ArgumentError("rdp_gaussian: sigma must be >= 0");
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  return alpha / (2.0 * sigma * sigma);
}

double rdp_subsampled_gaussian(double q, double sigma, double alpha) {
  if (q <= 0.0 || q > 1.0) throw ArgumentError("rdp_subsampled_gaussian: q must lie in (0,1]");
  if (sigma < 0.0) throw ArgumentError("rdp_subsampled_gaussian: sigma must be >= 0");
  if (alpha < 2.0 || alpha != std::floor(alpha)) {
    throw ArgumentError("rdp_subsampled_gaussian: integer order >= 2 required");
  }
  if (sigma == 0.0) return std::numeric_limits<double>::infinity();
  if (q == 1.0) return rdp_gaussian(sigma, alpha);

  const int a = static_cast<int>(alpha);
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  // log-sum-exp over j of log C(a,j) + (a-j) log(1-q) + j log q + j(j-1)/(2 sigma^2)
  double max_term = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(static_cast<size_t>(a) + 1);
  for (int j = 0; j <= a; ++j) {
    const double log_binom =
        std::lgamma(a + 1.0) - std::lgamma(j + 1.0) - std::lgamma(a - j + 1.0);
    const double t = log_binom + (a - j) * log_1mq + j * log_q +
                     (static_cast<double>(j) * (j - 1)) / (2.0 * sigma * sigma);
    terms[static_cast<size_t>(j)] = t;
    max_term = std::max(max_term, t);
  }
  double sum = 0.0;
  for (double t : terms) sum += std::exp(t - max_term);
  const double log_total = max_term + std::log(sum);
  return std::max(0.0, log_total / (alpha - 1.0));
}

RdpAccountant::RdpAccountant() {
  for (int a = 2; a <= 64; ++a) orders_.push_back(a);
  orders_.push_back(128);
  orders_.push_back(256);
  accumulated_.assign(orders_.size(), 0.0);
}

RdpAccountant::RdpAccountant(std::vector<int> orders) : orders_(std::move(orders)) {
  if (orders_.empty()) throw ArgumentError("accountant: order grid must be non-empty");
  for (int a : orders_) {
    if (a < 2) throw ArgumentError("accountant: orders must be integers >= 2");
  }
  accumulated_.assign(orders_.size(), 0.0);
}

void RdpAccountant::step(double q, double sigma) { add_steps(1, q, sigma); }

void RdpAccountant::add_steps(int64_t count, double q, double sigma) {
  if (count < 0) throw ArgumentError("accountant: step count must be >= 0");
  if (count == 0) return;
  for (size_t i = 0; i < orders_.size(); ++i) {
    accumulated_[i] += count * rdp_subsampled_gaussian(q, sigma, orders_[i]);
  }
  steps_ += count;
}

double RdpAccountant::epsilon(double delta) const {
  if (delta <= 0.0 || delta >= 1.0) throw ArgumentError("accountant: delta must lie in (0,1)");
  if (steps_ == 0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < orders_.size(); ++i) {
    best = std::min(best, accumulated_[i] + std::log(1.0 / delta) / (orders_[i] - 1.0));
  }
  return best;
}

int RdpAccountant::optimal_order(double delta) const {
  if (delta <= 0.0 || delta >= 1.0) throw ArgumentError("accountant: delta must lie in (0,1)");
  size_t best = 0;
  double best_eps = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < orders_.size(); ++i) {
    const double eps = accumulated_[i] + std::log(1.0 / delta) / (orders_[i] - 1.0);
    if (eps < best_eps) {
      best_eps = eps;
      best = i;
    }
  }
  return orders_[best];
}

void RdpAccountant::restore(int64_t steps, std::vector<double> accumulated) {
  if (accumulated.size() != orders_.size()) {
    throw DimensionError("accountant: restored RDP vector does not match the order grid");
  }
  steps_ = steps;
  accumulated_ = std::move(accumulated);
}

double calibrate_sigma(double target_epsilon, double delta, double q, int64_t steps) {
  if (target_epsilon <= 0.0) throw ArgumentError("calibrate_sigma: target epsilon must be positive");
  if (steps < 1) throw ArgumentError("calibrate_sigma: steps must be >= 1");
  constexpr double kLo = 1e-2, kHi = 1e3, kTol = 1e-3;

  auto eps_at = [&](double sigma) {
    RdpAccountant acct;
    acct.add_steps(steps, q, sigma);
    return acct.epsilon(delta);
  };

  if (eps_at(kLo) < target_epsilon) {
    throw RangeError("calibrate_sigma: target epsilon exceeds what sigma >= 1e-2 can spend");
  }
  if (eps_at(kHi) > target_epsilon) {
    throw RangeError("calibrate_sigma: target epsilon unreachable within sigma <= 1e3");
  }
  double lo = kLo, hi = kHi;
  for (int iter = 0; iter < 200 && target_epsilon - eps_at(hi) > kTol; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (eps_at(mid) > target_epsilon) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return hi;
}

}  // namespace dpts
