#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dpts/rng.hpp"
#include "dpts/tensor.hpp"

namespace dpts {

struct PrivacyParams {
  double noise_multiplier = 0.5;        // sigma
  double clip_bound = 1.0;              // per-sample gradient L2 bound C
  std::optional<double> weight_clip;    // parameter clamp c (DPWGAN critic)
  double sampling_rate = 0.0;           // q; 0 means "derive from batch/n at run time"
  double delta = 0.0;                   // 0 means "default to 1/n^2"

  // Validates the resolved values (q and delta already filled in).
  void validate() const;
};

// In-place per-sample clip g -> g * min(1, C/||g||); returns pre-clip norms.
std::vector<double> clip_per_sample(std::vector<std::vector<double>>& per_sample_grads,
                                    double clip_bound);

// (sum of clipped gradients + N(0, sigma^2 C^2 I)) / batch_size. sigma = 0
// draws nothing from the rng, so the noise-free path is bit-identical to a
// plain mean.
std::vector<double> gaussian_sum(const std::vector<std::vector<double>>& clipped, double sigma,
                                 double clip_bound, Rng& rng);

// Clamp every parameter value into [-bound, bound].
void weight_clip(std::vector<Tensor>& params, double bound);

// Sanitizes the gradient crossing the critic->generator boundary. Input is
// the per-sample upstream gradient [N x ...] of the per-sample losses (not
// yet divided by batch). Each sample slice is clipped to L2 norm clip_bound;
// one shared noise draw N(0, sigma^2 clip_bound^2) joins the per-sample sum,
// and the result of seeding sample i with (clip(g_i) + noise)/N backpropagates
// exactly the released mean (sum of clipped + noise)/N through the per-sample
// Jacobians. sigma = 0 draws nothing.
Tensor sanitize_upstream_gradient(const Tensor& per_sample_upstream, double sigma,
                                  double clip_bound, Rng& rng);

// Renyi DP of the Gaussian mechanism: alpha / (2 sigma^2). sigma = 0 yields
// infinity.
double rdp_gaussian(double sigma, double alpha);

// Poisson-subsampled Gaussian mechanism at integer order alpha >= 2:
//   (1/(alpha-1)) log sum_{j=0..alpha} C(alpha,j) (1-q)^(alpha-j) q^j
//                                      exp(j(j-1)/(2 sigma^2))
// evaluated in log space. q = 1 reduces exactly to rdp_gaussian.
double rdp_subsampled_gaussian(double q, double sigma, double alpha);

// Additive composition over a fixed integer order grid with (epsilon, delta)
// conversion at the end.
class RdpAccountant {
 public:
  RdpAccountant();  // orders 2..64 plus {128, 256}
  explicit RdpAccountant(std::vector<int> orders);

  void step(double q, double sigma);
  void add_steps(int64_t count, double q, double sigma);

  // min over orders of rdp(alpha) + log(1/delta)/(alpha-1); 0 before any step.
  double epsilon(double delta) const;
  int optimal_order(double delta) const;

  int64_t steps() const { return steps_; }
  const std::vector<int>& orders() const { return orders_; }
  const std::vector<double>& accumulated_rdp() const { return accumulated_; }
  void restore(int64_t steps, std::vector<double> accumulated);

 private:
  std::vector<int> orders_;
  std::vector<double> accumulated_;
  int64_t steps_ = 0;
};

// Smallest sigma in [1e-2, 1e3] whose accountant epsilon lands within 1e-3
// below the target after `steps` compositions at rate q.
double calibrate_sigma(double target_epsilon, double delta, double q, int64_t steps);

}  // namespace dpts
