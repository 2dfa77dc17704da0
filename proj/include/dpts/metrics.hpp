#pragma once

#include <cstdint>
#include <vector>

#include "dpts/tensor.hpp"

namespace dpts {

struct FeatureCloud {
  Tensor features;  // [n x d]
};

// Frechet distance between Gaussian fits of two feature clouds:
// ||mu1 - mu2||^2 + Tr(S1 + S2 - 2 (S1 S2)^(1/2)), unbiased covariances,
// matrix square roots via symmetric eigendecomposition with negative
// eigenvalues clamped to zero. Result clamped to >= 0.
double fid(const FeatureCloud& real, const FeatureCloud& fake);

// Same distance evaluated on explicitly supplied moments (row-major d x d
// covariances).
double fid_from_moments(const std::vector<double>& mean1, const std::vector<double>& cov1,
                        const std::vector<double>& mean2, const std::vector<double>& cov2, int d);

// exp(mean_x KL(p(y|x) || p(y))) over rows of class probabilities; single
// split. Rows must sum to 1 within 1e-6.
double inception_score(const Tensor& probs);

// Per-class F1 averaged with support weights; classes absent from y_true
// contribute weight 0, and an undefined precision/recall counts as F1 = 0.
double weighted_f1(const std::vector<int>& y_true, const std::vector<int>& y_pred, int num_classes);

struct DistanceStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

// Exact pairwise L2 statistics over flattened samples; one argument =
// unordered within-set pairs (self excluded), two arguments = all cross pairs.
DistanceStats distance_stats(const Tensor& a);
DistanceStats distance_stats(const Tensor& a, const Tensor& b);

// The four-way evaluation protocol: classifiers trained on private (m-) or
// generated (m+) data, each scored on the private (d-) and generated (d+)
// test split.
struct FourWayReport {
  double m_minus_d_minus = 0.0;
  double m_minus_d_plus = 0.0;
  double m_plus_d_minus = 0.0;
  double m_plus_d_plus = 0.0;
  double baseline = 0.0;  // = m- d-, kept as its own column for reporting
};

struct TsneConfig {
  double perplexity = 30.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  uint64_t seed = 0;
};

// Exact (non-approximate) t-SNE to two dimensions: per-point bandwidths found
// by bisection to match entropy log(perplexity), symmetrized affinities,
// Student-t low-dimensional kernel, momentum 0.5 -> 0.8 at iteration 250 and
// x12 early exaggeration for the first 250 iterations.
Tensor tsne(const Tensor& x, const TsneConfig& cfg);

// Search internals exposed for verification: row-conditional and symmetrized
// joint probabilities.
Tensor tsne_conditional_probabilities(const Tensor& x, double perplexity);
Tensor tsne_joint_probabilities(const Tensor& x, double perplexity);

// Symmetric eigendecomposition (cyclic Jacobi). `matrix` is d x d row-major;
// returns eigenvalues ascending with matching eigenvectors as columns of
// `eigvecs`.
void jacobi_eigh(std::vector<double> matrix, int d, std::vector<double>& eigvals,
                 std::vector<double>& eigvecs);

}  // namespace dpts
