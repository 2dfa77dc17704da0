#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpts/dataset.hpp"
#include "dpts/metrics.hpp"
#include "dpts/nets.hpp"
#include "dpts/privacy.hpp"
#include "dpts/rng.hpp"
#include "dpts/tensor.hpp"

namespace dpts {

enum class StoppingKind { fixed, fid, is, loss, accuracy };
enum class GanMethod { wgan, dpwgan, gswgan };
enum class LipschitzMode { gradient_penalty, weight_clip };

std::string to_string(StoppingKind kind);
std::string to_string(GanMethod method);
StoppingKind stopping_from_string(const std::string& s);
GanMethod gan_method_from_string(const std::string& s);

struct TrainConfig {
  int64_t max_iterations = 50000;  // generator steps
  int critic_steps_per_gen = 5;
  int batch_size = 64;
  double lr_generator = 1e-4;
  double lr_critic = 1e-4;
  double lr_classifier = 1e-3;
  double gp_lambda = 10.0;  // non-private critics only
  int64_t eval_every = 500;
  int64_t patience = 2500;
  StoppingKind stopping = StoppingKind::fixed;
  uint64_t seed = 0;
  std::optional<PrivacyParams> privacy;

  int eval_samples = 256;          // generated per metric evaluation
  bool balanced_batches = true;    // conditional class-balanced data batches
  bool lr_decay = true;            // classifier step decay (x0.5 at T/3, 2T/3)
  int64_t classifier_iterations = 800;
  double gan_adam_beta1 = 0.5;     // generator/critic optimizers
  double gan_adam_beta2 = 0.9;
  double max_epsilon = 0.0;        // >0: stop at the first eval point past the cap
  LipschitzMode wgan_lipschitz = LipschitzMode::gradient_penalty;
  double wgan_weight_clip = 0.01;  // weight-clip mode only
  double boundary_clip = 0.0;      // >0: clip the generator boundary gradient (wgan)

  void validate() const;
};

struct HistoryRow {
  int64_t iteration = 0;
  double critic_loss = 0.0;
  double generator_loss = 0.0;
  double metric = 0.0;  // NaN when the stopping mode records none
  double epsilon = 0.0;
};

struct TrainState {
  std::vector<HistoryRow> history;
  int64_t iterations_run = 0;
  int64_t best_iteration = -1;
  double best_metric = 0.0;
  int64_t returned_iteration = 0;  // checkpoint handed back to the caller
  bool stopped_early = false;
  double epsilon_spent = 0.0;
  double sampling_rate = 0.0;
  double delta = 0.0;
  double noise_multiplier = 0.0;
  int64_t accountant_steps = 0;
  std::vector<double> accumulated_rdp;
};

enum class StopDecision { keep_going, new_best, stop };

// Patience-based early stopping; `fixed` never stops before max_iterations
// and strict improvement is required to reset the patience window.
class StoppingController {
 public:
  StoppingController(StoppingKind kind, int64_t max_iterations, int64_t patience);
  StopDecision observe(int64_t iteration, double metric);
  static bool lower_is_better(StoppingKind kind);
  int64_t best_iteration() const { return best_iteration_; }
  double best_metric() const { return best_metric_; }

 private:
  StoppingKind kind_;
  int64_t max_iterations_;
  int64_t patience_;
  int64_t best_iteration_ = -1;
  double best_metric_ = 0.0;
  bool has_best_ = false;
};

// Draws n samples with round-robin labels (exactly uniform class counts).
TimeSeriesDataset generate_dataset(const Generator& generator, int n, uint64_t seed,
                                   const std::vector<std::string>& class_names);

// Metric for the stopping controller; fid/is/accuracy need the frozen
// baseline classifier, loss reuses the critic loss proxy.
double stopping_metric(StoppingKind kind, const Generator& generator,
                       const Classifier* frozen_classifier, const TimeSeriesDataset& real_eval,
                       int n_gen, double critic_loss_proxy, Rng& rng);

struct GanTrainResult {
  Generator generator;  // restored to the returned checkpoint
  Critic critic;        // final critic state
  std::vector<std::vector<double>> best_generator_params;
  std::vector<std::vector<double>> final_generator_params;
  TrainState state;
};

// The three regimes. wgan forbids privacy params; dpwgan clips+noises the
// critic gradients per sample and weight-clips after each step; gswgan trains
// the critic non-privately with gradient penalty and sanitizes the gradient
// entering the generator.
GanTrainResult train_gan(const TimeSeriesDataset& train, const GeneratorArch& gen_arch,
                         const CriticArch& critic_arch, const TrainConfig& cfg, GanMethod method,
                         const Classifier* frozen_classifier = nullptr);

struct ClassifierTrainResult {
  Classifier classifier;  // best-validation checkpoint
  double val_f1 = 0.0;
  double epsilon = 0.0;
  int64_t steps = 0;
  double sampling_rate = 0.0;
  double delta = 0.0;
};

ClassifierTrainResult train_classifier(const TimeSeriesDataset& train, const ClassifierArch& arch,
                                       const TrainConfig& cfg);
// DP-SGD variant; requires cfg.privacy.
ClassifierTrainResult train_classifier_dp(const TimeSeriesDataset& train,
                                          const ClassifierArch& arch, const TrainConfig& cfg);

std::vector<int> predict(const Classifier& clf, const Tensor& samples);
double classifier_f1(const Classifier& clf, const TimeSeriesDataset& data);

// Trains m- on the private train split and m+ on generated data of matching
// size, then crosses both with the private and generated test splits.
FourWayReport four_way_eval(const TimeSeriesDataset& private_train,
                            const TimeSeriesDataset& private_test, const Generator& generator,
                            const ClassifierArch& arch, const TrainConfig& cfg);

// Same protocol with pre-materialized surrogate datasets.
FourWayReport four_way_eval_on_datasets(const TimeSeriesDataset& private_train,
                                        const TimeSeriesDataset& private_test,
                                        const TimeSeriesDataset& public_train,
                                        const TimeSeriesDataset& public_test,
                                        const ClassifierArch& arch, const TrainConfig& cfg);

// Classifier latents / class probabilities evaluated in inference mode.
Tensor classifier_latents(const Classifier& clf, const Tensor& samples);
Tensor classifier_probabilities(const Classifier& clf, const Tensor& samples);

}  // namespace dpts
