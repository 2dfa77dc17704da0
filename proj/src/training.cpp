#include "dpts/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpts/errors.hpp"

namespace dpts {

namespace {

// Named rng streams forked off the run seed.
enum Stream : uint64_t {
  kStreamData = 1,
  kStreamZ = 2,
  kStreamGenInit = 3,
  kStreamCriticInit = 4,
  kStreamGp = 5,
  kStreamNoise = 6,
  kStreamEval = 7,
  kStreamGenLabels = 8,
  kStreamSplit = 9,
  kStreamClfInit = 10,
  kStreamClfData = 11,
  kStreamClfNoise = 12,
};

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kNan = std::numeric_limits<double>::quiet_NaN();

Tensor slice_sample(const Tensor& batch, int i) {
  const int c = batch.dim(1), len = batch.dim(2);
  Tensor out = Tensor::zeros({1, c, len});
  auto src = batch.values();
  auto dst = out.values();
  std::copy(&src[static_cast<int64_t>(i) * c * len], &src[static_cast<int64_t>(i) * c * len] + c * len,
            dst.begin());
  return out;
}

std::vector<double> flatten_grads(const std::vector<Tensor>& params) {
  std::vector<double> flat;
  int64_t total = 0;
  for (const Tensor& p : params) total += p.size();
  flat.reserve(static_cast<size_t>(total));
  for (const Tensor& p : params) {
    auto g = p.grad();
    flat.insert(flat.end(), g.begin(), g.end());
  }
  return flat;
}

void assign_flat_grad(std::vector<Tensor>& params, const std::vector<double>& flat) {
  size_t pos = 0;
  for (Tensor& p : params) {
    auto g = p.grad();
    if (pos + g.size() > flat.size()) throw DimensionError("gradient vector shorter than parameters");
    std::copy(flat.begin() + pos, flat.begin() + pos + g.size(), g.begin());
    pos += g.size();
  }
  if (pos != flat.size()) throw DimensionError("gradient vector longer than parameters");
}

// Shared DP mean-gradient path. clip=inf / sigma=0 degrade to an exact plain
// mean so the non-private trainers route through the same code.
void apply_mean_gradient(std::vector<Tensor>& params,
                         std::vector<std::vector<double>>& per_sample, double clip, double sigma,
                         Rng& noise_rng) {
  if (std::isfinite(clip)) {
    clip_per_sample(per_sample, clip);
  }
  const double noise_bound = std::isfinite(clip) ? clip : 1.0;
  const std::vector<double> mean = gaussian_sum(per_sample, sigma, noise_bound, noise_rng);
  assign_flat_grad(params, mean);
}

void check_finite(double v, const char* what, int64_t iteration) {
  if (!std::isfinite(v)) {
    throw DivergenceError(std::string(what) + " became non-finite at iteration " +
                          std::to_string(iteration));
  }
}

}  // namespace

std::string to_string(StoppingKind kind) {
  switch (kind) {
    case StoppingKind::fixed: return "fixed";
    case StoppingKind::fid: return "fid";
    case StoppingKind::is: return "is";
    case StoppingKind::loss: return "loss";
    case StoppingKind::accuracy: return "accuracy";
  }
  return "fixed";
}

std::string to_string(GanMethod method) {
  switch (method) {
    case GanMethod::wgan: return "wgan";
    case GanMethod::dpwgan: return "dpwgan";
    case GanMethod::gswgan: return "gswgan";
  }
  return "wgan";
}

StoppingKind stopping_from_string(const std::string& s) {
  if (s == "fixed") return StoppingKind::fixed;
  if (s == "fid") return StoppingKind::fid;
  if (s == "is") return StoppingKind::is;
  if (s == "loss") return StoppingKind::loss;
  if (s == "accuracy") return StoppingKind::accuracy;
  throw ConfigError("unknown stopping criterion '" + s + "'");
}

GanMethod gan_method_from_string(const std::string& s) {
  if (s == "wgan") return GanMethod::wgan;
  if (s == "dpwgan") return GanMethod::dpwgan;
  if (s == "gswgan") return GanMethod::gswgan;
  throw ConfigError("unknown GAN method '" + s + "'");
}

void TrainConfig::validate() const {
  if (max_iterations < 1) throw ConfigError("train: max_iterations must be >= 1");
  if (critic_steps_per_gen < 1) throw ConfigError("train: critic_steps_per_gen must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (lr_generator <= 0 || lr_critic <= 0 || lr_classifier <= 0) {
    throw ConfigError("train: learning rates must be positive");
  }
  if (gp_lambda < 0) throw ConfigError("train: gp_lambda must be >= 0");
  if (eval_every < 1) throw ConfigError("train: eval_every must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (patience > max_iterations) throw ConfigError("train: patience must not exceed max_iterations");
  if (patience % eval_every != 0) throw ConfigError("train: eval_every must divide patience");
  if (eval_samples < 2) throw ConfigError("train: eval_samples must be >= 2");
  if (classifier_iterations < 0) throw ConfigError("train: classifier_iterations must be >= 0");
  if (wgan_weight_clip <= 0) throw ConfigError("train: wgan_weight_clip must be positive");
  if (gan_adam_beta1 < 0 || gan_adam_beta1 >= 1 || gan_adam_beta2 <= 0 || gan_adam_beta2 >= 1) {
    throw ConfigError("train: adam betas must lie in [0,1) and (0,1)");
  }
  if (max_epsilon < 0) throw ConfigError("train: max_epsilon must be >= 0");
  if (boundary_clip < 0) throw ConfigError("train: boundary_clip must be >= 0");
}

StoppingController::StoppingController(StoppingKind kind, int64_t max_iterations, int64_t patience)
    : kind_(kind), max_iterations_(max_iterations), patience_(patience) {}

bool StoppingController::lower_is_better(StoppingKind kind) {
  return kind == StoppingKind::fid || kind == StoppingKind::loss;
}

StopDecision StoppingController::observe(int64_t iteration, double metric) {
  if (kind_ == StoppingKind::fixed) {
    return iteration >= max_iterations_ ? StopDecision::stop : StopDecision::keep_going;
  }
  const bool improved =
      !has_best_ || (lower_is_better(kind_) ? metric < best_metric_ : metric > best_metric_);
  if (improved) {
    has_best_ = true;
    best_metric_ = metric;
    best_iteration_ = iteration;
    if (iteration >= max_iterations_) return StopDecision::stop;
    return StopDecision::new_best;
  }
  if (iteration >= max_iterations_ || iteration - best_iteration_ >= patience_) {
    return StopDecision::stop;
  }
  return StopDecision::keep_going;
}

TimeSeriesDataset generate_dataset(const Generator& generator, int n, uint64_t seed,
                                   const std::vector<std::string>& class_names) {
  if (n < 1) throw ArgumentError("generate_dataset: n must be >= 1");
  const int k = generator.arch().num_classes;
  if (static_cast<int>(class_names.size()) != k) {
    throw ArgumentError("generate_dataset: class name count does not match the generator");
  }
  Rng rng(seed);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % k;

  const int c = generator.arch().out_channels;
  const int len = generator.arch().out_length;
  Tensor samples = Tensor::zeros({n, c, len});
  constexpr int kChunk = 128;
  for (int begin = 0; begin < n; begin += kChunk) {
    const int m = std::min(kChunk, n - begin);
    Tensor z = Tensor::normal({m, generator.arch().z_dim}, 1.0, rng);
    std::vector<int> chunk_labels(labels.begin() + begin, labels.begin() + begin + m);
    Tensor out = generator.forward(nullptr, z, chunk_labels);
    auto src = out.values();
    auto dst = samples.values();
    std::copy(src.begin(), src.end(), dst.begin() + static_cast<int64_t>(begin) * c * len);
  }
  TimeSeriesDataset d;
  d.problem_name = "generated";
  d.samples = std::move(samples);
  d.labels = std::move(labels);
  d.class_names = class_names;
  d.split = Split::train;
  d.validate();
  return d;
}

Tensor classifier_latents(const Classifier& clf, const Tensor& samples) {
  const int n = samples.dim(0);
  Tensor out = Tensor::zeros({n, clf.arch().latent_dim()});
  constexpr int kChunk = 128;
  for (int begin = 0; begin < n; begin += kChunk) {
    const int m = std::min(kChunk, n - begin);
    Tensor chunk = Tensor::zeros({m, samples.dim(1), samples.dim(2)});
    auto src = samples.values();
    auto dst = chunk.values();
    const int64_t row = samples.size() / n;
    std::copy(&src[begin * row], &src[begin * row] + m * row, dst.begin());
    Tensor latent = clf.forward(nullptr, chunk).latent;
    auto lv = latent.values();
    std::copy(lv.begin(), lv.end(), out.values().begin() + static_cast<int64_t>(begin) * clf.arch().latent_dim());
  }
  return out;
}

Tensor classifier_probabilities(const Classifier& clf, const Tensor& samples) {
  const int n = samples.dim(0);
  const int k = clf.arch().num_classes;
  Tensor out = Tensor::zeros({n, k});
  constexpr int kChunk = 128;
  for (int begin = 0; begin < n; begin += kChunk) {
    const int m = std::min(kChunk, n - begin);
    Tensor chunk = Tensor::zeros({m, samples.dim(1), samples.dim(2)});
    auto src = samples.values();
    auto dst = chunk.values();
    const int64_t row = samples.size() / n;
    std::copy(&src[begin * row], &src[begin * row] + m * row, dst.begin());
    Tensor probs = ops::softmax_rows(nullptr, clf.forward(nullptr, chunk).logits);
    auto pv = probs.values();
    std::copy(pv.begin(), pv.end(), out.values().begin() + static_cast<int64_t>(begin) * k);
  }
  return out;
}

std::vector<int> predict(const Classifier& clf, const Tensor& samples) {
  Tensor probs = classifier_probabilities(clf, samples);
  const int n = probs.dim(0), k = probs.dim(1);
  std::vector<int> out(n);
  auto pv = probs.values();
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if (pv[i * k + j] > pv[i * k + best]) best = j;
    out[i] = best;
  }
  return out;
}

double classifier_f1(const Classifier& clf, const TimeSeriesDataset& data) {
  return weighted_f1(data.labels, predict(clf, data.samples), data.num_classes());
}

double stopping_metric(StoppingKind kind, const Generator& generator,
                       const Classifier* frozen_classifier, const TimeSeriesDataset& real_eval,
                       int n_gen, double critic_loss_proxy, Rng& rng) {
  if (kind == StoppingKind::fixed) return kNan;
  if (kind == StoppingKind::loss) return critic_loss_proxy;
  if (frozen_classifier == nullptr) {
    throw ConfigError("stopping criterion '" + to_string(kind) +
                      "' needs the frozen baseline classifier");
  }
  if (n_gen < 2) throw ArgumentError("stopping_metric: n_gen must be >= 2");
  TimeSeriesDataset generated =
      generate_dataset(generator, n_gen, rng.next_u64(), real_eval.class_names);
  switch (kind) {
    case StoppingKind::fid: {
      FeatureCloud real{classifier_latents(*frozen_classifier, real_eval.samples)};
      FeatureCloud fake{classifier_latents(*frozen_classifier, generated.samples)};
      return fid(real, fake);
    }
    case StoppingKind::is:
      return inception_score(classifier_probabilities(*frozen_classifier, generated.samples));
    case StoppingKind::accuracy: {
      const std::vector<int> pred = predict(*frozen_classifier, generated.samples);
      int64_t hits = 0;
      for (size_t i = 0; i < pred.size(); ++i) hits += (pred[i] == generated.labels[i]);
      return static_cast<double>(hits) / static_cast<double>(pred.size());
    }
    default:
      return kNan;
  }
}

// ---------------------------------------------------------------------------
// classifier training

namespace {

ClassifierTrainResult train_classifier_impl(const TimeSeriesDataset& data,
                                            const ClassifierArch& arch_in, const TrainConfig& cfg,
                                            const PrivacyParams* dp) {
  cfg.validate();
  data.validate();
  {
    std::vector<int> distinct = data.labels;
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < 2) throw ArgumentError("train_classifier: dataset has a single class");
  }
  ClassifierArch arch = arch_in;
  arch.in_channels = data.channels();
  arch.length = data.length();
  arch.num_classes = data.num_classes();
  arch.validate();

  Rng master(cfg.seed);
  Rng split_rng = master.fork(kStreamSplit);
  Rng data_rng = master.fork(kStreamClfData);
  Rng init_rng = master.fork(kStreamClfInit);
  Rng noise_rng = master.fork(kStreamClfNoise);

  auto [fit, val] = split_off_validation(data, 0.2, split_rng);
  const int batch = std::min<int>(cfg.batch_size, fit.n());
  const double q = static_cast<double>(batch) / fit.n();
  const double sigma = dp ? dp->noise_multiplier : 0.0;
  const double clip = dp ? dp->clip_bound : kInf;
  const double delta = dp && dp->delta > 0 ? dp->delta
                                           : 1.0 / (static_cast<double>(data.n()) * data.n());

  Classifier clf(arch, init_rng);
  Optimizer opt(OptKind::adam, cfg.lr_classifier, clf.params());
  RdpAccountant accountant;

  const int64_t total = cfg.classifier_iterations;
  const int64_t eval_interval = std::max<int64_t>(1, total / 10);
  auto eval_val = [&]() { return classifier_f1(clf, val); };

  double best_f1 = eval_val();
  std::vector<std::vector<double>> best = snapshot_params(clf.params());

  for (int64_t t = 1; t <= total; ++t) {
    if (cfg.lr_decay) {
      const double factor = t > 2 * total / 3 ? 0.25 : (t > total / 3 ? 0.5 : 1.0);
      opt.set_learning_rate(cfg.lr_classifier * factor);
    }
    auto [bx, by] = sample_batch(fit, batch, data_rng, false);
    std::vector<std::vector<double>> per_sample;
    per_sample.reserve(static_cast<size_t>(batch));
    double loss_acc = 0.0;
    for (int i = 0; i < batch; ++i) {
      Tensor sample = slice_sample(bx, i);
      Tape tape;
      Tensor loss = ops::cross_entropy(&tape, clf.forward(&tape, sample).logits, {by[i]});
      loss_acc += loss.value();
      opt.zero_grad();
      tape.backward(loss);
      per_sample.push_back(flatten_grads(clf.params()));
    }
    check_finite(loss_acc, "classifier loss", t);
    apply_mean_gradient(clf.params(), per_sample, clip, sigma, noise_rng);
    opt.step();
    if (dp) accountant.step(q, sigma);

    if (t % eval_interval == 0 || t == total) {
      const double f1 = eval_val();
      if (f1 > best_f1) {
        best_f1 = f1;
        best = snapshot_params(clf.params());
      }
    }
  }
  restore_params(clf.params(), best);

  ClassifierTrainResult result{std::move(clf), best_f1, 0.0, total, q, delta};
  if (dp) result.epsilon = accountant.epsilon(delta);
  return result;
}

}  // namespace

ClassifierTrainResult train_classifier(const TimeSeriesDataset& train, const ClassifierArch& arch,
                                       const TrainConfig& cfg) {
  return train_classifier_impl(train, arch, cfg, nullptr);
}

ClassifierTrainResult train_classifier_dp(const TimeSeriesDataset& train,
                                          const ClassifierArch& arch, const TrainConfig& cfg) {
  if (!cfg.privacy) throw ConfigError("train_classifier_dp: privacy parameters required");
  return train_classifier_impl(train, arch, cfg, &*cfg.privacy);
}

// ---------------------------------------------------------------------------
// GAN training

namespace {

// Per-sample critic update used by dpwgan and by the weight-clip wgan variant
// (with clip=inf, sigma=0 it is an exact plain mean). Returns the mean critic
// loss over the batch.
double critic_step_per_sample(Critic& critic, Optimizer& opt, const Tensor& real,
                              const Tensor& fake, const std::vector<int>& labels, double clip,
                              double sigma, Rng& noise_rng) {
  const int batch = real.dim(0);
  std::vector<std::vector<double>> per_sample;
  per_sample.reserve(static_cast<size_t>(batch));
  double loss_acc = 0.0;
  for (int i = 0; i < batch; ++i) {
    Tensor real_i = slice_sample(real, i);
    Tensor fake_i = slice_sample(fake, i);
    const std::vector<int> label_i = {labels[i]};
    Tape tape;
    Tensor loss = ops::sub(&tape, critic.score(&tape, fake_i, label_i),
                           critic.score(&tape, real_i, label_i));
    loss_acc += loss.value();
    opt.zero_grad();
    tape.backward(loss);
    per_sample.push_back(flatten_grads(critic.params()));
  }
  apply_mean_gradient(critic.params(), per_sample, clip, sigma, noise_rng);
  opt.step();
  return loss_acc / batch;
}

}  // namespace

GanTrainResult train_gan(const TimeSeriesDataset& train, const GeneratorArch& gen_arch_in,
                         const CriticArch& critic_arch_in, const TrainConfig& cfg, GanMethod method,
                         const Classifier* frozen_classifier) {
  cfg.validate();
  train.validate();
  if (method == GanMethod::wgan && cfg.privacy) {
    throw ConfigError("wgan is the non-private baseline; drop the privacy block");
  }
  if (method != GanMethod::wgan && !cfg.privacy) {
    throw ConfigError(to_string(method) + " requires privacy parameters");
  }
  if (cfg.batch_size > train.n()) {
    throw ConfigError("train: batch_size exceeds the dataset size");
  }

  GeneratorArch gen_arch = gen_arch_in;
  gen_arch.num_classes = train.num_classes();
  gen_arch.out_channels = train.channels();
  gen_arch.out_length = train.length();
  gen_arch.validate();
  CriticArch critic_arch = critic_arch_in;
  critic_arch.num_classes = train.num_classes();
  critic_arch.in_channels = train.channels();
  critic_arch.length = train.length();
  critic_arch.validate();

  const double sigma = cfg.privacy ? cfg.privacy->noise_multiplier : 0.0;
  const double dp_clip = cfg.privacy ? cfg.privacy->clip_bound : kInf;
  const double q = static_cast<double>(cfg.batch_size) / train.n();
  const double delta = cfg.privacy && cfg.privacy->delta > 0
                           ? cfg.privacy->delta
                           : 1.0 / (static_cast<double>(train.n()) * train.n());
  double dpwgan_weight_clip = 0.01;
  if (method == GanMethod::dpwgan && cfg.privacy->weight_clip) {
    dpwgan_weight_clip = *cfg.privacy->weight_clip;
  }

  Rng master(cfg.seed);
  Rng data_rng = master.fork(kStreamData);
  Rng z_rng = master.fork(kStreamZ);
  Rng gen_init = master.fork(kStreamGenInit);
  Rng critic_init = master.fork(kStreamCriticInit);
  Rng gp_rng = master.fork(kStreamGp);
  Rng noise_rng = master.fork(kStreamNoise);
  Rng eval_rng = master.fork(kStreamEval);
  Rng label_rng = master.fork(kStreamGenLabels);

  Generator generator(gen_arch, gen_init);
  Critic critic(critic_arch, critic_init);
  Optimizer gen_opt(OptKind::adam, cfg.lr_generator, generator.params(), cfg.gan_adam_beta1,
                    cfg.gan_adam_beta2);
  Optimizer critic_opt(OptKind::adam, cfg.lr_critic, critic.params(), cfg.gan_adam_beta1,
                       cfg.gan_adam_beta2);
  RdpAccountant accountant;

  StoppingController controller(cfg.stopping, cfg.max_iterations, cfg.patience);
  TrainState state;
  state.sampling_rate = q;
  state.delta = delta;
  state.noise_multiplier = sigma;

  std::vector<std::vector<double>> best = snapshot_params(generator.params());
  int64_t best_iteration = 0;
  const int k = train.num_classes();
  const bool sanitized_generator_path = method == GanMethod::gswgan || cfg.boundary_clip > 0.0;
  const double boundary_clip = method == GanMethod::gswgan ? 1.0 : cfg.boundary_clip;
  const double boundary_sigma = method == GanMethod::gswgan ? sigma : 0.0;

  double critic_loss = 0.0, gen_loss = 0.0;
  bool stopped_early = false;

  int64_t iteration = 0;
  while (iteration < cfg.max_iterations) {
    ++iteration;
    for (int j = 0; j < cfg.critic_steps_per_gen; ++j) {
      auto [real, labels] = sample_batch(train, cfg.batch_size, data_rng, cfg.balanced_batches);
      Tensor z = Tensor::normal({cfg.batch_size, gen_arch.z_dim}, 1.0, z_rng);
      Tensor fake = generator.forward(nullptr, z, labels);

      if (method == GanMethod::dpwgan) {
        critic_loss = critic_step_per_sample(critic, critic_opt, real, fake, labels, dp_clip,
                                             sigma, noise_rng);
        weight_clip(critic.params(), dpwgan_weight_clip);
        accountant.step(q, sigma);
      } else if (method == GanMethod::wgan &&
                 cfg.wgan_lipschitz == LipschitzMode::weight_clip) {
        critic_loss = critic_step_per_sample(critic, critic_opt, real, fake, labels, kInf, 0.0,
                                             noise_rng);
        weight_clip(critic.params(), cfg.wgan_weight_clip);
      } else {
        Tape tape;
        Tensor s_real = critic.score(&tape, real, labels);
        Tensor s_fake = critic.score(&tape, fake, labels);
        auto [closs, gloss_unused] = ops::wasserstein_losses(&tape, s_real, s_fake);
        (void)gloss_unused;
        Tensor penalty = ops::gradient_penalty(
            &tape,
            [&](Tape* t, const Tensor& x) { return critic.input_gradient(t, x, labels); },
            real, fake, cfg.gp_lambda, gp_rng);
        Tensor total = penalty.size() == 1 && !penalty.requires_grad()
                           ? closs
                           : ops::add(&tape, closs, penalty);
        critic_opt.zero_grad();
        tape.backward(total);
        critic_opt.step();
        critic_loss = closs.value();
      }
      check_finite(critic_loss, "critic loss", iteration);
    }

    // generator update
    {
      std::vector<int> labels(static_cast<size_t>(cfg.batch_size));
      for (auto& y : labels) y = static_cast<int>(label_rng.below(static_cast<uint64_t>(k)));
      Tensor z = Tensor::normal({cfg.batch_size, gen_arch.z_dim}, 1.0, z_rng);
      if (sanitized_generator_path) {
        Tape tape;
        Tensor fake = generator.forward(&tape, z, labels);
        Tensor fake_leaf = fake.detach(true);
        Tensor scores = critic.score(&tape, fake_leaf, labels);
        Tensor neg_sum = ops::scale(&tape, ops::sum_all(&tape, scores), -1.0);
        critic_opt.zero_grad();
        tape.backward(neg_sum);
        Tensor upstream = fake_leaf.grad_tensor();
        Tensor seed = sanitize_upstream_gradient(upstream, boundary_sigma, boundary_clip,
                                                 noise_rng);
        gen_opt.zero_grad();
        tape.backward_from(fake, seed.values());
        gen_opt.step();
        gen_loss = neg_sum.value() / cfg.batch_size;
        if (method == GanMethod::gswgan) accountant.step(q, sigma);
      } else {
        Tape tape;
        Tensor fake = generator.forward(&tape, z, labels);
        Tensor scores = critic.score(&tape, fake, labels);
        Tensor loss = ops::scale(&tape, ops::mean_all(&tape, scores), -1.0);
        gen_opt.zero_grad();
        critic_opt.zero_grad();
        tape.backward(loss);
        gen_opt.step();
        gen_loss = loss.value();
      }
      check_finite(gen_loss, "generator loss", iteration);
    }

    if (iteration % cfg.eval_every == 0 || iteration == cfg.max_iterations) {
      const double metric = stopping_metric(cfg.stopping, generator, frozen_classifier, train,
                                            cfg.eval_samples, critic_loss, eval_rng);
      const double eps = cfg.privacy ? accountant.epsilon(delta) : 0.0;
      state.history.push_back({iteration, critic_loss, gen_loss, metric, eps});
      if (cfg.max_epsilon > 0.0 && cfg.privacy && eps > cfg.max_epsilon) {
        stopped_early = iteration < cfg.max_iterations;
        break;  // privacy budget cap reached
      }
      const StopDecision decision = controller.observe(iteration, metric);
      if (decision == StopDecision::new_best) {
        best = snapshot_params(generator.params());
        best_iteration = iteration;
      } else if (decision == StopDecision::stop) {
        if (cfg.stopping != StoppingKind::fixed &&
            controller.best_iteration() == iteration) {  // stop at max, still the best
          best = snapshot_params(generator.params());
          best_iteration = iteration;
        }
        stopped_early = iteration < cfg.max_iterations;
        break;
      }
    }
  }

  state.iterations_run = iteration;
  state.stopped_early = stopped_early;
  state.epsilon_spent = cfg.privacy ? accountant.epsilon(delta) : 0.0;
  state.accountant_steps = accountant.steps();
  state.accumulated_rdp = accountant.accumulated_rdp();

  std::vector<std::vector<double>> final_params = snapshot_params(generator.params());
  if (cfg.stopping == StoppingKind::fixed) {
    best = final_params;
    best_iteration = iteration;
  }
  state.best_iteration = best_iteration;
  state.best_metric = controller.best_metric();
  state.returned_iteration = best_iteration;

  restore_params(generator.params(), best);
  GanTrainResult result{std::move(generator), std::move(critic), std::move(best),
                        std::move(final_params), std::move(state)};
  return result;
}

// ---------------------------------------------------------------------------
// four-way protocol

FourWayReport four_way_eval_on_datasets(const TimeSeriesDataset& private_train,
                                        const TimeSeriesDataset& private_test,
                                        const TimeSeriesDataset& public_train,
                                        const TimeSeriesDataset& public_test,
                                        const ClassifierArch& arch, const TrainConfig& cfg) {
  if (private_train.channels() != public_train.channels() ||
      private_train.length() != public_train.length()) {
    throw DimensionError("four_way_eval: private and public shapes differ");
  }
  ClassifierTrainResult m_minus = train_classifier(private_train, arch, cfg);
  ClassifierTrainResult m_plus = train_classifier(public_train, arch, cfg);
  FourWayReport report;
  report.m_minus_d_minus = classifier_f1(m_minus.classifier, private_test);
  report.m_minus_d_plus = classifier_f1(m_minus.classifier, public_test);
  report.m_plus_d_minus = classifier_f1(m_plus.classifier, private_test);
  report.m_plus_d_plus = classifier_f1(m_plus.classifier, public_test);
  report.baseline = report.m_minus_d_minus;
  return report;
}

FourWayReport four_way_eval(const TimeSeriesDataset& private_train,
                            const TimeSeriesDataset& private_test, const Generator& generator,
                            const ClassifierArch& arch, const TrainConfig& cfg) {
  Rng seeder(cfg.seed);
  const uint64_t train_seed = seeder.fork(0x67656e74).next_u64();
  const uint64_t test_seed = seeder.fork(0x67656e65).next_u64();
  TimeSeriesDataset public_train =
      generate_dataset(generator, private_train.n(), train_seed, private_train.class_names);
  TimeSeriesDataset public_test =
      generate_dataset(generator, private_test.n(), test_seed, private_test.class_names);
  public_test.split = Split::test;
  return four_way_eval_on_datasets(private_train, private_test, public_train, public_test, arch,
                                   cfg);
}

}  // namespace dpts
