#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dpts/errors.hpp"
#include "dpts/training.hpp"

using namespace dpts;

namespace {

TimeSeriesDataset constant_dataset(int n, int length, double value) {
  TimeSeriesDataset d;
  d.samples = Tensor::full({n, 1, length}, value);
  d.labels.resize(n);
  for (int i = 0; i < n; ++i) d.labels[i] = i % 2;
  d.class_names = {"0", "1"};
  d.validate();
  return d;
}

GeneratorArch tiny_generator() {
  GeneratorArch a;
  a.z_dim = 8;
  a.hidden = {32};
  return a;
}

CriticArch tiny_critic() {
  CriticArch a;
  a.hidden = {32};
  return a;
}

TrainConfig quick_gan_config(int64_t iterations, StoppingKind stopping = StoppingKind::fixed) {
  TrainConfig cfg;
  cfg.max_iterations = iterations;
  cfg.critic_steps_per_gen = 2;
  cfg.batch_size = 16;
  cfg.eval_every = iterations >= 10 ? iterations / 5 : 1;
  cfg.patience = iterations;
  while (cfg.patience % cfg.eval_every != 0) --cfg.patience;
  cfg.stopping = stopping;
  cfg.seed = 11;
  cfg.classifier_iterations = 0;
  return cfg;
}

ClassifierArch desk_classifier() {
  ClassifierArch a;
  a.depth = 2;
  a.nb_filters = 8;
  a.bottleneck = 8;
  a.kernel = 16;
  return a;
}

std::vector<std::vector<double>> params_of(const std::vector<Tensor>& params) {
  return snapshot_params(params);
}

}  // namespace

TEST_CASE("stopping controller reproduces the scripted rule table") {
  // eval cadence 1, patience 2, FID sequence [3, 2, 2.1, 2.2]
  StoppingController c(StoppingKind::fid, 100, 2);
  CHECK(c.observe(1, 3.0) == StopDecision::new_best);
  CHECK(c.observe(2, 2.0) == StopDecision::new_best);
  CHECK(c.observe(3, 2.1) == StopDecision::keep_going);
  CHECK(c.observe(4, 2.2) == StopDecision::stop);
  CHECK(c.best_iteration() == 2);
  CHECK(c.best_metric() == 2.0);
}

TEST_CASE("stopping controller: monotone improvement never stops early") {
  StoppingController c(StoppingKind::fid, 50, 2);
  for (int t = 1; t < 50; ++t) {
    CHECK(c.observe(t, 100.0 - t) == StopDecision::new_best);
  }
  CHECK(c.observe(50, 0.0) == StopDecision::stop);  // budget exhausted
  CHECK(c.best_iteration() == 50);
}

TEST_CASE("stopping controller: ties do not reset patience") {
  StoppingController c(StoppingKind::fid, 100, 2);
  CHECK(c.observe(1, 5.0) == StopDecision::new_best);
  CHECK(c.observe(2, 5.0) == StopDecision::keep_going);
  CHECK(c.observe(3, 5.0) == StopDecision::stop);
  CHECK(c.best_iteration() == 1);
}

TEST_CASE("stopping controller: higher-is-better metrics and fixed mode") {
  StoppingController c(StoppingKind::accuracy, 100, 2);
  CHECK(c.observe(1, 0.5) == StopDecision::new_best);
  CHECK(c.observe(2, 0.7) == StopDecision::new_best);
  CHECK(c.observe(3, 0.6) == StopDecision::keep_going);
  CHECK(c.observe(4, 0.6) == StopDecision::stop);

  StoppingController f(StoppingKind::fixed, 5, 1);
  for (int t = 1; t < 5; ++t) CHECK(f.observe(t, 1000.0 - t) == StopDecision::keep_going);
  CHECK(f.observe(5, 0.0) == StopDecision::stop);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.patience = 60000;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.patience = 2500;
  cfg.eval_every = 300;  // does not divide patience
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.eval_every = 500;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("generate_dataset: uniform labels, unit range, determinism") {
  Rng rng(3);
  GeneratorArch arch = tiny_generator();
  arch.out_length = 24;
  Generator gen(arch, rng);
  TimeSeriesDataset a = generate_dataset(gen, 100, 42, {"x", "y"});
  TimeSeriesDataset b = generate_dataset(gen, 100, 42, {"x", "y"});
  int c0 = 0;
  for (int y : a.labels) c0 += (y == 0);
  CHECK(c0 == 50);
  for (double v : a.samples.values()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(a.content_hash() == b.content_hash());
}

TEST_CASE("wgan learns a constant dataset") {
  TimeSeriesDataset data = constant_dataset(64, 16, 0.5);
  TrainConfig cfg = quick_gan_config(500);
  GanTrainResult result = train_gan(data, tiny_generator(), tiny_critic(), cfg, GanMethod::wgan);
  TimeSeriesDataset generated = generate_dataset(result.generator, 64, 7, data.class_names);
  double err = 0.0;
  for (double v : generated.samples.values()) err += std::abs(v - 0.5);
  err /= generated.samples.size();
  CHECK(err < 0.1);
}

TEST_CASE("training regimes are deterministic given the seed") {
  TimeSeriesDataset data = constant_dataset(32, 12, 0.4);
  TrainConfig cfg = quick_gan_config(10);
  GanTrainResult a = train_gan(data, tiny_generator(), tiny_critic(), cfg, GanMethod::wgan);
  GanTrainResult b = train_gan(data, tiny_generator(), tiny_critic(), cfg, GanMethod::wgan);
  REQUIRE(a.state.history.size() == b.state.history.size());
  for (size_t i = 0; i < a.state.history.size(); ++i) {
    CHECK(a.state.history[i].iteration == b.state.history[i].iteration);
    CHECK(a.state.history[i].critic_loss == b.state.history[i].critic_loss);
    CHECK(a.state.history[i].generator_loss == b.state.history[i].generator_loss);
  }
  auto pa = params_of(a.generator.params()), pb = params_of(b.generator.params());
  CHECK(pa == pb);
}

TEST_CASE("dpwgan with zero noise and open clips reproduces the weight-clip wgan bit for bit") {
  TimeSeriesDataset data = constant_dataset(32, 12, 0.6);
  TrainConfig dp_cfg = quick_gan_config(6);
  PrivacyParams p;
  p.noise_multiplier = 0.0;
  p.clip_bound = 1e18;
  p.weight_clip = 1e18;
  dp_cfg.privacy = p;

  TrainConfig wc_cfg = quick_gan_config(6);
  wc_cfg.wgan_lipschitz = LipschitzMode::weight_clip;
  wc_cfg.wgan_weight_clip = 1e18;

  GanTrainResult dp = train_gan(data, tiny_generator(), tiny_critic(), dp_cfg, GanMethod::dpwgan);
  GanTrainResult wc = train_gan(data, tiny_generator(), tiny_critic(), wc_cfg, GanMethod::wgan);
  CHECK(params_of(dp.generator.params()) == params_of(wc.generator.params()));
  CHECK(params_of(dp.critic.params()) == params_of(wc.critic.params()));
}

TEST_CASE("gswgan with zero noise reproduces wgan with a boundary clip bit for bit") {
  TimeSeriesDataset data = constant_dataset(32, 12, 0.6);
  TrainConfig gs_cfg = quick_gan_config(6);
  PrivacyParams p;
  p.noise_multiplier = 0.0;
  p.clip_bound = 1.0;
  gs_cfg.privacy = p;

  TrainConfig bc_cfg = quick_gan_config(6);
  bc_cfg.boundary_clip = 1.0;

  GanTrainResult gs = train_gan(data, tiny_generator(), tiny_critic(), gs_cfg, GanMethod::gswgan);
  GanTrainResult bc = train_gan(data, tiny_generator(), tiny_critic(), bc_cfg, GanMethod::wgan);
  CHECK(params_of(gs.generator.params()) == params_of(bc.generator.params()));
  CHECK(params_of(gs.critic.params()) == params_of(bc.critic.params()));
}

TEST_CASE("gswgan critic updates are invariant to the noise multiplier") {
  TimeSeriesDataset data = constant_dataset(32, 12, 0.5);
  auto run = [&](double sigma) {
    TrainConfig cfg = quick_gan_config(1);  // one generator step: critic trained before noise
    PrivacyParams p;
    p.noise_multiplier = sigma;
    cfg.privacy = p;
    return train_gan(data, tiny_generator(), tiny_critic(), cfg, GanMethod::gswgan);
  };
  GanTrainResult quiet = run(0.0);
  GanTrainResult noisy = run(2.0);
  CHECK(params_of(quiet.critic.params()) == params_of(noisy.critic.params()));
  // the generator step, in contrast, sees the noise
  CHECK(params_of(quiet.generator.params()) != params_of(noisy.generator.params()));
}

TEST_CASE("dpwgan reports positive epsilon that grows with iterations") {
  TimeSeriesDataset data = constant_dataset(32, 12, 0.5);
  TrainConfig cfg = quick_gan_config(4);
  PrivacyParams p;
  p.noise_multiplier = 0.5;
  cfg.privacy = p;
  GanTrainResult result = train_gan(data, tiny_generator(), tiny_critic(), cfg, GanMethod::dpwgan);
  CHECK(result.state.epsilon_spent > 0.0);
  CHECK(result.state.accountant_steps == 4 * cfg.critic_steps_per_gen);
  double prev = 0.0;
  for (const auto& row : result.state.history) {
    CHECK(row.epsilon >= prev);
    prev = row.epsilon;
  }
  // independent accountant replay of (q, sigma, steps)
  RdpAccountant replay;
  replay.add_steps(result.state.accountant_steps, result.state.sampling_rate, 0.5);
  CHECK(replay.epsilon(result.state.delta) == doctest::Approx(result.state.epsilon_spent).epsilon(1e-12));
}

TEST_CASE("wgan rejects privacy params and private methods require them") {
  TimeSeriesDataset data = constant_dataset(32, 12, 0.5);
  TrainConfig cfg = quick_gan_config(2);
  cfg.privacy = PrivacyParams{};
  CHECK_THROWS_AS(train_gan(data, tiny_generator(), tiny_critic(), cfg, GanMethod::wgan),
                  ConfigError);
  TrainConfig no_privacy = quick_gan_config(2);
  CHECK_THROWS_AS(train_gan(data, tiny_generator(), tiny_critic(), no_privacy, GanMethod::gswgan),
                  ConfigError);
}

TEST_CASE("classifier training reaches high f1 on sine vs noise") {
  SyntheticSpec spec;
  spec.n_per_class = 100;
  spec.length = 64;
  spec.seed = 5;
  auto [train, test] = make_synthetic(spec);
  NormalizationMeta meta = fit_normalizer(train);
  TimeSeriesDataset norm_train = apply_normalizer(train, meta);
  TimeSeriesDataset norm_test = apply_normalizer(test, meta);

  TrainConfig cfg;
  cfg.classifier_iterations = 200;
  cfg.batch_size = 16;
  cfg.seed = 9;
  ClassifierTrainResult result = train_classifier(norm_train, desk_classifier(), cfg);
  const double f1 = classifier_f1(result.classifier, norm_test);
  CHECK(f1 >= 0.95);
}

TEST_CASE("untrained classifier sits at chance level") {
  SyntheticSpec spec;
  spec.n_per_class = 50;
  spec.length = 32;
  spec.seed = 8;
  auto [train, test] = make_synthetic(spec);
  TrainConfig cfg;
  cfg.classifier_iterations = 0;
  cfg.seed = 4;
  ClassifierTrainResult result = train_classifier(train, desk_classifier(), cfg);
  const double f1 = classifier_f1(result.classifier, test);
  CHECK(f1 >= 0.5 - 0.15 - 0.15);  // 1/K with slack for the arbitrary init
  CHECK(f1 <= 0.5 + 0.15 + 0.15);
}

TEST_CASE("classifier training is deterministic and rejects single-class data") {
  SyntheticSpec spec;
  spec.n_per_class = 30;
  spec.length = 32;
  spec.seed = 2;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  TrainConfig cfg;
  cfg.classifier_iterations = 20;
  cfg.batch_size = 8;
  cfg.seed = 77;
  ClassifierTrainResult a = train_classifier(train, desk_classifier(), cfg);
  ClassifierTrainResult b = train_classifier(train, desk_classifier(), cfg);
  CHECK(params_of(a.classifier.params()) == params_of(b.classifier.params()));

  TimeSeriesDataset single = train;
  single.labels.assign(single.labels.size(), 0);
  CHECK_THROWS_AS(train_classifier(single, desk_classifier(), cfg), ArgumentError);
}

TEST_CASE("dp classifier with zero noise and open clip matches the plain trajectory bit for bit") {
  SyntheticSpec spec;
  spec.n_per_class = 30;
  spec.length = 32;
  spec.seed = 6;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  TrainConfig cfg;
  cfg.classifier_iterations = 25;
  cfg.batch_size = 8;
  cfg.seed = 31;

  ClassifierTrainResult plain = train_classifier(train, desk_classifier(), cfg);

  TrainConfig dp_cfg = cfg;
  PrivacyParams p;
  p.noise_multiplier = 0.0;
  p.clip_bound = std::numeric_limits<double>::infinity();
  dp_cfg.privacy = p;
  ClassifierTrainResult dp = train_classifier_dp(train, desk_classifier(), dp_cfg);

  CHECK(params_of(plain.classifier.params()) == params_of(dp.classifier.params()));
}

TEST_CASE("dp classifier spends privacy budget") {
  SyntheticSpec spec;
  spec.n_per_class = 30;
  spec.length = 32;
  spec.seed = 6;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  TrainConfig cfg;
  cfg.classifier_iterations = 15;
  cfg.batch_size = 8;
  cfg.seed = 31;
  PrivacyParams p;
  p.noise_multiplier = 0.7;
  cfg.privacy = p;
  ClassifierTrainResult r15 = train_classifier_dp(train, desk_classifier(), cfg);
  cfg.classifier_iterations = 30;
  ClassifierTrainResult r30 = train_classifier_dp(train, desk_classifier(), cfg);
  CHECK(r15.epsilon > 0.0);
  CHECK(r30.epsilon > r15.epsilon);
}

TEST_CASE("four-way eval on an exact copy gives four near-identical scores") {
  SyntheticSpec spec;
  spec.n_per_class = 60;
  spec.length = 48;
  spec.seed = 21;
  auto [train, test] = make_synthetic(spec);
  NormalizationMeta meta = fit_normalizer(train);
  TimeSeriesDataset norm_train = apply_normalizer(train, meta);
  TimeSeriesDataset norm_test = apply_normalizer(test, meta);

  TrainConfig cfg;
  cfg.classifier_iterations = 120;
  cfg.batch_size = 16;
  cfg.seed = 3;
  FourWayReport report = four_way_eval_on_datasets(norm_train, norm_test, norm_train, norm_test,
                                                   desk_classifier(), cfg);
  CHECK(std::abs(report.m_minus_d_minus - report.m_plus_d_minus) <= 0.02);
  CHECK(std::abs(report.m_minus_d_plus - report.m_plus_d_plus) <= 0.02);
  CHECK(std::abs(report.m_minus_d_minus - report.m_minus_d_plus) <= 0.02);
  CHECK(report.baseline == report.m_minus_d_minus);
}

TEST_CASE("fid stopping returns a checkpoint no later than the budget with no worse fid") {
  SyntheticSpec spec;
  spec.n_per_class = 24;
  spec.length = 16;
  spec.seed = 14;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  TrainConfig clf_cfg;
  clf_cfg.classifier_iterations = 40;
  clf_cfg.batch_size = 8;
  clf_cfg.seed = 2;
  ClassifierArch ca;
  ca.depth = 1;
  ca.nb_filters = 4;
  ca.bottleneck = 4;
  ca.kernel = 8;
  ClassifierTrainResult clf = train_classifier(train, ca, clf_cfg);

  TrainConfig cfg = quick_gan_config(20, StoppingKind::fid);
  cfg.eval_every = 4;
  cfg.patience = 20;
  cfg.eval_samples = 16;
  GanTrainResult r =
      train_gan(train, tiny_generator(), tiny_critic(), cfg, GanMethod::wgan, &clf.classifier);
  CHECK(r.state.returned_iteration <= cfg.max_iterations);
  CHECK(r.state.returned_iteration == r.state.best_iteration);
  const double final_fid = r.state.history.back().metric;
  CHECK(r.state.best_metric <= final_fid + 1e-12);
}

TEST_CASE("metric evaluation leaves generator parameters untouched") {
  Rng rng(15);
  GeneratorArch garch = tiny_generator();
  garch.out_length = 32;
  Generator gen(garch, rng);
  SyntheticSpec spec;
  spec.n_per_class = 20;
  spec.length = 32;
  spec.seed = 1;
  auto [train, test] = make_synthetic(spec);
  (void)test;
  TrainConfig cfg;
  cfg.classifier_iterations = 10;
  cfg.batch_size = 8;
  cfg.seed = 2;
  ClassifierTrainResult clf = train_classifier(train, desk_classifier(), cfg);

  auto before = params_of(gen.params());
  Rng eval_rng(9);
  const double fid_val =
      stopping_metric(StoppingKind::fid, gen, &clf.classifier, train, 32, 0.0, eval_rng);
  const double is_val =
      stopping_metric(StoppingKind::is, gen, &clf.classifier, train, 32, 0.0, eval_rng);
  CHECK(params_of(gen.params()) == before);
  CHECK(fid_val >= 0.0);
  CHECK(is_val >= 1.0 - 1e-9);
  CHECK(is_val <= 2.0 + 1e-9);

  CHECK_THROWS_AS(stopping_metric(StoppingKind::fid, gen, nullptr, train, 32, 0.0, eval_rng),
                  ConfigError);
}
