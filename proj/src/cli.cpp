#include "dpts/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "dpts/errors.hpp"
#include "dpts/metrics.hpp"
#include "dpts/privacy.hpp"
#include "dpts/svg.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dpts::cli {

namespace {

// --------------------------------------------------------------------------
// config parsing with unknown-key rejection

void reject_unknown_keys(const json& obj, const std::vector<std::string>& allowed,
                         const std::string& path) {
  if (!obj.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("config: unknown key '" + (path.empty() ? it.key() : path + "." + it.key()) +
                        "'");
    }
  }
}

template <typename T>
T get_or(const json& obj, const std::string& key, const std::string& path, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + (path.empty() ? key : path + "." + key) + "'");
  }
}

std::vector<int> get_int_list(const json& obj, const std::string& key, const std::string& path,
                              std::vector<int> fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<std::vector<int>>();
  } catch (const json::exception&) {
    throw ConfigError("config: bad value for '" + path + "." + key + "' (expected int list)");
  }
}

GeneratorArch parse_generator(const json& j) {
  reject_unknown_keys(j, {"variant", "z_dim", "hidden", "filters", "kernel_sizes", "base_length"},
                      "generator");
  GeneratorArch a;
  const std::string variant = get_or<std::string>(j, "variant", "generator", "dense");
  if (variant == "dense") {
    a.variant = GeneratorArch::Variant::dense;
  } else if (variant == "conv") {
    a.variant = GeneratorArch::Variant::conv;
  } else {
    throw ConfigError("config: generator.variant must be 'dense' or 'conv'");
  }
  a.z_dim = get_or<int>(j, "z_dim", "generator", a.z_dim);
  a.hidden = get_int_list(j, "hidden", "generator", a.hidden);
  a.filters = get_int_list(j, "filters", "generator", {});
  a.kernel_sizes = get_int_list(j, "kernel_sizes", "generator", {});
  a.base_length = get_or<int>(j, "base_length", "generator", 0);
  return a;
}

CriticArch parse_critic(const json& j) {
  reject_unknown_keys(j, {"variant", "hidden", "filters", "kernel_sizes"}, "critic");
  CriticArch a;
  const std::string variant = get_or<std::string>(j, "variant", "critic", "dense");
  if (variant == "dense") {
    a.variant = CriticArch::Variant::dense;
  } else if (variant == "conv") {
    a.variant = CriticArch::Variant::conv;
  } else {
    throw ConfigError("config: critic.variant must be 'dense' or 'conv'");
  }
  a.hidden = get_int_list(j, "hidden", "critic", a.hidden);
  a.filters = get_int_list(j, "filters", "critic", {});
  a.kernel_sizes = get_int_list(j, "kernel_sizes", "critic", {});
  return a;
}

ClassifierArch parse_classifier(const json& j) {
  reject_unknown_keys(j, {"depth", "nb_filters", "bottleneck", "kernel"}, "classifier");
  ClassifierArch a;
  a.depth = get_or<int>(j, "depth", "classifier", a.depth);
  a.nb_filters = get_or<int>(j, "nb_filters", "classifier", a.nb_filters);
  a.bottleneck = get_or<int>(j, "bottleneck", "classifier", a.bottleneck);
  a.kernel = get_or<int>(j, "kernel", "classifier", a.kernel);
  return a;
}

TrainConfig parse_train(const json& j) {
  reject_unknown_keys(
      j,
      {"max_iterations", "critic_steps_per_gen", "batch_size", "lr_generator", "lr_critic",
       "lr_classifier", "gp_lambda", "eval_every", "patience", "stopping", "eval_samples",
       "balanced_batches", "lr_decay", "classifier_iterations", "gan_adam_beta1",
       "gan_adam_beta2", "wgan_lipschitz", "wgan_weight_clip", "max_epsilon"},
      "train");
  TrainConfig c;
  c.max_iterations = get_or<int64_t>(j, "max_iterations", "train", c.max_iterations);
  c.critic_steps_per_gen = get_or<int>(j, "critic_steps_per_gen", "train", c.critic_steps_per_gen);
  c.batch_size = get_or<int>(j, "batch_size", "train", c.batch_size);
  c.lr_generator = get_or<double>(j, "lr_generator", "train", c.lr_generator);
  c.lr_critic = get_or<double>(j, "lr_critic", "train", c.lr_critic);
  c.lr_classifier = get_or<double>(j, "lr_classifier", "train", c.lr_classifier);
  c.gp_lambda = get_or<double>(j, "gp_lambda", "train", c.gp_lambda);
  c.eval_every = get_or<int64_t>(j, "eval_every", "train", c.eval_every);
  c.patience = get_or<int64_t>(j, "patience", "train", c.patience);
  c.stopping = stopping_from_string(get_or<std::string>(j, "stopping", "train", "fixed"));
  c.eval_samples = get_or<int>(j, "eval_samples", "train", c.eval_samples);
  c.balanced_batches = get_or<bool>(j, "balanced_batches", "train", c.balanced_batches);
  c.lr_decay = get_or<bool>(j, "lr_decay", "train", c.lr_decay);
  c.classifier_iterations =
      get_or<int64_t>(j, "classifier_iterations", "train", c.classifier_iterations);
  c.gan_adam_beta1 = get_or<double>(j, "gan_adam_beta1", "train", c.gan_adam_beta1);
  c.gan_adam_beta2 = get_or<double>(j, "gan_adam_beta2", "train", c.gan_adam_beta2);
  const std::string lipschitz = get_or<std::string>(j, "wgan_lipschitz", "train", "gradient_penalty");
  if (lipschitz == "gradient_penalty") {
    c.wgan_lipschitz = LipschitzMode::gradient_penalty;
  } else if (lipschitz == "weight_clip") {
    c.wgan_lipschitz = LipschitzMode::weight_clip;
  } else {
    throw ConfigError("config: train.wgan_lipschitz must be 'gradient_penalty' or 'weight_clip'");
  }
  c.wgan_weight_clip = get_or<double>(j, "wgan_weight_clip", "train", c.wgan_weight_clip);
  c.max_epsilon = get_or<double>(j, "max_epsilon", "train", c.max_epsilon);
  return c;
}

PrivacyParams parse_privacy(const json& j) {
  reject_unknown_keys(j, {"noise_multiplier", "clip_bound", "weight_clip", "delta", "sampling_rate"},
                      "privacy");
  PrivacyParams p;
  p.noise_multiplier = get_or<double>(j, "noise_multiplier", "privacy", p.noise_multiplier);
  p.clip_bound = get_or<double>(j, "clip_bound", "privacy", p.clip_bound);
  if (j.contains("weight_clip")) p.weight_clip = j.at("weight_clip").get<double>();
  p.delta = get_or<double>(j, "delta", "privacy", 0.0);
  p.sampling_rate = get_or<double>(j, "sampling_rate", "privacy", 0.0);
  return p;
}

// --------------------------------------------------------------------------
// filesystem and report helpers

void ensure_dirs(const std::string& out_dir) {
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/checkpoints");
  fs::create_directories(out_dir + "/reports");
  fs::create_directories(out_dir + "/plots");
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArgumentError("cannot write '" + path + "'");
  f << content;
}

// Manifest lands atomically: a crashed run leaves none behind.
void write_manifest(const std::string& out_dir, const json& manifest) {
  const std::string tmp = out_dir + "/manifest.json.tmp";
  write_text(tmp, manifest.dump(2) + "\n");
  fs::rename(tmp, out_dir + "/manifest.json");
}

json json_num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;  // JSON has no infinity; null marks an unbounded value
}

std::string format_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);  // shortest exact form
  (void)ec;
  return std::string(buf, ptr);
}

void write_history_csv(const std::string& path, const std::vector<HistoryRow>& history) {
  std::ostringstream os;
  os << "iteration,critic_loss,generator_loss,metric,epsilon\n";
  for (const auto& row : history) {
    os << row.iteration << "," << format_num(row.critic_loss) << ","
       << format_num(row.generator_loss) << "," << format_num(row.metric) << ","
       << format_num(row.epsilon) << "\n";
  }
  write_text(path, os.str());
}

uint64_t file_hash(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ArgumentError("cannot read '" + path + "'");
  uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    for (std::streamsize i = 0; i < f.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
    if (!f) break;
  }
  return h;
}

std::string dash_join(const std::vector<int>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += "-";
    out += std::to_string(v[i]);
  }
  return out;
}

json base_manifest(const std::string& command, const RunConfig& cfg, const json& raw_config,
                   const std::string& started) {
  json m;
  m["format_version"] = 1;
  m["command"] = command;
  m["seed"] = cfg.seed;
  m["config"] = raw_config;
  m["started"] = started;
  m["finished"] = iso_timestamp();
  return m;
}

Classifier load_baseline(const RunConfig& cfg) {
  if (cfg.baseline_checkpoint.empty()) {
    throw ConfigError("stopping criterion '" + to_string(cfg.train.stopping) +
                      "' requires 'baseline_checkpoint' in the config");
  }
  return classifier_from_checkpoint(checkpoint_load(cfg.baseline_checkpoint));
}

// generated files live in the normalized domain already
TimeSeriesDataset load_public(const std::string& path) { return load_ts_file(path); }

void check_same_shape(const TimeSeriesDataset& a, const TimeSeriesDataset& b) {
  if (a.channels() != b.channels() || a.length() != b.length()) {
    throw DimensionError("private " + shape_str(a.samples.shape()) + " and public " +
                         shape_str(b.samples.shape()) + " datasets are shape-incompatible");
  }
}

// --------------------------------------------------------------------------
// plotting

struct PlotFrame {
  double width = 640, height = 320, margin = 40;
  double x(double t, int length) const {
    return margin + (length > 1 ? t / (length - 1) : 0.5) * (width - 2 * margin);
  }
  double y(double v) const { return margin + (1.0 - v) * (height - 2 * margin); }
};

void scatter_svg(const std::string& path, const Tensor& embedding,
                 const std::vector<int>& color_ids, const std::vector<bool>& keep,
                 const std::string& title,
                 const std::vector<std::pair<std::string, int>>& legend) {
  const int n = embedding.dim(0);
  auto e = embedding.values();
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (int i = 0; i < n; ++i) {
    xmin = std::min(xmin, e[i * 2]);
    xmax = std::max(xmax, e[i * 2]);
    ymin = std::min(ymin, e[i * 2 + 1]);
    ymax = std::max(ymax, e[i * 2 + 1]);
  }
  const double spanx = std::max(xmax - xmin, 1e-9), spany = std::max(ymax - ymin, 1e-9);
  SvgCanvas svg(640, 640);
  svg.text(10, 20, title, 14);
  for (int i = 0; i < n; ++i) {
    if (!keep[static_cast<size_t>(i)]) continue;
    const double px = 30 + (e[i * 2] - xmin) / spanx * 580;
    const double py = 50 + (ymax - e[i * 2 + 1]) / spany * 560;
    svg.circle(px, py, 3.0, palette_color(color_ids[static_cast<size_t>(i)]), 0.75);
  }
  double ly = 40;
  for (const auto& [name, color] : legend) {
    svg.circle(600, ly, 4.0, palette_color(color));
    svg.text(560, ly + 4, name, 10);
    ly += 16;
  }
  svg.save(path);
}

// --------------------------------------------------------------------------
// commands

int cmd_baseline(const RunConfig& cfg, const json& raw) {
  const std::string started = iso_timestamp();
  PreparedData data = prepare_dataset(cfg.dataset);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;
  ClassifierTrainResult result = train_classifier(data.train, cfg.classifier, train_cfg);
  const double test_f1 = classifier_f1(result.classifier, data.test);

  ensure_dirs(cfg.out_dir);
  const std::string ckpt = cfg.out_dir + "/checkpoints/baseline_classifier.dtsf";
  save_classifier(ckpt, result.classifier);

  json m = base_manifest("baseline", cfg, raw, started);
  m["dataset_hash"] = data.train.content_hash();
  m["metrics"] = {{"baseline_f1", test_f1}, {"validation_f1", result.val_f1}};
  m["artifacts"] = {{"classifier", ckpt}};
  write_manifest(cfg.out_dir, m);
  std::printf("baseline weighted f1: %.4f (validation %.4f)\n", test_f1, result.val_f1);
  return 0;
}

int cmd_train_gan(const RunConfig& cfg, const json& raw, const std::string& method_name) {
  const std::string started = iso_timestamp();
  const GanMethod method = gan_method_from_string(method_name);
  PreparedData data = prepare_dataset(cfg.dataset);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;

  std::optional<Classifier> baseline;
  const bool needs_baseline = train_cfg.stopping == StoppingKind::fid ||
                              train_cfg.stopping == StoppingKind::is ||
                              train_cfg.stopping == StoppingKind::accuracy;
  if (needs_baseline) baseline.emplace(load_baseline(cfg));

  GanTrainResult result = train_gan(data.train, cfg.generator, cfg.critic, train_cfg, method,
                                    baseline ? &*baseline : nullptr);

  ensure_dirs(cfg.out_dir);
  const std::string best_path = cfg.out_dir + "/checkpoints/generator_best.dtsf";
  const std::string final_path = cfg.out_dir + "/checkpoints/generator_final.dtsf";
  const std::string critic_path = cfg.out_dir + "/checkpoints/critic_final.dtsf";
  save_generator(best_path, result.generator);
  {
    Rng tmp(0);
    Generator final_gen(result.generator.arch(), tmp);
    restore_params(final_gen.params(), result.final_generator_params);
    save_generator(final_path, final_gen);
  }
  save_critic(critic_path, result.critic);
  write_history_csv(cfg.out_dir + "/history.csv", result.state.history);

  json m = base_manifest("train-gan", cfg, raw, started);
  m["method"] = method_name;
  m["dataset_hash"] = data.train.content_hash();
  m["epsilon"] = json_num(result.state.epsilon_spent);
  m["delta"] = result.state.delta;
  m["stopping"] = {{"criterion", to_string(train_cfg.stopping)},
                   {"stopped_early", result.state.stopped_early},
                   {"best_iteration", result.state.best_iteration},
                   {"best_metric", json_num(result.state.best_metric)},
                   {"iterations_run", result.state.iterations_run},
                   {"returned_iteration", result.state.returned_iteration}};
  m["accountant"] = {{"steps", result.state.accountant_steps},
                     {"sampling_rate", result.state.sampling_rate},
                     {"noise_multiplier", result.state.noise_multiplier},
                     {"orders", RdpAccountant().orders()}};
  json rdp = json::array();
  for (double v : result.state.accumulated_rdp) rdp.push_back(json_num(v));
  m["accountant"]["accumulated_rdp"] = rdp;
  m["artifacts"] = {{"generator_best", best_path},
                    {"generator_final", final_path},
                    {"critic_final", critic_path},
                    {"history", cfg.out_dir + "/history.csv"}};
  write_manifest(cfg.out_dir, m);
  std::printf("%s finished: %lld iterations, epsilon %s, best iteration %lld\n",
              method_name.c_str(), static_cast<long long>(result.state.iterations_run),
              format_num(result.state.epsilon_spent).c_str(),
              static_cast<long long>(result.state.best_iteration));
  return 0;
}

int cmd_generate(const std::string& checkpoint, int n, uint64_t seed, const std::string& out_dir) {
  Checkpoint ckpt = checkpoint_load(checkpoint);
  Generator gen = generator_from_checkpoint(ckpt);
  std::vector<std::string> class_names;
  for (int k = 0; k < gen.arch().num_classes; ++k) class_names.push_back(std::to_string(k));
  TimeSeriesDataset data = generate_dataset(gen, n, seed, class_names);
  data.problem_name = "generated";

  fs::create_directories(out_dir);
  const std::string ts_path = out_dir + "/generated.ts";
  save_ts_file(data, ts_path);
  json sidecar = {{"checkpoint", checkpoint},
                  {"checkpoint_hash", file_hash(checkpoint)},
                  {"seed", seed},
                  {"n", n},
                  {"dataset_hash", data.content_hash()}};
  write_text(out_dir + "/generated.json", sidecar.dump(2) + "\n");
  std::printf("wrote %d samples to %s\n", n, ts_path.c_str());
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, const json& raw, const std::string& generated_path,
                 const std::string& checkpoint_path) {
  const std::string started = iso_timestamp();
  PreparedData data = prepare_dataset(cfg.dataset);
  TrainConfig train_cfg = cfg.train;
  train_cfg.seed = cfg.seed;

  FourWayReport report;
  if (!checkpoint_path.empty()) {
    Generator gen = generator_from_checkpoint(checkpoint_load(checkpoint_path));
    report = four_way_eval(data.train, data.test, gen, cfg.classifier, train_cfg);
  } else if (!generated_path.empty()) {
    TimeSeriesDataset pub = load_public(generated_path);
    check_same_shape(data.train, pub);
    const int need = data.train.n() + data.test.n();
    if (pub.n() < need) {
      throw ArgumentError("evaluate: generated dataset has " + std::to_string(pub.n()) +
                          " samples; need train+test = " + std::to_string(need));
    }
    std::vector<int> train_rows(static_cast<size_t>(data.train.n()));
    std::vector<int> test_rows(static_cast<size_t>(data.test.n()));
    for (int i = 0; i < data.train.n(); ++i) train_rows[static_cast<size_t>(i)] = i;
    for (int i = 0; i < data.test.n(); ++i) test_rows[static_cast<size_t>(i)] = data.train.n() + i;
    report = four_way_eval_on_datasets(data.train, data.test, take_rows(pub, train_rows),
                                       take_rows(pub, test_rows), cfg.classifier, train_cfg);
  } else {
    throw ConfigError("evaluate: pass --generated <file.ts> or --checkpoint <generator.dtsf>");
  }

  ensure_dirs(cfg.out_dir);
  std::ostringstream csv;
  csv << "metric,value\n";
  csv << "baseline," << format_num(report.baseline) << "\n";
  csv << "m-d-," << format_num(report.m_minus_d_minus) << "\n";
  csv << "m-d+," << format_num(report.m_minus_d_plus) << "\n";
  csv << "m+d-," << format_num(report.m_plus_d_minus) << "\n";
  csv << "m+d+," << format_num(report.m_plus_d_plus) << "\n";
  write_text(cfg.out_dir + "/reports/four_way.csv", csv.str());
  json jr = {{"baseline", report.baseline},
             {"m_minus_d_minus", report.m_minus_d_minus},
             {"m_minus_d_plus", report.m_minus_d_plus},
             {"m_plus_d_minus", report.m_plus_d_minus},
             {"m_plus_d_plus", report.m_plus_d_plus}};
  write_text(cfg.out_dir + "/reports/four_way.json", jr.dump(2) + "\n");

  json m = base_manifest("evaluate", cfg, raw, started);
  m["dataset_hash"] = data.train.content_hash();
  m["metrics"] = jr;
  m["artifacts"] = {{"four_way_csv", cfg.out_dir + "/reports/four_way.csv"},
                    {"four_way_json", cfg.out_dir + "/reports/four_way.json"}};
  write_manifest(cfg.out_dir, m);
  std::printf("m-d-: %.4f  m-d+: %.4f  m+d-: %.4f  m+d+: %.4f\n", report.m_minus_d_minus,
              report.m_minus_d_plus, report.m_plus_d_minus, report.m_plus_d_plus);
  return 0;
}

int cmd_distances(const RunConfig& cfg, const json& raw, const std::string& public_path) {
  const std::string started = iso_timestamp();
  PreparedData data = prepare_dataset(cfg.dataset);
  TimeSeriesDataset pub = load_public(public_path);
  check_same_shape(data.train, pub);

  const DistanceStats within_private = distance_stats(data.train.samples);
  const DistanceStats within_public = distance_stats(pub.samples);
  const DistanceStats cross = distance_stats(data.train.samples, pub.samples);

  ensure_dirs(cfg.out_dir);
  std::ostringstream csv;
  csv << "scope,min,mean,max\n";
  auto emit = [&](const char* scope, const DistanceStats& s) {
    csv << scope << "," << format_num(s.min) << "," << format_num(s.mean) << ","
        << format_num(s.max) << "\n";
  };
  emit("within_private", within_private);
  emit("within_public", within_public);
  emit("cross", cross);
  write_text(cfg.out_dir + "/reports/distances.csv", csv.str());

  json m = base_manifest("distances", cfg, raw, started);
  m["dataset_hash"] = data.train.content_hash();
  m["metrics"] = {{"within_private", {{"min", within_private.min}, {"mean", within_private.mean}, {"max", within_private.max}}},
                  {"within_public", {{"min", within_public.min}, {"mean", within_public.mean}, {"max", within_public.max}}},
                  {"cross", {{"min", cross.min}, {"mean", cross.mean}, {"max", cross.max}}}};
  m["artifacts"] = {{"distances_csv", cfg.out_dir + "/reports/distances.csv"}};
  write_manifest(cfg.out_dir, m);
  std::printf("cross-set distances: min %.4f mean %.4f max %.4f\n", cross.min, cross.mean,
              cross.max);
  return 0;
}

int cmd_embed(const RunConfig& cfg, const json& raw, const std::string& public_path,
              double perplexity) {
  const std::string started = iso_timestamp();
  PreparedData data = prepare_dataset(cfg.dataset);
  TimeSeriesDataset pub = load_public(public_path);
  check_same_shape(data.train, pub);

  const int n_private = data.train.n(), n_public = pub.n();
  const int n = n_private + n_public;
  const int dim = data.train.channels() * data.train.length();
  Tensor features = Tensor::zeros({n, dim});
  {
    auto dst = features.values();
    auto a = data.train.samples.values();
    auto b = pub.samples.values();
    std::copy(a.begin(), a.end(), dst.begin());
    std::copy(b.begin(), b.end(), dst.begin() + n_private * static_cast<int64_t>(dim));
  }
  TsneConfig tc;
  tc.perplexity = perplexity;
  tc.seed = cfg.seed;
  Tensor embedding = tsne(features, tc);

  ensure_dirs(cfg.out_dir);
  std::ostringstream csv;
  csv << "x,y,label,source\n";
  auto e = embedding.values();
  for (int i = 0; i < n; ++i) {
    const bool is_private = i < n_private;
    const int label = is_private ? data.train.labels[i] : pub.labels[i - n_private];
    csv << format_num(e[i * 2]) << "," << format_num(e[i * 2 + 1]) << "," << label << ","
        << (is_private ? "private" : "public") << "\n";
  }
  write_text(cfg.out_dir + "/reports/embedding.csv", csv.str());

  std::vector<int> source_colors(static_cast<size_t>(n));
  std::vector<int> class_colors(static_cast<size_t>(n));
  std::vector<bool> all(static_cast<size_t>(n), true);
  std::vector<bool> private_only(static_cast<size_t>(n), false);
  std::vector<bool> public_only(static_cast<size_t>(n), false);
  for (int i = 0; i < n; ++i) {
    const bool is_private = i < n_private;
    source_colors[static_cast<size_t>(i)] = is_private ? 0 : 1;
    class_colors[static_cast<size_t>(i)] =
        is_private ? data.train.labels[i] : pub.labels[i - n_private];
    private_only[static_cast<size_t>(i)] = is_private;
    public_only[static_cast<size_t>(i)] = !is_private;
  }
  scatter_svg(cfg.out_dir + "/plots/embed_source.svg", embedding, source_colors, all,
              "private vs public", {{"private", 0}, {"public", 1}});
  std::vector<std::pair<std::string, int>> class_legend;
  for (int k = 0; k < data.train.num_classes(); ++k) {
    class_legend.emplace_back(data.train.class_names[static_cast<size_t>(k)], k);
  }
  scatter_svg(cfg.out_dir + "/plots/embed_private_classes.svg", embedding, class_colors,
              private_only, "private train by class", class_legend);
  scatter_svg(cfg.out_dir + "/plots/embed_public_classes.svg", embedding, class_colors,
              public_only, "public train by class", class_legend);

  json m = base_manifest("embed", cfg, raw, started);
  m["dataset_hash"] = data.train.content_hash();
  m["metrics"] = {{"points", n}, {"perplexity", perplexity}};
  m["artifacts"] = {{"embedding_csv", cfg.out_dir + "/reports/embedding.csv"},
                    {"embed_source", cfg.out_dir + "/plots/embed_source.svg"},
                    {"embed_private_classes", cfg.out_dir + "/plots/embed_private_classes.svg"},
                    {"embed_public_classes", cfg.out_dir + "/plots/embed_public_classes.svg"}};
  write_manifest(cfg.out_dir, m);
  std::printf("embedded %d points to %s\n", n, (cfg.out_dir + "/reports/embedding.csv").c_str());
  return 0;
}

int cmd_plot_samples(const RunConfig& cfg, const json& raw, const std::string& public_path,
                     int k_overlay) {
  const std::string started = iso_timestamp();
  PreparedData data = prepare_dataset(cfg.dataset);
  TimeSeriesDataset pub = load_public(public_path);
  check_same_shape(data.train, pub);
  if (k_overlay > data.train.n()) {
    throw ArgumentError("plot-samples: k_overlay exceeds the private sample count");
  }

  ensure_dirs(cfg.out_dir);
  const int channels = data.train.channels();
  const int length = data.train.length();
  const PlotFrame frame;
  json artifacts = json::object();
  int files = 0;
  for (int cls = 0; cls < data.train.num_classes(); ++cls) {
    std::vector<int> private_rows, public_rows;
    for (int i = 0; i < data.train.n(); ++i)
      if (data.train.labels[i] == cls) private_rows.push_back(i);
    for (int i = 0; i < pub.n(); ++i)
      if (pub.labels[i] == cls) public_rows.push_back(i);
    if (private_rows.empty() || public_rows.empty()) {
      std::fprintf(stderr, "warning: class %d empty in %s set, skipped\n", cls,
                   private_rows.empty() ? "private" : "public");
      continue;
    }
    for (int ch = 0; ch < channels; ++ch) {
      SvgCanvas svg(frame.width, frame.height);
      double vmin = 1e300, vmax = -1e300;
      auto pv = data.train.samples.values();
      const int overlay = std::min<int>(k_overlay, static_cast<int>(private_rows.size()));
      for (int s = 0; s < overlay; ++s) {
        std::vector<std::pair<double, double>> pts;
        pts.reserve(static_cast<size_t>(length));
        for (int t = 0; t < length; ++t) {
          const double v = pv[(private_rows[static_cast<size_t>(s)] * channels + ch) * length + t];
          vmin = std::min(vmin, v);
          vmax = std::max(vmax, v);
          pts.emplace_back(frame.x(t, length), frame.y(v));
        }
        svg.polyline(pts, "#bbbbbb", 1.0, 0.8);
      }
      {
        auto gv = pub.samples.values();
        std::vector<std::pair<double, double>> pts;
        pts.reserve(static_cast<size_t>(length));
        for (int t = 0; t < length; ++t) {
          const double v = gv[(public_rows[0] * channels + ch) * length + t];
          vmin = std::min(vmin, v);
          vmax = std::max(vmax, v);
          pts.emplace_back(frame.x(t, length), frame.y(v));
        }
        svg.polyline(pts, "#1f77b4", 2.0, 1.0);
      }
      svg.text(6, frame.height - frame.margin, "min=" + format_num(vmin), 9);
      svg.text(6, frame.margin, "max=" + format_num(vmax), 9);
      svg.text(frame.width / 2 - 60, 16,
               "class " + data.train.class_names[static_cast<size_t>(cls)] + " ch " +
                   std::to_string(ch),
               11);
      const std::string path = cfg.out_dir + "/plots/samples_class" + std::to_string(cls) +
                               "_ch" + std::to_string(ch) + ".svg";
      svg.save(path);
      artifacts["class" + std::to_string(cls) + "_ch" + std::to_string(ch)] = path;
      ++files;
    }
  }

  json m = base_manifest("plot-samples", cfg, raw, started);
  m["dataset_hash"] = data.train.content_hash();
  m["metrics"] = {{"files", files}, {"k_overlay", k_overlay}};
  m["artifacts"] = artifacts;
  write_manifest(cfg.out_dir, m);
  std::printf("wrote %d sample plots\n", files);
  return 0;
}

struct GridCell {
  GeneratorArch arch;
  std::string status = "ok";
  FourWayReport report;
  double fid_value = 0.0;
  double is_value = 0.0;
};

int cmd_grid(const RunConfig& cfg, const json& raw, const std::string& grid_path,
             const std::string& method_name) {
  const std::string started = iso_timestamp();
  std::ifstream f(grid_path);
  if (!f) throw ConfigError("grid: cannot open '" + grid_path + "'");
  json grid;
  f >> grid;

  std::vector<GeneratorArch> cells;
  if (grid.contains("cells")) {
    for (const auto& cell : grid.at("cells")) {
      GeneratorArch a = parse_generator(cell);
      a.variant = GeneratorArch::Variant::conv;
      cells.push_back(a);
    }
  } else {
    reject_unknown_keys(grid, {"z_dim", "filters", "kernel_sizes"}, "grid");
    const auto z_dims = grid.at("z_dim").get<std::vector<int>>();
    const auto filter_sets = grid.at("filters").get<std::vector<std::vector<int>>>();
    const auto kernel_sets = grid.at("kernel_sizes").get<std::vector<std::vector<int>>>();
    for (int z : z_dims)
      for (const auto& filt : filter_sets)
        for (const auto& kern : kernel_sets) {
          GeneratorArch a = cfg.generator;
          a.variant = GeneratorArch::Variant::conv;
          a.z_dim = z;
          a.filters = filt;
          a.kernel_sizes = kern;
          cells.push_back(a);
        }
  }
  if (cells.empty()) throw ConfigError("grid: no cells specified");

  PreparedData data = prepare_dataset(cfg.dataset);
  Classifier baseline = load_baseline(cfg);
  const GanMethod method = gan_method_from_string(method_name);

  std::vector<GridCell> results;
  Rng seeder(cfg.seed);
  for (size_t idx = 0; idx < cells.size(); ++idx) {
    GridCell cell;
    cell.arch = cells[idx];
    TrainConfig train_cfg = cfg.train;
    train_cfg.seed = seeder.fork(idx).next_u64();  // deterministic per-cell seed
    try {
      GanTrainResult trained =
          train_gan(data.train, cell.arch, cfg.critic, train_cfg, method, &baseline);
      cell.report = four_way_eval(data.train, data.test, trained.generator, cfg.classifier,
                                  train_cfg);
      TimeSeriesDataset generated = generate_dataset(
          trained.generator, std::max(train_cfg.eval_samples, 2), train_cfg.seed ^ 0xabcdef,
          data.train.class_names);
      FeatureCloud real_cloud{classifier_latents(baseline, data.train.samples)};
      FeatureCloud fake_cloud{classifier_latents(baseline, generated.samples)};
      cell.fid_value = fid(real_cloud, fake_cloud);
      cell.is_value = inception_score(classifier_probabilities(baseline, generated.samples));
    } catch (const std::exception& e) {
      cell.status = std::string("error: ") + e.what();
    }
    results.push_back(std::move(cell));
    std::printf("grid cell %zu/%zu done (%s)\n", idx + 1, cells.size(),
                results.back().status.c_str());
  }

  std::stable_sort(results.begin(), results.end(), [](const GridCell& a, const GridCell& b) {
    if ((a.status == "ok") != (b.status == "ok")) return a.status == "ok";
    return a.report.m_plus_d_minus > b.report.m_plus_d_minus;
  });

  ensure_dirs(cfg.out_dir);
  std::ostringstream csv;
  csv << "z_dim,filters,kernel_sizes,m-d+,m+d-,fid,is,status\n";
  for (const auto& cell : results) {
    csv << cell.arch.z_dim << "," << dash_join(cell.arch.filters) << ","
        << dash_join(cell.arch.kernel_sizes) << ",";
    if (cell.status == "ok") {
      csv << format_num(cell.report.m_minus_d_plus) << "," << format_num(cell.report.m_plus_d_minus)
          << "," << format_num(cell.fid_value) << "," << format_num(cell.is_value);
    } else {
      csv << ",,,";
    }
    csv << "," << cell.status << "\n";
  }
  write_text(cfg.out_dir + "/reports/grid.csv", csv.str());

  json m = base_manifest("grid", cfg, raw, started);
  m["dataset_hash"] = data.train.content_hash();
  m["metrics"] = {{"cells", results.size()}};
  m["artifacts"] = {{"grid_csv", cfg.out_dir + "/reports/grid.csv"}};
  write_manifest(cfg.out_dir, m);
  return 0;
}

int cmd_noise_sweep(const RunConfig& cfg, const json& raw, const std::vector<double>& multipliers,
                    const std::vector<std::string>& methods) {
  const std::string started = iso_timestamp();
  if (multipliers.empty()) throw ConfigError("noise-sweep: multiplier list is empty");
  for (double s : multipliers) {
    if (s <= 0) throw ConfigError("noise-sweep: multipliers must be positive");
  }
  PreparedData data = prepare_dataset(cfg.dataset);

  struct Row {
    std::string method;
    std::vector<double> f1;
    std::vector<double> eps;
  };
  std::vector<Row> rows;
  Rng seeder(cfg.seed);
  for (size_t mi = 0; mi < methods.size(); ++mi) {
    const std::string& method = methods[mi];
    Row row{method, {}, {}};
    for (size_t si = 0; si < multipliers.size(); ++si) {
      const double sigma = multipliers[si];
      TrainConfig train_cfg = cfg.train;
      train_cfg.seed = seeder.fork(mi * 1000 + si).next_u64();
      PrivacyParams p = train_cfg.privacy ? *train_cfg.privacy : PrivacyParams{};
      p.noise_multiplier = sigma;
      train_cfg.privacy = p;
      double f1 = std::numeric_limits<double>::quiet_NaN();
      double eps = std::numeric_limits<double>::quiet_NaN();
      try {
        if (method == "dp") {
          ClassifierTrainResult clf = train_classifier_dp(data.train, cfg.classifier, train_cfg);
          f1 = classifier_f1(clf.classifier, data.test);
          eps = clf.epsilon;
        } else {
          const GanMethod gm = gan_method_from_string(method);
          GanTrainResult trained =
              train_gan(data.train, cfg.generator, cfg.critic, train_cfg, gm, nullptr);
          TimeSeriesDataset public_train =
              generate_dataset(trained.generator, data.train.n(), train_cfg.seed ^ 0x5eed,
                               data.train.class_names);
          ClassifierTrainResult clf = train_classifier(public_train, cfg.classifier, train_cfg);
          f1 = classifier_f1(clf.classifier, data.test);  // m+ d-
          eps = trained.state.epsilon_spent;
        }
      } catch (const std::exception& e) {
        std::fprintf(stderr, "sweep cell (%s, %.3g) failed: %s\n", method.c_str(), sigma,
                     e.what());
      }
      row.f1.push_back(f1);
      row.eps.push_back(eps);
      std::printf("sweep %s sigma=%.3g -> f1 %s, epsilon %s\n", method.c_str(), sigma,
                  format_num(f1).c_str(), format_num(eps).c_str());
    }
    rows.push_back(std::move(row));
  }

  ensure_dirs(cfg.out_dir);
  std::ostringstream csv;
  csv << "method";
  for (double s : multipliers) csv << ",f1_" << format_num(s);
  for (double s : multipliers) csv << ",eps_" << format_num(s);
  csv << "\n";
  for (const auto& row : rows) {
    csv << row.method;
    for (double v : row.f1) csv << "," << format_num(v);
    for (double v : row.eps) csv << "," << format_num(v);
    csv << "\n";
  }
  write_text(cfg.out_dir + "/reports/noise_sweep.csv", csv.str());

  json m = base_manifest("noise-sweep", cfg, raw, started);
  m["dataset_hash"] = data.train.content_hash();
  json cells = json::array();
  for (const auto& row : rows) {
    for (size_t si = 0; si < multipliers.size(); ++si) {
      cells.push_back({{"method", row.method},
                       {"sigma", multipliers[si]},
                       {"f1", json_num(row.f1[si])},
                       {"epsilon", json_num(row.eps[si])}});
    }
  }
  m["metrics"] = {{"cells", cells}};
  m["artifacts"] = {{"noise_sweep_csv", cfg.out_dir + "/reports/noise_sweep.csv"}};
  write_manifest(cfg.out_dir, m);
  return 0;
}

int cmd_accountant(double q, double sigma, int64_t steps, double delta) {
  if (steps < 0) throw ArgumentError("accountant: steps must be >= 0");
  RdpAccountant acct;
  acct.add_steps(steps, q, sigma);
  const double eps = acct.epsilon(delta);
  if (steps == 0) {
    std::printf("epsilon = 0 (no steps composed)\n");
  } else {
    std::printf("epsilon = %.6f at delta = %g (order %d)\n", eps, delta,
                acct.optimal_order(delta));
  }
  return 0;
}

}  // namespace

RunConfig parse_config(const json& j) {
  reject_unknown_keys(j,
                      {"seed", "out_dir", "dataset", "generator", "critic", "classifier", "train",
                       "privacy", "baseline_checkpoint"},
                      "");
  RunConfig cfg;
  cfg.seed = get_or<uint64_t>(j, "seed", "", 0);
  cfg.out_dir = get_or<std::string>(j, "out_dir", "", cfg.out_dir);
  if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset'");
  cfg.dataset = j.at("dataset");
  // validate the dataset block eagerly so errors surface before any training
  if (!cfg.dataset.is_object()) throw ConfigError("config: 'dataset' must be an object");
  reject_unknown_keys(cfg.dataset, {"synthetic", "train_path", "test_path", "normalize"},
                      "dataset");
  if (cfg.dataset.contains("synthetic")) {
    reject_unknown_keys(cfg.dataset.at("synthetic"),
                        {"kind", "classes", "n_per_class", "length", "channels", "seed"},
                        "dataset.synthetic");
  } else if (!cfg.dataset.contains("train_path") || !cfg.dataset.contains("test_path")) {
    throw ConfigError("config: dataset needs either 'synthetic' or 'train_path'+'test_path'");
  }
  if (j.contains("generator")) cfg.generator = parse_generator(j.at("generator"));
  if (j.contains("critic")) cfg.critic = parse_critic(j.at("critic"));
  if (j.contains("classifier")) cfg.classifier = parse_classifier(j.at("classifier"));
  if (j.contains("train")) cfg.train = parse_train(j.at("train"));
  if (j.contains("privacy")) cfg.train.privacy = parse_privacy(j.at("privacy"));
  cfg.baseline_checkpoint = get_or<std::string>(j, "baseline_checkpoint", "", "");
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

PreparedData prepare_dataset(const json& dataset_cfg) {
  TimeSeriesDataset train, test;
  if (dataset_cfg.contains("synthetic")) {
    const json& s = dataset_cfg.at("synthetic");
    SyntheticSpec spec;
    const std::string kind = get_or<std::string>(s, "kind", "dataset.synthetic", "sine_vs_noise");
    if (kind == "sine_vs_noise") {
      spec.kind = SyntheticKind::sine_vs_noise;
    } else if (kind == "freq_classes") {
      spec.kind = SyntheticKind::freq_classes;
    } else {
      throw ConfigError("config: dataset.synthetic.kind must be 'sine_vs_noise' or 'freq_classes'");
    }
    spec.classes = get_or<int>(s, "classes", "dataset.synthetic", 2);
    spec.n_per_class = get_or<int>(s, "n_per_class", "dataset.synthetic", 100);
    spec.length = get_or<int>(s, "length", "dataset.synthetic", 64);
    spec.channels = get_or<int>(s, "channels", "dataset.synthetic", 1);
    spec.seed = get_or<uint64_t>(s, "seed", "dataset.synthetic", 0);
    std::tie(train, test) = make_synthetic(spec);
  } else {
    train = load_ts_file(dataset_cfg.at("train_path").get<std::string>());
    test = load_ts_file(dataset_cfg.at("test_path").get<std::string>());
    train.split = Split::train;
    test.split = Split::test;
  }
  PreparedData out;
  if (get_or<bool>(dataset_cfg, "normalize", "dataset", true)) {
    out.meta = fit_normalizer(train);
    out.train = apply_normalizer(train, out.meta);
    out.test = apply_normalizer(test, out.meta);
  } else {
    out.train = std::move(train);
    out.test = std::move(test);
  }
  out.train.split = Split::train;
  out.test.split = Split::test;
  return out;
}

int run(int argc, const char* const* argv) {
  CLI::App app{"privacy-preserving time series GAN benchmark harness"};
  app.require_subcommand(1);

  std::string config_path, out_override, method = "gswgan";
  uint64_t seed_override = 0;
  bool seed_given = false;
  double max_epsilon = 0.0;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    auto* opt = sub->add_option("--config", config_path, "run configuration JSON");
    if (needs_config) opt->required();
    sub->add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--out", out_override, "override the output directory");
  };

  auto* baseline = app.add_subcommand("baseline", "train the private baseline classifier");
  add_common(baseline);

  auto* train_gan_cmd = app.add_subcommand("train-gan", "train wgan/dpwgan/gswgan");
  add_common(train_gan_cmd);
  train_gan_cmd->add_option("--method", method, "wgan | dpwgan | gswgan");
  train_gan_cmd->add_option("--max-epsilon", max_epsilon, "stop once epsilon exceeds this cap");

  std::string checkpoint_path, generated_path, public_path, grid_path;
  int gen_n = 100;
  uint64_t gen_seed = 0;
  std::string gen_out = "generated_out";
  auto* generate = app.add_subcommand("generate", "sample a labeled dataset from a generator");
  generate->add_option("--checkpoint", checkpoint_path, "generator checkpoint")->required();
  generate->add_option("--n", gen_n, "number of samples");
  generate->add_option("--seed", gen_seed, "sampling seed");
  generate->add_option("--out", gen_out, "output directory");

  auto* evaluate = app.add_subcommand("evaluate", "four-way classifier evaluation");
  add_common(evaluate);
  evaluate->add_option("--generated", generated_path, "generated .ts dataset");
  evaluate->add_option("--checkpoint", checkpoint_path, "generator checkpoint");

  auto* distances = app.add_subcommand("distances", "pairwise L2 distance statistics");
  add_common(distances);
  distances->add_option("--public", public_path, "generated .ts dataset")->required();

  double perplexity = 30.0;
  auto* embed = app.add_subcommand("embed", "t-SNE embedding of private vs public data");
  add_common(embed);
  embed->add_option("--public", public_path, "generated .ts dataset")->required();
  embed->add_option("--perplexity", perplexity, "t-SNE perplexity");

  int k_overlay = 10;
  auto* plot = app.add_subcommand("plot-samples", "overlay plots of private and generated series");
  add_common(plot);
  plot->add_option("--public", public_path, "generated .ts dataset")->required();
  plot->add_option("--k-overlay", k_overlay, "private series per plot");

  auto* grid = app.add_subcommand("grid", "generator architecture grid");
  add_common(grid);
  grid->add_option("--grid", grid_path, "grid spec JSON")->required();
  grid->add_option("--method", method, "wgan | dpwgan | gswgan");

  std::vector<double> multipliers = {0.25, 0.5, 1.0, 1.5, 2.0};
  std::vector<std::string> methods = {"dp", "dpwgan", "gswgan"};
  auto* sweep = app.add_subcommand("noise-sweep", "noise multiplier sweep");
  add_common(sweep);
  sweep->add_option("--multipliers", multipliers, "noise multipliers");
  sweep->add_option("--methods", methods, "subset of: dp dpwgan gswgan");

  double acct_q = 0.01, acct_sigma = 1.0, acct_delta = 1e-5;
  int64_t acct_steps = 1;
  auto* acct = app.add_subcommand("accountant", "query the RDP accountant");
  acct->add_option("--q", acct_q, "sampling rate");
  acct->add_option("--sigma", acct_sigma, "noise multiplier");
  acct->add_option("--steps", acct_steps, "composed steps");
  acct->add_option("--delta", acct_delta, "target delta");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (acct->parsed()) return cmd_accountant(acct_q, acct_sigma, acct_steps, acct_delta);
    if (generate->parsed()) return cmd_generate(checkpoint_path, gen_n, gen_seed, gen_out);

    RunConfig cfg = load_config(config_path);
    json raw;
    {
      std::ifstream f(config_path);
      f >> raw;
    }
    if (seed_given) {
      cfg.seed = seed_override;
      cfg.train.seed = seed_override;
      raw["seed"] = seed_override;
    }
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (max_epsilon > 0.0) cfg.train.max_epsilon = max_epsilon;

    if (baseline->parsed()) return cmd_baseline(cfg, raw);
    if (train_gan_cmd->parsed()) return cmd_train_gan(cfg, raw, method);
    if (evaluate->parsed()) return cmd_evaluate(cfg, raw, generated_path, checkpoint_path);
    if (distances->parsed()) return cmd_distances(cfg, raw, public_path);
    if (embed->parsed()) return cmd_embed(cfg, raw, public_path, perplexity);
    if (plot->parsed()) return cmd_plot_samples(cfg, raw, public_path, k_overlay);
    if (grid->parsed()) return cmd_grid(cfg, raw, grid_path, method);
    if (sweep->parsed()) return cmd_noise_sweep(cfg, raw, multipliers, methods);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 2;
  }
  return 0;
}

}  // namespace dpts::cli
