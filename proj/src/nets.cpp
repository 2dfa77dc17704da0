#include "dpts/nets.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dpts/errors.hpp"

namespace dpts {

namespace {

constexpr double kLeakySlope = 0.2;

Tensor init_weight(Shape shape, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
  return Tensor::uniform(std::move(shape), bound, rng, true);
}

Tensor init_bias(int dim) { return Tensor::zeros({dim}, true); }

// Walks a parameter list in construction order.
struct ParamCursor {
  const std::vector<Tensor>& params;
  size_t pos = 0;
  const Tensor& next() {
    if (pos >= params.size()) throw ArchitectureError("parameter cursor ran past the layout");
    return params[pos++];
  }
};

int conv_out_length(int len, int kernel, int stride, int padding) {
  return (len + 2 * padding - kernel) / stride + 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// architecture descriptors

void GeneratorArch::validate() const {
  if (z_dim < 1) throw ArchitectureError("generator: z_dim must be positive");
  if (num_classes < 2) throw ArchitectureError("generator: need at least 2 classes");
  if (out_channels < 1 || out_length < 1) throw ArchitectureError("generator: bad output shape");
  if (variant == Variant::dense) {
    if (hidden.empty()) throw ArchitectureError("generator: dense variant needs hidden widths");
    for (int h : hidden)
      if (h < 1) throw ArchitectureError("generator: hidden widths must be positive");
    return;
  }
  if (filters.size() < 2) {
    throw ArchitectureError("generator: conv variant needs at least two filter counts");
  }
  if (kernel_sizes.size() + 1 != filters.size()) {
    throw ArchitectureError("generator: expected " + std::to_string(filters.size() - 1) +
                            " kernel sizes for " + std::to_string(filters.size()) + " filters");
  }
  for (int f : filters)
    if (f < 1) throw ArchitectureError("generator: filter counts must be positive");
  for (int k : kernel_sizes)
    if (k < 1) throw ArchitectureError("generator: kernel sizes must be positive");
  const int reachable = chain_output_length();
  if (reachable < out_length) {
    throw ArchitectureError("generator: upsampling chain reaches length " +
                            std::to_string(reachable) + " but target is " +
                            std::to_string(out_length) + "; increase base_length");
  }
}

int GeneratorArch::resolved_base_length() const {
  if (base_length > 0) return base_length;
  // smallest seed length whose chain output covers the target
  for (int b = 1; b <= out_length + 1; ++b) {
    int len = b;
    for (int k : kernel_sizes) len = (len - 1) * 2 - 2 * (k / 2) + k;
    if (len >= out_length) return b;
  }
  return out_length + 1;
}

int GeneratorArch::chain_output_length() const {
  int len = resolved_base_length();
  for (int k : kernel_sizes) len = (len - 1) * 2 - 2 * (k / 2) + k;
  return len;
}

nlohmann::json GeneratorArch::to_json() const {
  return {{"variant", variant == Variant::dense ? "dense" : "conv"},
          {"z_dim", z_dim},
          {"num_classes", num_classes},
          {"out_channels", out_channels},
          {"out_length", out_length},
          {"hidden", hidden},
          {"filters", filters},
          {"kernel_sizes", kernel_sizes},
          {"base_length", base_length}};
}

GeneratorArch GeneratorArch::from_json(const nlohmann::json& j) {
  GeneratorArch a;
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "dense") {
    a.variant = Variant::dense;
  } else if (variant == "conv") {
    a.variant = Variant::conv;
  } else {
    throw ArchitectureError("generator: unknown variant '" + variant + "'");
  }
  a.z_dim = j.at("z_dim").get<int>();
  a.num_classes = j.at("num_classes").get<int>();
  a.out_channels = j.at("out_channels").get<int>();
  a.out_length = j.at("out_length").get<int>();
  if (j.contains("hidden")) a.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("filters")) a.filters = j.at("filters").get<std::vector<int>>();
  if (j.contains("kernel_sizes")) a.kernel_sizes = j.at("kernel_sizes").get<std::vector<int>>();
  if (j.contains("base_length")) a.base_length = j.at("base_length").get<int>();
  a.validate();
  return a;
}

void CriticArch::validate() const {
  if (num_classes < 2) throw ArchitectureError("critic: need at least 2 classes");
  if (in_channels < 1 || length < 1) throw ArchitectureError("critic: bad input shape");
  if (variant == Variant::dense) {
    if (hidden.empty()) throw ArchitectureError("critic: dense variant needs hidden widths");
    for (int h : hidden)
      if (h < 1) throw ArchitectureError("critic: hidden widths must be positive");
    return;
  }
  if (filters.empty()) throw ArchitectureError("critic: conv variant needs filters");
  if (kernel_sizes.size() != filters.size()) {
    throw ArchitectureError("critic: kernel_sizes must match filters");
  }
  int len = length;
  for (size_t i = 0; i < filters.size(); ++i) {
    if (filters[i] < 1 || kernel_sizes[i] < 1) throw ArchitectureError("critic: bad conv stage");
    const int k = kernel_sizes[i];
    if (len + 2 * (k / 2) < k) {
      throw ArchitectureError("critic: kernel " + std::to_string(k) +
                              " does not fit length " + std::to_string(len));
    }
    len = conv_out_length(len, k, 2, k / 2);
    if (len < 1) throw ArchitectureError("critic: downsampling collapses the series");
  }
}

nlohmann::json CriticArch::to_json() const {
  return {{"variant", variant == Variant::dense ? "dense" : "conv"},
          {"num_classes", num_classes},
          {"in_channels", in_channels},
          {"length", length},
          {"hidden", hidden},
          {"filters", filters},
          {"kernel_sizes", kernel_sizes}};
}

CriticArch CriticArch::from_json(const nlohmann::json& j) {
  CriticArch a;
  const std::string variant = j.at("variant").get<std::string>();
  if (variant == "dense") {
    a.variant = Variant::dense;
  } else if (variant == "conv") {
    a.variant = Variant::conv;
  } else {
    throw ArchitectureError("critic: unknown variant '" + variant + "'");
  }
  a.num_classes = j.at("num_classes").get<int>();
  a.in_channels = j.at("in_channels").get<int>();
  a.length = j.at("length").get<int>();
  if (j.contains("hidden")) a.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("filters")) a.filters = j.at("filters").get<std::vector<int>>();
  if (j.contains("kernel_sizes")) a.kernel_sizes = j.at("kernel_sizes").get<std::vector<int>>();
  a.validate();
  return a;
}

void ClassifierArch::validate() const {
  if (depth < 1) throw ArchitectureError("classifier: depth must be at least 1");
  if (nb_filters < 1 || bottleneck < 1 || kernel < 1) {
    throw ArchitectureError("classifier: filters, bottleneck and kernel must be positive");
  }
  if (num_classes < 2) throw ArchitectureError("classifier: need at least 2 classes");
  if (in_channels < 1) throw ArchitectureError("classifier: bad channel count");
  if (length < 4) throw ArchitectureError("classifier: series too short, need length >= 4");
}

std::vector<int> ClassifierArch::branch_kernels() const {
  std::vector<int> ks;
  const int capped = std::min(kernel, length - 1);
  for (int i = 0; i < 3; ++i) {
    int k = std::max(1, capped >> i);
    if (k % 2 == 0) --k;  // symmetric same padding needs odd kernels
    ks.push_back(std::max(1, k));
  }
  return ks;
}

nlohmann::json ClassifierArch::to_json() const {
  return {{"depth", depth},           {"nb_filters", nb_filters},
          {"bottleneck", bottleneck}, {"kernel", kernel},
          {"num_classes", num_classes}, {"in_channels", in_channels},
          {"length", length}};
}

ClassifierArch ClassifierArch::from_json(const nlohmann::json& j) {
  ClassifierArch a;
  a.depth = j.at("depth").get<int>();
  a.nb_filters = j.at("nb_filters").get<int>();
  a.bottleneck = j.at("bottleneck").get<int>();
  a.kernel = j.at("kernel").get<int>();
  a.num_classes = j.at("num_classes").get<int>();
  a.in_channels = j.at("in_channels").get<int>();
  a.length = j.at("length").get<int>();
  a.validate();
  return a;
}

// ---------------------------------------------------------------------------
// generator

Generator::Generator(GeneratorArch arch, Rng& rng) : arch_(std::move(arch)) {
  arch_.validate();
  const int in_dim = arch_.z_dim + arch_.num_classes;
  auto push = [this](const std::string& name, Tensor t) {
    names_.push_back(name);
    params_.push_back(std::move(t));
  };
  if (arch_.variant == GeneratorArch::Variant::dense) {
    int prev = in_dim;
    for (size_t i = 0; i < arch_.hidden.size(); ++i) {
      push("dense" + std::to_string(i) + ".w", init_weight({prev, arch_.hidden[i]}, prev, rng));
      push("dense" + std::to_string(i) + ".b", init_bias(arch_.hidden[i]));
      prev = arch_.hidden[i];
    }
    const int out_dim = arch_.out_channels * arch_.out_length;
    push("head.w", init_weight({prev, out_dim}, prev, rng));
    push("head.b", init_bias(out_dim));
    return;
  }
  const int base = arch_.resolved_base_length();
  const int seed_dim = arch_.filters[0] * base;
  push("seed.w", init_weight({in_dim, seed_dim}, in_dim, rng));
  push("seed.b", init_bias(seed_dim));
  for (size_t i = 0; i + 1 < arch_.filters.size(); ++i) {
    const int k = arch_.kernel_sizes[i];
    push("up" + std::to_string(i) + ".k",
         init_weight({arch_.filters[i], arch_.filters[i + 1], k}, arch_.filters[i] * k, rng));
    push("up" + std::to_string(i) + ".b", init_bias(arch_.filters[i + 1]));
  }
  push("head.k", init_weight({arch_.out_channels, arch_.filters.back(), 1},
                             arch_.filters.back(), rng));
  push("head.b", init_bias(arch_.out_channels));
}

Tensor Generator::forward(Tape* tape, const Tensor& z, const std::vector<int>& labels) const {
  if (!z.defined() || z.rank() != 2 || z.dim(1) != arch_.z_dim) {
    throw DimensionError("generator: z must be [N x " + std::to_string(arch_.z_dim) + "]");
  }
  if (static_cast<int>(labels.size()) != z.dim(0)) {
    throw DimensionError("generator: label count does not match batch");
  }
  const int n = z.dim(0);
  ParamCursor cur{params_};
  Tensor h = ops::concat_cols(tape, z, ops::one_hot(labels, arch_.num_classes));
  if (arch_.variant == GeneratorArch::Variant::dense) {
    for (size_t i = 0; i < arch_.hidden.size(); ++i) {
      const Tensor& w = cur.next();
      const Tensor& b = cur.next();
      h = ops::leaky_relu(tape, ops::add_bias_cols(tape, ops::matmul(tape, h, w), b), kLeakySlope);
    }
    const Tensor& w = cur.next();
    const Tensor& b = cur.next();
    Tensor out = ops::sigmoid(tape, ops::add_bias_cols(tape, ops::matmul(tape, h, w), b));
    return ops::reshape(tape, out, {n, arch_.out_channels, arch_.out_length});
  }
  const Tensor& sw = cur.next();
  const Tensor& sb = cur.next();
  Tensor x = ops::leaky_relu(tape, ops::add_bias_cols(tape, ops::matmul(tape, h, sw), sb),
                             kLeakySlope);
  x = ops::reshape(tape, x, {n, arch_.filters[0], arch_.resolved_base_length()});
  for (size_t i = 0; i + 1 < arch_.filters.size(); ++i) {
    const Tensor& k = cur.next();
    const Tensor& b = cur.next();
    x = ops::conv_transpose1d(tape, x, k, b, 2, arch_.kernel_sizes[i] / 2);
    x = ops::leaky_relu(tape, x, kLeakySlope);
  }
  x = ops::crop_time(tape, x, arch_.out_length);
  const Tensor& hk = cur.next();
  const Tensor& hb = cur.next();
  return ops::sigmoid(tape, ops::conv1d(tape, x, hk, hb, 1, 0));
}

// ---------------------------------------------------------------------------
// critic

Critic::Critic(CriticArch arch, Rng& rng) : arch_(std::move(arch)) {
  arch_.validate();
  auto push = [this](const std::string& name, Tensor t) {
    names_.push_back(name);
    params_.push_back(std::move(t));
  };
  if (arch_.variant == CriticArch::Variant::dense) {
    int prev = arch_.in_channels * arch_.length + arch_.num_classes;
    for (size_t i = 0; i < arch_.hidden.size(); ++i) {
      push("dense" + std::to_string(i) + ".w", init_weight({prev, arch_.hidden[i]}, prev, rng));
      push("dense" + std::to_string(i) + ".b", init_bias(arch_.hidden[i]));
      prev = arch_.hidden[i];
    }
    push("head.w", init_weight({prev, 1}, prev, rng));
    push("head.b", init_bias(1));
    return;
  }
  int channels = arch_.in_channels + arch_.num_classes;
  int len = arch_.length;
  for (size_t i = 0; i < arch_.filters.size(); ++i) {
    const int k = arch_.kernel_sizes[i];
    push("down" + std::to_string(i) + ".k",
         init_weight({arch_.filters[i], channels, k}, channels * k, rng));
    push("down" + std::to_string(i) + ".b", init_bias(arch_.filters[i]));
    channels = arch_.filters[i];
    len = conv_out_length(len, k, 2, k / 2);
  }
  push("head.w", init_weight({channels * len, 1}, channels * len, rng));
  push("head.b", init_bias(1));
}

Tensor Critic::score(Tape* tape, const Tensor& x, const std::vector<int>& labels) const {
  if (!x.defined() || x.rank() != 3 || x.dim(1) != arch_.in_channels ||
      x.dim(2) != arch_.length) {
    throw DimensionError("critic: input must be [N x " + std::to_string(arch_.in_channels) +
                         " x " + std::to_string(arch_.length) + "], got " +
                         (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  }
  if (static_cast<int>(labels.size()) != x.dim(0)) {
    throw DimensionError("critic: label count does not match batch");
  }
  const int n = x.dim(0);
  ParamCursor cur{params_};
  if (arch_.variant == CriticArch::Variant::dense) {
    Tensor h = ops::concat_cols(tape, ops::reshape(tape, x, {n, arch_.in_channels * arch_.length}),
                                ops::one_hot(labels, arch_.num_classes));
    for (size_t i = 0; i < arch_.hidden.size(); ++i) {
      const Tensor& w = cur.next();
      const Tensor& b = cur.next();
      h = ops::leaky_relu(tape, ops::add_bias_cols(tape, ops::matmul(tape, h, w), b), kLeakySlope);
    }
    const Tensor& w = cur.next();
    const Tensor& b = cur.next();
    return ops::reshape(tape, ops::add_bias_cols(tape, ops::matmul(tape, h, w), b), {n});
  }
  Tensor h = ops::concat_channels(tape, x,
                                  ops::one_hot_channels(labels, arch_.num_classes, arch_.length));
  for (size_t i = 0; i < arch_.filters.size(); ++i) {
    const Tensor& k = cur.next();
    const Tensor& b = cur.next();
    h = ops::leaky_relu(tape, ops::conv1d(tape, h, k, b, 2, arch_.kernel_sizes[i] / 2),
                        kLeakySlope);
  }
  Tensor flat = ops::reshape(tape, h, {n, static_cast<int>(h.size() / n)});
  const Tensor& w = cur.next();
  const Tensor& b = cur.next();
  return ops::reshape(tape, ops::add_bias_cols(tape, ops::matmul(tape, flat, w), b), {n});
}

Tensor Critic::input_gradient(Tape* tape, const Tensor& x, const std::vector<int>& labels) const {
  const int n = x.dim(0);
  ParamCursor cur{params_};
  // forward pass, caching pre-activations for the a.e. leaky-relu masks
  std::vector<Tensor> preacts;
  if (arch_.variant == CriticArch::Variant::dense) {
    Tensor h = ops::concat_cols(tape, ops::reshape(tape, x, {n, arch_.in_channels * arch_.length}),
                                ops::one_hot(labels, arch_.num_classes));
    std::vector<const Tensor*> weights;
    for (size_t i = 0; i < arch_.hidden.size(); ++i) {
      const Tensor& w = cur.next();
      const Tensor& b = cur.next();
      Tensor a = ops::add_bias_cols(tape, ops::matmul(tape, h, w), b);
      preacts.push_back(a);
      weights.push_back(&w);
      h = ops::leaky_relu(tape, a, kLeakySlope);
    }
    const Tensor& w_out = cur.next();

    // reverse chain built from taped primitives
    Tensor g = ops::matmul(tape, Tensor::full({n, 1}, 1.0), ops::transpose(tape, w_out));
    for (size_t i = arch_.hidden.size(); i-- > 0;) {
      g = ops::mul(tape, g, ops::leaky_relu_mask(preacts[i], kLeakySlope));
      g = ops::matmul(tape, g, ops::transpose(tape, *weights[i]));
    }
    g = ops::slice_cols(tape, g, 0, arch_.in_channels * arch_.length);
    return ops::reshape(tape, g, {n, arch_.in_channels, arch_.length});
  }

  Tensor h = ops::concat_channels(tape, x,
                                  ops::one_hot_channels(labels, arch_.num_classes, arch_.length));
  std::vector<const Tensor*> kernels;
  std::vector<int> in_lengths;
  int len = arch_.length;
  for (size_t i = 0; i < arch_.filters.size(); ++i) {
    const Tensor& k = cur.next();
    const Tensor& b = cur.next();
    in_lengths.push_back(len);
    Tensor a = ops::conv1d(tape, h, k, b, 2, arch_.kernel_sizes[i] / 2);
    preacts.push_back(a);
    kernels.push_back(&k);
    h = ops::leaky_relu(tape, a, kLeakySlope);
    len = a.dim(2);
  }
  const int flat_dim = static_cast<int>(h.size() / n);
  const Tensor& w_out = cur.next();

  Tensor g = ops::matmul(tape, Tensor::full({n, 1}, 1.0), ops::transpose(tape, w_out));
  g = ops::reshape(tape, g, {n, arch_.filters.back(), len});
  for (size_t i = arch_.filters.size(); i-- > 0;) {
    g = ops::mul(tape, g, ops::leaky_relu_mask(preacts[i], kLeakySlope));
    g = ops::conv_transpose1d(tape, g, *kernels[i], Tensor(), 2, arch_.kernel_sizes[i] / 2,
                              in_lengths[i]);
  }
  (void)flat_dim;
  return ops::slice_channels(tape, g, 0, arch_.in_channels);
}

// ---------------------------------------------------------------------------
// classifier

Classifier::Classifier(ClassifierArch arch, Rng& rng) : arch_(std::move(arch)) {
  arch_.validate();
  const std::vector<int> ks = arch_.branch_kernels();
  auto push = [this](const std::string& name, Tensor t) {
    names_.push_back(name);
    params_.push_back(std::move(t));
  };
  int channels = arch_.in_channels;
  int residual_channels = arch_.in_channels;
  for (int b = 0; b < arch_.depth; ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    const bool use_bottleneck = channels > arch_.bottleneck;
    int branch_in = channels;
    if (use_bottleneck) {
      push(prefix + "bottleneck.k", init_weight({arch_.bottleneck, channels, 1}, channels, rng));
      push(prefix + "bottleneck.b", init_bias(arch_.bottleneck));
      branch_in = arch_.bottleneck;
    }
    for (int i = 0; i < 3; ++i) {
      push(prefix + "conv" + std::to_string(i) + ".k",
           init_weight({arch_.nb_filters, branch_in, ks[i]}, branch_in * ks[i], rng));
      push(prefix + "conv" + std::to_string(i) + ".b", init_bias(arch_.nb_filters));
    }
    push(prefix + "pool.k", init_weight({arch_.nb_filters, channels, 1}, channels, rng));
    push(prefix + "pool.b", init_bias(arch_.nb_filters));
    channels = 4 * arch_.nb_filters;
    if (b % 3 == 2) {
      push(prefix + "shortcut.k", init_weight({channels, residual_channels, 1},
                                              residual_channels, rng));
      push(prefix + "shortcut.b", init_bias(channels));
      residual_channels = channels;
    }
  }
  push("head.w", init_weight({channels, arch_.num_classes}, channels, rng));
  push("head.b", init_bias(arch_.num_classes));
}

Classifier::Out Classifier::forward(Tape* tape, const Tensor& x) const {
  if (!x.defined() || x.rank() != 3 || x.dim(1) != arch_.in_channels ||
      x.dim(2) != arch_.length) {
    throw DimensionError("classifier: input must be [N x " + std::to_string(arch_.in_channels) +
                         " x " + std::to_string(arch_.length) + "], got " +
                         (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  }
  const int n = x.dim(0);
  ParamCursor cur{params_};
  Tensor h = x;
  Tensor residual = x;
  int channels = arch_.in_channels;
  for (int b = 0; b < arch_.depth; ++b) {
    const bool use_bottleneck = channels > arch_.bottleneck;
    Tensor branch_src = h;
    if (use_bottleneck) {
      const Tensor& bk = cur.next();
      const Tensor& bb = cur.next();
      branch_src = ops::conv1d(tape, h, bk, bb, 1, 0);
    }
    std::vector<Tensor> branches;
    const std::vector<int> ks = arch_.branch_kernels();
    for (int i = 0; i < 3; ++i) {
      const Tensor& k = cur.next();
      const Tensor& bias = cur.next();
      branches.push_back(ops::conv1d(tape, branch_src, k, bias, 1, ks[i] / 2));
    }
    const Tensor& pk = cur.next();
    const Tensor& pb = cur.next();
    Tensor pooled = ops::conv1d(tape, ops::maxpool1d_same(tape, h, 3), pk, pb, 1, 0);
    Tensor cat = ops::concat_channels(tape, ops::concat_channels(tape, branches[0], branches[1]),
                                      ops::concat_channels(tape, branches[2], pooled));
    channels = 4 * arch_.nb_filters;
    if (b % 3 == 2) {
      const Tensor& sk = cur.next();
      const Tensor& sb = cur.next();
      Tensor shortcut = ops::conv1d(tape, residual, sk, sb, 1, 0);
      h = ops::relu(tape, ops::add(tape, cat, shortcut));
      residual = h;
    } else {
      h = ops::relu(tape, cat);
    }
  }
  Tensor latent = ops::mean_over_time(tape, h);
  const Tensor& w = cur.next();
  const Tensor& bias = cur.next();
  Tensor logits = ops::add_bias_cols(tape, ops::matmul(tape, latent, w), bias);
  (void)n;
  return {logits, latent};
}

// ---------------------------------------------------------------------------
// checkpoints

uint32_t crc32(const unsigned char* data, size_t len) {
  static uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320U ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    ready = true;
  }
  uint32_t c = 0xffffffffU;
  for (size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffU] ^ (c >> 8);
  return c ^ 0xffffffffU;
}

namespace {

constexpr uint32_t kCheckpointVersion = 1;

void put_u32(std::string& out, uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }
void put_u64(std::string& out, uint64_t v) { out.append(reinterpret_cast<const char*>(&v), 8); }

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  void need(size_t n) const {
    if (pos + n > buf.size()) throw CorruptionError("checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t v;
    std::memcpy(&v, buf.data() + pos, 4);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v;
    std::memcpy(&v, buf.data() + pos, 8);
    pos += 8;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace

void checkpoint_save(const std::string& path, const std::string& kind,
                     const nlohmann::json& arch, const std::vector<std::string>& names,
                     const std::vector<Tensor>& params) {
  if (names.size() != params.size()) throw ArgumentError("checkpoint_save: name/param arity mismatch");
  std::string buf = "DTSF";
  put_u32(buf, kCheckpointVersion);
  const std::string arch_str = arch.dump();
  put_u32(buf, static_cast<uint32_t>(kind.size()));
  buf += kind;
  put_u32(buf, static_cast<uint32_t>(arch_str.size()));
  buf += arch_str;
  put_u32(buf, static_cast<uint32_t>(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    put_u32(buf, static_cast<uint32_t>(names[i].size()));
    buf += names[i];
    const auto& shape = params[i].shape();
    put_u32(buf, static_cast<uint32_t>(shape.size()));
    for (int d : shape) put_u32(buf, static_cast<uint32_t>(d));
    auto v = params[i].values();
    put_u64(buf, static_cast<uint64_t>(v.size()));
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
  }
  put_u32(buf, crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size()));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ArgumentError("checkpoint_save: cannot write '" + path + "'");
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw ArgumentError("checkpoint_save: short write to '" + path + "'");
}

Checkpoint checkpoint_load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CorruptionError("checkpoint_load: cannot open '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  const std::string buf = os.str();
  if (buf.size() < 12 || buf.compare(0, 4, "DTSF") != 0) {
    throw CorruptionError("checkpoint_load: bad magic in '" + path + "'");
  }
  uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + buf.size() - 4, 4);
  const uint32_t actual =
      crc32(reinterpret_cast<const unsigned char*>(buf.data()), buf.size() - 4);
  if (stored_crc != actual) throw CorruptionError("checkpoint_load: checksum mismatch");

  Reader r{buf, 4};
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint_load: format version " + std::to_string(version) +
                       ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.kind = r.bytes(r.u32());
  ckpt.arch = nlohmann::json::parse(r.bytes(r.u32()));
  const uint32_t count = r.u32();
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.bytes(r.u32());
    const uint32_t rank = r.u32();
    Shape shape;
    for (uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<int>(r.u32()));
    const uint64_t numel = r.u64();
    if (numel != static_cast<uint64_t>(shape_numel(shape))) {
      throw CorruptionError("checkpoint_load: parameter size disagrees with shape");
    }
    r.need(numel * sizeof(double));
    std::vector<double> values(numel);
    std::memcpy(values.data(), buf.data() + r.pos, numel * sizeof(double));
    r.pos += numel * sizeof(double);
    ckpt.params.emplace_back(std::move(name),
                             Tensor::from_values(std::move(shape), std::move(values), true));
  }
  return ckpt;
}

namespace {

template <typename Net>
void fill_params(Net& net, const Checkpoint& ckpt) {
  if (ckpt.params.size() != net.params().size()) {
    throw CorruptionError("checkpoint: parameter count does not match the architecture");
  }
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    if (ckpt.params[i].first != net.param_names()[i]) {
      throw CorruptionError("checkpoint: parameter '" + ckpt.params[i].first +
                            "' does not match layout name '" + net.param_names()[i] + "'");
    }
    if (!(ckpt.params[i].second.shape() == net.params()[i].shape())) {
      throw CorruptionError("checkpoint: shape mismatch on '" + ckpt.params[i].first + "'");
    }
    auto src = ckpt.params[i].second.values();
    auto dst = net.params()[i].values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace

Generator generator_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "generator") throw CorruptionError("checkpoint holds a " + ckpt.kind + ", not a generator");
  Rng rng(0);
  Generator g(GeneratorArch::from_json(ckpt.arch), rng);
  fill_params(g, ckpt);
  return g;
}

Critic critic_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "critic") throw CorruptionError("checkpoint holds a " + ckpt.kind + ", not a critic");
  Rng rng(0);
  Critic c(CriticArch::from_json(ckpt.arch), rng);
  fill_params(c, ckpt);
  return c;
}

Classifier classifier_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "classifier") throw CorruptionError("checkpoint holds a " + ckpt.kind + ", not a classifier");
  Rng rng(0);
  Classifier c(ClassifierArch::from_json(ckpt.arch), rng);
  fill_params(c, ckpt);
  return c;
}

void save_generator(const std::string& path, const Generator& g) {
  checkpoint_save(path, "generator", g.arch().to_json(), g.param_names(), g.params());
}

void save_critic(const std::string& path, const Critic& c) {
  checkpoint_save(path, "critic", c.arch().to_json(), c.param_names(), c.params());
}

void save_classifier(const std::string& path, const Classifier& c) {
  checkpoint_save(path, "classifier", c.arch().to_json(), c.param_names(), c.params());
}

}  // namespace dpts
