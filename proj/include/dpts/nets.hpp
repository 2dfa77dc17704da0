#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "dpts/rng.hpp"
#include "dpts/tensor.hpp"

namespace dpts {

// Conditional generator: label one-hot concatenated to z. Dense variant is an
// MLP with leaky-relu hidden layers; conv variant projects the seed to
// [filters[0] x base_length] and upsamples with stride-2 transposed
// convolutions (kernel_sizes has one entry fewer than filters), then crops
// centered to the target length. Output activation is sigmoid either way.
struct GeneratorArch {
  enum class Variant { dense, conv };
  Variant variant = Variant::dense;
  int z_dim = 32;
  int num_classes = 2;
  int out_channels = 1;
  int out_length = 64;
  std::vector<int> hidden = {128, 128};  // dense
  std::vector<int> filters;              // conv; filters[0] feeds the seed projection
  std::vector<int> kernel_sizes;         // conv
  int base_length = 0;                   // conv; 0 derives the smallest workable value

  void validate() const;
  int resolved_base_length() const;
  int chain_output_length() const;  // conv pre-crop length

  nlohmann::json to_json() const;
  static GeneratorArch from_json(const nlohmann::json& j);
};

// Wasserstein critic; unbounded scalar output, no sigmoid. Conv variant
// downsamples with stride-2 convolutions; labels enter as K constant channels
// (conv) or K one-hot columns (dense, after flattening).
struct CriticArch {
  enum class Variant { dense, conv };
  Variant variant = Variant::dense;
  int num_classes = 2;
  int in_channels = 1;
  int length = 64;
  std::vector<int> hidden = {128, 128};  // dense
  std::vector<int> filters;              // conv
  std::vector<int> kernel_sizes;         // conv, same count as filters

  void validate() const;
  nlohmann::json to_json() const;
  static CriticArch from_json(const nlohmann::json& j);
};

// Reduced InceptionTime: `depth` inception blocks, three conv branches with
// kernels {k, k/2, k/4} (rounded down to odd, capped at length-1) plus a
// max-pool bottleneck branch, residual connections every third block, global
// average pooling, linear head. No normalization layers anywhere.
struct ClassifierArch {
  int depth = 6;
  int nb_filters = 32;
  int bottleneck = 32;
  int kernel = 40;
  int num_classes = 2;
  int in_channels = 1;
  int length = 64;

  void validate() const;
  int latent_dim() const { return 4 * nb_filters; }
  std::vector<int> branch_kernels() const;

  nlohmann::json to_json() const;
  static ClassifierArch from_json(const nlohmann::json& j);
};

class Generator {
 public:
  Generator(GeneratorArch arch, Rng& rng);

  // z [N x z_dim] -> [N x C x L], values in (0,1).
  Tensor forward(Tape* tape, const Tensor& z, const std::vector<int>& labels) const;

  const GeneratorArch& arch() const { return arch_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }

 private:
  GeneratorArch arch_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

class Critic {
 public:
  Critic(CriticArch arch, Rng& rng);

  // x [N x C x L] -> [N] unbounded scores.
  Tensor score(Tape* tape, const Tensor& x, const std::vector<int>& labels) const;

  // d(sum_i score_i)/dx as a taped expression: differentiating anything built
  // on the result reaches the critic parameters, which is what the gradient
  // penalty needs.
  Tensor input_gradient(Tape* tape, const Tensor& x, const std::vector<int>& labels) const;

  const CriticArch& arch() const { return arch_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }

 private:
  CriticArch arch_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

class Classifier {
 public:
  Classifier(ClassifierArch arch, Rng& rng);

  struct Out {
    Tensor logits;  // [N x K]
    Tensor latent;  // [N x 4*nb_filters], the pooled feature space
  };
  Out forward(Tape* tape, const Tensor& x) const;

  const ClassifierArch& arch() const { return arch_; }
  std::vector<Tensor>& params() { return params_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::string>& param_names() const { return names_; }

 private:
  ClassifierArch arch_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
};

// Versioned binary checkpoint: 'DTSF' magic, format version, net kind and
// architecture descriptor, named parameter blobs, trailing CRC-32.
struct Checkpoint {
  std::string kind;  // "generator" | "critic" | "classifier"
  nlohmann::json arch;
  std::vector<std::pair<std::string, Tensor>> params;
};

void checkpoint_save(const std::string& path, const std::string& kind,
                     const nlohmann::json& arch, const std::vector<std::string>& names,
                     const std::vector<Tensor>& params);
Checkpoint checkpoint_load(const std::string& path);

Generator generator_from_checkpoint(const Checkpoint& ckpt);
Critic critic_from_checkpoint(const Checkpoint& ckpt);
Classifier classifier_from_checkpoint(const Checkpoint& ckpt);

void save_generator(const std::string& path, const Generator& g);
void save_critic(const std::string& path, const Critic& c);
void save_classifier(const std::string& path, const Classifier& c);

uint32_t crc32(const unsigned char* data, size_t len);

}  // namespace dpts
