#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dpts/rng.hpp"
#include "dpts/tensor.hpp"

namespace dpts {

enum class Split { train, test };

// Two-stage normalization fitted on the train split: standardize per channel,
// then map the standardized train range onto [0,1].
struct NormalizationMeta {
  struct Channel {
    double mean = 0.0;
    double stddev = 1.0;
    double min = 0.0;  // of the standardized train values
    double max = 1.0;
    bool constant = false;
  };
  std::vector<Channel> channels;
};

struct TimeSeriesDataset {
  Tensor samples;  // [n x channels x length]
  std::vector<int> labels;
  std::vector<std::string> class_names;
  Split split = Split::train;
  std::optional<NormalizationMeta> norm_meta;
  std::string problem_name = "unnamed";

  int n() const { return samples.defined() ? samples.dim(0) : 0; }
  int channels() const { return samples.dim(1); }
  int length() const { return samples.dim(2); }
  int num_classes() const { return static_cast<int>(class_names.size()); }

  // Checks the structural invariants; throws on violation.
  void validate() const;

  uint64_t content_hash() const;
};

// UCR/UEA `.ts` reader: '@'-prefixed header, '@data' marker, one record per
// line with ':'-separated channels, comma-separated values, label token last.
// '#' lines are comments. Labels map to [0,K) in header vocabulary order.
TimeSeriesDataset parse_ts(const std::string& text);
TimeSeriesDataset load_ts_file(const std::string& path);

// Canonical emission; parse_ts(serialize_ts(d)) reproduces d byte-for-byte
// when d came from a canonical file.
std::string serialize_ts(const TimeSeriesDataset& data);
void save_ts_file(const TimeSeriesDataset& data, const std::string& path);

// Label-first CSV rows: label, then channels*length values in channel-major
// order. The label vocabulary is the set of distinct tokens sorted
// lexicographically.
TimeSeriesDataset parse_csv(const std::string& text, int channels, int length);

NormalizationMeta fit_normalizer(const TimeSeriesDataset& train);
TimeSeriesDataset apply_normalizer(const TimeSeriesDataset& data, const NormalizationMeta& meta);

enum class SyntheticKind { sine_vs_noise, freq_classes };

struct SyntheticSpec {
  int classes = 2;
  int n_per_class = 100;
  int length = 64;
  int channels = 1;
  SyntheticKind kind = SyntheticKind::sine_vs_noise;
  uint64_t seed = 0;
};

// Deterministic desk-scale datasets. sine_vs_noise: class 0 is a fixed-
// frequency sinusoid at 10 dB SNR with random phase, class 1 is power-matched
// white noise. freq_classes: class k is a sinusoid of k+1 cycles per window.
std::pair<TimeSeriesDataset, TimeSeriesDataset> make_synthetic(const SyntheticSpec& spec);

// Uniform without-replacement batch. With `conditional`, the label of each
// slot is drawn uniformly over classes first, then a sample of that class.
std::pair<Tensor, std::vector<int>> sample_batch(const TimeSeriesDataset& data, int batch_size,
                                                 Rng& rng, bool conditional);

// Deterministic shuffled split used for classifier validation.
std::pair<TimeSeriesDataset, TimeSeriesDataset> split_off_validation(const TimeSeriesDataset& data,
                                                                     double val_fraction, Rng& rng);

// Subset by explicit row indices (keeps metadata).
TimeSeriesDataset take_rows(const TimeSeriesDataset& data, const std::vector<int>& rows);

}  // namespace dpts
