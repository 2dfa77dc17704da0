#include "dpts/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dpts/errors.hpp"

namespace dpts {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& token, int line_no) {
  const std::string t = trim(token);
  if (t == "?" || t.empty()) {
    throw FormatError("line " + std::to_string(line_no) + ": missing values are unsupported");
  }
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw FormatError("line " + std::to_string(line_no) + ": bad numeric token '" + t + "'");
  }
  return v;
}

// Shortest representation that round-trips exactly.
std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace

void TimeSeriesDataset::validate() const {
  if (!samples.defined() || samples.rank() != 3) {
    throw DimensionError("dataset samples must be [n x channels x length]");
  }
  if (static_cast<int>(labels.size()) != n()) {
    throw DimensionError("dataset has " + std::to_string(n()) + " samples but " +
                         std::to_string(labels.size()) + " labels");
  }
  const int k = num_classes();
  for (int y : labels) {
    if (y < 0 || y >= k) {
      throw ArgumentError("label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    }
  }
}

uint64_t TimeSeriesDataset::content_hash() const {
  uint64_t h = 1469598103934665603ULL;  // FNV-1a
  auto mix_bytes = [&h](const void* p, size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  const int dims[3] = {n(), channels(), length()};
  mix_bytes(dims, sizeof(dims));
  auto v = samples.values();
  mix_bytes(v.data(), v.size() * sizeof(double));
  mix_bytes(labels.data(), labels.size() * sizeof(int));
  return h;
}

TimeSeriesDataset parse_ts(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;

  std::string problem_name = "unnamed";
  std::vector<std::string> class_names;
  bool saw_class_label = false;
  bool class_label_true = false;
  bool saw_data = false;
  int declared_dims = -1;

  // header
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t[0] != '@') {
      throw FormatError("line " + std::to_string(line_no) + ": expected '@' header before data");
    }
    std::istringstream hs(t);
    std::string key;
    hs >> key;
    const std::string lkey = lower(key);
    if (lkey == "@data") {
      saw_data = true;
      break;
    } else if (lkey == "@problemname") {
      hs >> problem_name;
    } else if (lkey == "@classlabel") {
      std::string flag;
      hs >> flag;
      saw_class_label = true;
      class_label_true = lower(flag) == "true";
      std::string name;
      while (hs >> name) class_names.push_back(name);
    } else if (lkey == "@dimensions") {
      hs >> declared_dims;
    } else if (lkey == "@equallength") {
      std::string flag;
      hs >> flag;
      if (lower(flag) == "false") {
        throw FormatError("line " + std::to_string(line_no) +
                          ": variable-length series are unsupported");
      }
    }
    // @univariate, @seriesLength, @timeStamps, @missing: informative only
  }
  if (!saw_data) {
    throw FormatError("line " + std::to_string(line_no) + ": missing @data marker");
  }
  if (!saw_class_label || !class_label_true || class_names.empty()) {
    throw FormatError("unlabeled dataset unsupported (@classLabel true <names> required)");
  }

  std::vector<std::vector<double>> rows;  // flattened channel-major per record
  std::vector<int> labels;
  int channels = -1, length = -1;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> parts = split_on(t, ':');
    if (parts.size() < 2) {
      throw FormatError("line " + std::to_string(line_no) + ": record needs '<values>:<label>'");
    }
    const std::string label_token = trim(parts.back());
    parts.pop_back();
    auto it = std::find(class_names.begin(), class_names.end(), label_token);
    if (it == class_names.end()) {
      throw FormatError("line " + std::to_string(line_no) + ": unknown label token '" +
                        label_token + "'");
    }
    labels.push_back(static_cast<int>(it - class_names.begin()));

    if (channels == -1) {
      channels = static_cast<int>(parts.size());
      if (declared_dims > 0 && declared_dims != channels) {
        throw FormatError("line " + std::to_string(line_no) + ": record has " +
                          std::to_string(channels) + " channels, header declared " +
                          std::to_string(declared_dims));
      }
    } else if (static_cast<int>(parts.size()) != channels) {
      throw FormatError("line " + std::to_string(line_no) + ": expected " +
                        std::to_string(channels) + " channels, got " +
                        std::to_string(parts.size()));
    }

    std::vector<double> flat;
    for (const std::string& channel : parts) {
      std::vector<std::string> tokens = split_on(channel, ',');
      if (length == -1) {
        length = static_cast<int>(tokens.size());
      } else if (static_cast<int>(tokens.size()) != length) {
        throw FormatError("line " + std::to_string(line_no) + ": ragged series length " +
                          std::to_string(tokens.size()) + ", expected " + std::to_string(length));
      }
      for (const std::string& tok : tokens) flat.push_back(parse_double(tok, line_no));
    }
    rows.push_back(std::move(flat));
  }
  if (rows.empty()) {
    throw FormatError("line " + std::to_string(line_no) + ": no data records after @data");
  }

  TimeSeriesDataset out;
  out.problem_name = problem_name;
  out.class_names = std::move(class_names);
  out.labels = std::move(labels);
  std::vector<double> values;
  values.reserve(rows.size() * rows[0].size());
  for (auto& r : rows) values.insert(values.end(), r.begin(), r.end());
  out.samples = Tensor::from_values({static_cast<int>(rows.size()), channels, length},
                                    std::move(values));
  out.validate();
  return out;
}

TimeSeriesDataset load_ts_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_ts(buf.str());
}

std::string serialize_ts(const TimeSeriesDataset& data) {
  data.validate();
  std::ostringstream os;
  os << "@problemName " << data.problem_name << "\n";
  os << "@timeStamps false\n";
  os << "@missing false\n";
  os << "@univariate " << (data.channels() == 1 ? "true" : "false") << "\n";
  os << "@dimensions " << data.channels() << "\n";
  os << "@equalLength true\n";
  os << "@seriesLength " << data.length() << "\n";
  os << "@classLabel true";
  for (const auto& name : data.class_names) os << " " << name;
  os << "\n@data\n";
  auto v = data.samples.values();
  const int c = data.channels(), len = data.length();
  for (int i = 0; i < data.n(); ++i) {
    for (int ch = 0; ch < c; ++ch) {
      if (ch) os << ":";
      for (int t = 0; t < len; ++t) {
        if (t) os << ",";
        os << format_double(v[(i * c + ch) * len + t]);
      }
    }
    os << ":" << data.class_names[data.labels[i]] << "\n";
  }
  return os.str();
}

void save_ts_file(const TimeSeriesDataset& data, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f << serialize_ts(data);
}

TimeSeriesDataset parse_csv(const std::string& text, int channels, int length) {
  if (channels <= 0 || length <= 0) throw ArgumentError("parse_csv: channels/length must be positive");
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::string> label_tokens;
  std::vector<std::vector<double>> rows;

  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::vector<std::string> tokens = split_on(t, ',');
    const size_t expect = 1 + static_cast<size_t>(channels) * length;
    if (tokens.size() != expect) {
      throw FormatError("row " + std::to_string(line_no) + ": expected " + std::to_string(expect) +
                        " fields, got " + std::to_string(tokens.size()));
    }
    label_tokens.push_back(trim(tokens[0]));
    std::vector<double> flat;
    flat.reserve(tokens.size() - 1);
    for (size_t j = 1; j < tokens.size(); ++j) flat.push_back(parse_double(tokens[j], line_no));
    rows.push_back(std::move(flat));
  }
  if (rows.empty()) throw FormatError("parse_csv: no data rows");

  std::vector<std::string> vocab = label_tokens;
  std::sort(vocab.begin(), vocab.end());
  vocab.erase(std::unique(vocab.begin(), vocab.end()), vocab.end());

  TimeSeriesDataset out;
  out.class_names = vocab;
  out.labels.reserve(rows.size());
  for (const auto& tok : label_tokens) {
    out.labels.push_back(static_cast<int>(
        std::lower_bound(vocab.begin(), vocab.end(), tok) - vocab.begin()));
  }
  std::vector<double> values;
  values.reserve(rows.size() * rows[0].size());
  for (auto& r : rows) values.insert(values.end(), r.begin(), r.end());
  out.samples =
      Tensor::from_values({static_cast<int>(rows.size()), channels, length}, std::move(values));
  out.validate();
  return out;
}

NormalizationMeta fit_normalizer(const TimeSeriesDataset& train) {
  train.validate();
  if (train.split != Split::train) throw ArgumentError("fit_normalizer: expects the train split");
  if (train.n() < 2) throw ArgumentError("fit_normalizer: needs at least 2 samples");

  const int c = train.channels(), len = train.length(), n = train.n();
  auto v = train.samples.values();
  NormalizationMeta meta;
  meta.channels.resize(c);
  for (int ch = 0; ch < c; ++ch) {
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < len; ++t) {
        const double x = v[(i * c + ch) * len + t];
        sum += x;
        sq += x * x;
      }
    const double count = static_cast<double>(n) * len;
    const double mean = sum / count;
    const double var = std::max(0.0, sq / count - mean * mean);
    auto& m = meta.channels[ch];
    m.mean = mean;
    m.stddev = std::sqrt(var);
    if (m.stddev < 1e-12) {
      m.constant = true;
      m.stddev = 1.0;
      m.min = 0.0;
      m.max = 1.0;
      continue;
    }
    double mn = std::numeric_limits<double>::infinity();
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < len; ++t) {
        const double z = (v[(i * c + ch) * len + t] - mean) / m.stddev;
        mn = std::min(mn, z);
        mx = std::max(mx, z);
      }
    m.min = mn;
    m.max = mx;
  }
  return meta;
}

TimeSeriesDataset apply_normalizer(const TimeSeriesDataset& data, const NormalizationMeta& meta) {
  data.validate();
  if (static_cast<int>(meta.channels.size()) != data.channels()) {
    throw DimensionError("apply_normalizer: meta has " + std::to_string(meta.channels.size()) +
                         " channels, data has " + std::to_string(data.channels()));
  }
  TimeSeriesDataset out = data;
  out.samples = data.samples.detach();
  out.norm_meta = meta;
  const int c = data.channels(), len = data.length(), n = data.n();
  auto v = out.samples.values();
  for (int ch = 0; ch < c; ++ch) {
    const auto& m = meta.channels[ch];
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < len; ++t) {
        double& x = v[(i * c + ch) * len + t];
        if (m.constant) {
          x = 0.5;
        } else {
          const double z = (x - m.mean) / m.stddev;
          x = std::clamp((z - m.min) / (m.max - m.min), 0.0, 1.0);
        }
      }
  }
  return out;
}

std::pair<TimeSeriesDataset, TimeSeriesDataset> make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2) throw ArgumentError("make_synthetic: need at least 2 classes");
  if (spec.length < 16) throw ArgumentError("make_synthetic: length must be >= 16");
  if (spec.n_per_class < 1) throw ArgumentError("make_synthetic: n_per_class must be >= 1");
  if (spec.channels < 1) throw ArgumentError("make_synthetic: channels must be >= 1");
  if (spec.kind == SyntheticKind::sine_vs_noise && spec.classes != 2) {
    throw ArgumentError("make_synthetic: sine_vs_noise is a two-class problem");
  }

  const double two_pi = 6.283185307179586476925286766559;
  // 10 dB SNR around a unit-amplitude sinusoid (signal power 1/2).
  const double sine_noise_std = std::sqrt(0.05);
  const double white_noise_std = std::sqrt(0.55);  // power-matched to class 0

  auto build = [&](Rng rng, Split split) {
    const int n = spec.classes * spec.n_per_class;
    Tensor samples = Tensor::zeros({n, spec.channels, spec.length});
    std::vector<int> labels(n);
    auto v = samples.values();
    for (int i = 0; i < n; ++i) {
      const int cls = i % spec.classes;
      labels[i] = cls;
      for (int ch = 0; ch < spec.channels; ++ch) {
        double* row = &v[(i * spec.channels + ch) * spec.length];
        const double phase = rng.uniform(0.0, two_pi);
        if (spec.kind == SyntheticKind::sine_vs_noise) {
          if (cls == 0) {
            for (int t = 0; t < spec.length; ++t)
              row[t] = std::sin(two_pi * 4.0 * t / spec.length + phase) +
                       rng.normal(0.0, sine_noise_std);
          } else {
            for (int t = 0; t < spec.length; ++t) row[t] = rng.normal(0.0, white_noise_std);
          }
        } else {
          const double cycles = static_cast<double>(cls + 1);
          for (int t = 0; t < spec.length; ++t)
            row[t] = std::sin(two_pi * cycles * t / spec.length + phase) + rng.normal(0.0, 0.1);
        }
      }
    }
    TimeSeriesDataset d;
    d.problem_name =
        spec.kind == SyntheticKind::sine_vs_noise ? "SineVsNoise" : "FreqClasses";
    d.samples = std::move(samples);
    d.labels = std::move(labels);
    for (int k = 0; k < spec.classes; ++k) d.class_names.push_back(std::to_string(k));
    d.split = split;
    d.validate();
    return d;
  };

  Rng master(spec.seed);
  TimeSeriesDataset train = build(master.fork(0x7261696e), Split::train);
  TimeSeriesDataset test = build(master.fork(0x74657374), Split::test);
  return {train, test};
}

std::pair<Tensor, std::vector<int>> sample_batch(const TimeSeriesDataset& data, int batch_size,
                                                 Rng& rng, bool conditional) {
  if (batch_size <= 0) throw ArgumentError("sample_batch: batch_size must be positive");
  if (batch_size > data.n()) {
    throw ArgumentError("sample_batch: batch_size " + std::to_string(batch_size) + " exceeds n " +
                        std::to_string(data.n()));
  }
  std::vector<int> chosen(batch_size);
  if (!conditional) {
    std::vector<int> idx(data.n());
    for (int i = 0; i < data.n(); ++i) idx[i] = i;
    for (int i = 0; i < batch_size; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<uint64_t>(data.n() - i)));
      std::swap(idx[i], idx[j]);
      chosen[i] = idx[i];
    }
  } else {
    const int k = data.num_classes();
    std::vector<std::vector<int>> pools(k);
    for (int i = 0; i < data.n(); ++i) pools[data.labels[i]].push_back(i);
    std::vector<size_t> remaining(k);
    for (int c = 0; c < k; ++c) remaining[c] = pools[c].size();
    for (int i = 0; i < batch_size; ++i) {
      const int cls = static_cast<int>(rng.below(static_cast<uint64_t>(k)));
      if (pools[cls].empty()) throw ArgumentError("sample_batch: class " + std::to_string(cls) + " empty");
      if (remaining[cls] == 0) remaining[cls] = pools[cls].size();  // pool exhausted: recycle
      const size_t j = rng.below(remaining[cls]);
      std::swap(pools[cls][j], pools[cls][remaining[cls] - 1]);
      chosen[i] = pools[cls][remaining[cls] - 1];
      --remaining[cls];
    }
  }

  const int c = data.channels(), len = data.length();
  Tensor batch = Tensor::zeros({batch_size, c, len});
  std::vector<int> labels(batch_size);
  auto src = data.samples.values();
  auto dst = batch.values();
  for (int i = 0; i < batch_size; ++i) {
    std::copy(&src[chosen[i] * c * len], &src[chosen[i] * c * len] + c * len, &dst[i * c * len]);
    labels[i] = data.labels[chosen[i]];
  }
  return {batch, labels};
}

TimeSeriesDataset take_rows(const TimeSeriesDataset& data, const std::vector<int>& rows) {
  const int c = data.channels(), len = data.length();
  Tensor samples = Tensor::zeros({static_cast<int>(rows.size()), c, len});
  std::vector<int> labels(rows.size());
  auto src = data.samples.values();
  auto dst = samples.values();
  for (size_t i = 0; i < rows.size(); ++i) {
    const int r = rows[i];
    if (r < 0 || r >= data.n()) throw ArgumentError("take_rows: index out of range");
    std::copy(&src[r * c * len], &src[r * c * len] + c * len, &dst[i * c * len]);
    labels[i] = data.labels[r];
  }
  TimeSeriesDataset out = data;
  out.samples = std::move(samples);
  out.labels = std::move(labels);
  return out;
}

std::pair<TimeSeriesDataset, TimeSeriesDataset> split_off_validation(const TimeSeriesDataset& data,
                                                                     double val_fraction, Rng& rng) {
  if (val_fraction <= 0.0 || val_fraction >= 1.0) {
    throw ArgumentError("split_off_validation: fraction must be in (0,1)");
  }
  std::vector<int> idx(data.n());
  for (int i = 0; i < data.n(); ++i) idx[i] = i;
  for (int i = data.n() - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.below(static_cast<uint64_t>(i + 1)));
    std::swap(idx[i], idx[j]);
  }
  int n_val = static_cast<int>(std::round(val_fraction * data.n()));
  n_val = std::clamp(n_val, 1, data.n() - 1);
  std::vector<int> val_rows(idx.begin(), idx.begin() + n_val);
  std::vector<int> train_rows(idx.begin() + n_val, idx.end());
  return {take_rows(data, train_rows), take_rows(data, val_rows)};
}

}  // namespace dpts
