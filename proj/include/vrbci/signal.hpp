#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vrbci/rng.hpp"
#include "vrbci/tensor.hpp"

namespace vrbci {

// One biosignal window: J channels by W samples, with its class label.
// The samples tensor has shape [J, W] and feeds the classifier directly.
struct EegWindow {
  Tensor samples;
  int label = 0;
  int user_id = 0;

  std::size_t channels() const { return samples.shape[0]; }
  std::size_t width() const { return samples.shape[1]; }
  double& at(std::size_t ch, std::size_t t) {
    return samples.values[ch * width() + t];
  }
  double at(std::size_t ch, std::size_t t) const {
    return samples.values[ch * width() + t];
  }
};

struct LabeledDataset {
  std::vector<EegWindow> windows;
  int class_count = 0;
  int channel_count = 0;
  int window_length = 0;

  void validate() const {
    if (windows.empty()) throw std::invalid_argument("dataset: empty");
    std::vector<int> per_class(class_count, 0);
    for (const EegWindow& w : windows) {
      if (w.label < 0 || w.label >= class_count) {
        throw std::invalid_argument("dataset: label out of range");
      }
      per_class[w.label]++;
    }
    for (int c = 0; c < class_count; ++c) {
      if (per_class[c] == 0) {
        throw std::invalid_argument("dataset: class " + std::to_string(c) +
                                    " has no windows");
      }
    }
  }
};

struct GeneratorConfig {
  int channels = 8;             // J
  int window_length = 32;       // W
  int class_count = 4;          // C
  std::vector<double> class_frequencies_hz = {6.0, 10.0, 14.0, 18.0};
  double signal_amplitude = 1.0;
  double noise_std = 0.5;
  int channels_per_class = 3;
  double sample_rate_hz = 160.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (channels <= 0 || window_length <= 0 || class_count <= 0) {
      throw std::invalid_argument("generator: dimensions must be positive");
    }
    if (static_cast<int>(class_frequencies_hz.size()) != class_count) {
      throw std::invalid_argument("generator: need one frequency per class");
    }
    for (std::size_t i = 0; i < class_frequencies_hz.size(); ++i) {
      if (!(class_frequencies_hz[i] > 0.0) ||
          class_frequencies_hz[i] >= sample_rate_hz / 2.0) {
        throw std::invalid_argument(
            "generator: class frequencies must lie in (0, sample_rate/2)");
      }
      for (std::size_t j = i + 1; j < class_frequencies_hz.size(); ++j) {
        if (class_frequencies_hz[i] == class_frequencies_hz[j]) {
          throw std::invalid_argument("generator: class frequencies must be distinct");
        }
      }
    }
    if (channels_per_class <= 0 || channels_per_class > channels) {
      throw std::invalid_argument("generator: channels_per_class out of range");
    }
    if (noise_std < 0.0 || signal_amplitude < 0.0) {
      throw std::invalid_argument("generator: amplitude/noise must be >= 0");
    }
  }

  // Class c marks channels {(c + j) mod J : j < channels_per_class}.
  bool class_uses_channel(int cls, int ch) const {
    for (int j = 0; j < channels_per_class; ++j) {
      if ((cls + j) % channels == ch) return true;
    }
    return false;
  }
};

// Background Gaussian noise on every channel plus a class-frequency sinusoid
// (random phase per window) on the class's channel subset.
inline LabeledDataset generate_synthetic_dataset(const GeneratorConfig& cfg,
                                                 int windows_per_class) {
  cfg.validate();
  if (windows_per_class <= 0) {
    throw std::invalid_argument("generator: windows_per_class must be positive");
  }
  Rng rng(cfg.seed);
  LabeledDataset ds;
  ds.class_count = cfg.class_count;
  ds.channel_count = cfg.channels;
  ds.window_length = cfg.window_length;
  ds.windows.reserve(static_cast<std::size_t>(cfg.class_count) * windows_per_class);
  for (int cls = 0; cls < cfg.class_count; ++cls) {
    double freq = cfg.class_frequencies_hz[cls];
    for (int n = 0; n < windows_per_class; ++n) {
      EegWindow w;
      w.label = cls;
      w.samples = Tensor({static_cast<std::size_t>(cfg.channels),
                          static_cast<std::size_t>(cfg.window_length)});
      double phase = rng.uniform(0.0, 6.28318530717958647692);
      for (int ch = 0; ch < cfg.channels; ++ch) {
        bool carries = cfg.class_uses_channel(cls, ch);
        for (int t = 0; t < cfg.window_length; ++t) {
          double v = cfg.noise_std == 0.0 ? 0.0 : rng.normal(0.0, cfg.noise_std);
          if (carries) {
            v += cfg.signal_amplitude *
                 std::sin(6.28318530717958647692 * freq * t / cfg.sample_rate_hz +
                          phase);
          }
          w.at(ch, t) = v;
        }
      }
      ds.windows.push_back(std::move(w));
    }
  }
  return ds;
}

namespace detail {

inline double parse_csv_number(const std::string& cell, std::size_t row,
                               std::size_t col) {
  const char* b = cell.data();
  const char* e = b + cell.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t' || e[-1] == '\r')) --e;
  double v = 0.0;
  auto r = std::from_chars(b, e, v);
  if (b == e || r.ec != std::errc{} || r.ptr != e) {
    throw std::invalid_argument("row " + std::to_string(row) +
                                ": non-numeric cell in column " +
                                std::to_string(col));
  }
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

}  // namespace detail

// CSV row layout: integer label, then J*W samples channel-major. Errors
// name the offending 1-based row.
inline LabeledDataset load_csv_dataset(const std::string& path, int channels,
                                       int window_length, int class_count) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("dataset: cannot open " + path);
  LabeledDataset ds;
  ds.class_count = class_count;
  ds.channel_count = channels;
  ds.window_length = window_length;
  const std::size_t expected =
      1 + static_cast<std::size_t>(channels) * window_length;
  std::string line;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (cells.size() != expected) {
      throw std::invalid_argument("row " + std::to_string(row) + ": expected " +
                                  std::to_string(expected) + " columns, found " +
                                  std::to_string(cells.size()));
    }
    double label_value = detail::parse_csv_number(cells[0], row, 1);
    int label = static_cast<int>(label_value);
    if (label_value != static_cast<double>(label) || label < 0) {
      throw std::invalid_argument("row " + std::to_string(row) +
                                  ": label must be a non-negative integer");
    }
    if (label >= class_count) {
      throw std::invalid_argument("row " + std::to_string(row) + ": label " +
                                  std::to_string(label) + " >= class count " +
                                  std::to_string(class_count));
    }
    EegWindow w;
    w.label = label;
    w.samples = Tensor({static_cast<std::size_t>(channels),
                        static_cast<std::size_t>(window_length)});
    for (std::size_t i = 0; i + 1 < cells.size(); ++i) {
      w.samples.values[i] = detail::parse_csv_number(cells[i + 1], row, i + 2);
    }
    ds.windows.push_back(std::move(w));
  }
  if (ds.windows.empty()) {
    throw std::invalid_argument("dataset: " + path + " contains no rows");
  }
  return ds;
}

inline void save_csv_dataset(const std::string& path, const LabeledDataset& ds) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("dataset: cannot open " + path + " for writing");
  std::string line;
  char buf[32];
  for (const EegWindow& w : ds.windows) {
    line = std::to_string(w.label);
    for (double v : w.samples.values) {
      line += ',';
      auto r = std::to_chars(buf, buf + sizeof(buf), v);
      line.append(buf, r.ptr);
    }
    f << line << "\n";
  }
  if (!f) throw std::runtime_error("dataset: write failed for " + path);
}

// Stratified split: each class is shuffled and cut at round(fraction * n).
inline std::pair<LabeledDataset, LabeledDataset> split_dataset(
    const LabeledDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split: train_fraction must be in (0, 1)");
  }
  ds.validate();
  std::vector<std::vector<std::size_t>> by_class(ds.class_count);
  for (std::size_t i = 0; i < ds.windows.size(); ++i) {
    by_class[ds.windows[i].label].push_back(i);
  }
  Rng rng(seed);
  LabeledDataset train, test;
  train.class_count = test.class_count = ds.class_count;
  train.channel_count = test.channel_count = ds.channel_count;
  train.window_length = test.window_length = ds.window_length;
  for (int c = 0; c < ds.class_count; ++c) {
    std::vector<std::size_t>& idx = by_class[c];
    if (idx.size() < 2) {
      throw std::invalid_argument("split: class " + std::to_string(c) +
                                  " has fewer than 2 windows");
    }
    for (std::size_t i = idx.size(); i-- > 1;) {
      std::size_t j = rng.uniform_index(i + 1);
      std::swap(idx[i], idx[j]);
    }
    auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      (i < n_train ? train : test).windows.push_back(ds.windows[idx[i]]);
    }
  }
  return {std::move(train), std::move(test)};
}

// Draws batch_size distinct windows (partial Fisher-Yates over indices).
inline std::vector<EegWindow> sample_batch(const LabeledDataset& ds,
                                           std::size_t batch_size, Rng& rng) {
  if (batch_size > ds.windows.size()) {
    throw std::invalid_argument("sample_batch: batch size " +
                                std::to_string(batch_size) + " exceeds dataset (" +
                                std::to_string(ds.windows.size()) + ")");
  }
  std::vector<std::size_t> idx(ds.windows.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<EegWindow> batch;
  batch.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::size_t j = i + rng.uniform_index(idx.size() - i);
    std::swap(idx[i], idx[j]);
    batch.push_back(ds.windows[idx[i]]);
  }
  return batch;
}

}  // namespace vrbci
