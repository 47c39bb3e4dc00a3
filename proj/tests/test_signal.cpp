#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "vrbci/signal.hpp"

using namespace vrbci;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream f(path);
  f << content;
  return path.string();
}

}  // namespace

TEST_CASE("noiseless generation puts exact sinusoids on signature channels") {
  GeneratorConfig cfg;
  cfg.noise_std = 0.0;
  cfg.signal_amplitude = 1.0;
  cfg.seed = 9;
  LabeledDataset ds = generate_synthetic_dataset(cfg, 2);
  for (const EegWindow& w : ds.windows) {
    double freq = cfg.class_frequencies_hz[w.label];
    // recover the phase from the first signature sample pair
    for (int ch = 0; ch < cfg.channels; ++ch) {
      bool carries = cfg.class_uses_channel(w.label, ch);
      if (!carries) {
        for (int t = 0; t < cfg.window_length; ++t) CHECK(w.at(ch, t) == 0.0);
      } else {
        // all signature channels carry the identical sinusoid
        CHECK(w.at(ch, 0) == w.at((w.label) % cfg.channels, 0));
        double max_abs = 0.0;
        for (int t = 0; t < cfg.window_length; ++t) {
          max_abs = std::max(max_abs, std::abs(w.at(ch, t)));
        }
        CHECK(max_abs <= 1.0 + 1e-12);
        CHECK(max_abs > 0.5);
        // frequency check: the Goertzel power at the class frequency
        // dominates the other class frequencies
        double own = oracles::goertzel_power(w, ch, freq, cfg.sample_rate_hz);
        for (double other : cfg.class_frequencies_hz) {
          if (other == freq) continue;
          CHECK(own > 10.0 * oracles::goertzel_power(w, ch, other,
                                                     cfg.sample_rate_hz));
        }
      }
    }
  }
}

TEST_CASE("generation is deterministic in the seed") {
  GeneratorConfig cfg;
  cfg.seed = 1234;
  LabeledDataset a = generate_synthetic_dataset(cfg, 5);
  LabeledDataset b = generate_synthetic_dataset(cfg, 5);
  REQUIRE(a.windows.size() == b.windows.size());
  for (std::size_t i = 0; i < a.windows.size(); ++i) {
    CHECK(a.windows[i].label == b.windows[i].label);
    CHECK(a.windows[i].samples.values == b.windows[i].samples.values);
  }
}

TEST_CASE("bandpower nearest-centroid oracle exceeds 90% on clean defaults") {
  GeneratorConfig cfg;  // J=8, W=32, amplitude 1.0, noise 0.5
  cfg.seed = 7;
  LabeledDataset ds = generate_synthetic_dataset(cfg, 100);
  auto [train, test] = split_dataset(ds, 0.8, 7);
  oracles::BandpowerCentroid oracle(train, cfg.class_frequencies_hz,
                                    cfg.sample_rate_hz);
  double acc = oracle.accuracy(test);
  INFO("oracle accuracy " << acc);
  CHECK(acc > 0.90);
}

TEST_CASE("generator config validation") {
  GeneratorConfig cfg;
  cfg.class_frequencies_hz = {6, 10, 14};  // one too few
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg, 1), std::invalid_argument);
  cfg = GeneratorConfig{};
  cfg.class_frequencies_hz = {6, 10, 14, 90};  // above Nyquist for 160 Hz
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg, 1), std::invalid_argument);
  cfg = GeneratorConfig{};
  cfg.channels_per_class = 9;
  CHECK_THROWS_AS(generate_synthetic_dataset(cfg, 1), std::invalid_argument);
}

TEST_CASE("csv loading maps rows directly") {
  std::string path = write_temp("vrbci_ds_ok.csv", "3,1.0,2.0,3.0,4.0\n");
  LabeledDataset ds = load_csv_dataset(path, 2, 2, 4);
  REQUIRE(ds.windows.size() == 1);
  CHECK(ds.windows[0].label == 3);
  CHECK(ds.windows[0].at(0, 0) == 1.0);
  CHECK(ds.windows[0].at(0, 1) == 2.0);
  CHECK(ds.windows[0].at(1, 0) == 3.0);
  CHECK(ds.windows[0].at(1, 1) == 4.0);
  std::remove(path.c_str());
}

TEST_CASE("csv loading rejects malformed rows with the row number") {
  std::string short_row = write_temp("vrbci_ds_short.csv", "3,1.0,2.0,3.0\n");
  CHECK_THROWS_WITH(load_csv_dataset(short_row, 2, 2, 4),
                    Catch::Matchers::ContainsSubstring("row 1: expected 5 columns"));
  std::remove(short_row.c_str());

  std::string bad_cell =
      write_temp("vrbci_ds_cell.csv", "0,1.0,2.0,3.0,4.0\n1,1.0,x,3.0,4.0\n");
  CHECK_THROWS_WITH(load_csv_dataset(bad_cell, 2, 2, 4),
                    Catch::Matchers::ContainsSubstring("row 2"));
  std::remove(bad_cell.c_str());

  std::string bad_label = write_temp("vrbci_ds_label.csv", "7,1.0,2.0,3.0,4.0\n");
  CHECK_THROWS_WITH(load_csv_dataset(bad_label, 2, 2, 4),
                    Catch::Matchers::ContainsSubstring("label 7 >= class count 4"));
  std::remove(bad_label.c_str());

  std::string empty = write_temp("vrbci_ds_empty.csv", "");
  CHECK_THROWS_WITH(load_csv_dataset(empty, 2, 2, 4),
                    Catch::Matchers::ContainsSubstring("no rows"));
  std::remove(empty.c_str());
}

TEST_CASE("split is stratified, deterministic, and a partition") {
  GeneratorConfig cfg;
  cfg.seed = 21;
  LabeledDataset ds = generate_synthetic_dataset(cfg, 100);
  auto [train, test] = split_dataset(ds, 0.8, 5);
  std::vector<int> train_counts(4, 0), test_counts(4, 0);
  for (const auto& w : train.windows) train_counts[w.label]++;
  for (const auto& w : test.windows) test_counts[w.label]++;
  for (int c = 0; c < 4; ++c) {
    CHECK(train_counts[c] == 80);
    CHECK(test_counts[c] == 20);
  }

  auto [train2, test2] = split_dataset(ds, 0.8, 5);
  REQUIRE(train2.windows.size() == train.windows.size());
  for (std::size_t i = 0; i < train.windows.size(); ++i) {
    CHECK(train.windows[i].samples.values == train2.windows[i].samples.values);
  }

  // partition: fingerprint windows by their first two samples + label
  auto key = [](const EegWindow& w) {
    return std::make_tuple(w.label, w.samples.values[0], w.samples.values[1]);
  };
  std::multiset<std::tuple<int, double, double>> all, joined;
  for (const auto& w : ds.windows) all.insert(key(w));
  for (const auto& w : train.windows) joined.insert(key(w));
  for (const auto& w : test.windows) joined.insert(key(w));
  CHECK(all == joined);
}

TEST_CASE("split rejects undersized classes and bad fractions") {
  GeneratorConfig cfg;
  LabeledDataset ds = generate_synthetic_dataset(cfg, 1);
  CHECK_THROWS_AS(split_dataset(ds, 0.8, 1), std::invalid_argument);
  LabeledDataset ok = generate_synthetic_dataset(cfg, 4);
  CHECK_THROWS_AS(split_dataset(ok, 0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(split_dataset(ok, 1.0, 1), std::invalid_argument);
}

TEST_CASE("full-size batch is a permutation of the dataset") {
  GeneratorConfig cfg;
  cfg.seed = 3;
  LabeledDataset ds = generate_synthetic_dataset(cfg, 10);
  Rng rng(11);
  std::vector<EegWindow> batch = sample_batch(ds, ds.windows.size(), rng);
  REQUIRE(batch.size() == ds.windows.size());
  std::multiset<double> a, b;
  for (const auto& w : ds.windows) a.insert(w.samples.values[0]);
  for (const auto& w : batch) b.insert(w.samples.values[0]);
  CHECK(a == b);
}

TEST_CASE("batch draws are without replacement and deterministic") {
  GeneratorConfig cfg;
  cfg.seed = 3;
  LabeledDataset ds = generate_synthetic_dataset(cfg, 10);
  Rng rng_a(5), rng_b(5);
  auto a = sample_batch(ds, 7, rng_a);
  auto b = sample_batch(ds, 7, rng_b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].samples.values == b[i].samples.values);
  }
  std::multiset<double> fingerprints;
  for (const auto& w : a) fingerprints.insert(w.samples.values[0]);
  CHECK(fingerprints.size() == 7);  // distinct windows (noise makes ties null)
  CHECK_THROWS_AS(sample_batch(ds, ds.windows.size() + 1, rng_a),
                  std::invalid_argument);
}

TEST_CASE("single-draw class frequencies track the dataset distribution") {
  GeneratorConfig cfg;
  cfg.seed = 13;
  LabeledDataset ds = generate_synthetic_dataset(cfg, 25);  // 100 windows, 25%
  Rng rng(17);
  std::vector<int> counts(4, 0);
  const int draws = 20000;
  for (int i = 0; i < draws; ++i) {
    counts[sample_batch(ds, 1, rng)[0].label]++;
  }
  for (int c = 0; c < 4; ++c) {
    double freq = static_cast<double>(counts[c]) / draws;
    CHECK(std::abs(freq - 0.25) < 0.05 * 0.25 + 0.02);
  }
}
