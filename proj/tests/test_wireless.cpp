#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "vrbci/wireless.hpp"

using namespace vrbci;

namespace {

LabeledDataset small_dataset() {
  GeneratorConfig g;
  g.seed = 42;
  return generate_synthetic_dataset(g, 8);
}

// action: every user gets two blocks, equal power/shares
ActionVector even_action(const EnvConfig& cfg, double power) {
  ActionVector a;
  a.rho.resize(cfg.blocks);
  for (int m = 0; m < cfg.blocks; ++m) a.rho[m] = m % cfg.users;
  a.p.assign(cfg.users, power);
  a.tau.assign(cfg.users + 1, 1.0 / (cfg.users + 1));
  a.predictions.assign(cfg.users, 0);
  return a;
}

EnvState fixed_state(const EnvConfig& cfg, double h, double u) {
  EnvState s;
  s.h.assign(cfg.users, h);
  s.u.assign(cfg.cores, u);
  return s;
}

}  // namespace

TEST_CASE("reset is deterministic and the fading has the right support") {
  LabeledDataset ds = small_dataset();
  EnvConfig cfg;
  WirelessEnv env_a(cfg, &ds, 77);
  WirelessEnv env_b(cfg, &ds, 77);
  const EnvState& sa = env_a.reset();
  const EnvState& sb = env_b.reset();
  CHECK(sa.h == sb.h);
  CHECK(sa.u == sb.u);
  for (int k = 0; k < cfg.users; ++k) {
    CHECK(sa.windows[k].samples.values == sb.windows[k].samples.values);
  }

  double sum = 0.0;
  const int n = 100000;
  WirelessEnv env(cfg, &ds, 123);
  for (int i = 0; i < n; ++i) {
    const EnvState& s = env.reset();
    for (double h : s.h) {
      CHECK(h > 0.0);
      sum += h;
    }
  }
  double mean = sum / (n * cfg.users);
  CHECK(std::abs(mean - cfg.mean_channel_gain) < 0.02 * cfg.mean_channel_gain);
}

TEST_CASE("uncorrelated channel advances are fresh Exp(1) draws") {
  LabeledDataset ds = small_dataset();
  EnvConfig cfg;
  cfg.channel_correlation = 0.0;
  WirelessEnv env(cfg, &ds, 31);
  env.reset();
  std::vector<double> draws;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    env.advance_channel_and_cpu();
    draws.push_back(env.state().h[0] / cfg.mean_channel_gain);
  }
  // Kolmogorov-Smirnov distance against 1 - exp(-x)
  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    double cdf = 1.0 - std::exp(-draws[i]);
    ks = std::max(ks, std::abs(cdf - (i + 1.0) / n));
    ks = std::max(ks, std::abs(cdf - static_cast<double>(i) / n));
  }
  CHECK(ks < 0.02);  // crit value at alpha=0.01 is ~0.0163 for n = 1e4
}

TEST_CASE("cpu availability walk stays clamped and degenerates correctly") {
  LabeledDataset ds = small_dataset();
  EnvConfig cfg;
  cfg.cpu_walk_std = 0.0;
  WirelessEnv frozen(cfg, &ds, 5);
  frozen.reset();
  std::vector<double> u0 = frozen.state().u;
  for (int i = 0; i < 100; ++i) frozen.advance_channel_and_cpu();
  CHECK(frozen.state().u == u0);

  cfg.cpu_walk_std = 0.3;
  WirelessEnv walking(cfg, &ds, 6);
  walking.reset();
  for (int i = 0; i < 100000; ++i) {
    walking.advance_channel_and_cpu();
    for (double u : walking.state().u) {
      CHECK(u >= 0.1);
      CHECK(u <= 0.9);
    }
  }
}

TEST_CASE("uplink rate: empty assignment, exact SINR, and reference constants") {
  EnvConfig cfg;
  EnvState s = fixed_state(cfg, 1e-10, 0.5);
  ActionVector a = even_action(cfg, 0.01);

  // no blocks for user 0
  ActionVector none = a;
  for (int m = 0; m < cfg.blocks; ++m) none.rho[m] = 1;
  CHECK(uplink_rate(0, none, s, cfg) == 0.0);

  // SINR exactly 3 on one block: rate = B_U * log2(4) = 2e6
  ActionVector one = a;
  for (int m = 0; m < cfg.blocks; ++m) one.rho[m] = 1;
  one.rho[0] = 0;
  EnvState s3 = s;
  s3.h[0] = 3.0 * cfg.uplink_noise_power() / one.p[0];
  CHECK(uplink_rate(0, one, s3, cfg) == Catch::Approx(2e6).epsilon(1e-12));

  // hand link budget from the dBm constants: p=0.01, h=1e-10
  double noise = std::pow(10.0, (-207.0 - 30.0) / 10.0) +
                 1e6 * std::pow(10.0, (-174.0 - 30.0) / 10.0);
  double sinr = 0.01 * 1e-10 / noise;
  CHECK(sinr == Catch::Approx(251.19).epsilon(1e-3));
  double expected = 1e6 * std::log2(1.0 + sinr);
  double got = uplink_rate(0, one, s, cfg);
  CHECK(got == Catch::Approx(expected).epsilon(1e-9));
  CHECK(got == Catch::Approx(7.98e6).epsilon(2e-3));
}

TEST_CASE("downlink rate: limits and reference constants") {
  EnvConfig cfg;
  EnvState s = fixed_state(cfg, 1e-10, 0.5);

  EnvState dead = s;
  dead.h[0] = 1e-30;
  CHECK(downlink_rate(0, dead, cfg) < 1.0);

  EnvState unity = s;
  unity.h[0] = cfg.downlink_noise_power() / cfg.bs_power_w;  // SINR = 1
  CHECK(downlink_rate(0, unity, cfg) == Catch::Approx(2e7).epsilon(1e-12));

  double noise = std::pow(10.0, (-207.0 - 30.0) / 10.0) +
                 2e7 * std::pow(10.0, (-174.0 - 30.0) / 10.0);
  double sinr = 1.0 * 1e-10 / noise;
  CHECK(sinr == Catch::Approx(1255.9).epsilon(1e-3));
  double expected = 2e7 * std::log2(1.0 + sinr);
  CHECK(downlink_rate(0, s, cfg) == Catch::Approx(expected).epsilon(1e-9));
  CHECK(downlink_rate(0, s, cfg) == Catch::Approx(2.06e8).epsilon(2e-3));
}

TEST_CASE("round-trip delay assembles processing and both transmission legs") {
  EnvConfig cfg;
  cfg.workload_cycles = 1e7;
  cfg.cpu_capacity_hz = 2.3e9;
  cfg.uplink_packet_bits = 163840.0;
  cfg.downlink_packet_bits = 1e6;
  EnvState s = fixed_state(cfg, 1e-10, 0.6);
  ActionVector a = even_action(cfg, 0.01);
  a.tau.assign(cfg.users + 1, 0.0);
  a.tau[0] = 1.0 - 0.5 * cfg.users;  // would go negative; set directly below
  a.tau = {0.25, 0.5, 0.125, 0.125};
  // user 0: tau=0.5, u=0.6 -> d = 1e7 / (0.5 * 0.6 * 2.3e9)
  ActionVector oneblock = a;
  for (int m = 0; m < cfg.blocks; ++m) oneblock.rho[m] = 1;
  oneblock.rho[0] = 0;
  DelayResult d = round_trip_delay(0, oneblock, s, cfg);
  CHECK(d.processing_s == Catch::Approx(0.0144928).epsilon(1e-4));
  double r_u = uplink_rate(0, oneblock, s, cfg);
  double r_d = downlink_rate(0, s, cfg);
  double expected = d.processing_s + 1e6 / r_d + 163840.0 / r_u;
  CHECK(d.round_trip_s == Catch::Approx(expected).epsilon(1e-12));
  CHECK(d.round_trip_s == Catch::Approx(0.0399).epsilon(2e-2));

  // doubling tau halves the processing delay exactly
  ActionVector twice = oneblock;
  twice.tau = {0.0, 1.0, 0.0, 0.0};
  DelayResult d2 = round_trip_delay(0, twice, s, cfg);
  CHECK(d2.processing_s == Catch::Approx(d.processing_s / 2.0).epsilon(1e-12));

  // additivity holds exactly for finite cases (same association order)
  CHECK(d.round_trip_s == d.processing_s + 1e6 / r_d + 163840.0 / r_u);
}

TEST_CASE("starved users get an infinite delay sentinel, not an exception") {
  EnvConfig cfg;
  EnvState s = fixed_state(cfg, 1e-10, 0.5);
  ActionVector a = even_action(cfg, 0.01);
  a.tau = {1.0, 0.0, 0.5, -0.5};  // user 0 has zero share
  a.tau = {0.5, 0.0, 0.25, 0.25};
  DelayResult no_cpu = round_trip_delay(0, a, s, cfg);
  CHECK(std::isinf(no_cpu.round_trip_s));

  ActionVector no_blocks = even_action(cfg, 0.01);
  for (int m = 0; m < cfg.blocks; ++m) no_blocks.rho[m] = 1;
  DelayResult nb = round_trip_delay(0, no_blocks, s, cfg);
  CHECK(std::isinf(nb.round_trip_s));
  CHECK(std::isfinite(nb.processing_s));
}

TEST_CASE("packet error: limits, hand value, and clamping") {
  EnvConfig cfg;
  ActionVector one = even_action(cfg, 0.01);
  for (int m = 0; m < cfg.blocks; ++m) one.rho[m] = 1;
  one.rho[0] = 0;

  // p*h -> large: error -> 0
  EnvState strong = fixed_state(cfg, 1.0, 0.5);
  CHECK(packet_error(0, one, strong, cfg).clamped < 1e-12);

  // z=1, sigma^2 = uplink noise, p*h = 1e-12: 1 - exp(-3.98e-3)
  EnvState s = fixed_state(cfg, 1e-10, 0.5);
  double expected = 1.0 - std::exp(-cfg.uplink_noise_power() / 1e-12);
  PacketErrorResult pe = packet_error(0, one, s, cfg);
  CHECK(pe.clamped == Catch::Approx(expected).epsilon(1e-12));
  CHECK(pe.clamped == Catch::Approx(3.97e-3).epsilon(5e-3));

  // p -> 0: error -> 1
  ActionVector weak = one;
  weak.p.assign(cfg.users, 1e-30);
  CHECK(packet_error(0, weak, s, cfg).clamped == Catch::Approx(1.0).margin(1e-12));

  // multi-block sums can exceed 1 raw but stay clamped
  ActionVector all_mine = even_action(cfg, 1e-5);
  for (int m = 0; m < cfg.blocks; ++m) all_mine.rho[m] = 0;
  EnvState weak_h = fixed_state(cfg, 2e-11, 0.5);
  PacketErrorResult multi = packet_error(0, all_mine, weak_h, cfg);
  CHECK(multi.raw > 1.0);
  CHECK(multi.clamped == 1.0);
}

TEST_CASE("link budget monotonicity") {
  EnvConfig cfg;
  EnvState s = fixed_state(cfg, 1e-10, 0.5);
  ActionVector a = even_action(cfg, 0.001);
  double prev_rate = 0.0, prev_eps = 2.0;
  for (double p = 1e-4; p <= 1e-2; p *= 2.0) {
    ActionVector ap = a;
    ap.p.assign(cfg.users, p);
    double r = uplink_rate(0, ap, s, cfg);
    double e = packet_error(0, ap, s, cfg).clamped;
    CHECK(r > prev_rate);
    CHECK(e < prev_eps);
    prev_rate = r;
    prev_eps = e;
  }
  double prev_d = 1e30;
  for (double tau = 0.1; tau <= 0.9; tau += 0.1) {
    ActionVector at = a;
    at.tau.assign(cfg.users + 1, (1.0 - tau) / cfg.users);
    at.tau[1] = tau;
    double d = round_trip_delay(0, at, s, cfg).processing_s;
    CHECK(d < prev_d);
    prev_d = d;
  }
}

TEST_CASE("corruption replaces segments at the requested rate") {
  GeneratorConfig g;
  g.seed = 2;
  LabeledDataset ds = generate_synthetic_dataset(g, 4);
  const EegWindow& w = ds.windows[0];
  Rng rng(3);

  EegWindow clean = corrupt_window(w, 0.0, rng);
  CHECK(clean.samples.values == w.samples.values);
  CHECK(clean.label == w.label);

  EegWindow destroyed = corrupt_window(w, 1.0, rng);
  CHECK(destroyed.label == w.label);
  int identical_cols = 0;
  for (std::size_t t = 0; t < w.width(); ++t) {
    bool same = true;
    for (std::size_t c = 0; c < w.channels(); ++c) {
      if (destroyed.at(c, t) != w.at(c, t)) same = false;
    }
    if (same) ++identical_cols;
  }
  CHECK(identical_cols == 0);

  // per-channel correlation between clean and fully corrupted ~ 0
  double corr_sum = 0.0;
  int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    EegWindow d2 = corrupt_window(w, 1.0, rng);
    double sxy = 0, sx = 0, sy = 0, sxx = 0, syy = 0;
    std::size_t n = w.width();
    for (std::size_t t = 0; t < n; ++t) {
      double x = w.at(0, t), y = d2.at(0, t);
      sx += x; sy += y; sxy += x * y; sxx += x * x; syy += y * y;
    }
    double cov = sxy / n - sx / n * sy / n;
    double vx = sxx / n - sx / n * sx / n;
    double vy = syy / n - sy / n * sy / n;
    corr_sum += cov / std::sqrt(vx * vy);
  }
  CHECK(std::abs(corr_sum / reps) < 0.05);

  // epsilon = 0.5: segment replacement frequency within +-0.02
  int replaced = 0, total = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    EegWindow d3 = corrupt_window(w, 0.5, rng);
    for (std::size_t start = 0; start < w.width(); start += 8) {
      bool same = true;
      for (std::size_t c = 0; c < w.channels() && same; ++c) {
        for (std::size_t t = start; t < start + 8 && same; ++t) {
          if (d3.at(c, t) != w.at(c, t)) same = false;
        }
      }
      ++total;
      if (!same) ++replaced;
    }
  }
  double frac = static_cast<double>(replaced) / total;
  CHECK(std::abs(frac - 0.5) < 0.02);
}

TEST_CASE("step computes QoE in the exact four-value set") {
  LabeledDataset ds = small_dataset();
  EnvConfig cfg;
  cfg.eta1 = 1.0;
  cfg.eta2 = 1.0;
  // light workload so the delay budget holds for any CPU draw in [0.1, 0.9]
  cfg.workload_cycles = 1e6;
  WirelessEnv env(cfg, &ds, 19);
  env.reset();

  // generous allocation: everything under budget, all verdicts correct
  ActionVector a = even_action(cfg, 0.01);
  StepMetrics m = env.step(a, {1, 1, 1});
  for (int k = 0; k < cfg.users; ++k) CHECK(m.delay_ok[k] == 1);
  CHECK(m.mean_qoe == 2.0);

  // all delays blown (tiny tau), all verdicts wrong
  ActionVector slow = even_action(cfg, 0.01);
  slow.tau.assign(cfg.users + 1, 0.0);
  slow.tau[0] = 1.0;
  StepMetrics m2 = env.step(slow, {0, 0, 0});
  CHECK(m2.mean_qoe == 0.0);

  // K=3: delays [ok, ok, over], verdicts [1, 0, 1] -> mean (2+1+1)/3
  ActionVector mixed = even_action(cfg, 0.01);
  mixed.tau = {0.30, 0.35, 0.35, 0.0};  // user 2 starved
  StepMetrics m3 = env.step(mixed, {1, 0, 1});
  REQUIRE(m3.delay_ok[0] == 1);
  REQUIRE(m3.delay_ok[1] == 1);
  REQUIRE(m3.delay_ok[2] == 0);
  CHECK(m3.mean_qoe == Catch::Approx(4.0 / 3.0).epsilon(1e-12));

  // q values always in {0, eta1, eta2, eta1+eta2}
  EnvConfig weights = cfg;
  weights.eta1 = 0.7;
  weights.eta2 = 0.3;
  WirelessEnv wenv(weights, &ds, 23);
  wenv.reset();
  Rng vr(29);
  for (int i = 0; i < 200; ++i) {
    if (wenv.done()) wenv.reset();
    ActionVector act = even_action(weights, 0.01);
    act.tau = {0.1, 0.3, 0.3, 0.3};
    std::vector<int> verdicts = {static_cast<int>(vr.uniform_index(2)),
                                 static_cast<int>(vr.uniform_index(2)),
                                 static_cast<int>(vr.uniform_index(2))};
    StepMetrics sm = wenv.step(act, verdicts);
    for (double q : sm.qoe) {
      bool ok = q == 0.0 || q == 0.7 || q == 0.3 || q == 1.0;
      CHECK(ok);
    }
  }
}

TEST_CASE("step rejects invalid actions naming the violated constraint") {
  LabeledDataset ds = small_dataset();
  EnvConfig cfg;
  WirelessEnv env(cfg, &ds, 7);
  env.reset();

  ActionVector bad_rho = even_action(cfg, 0.01);
  bad_rho.rho[2] = cfg.users;  // out of range user
  CHECK_THROWS_WITH(env.step(bad_rho, {1, 1, 1}),
                    Catch::Matchers::ContainsSubstring("block-assignment"));

  ActionVector bad_p = even_action(cfg, 0.01);
  bad_p.p[1] = cfg.p_max_w * 1.5;
  CHECK_THROWS_WITH(env.step(bad_p, {1, 1, 1}),
                    Catch::Matchers::ContainsSubstring("power-bound"));
  ActionVector zero_p = even_action(cfg, 0.01);
  zero_p.p[0] = 0.0;
  CHECK_THROWS_WITH(env.step(zero_p, {1, 1, 1}),
                    Catch::Matchers::ContainsSubstring("power-bound"));

  ActionVector bad_tau = even_action(cfg, 0.01);
  bad_tau.tau = {0.5, 0.5, 0.5, -0.5};
  CHECK_THROWS_WITH(env.step(bad_tau, {1, 1, 1}),
                    Catch::Matchers::ContainsSubstring("cpu-share"));
  ActionVector sum_tau = even_action(cfg, 0.01);
  sum_tau.tau = {0.5, 0.5, 0.5, 0.5};
  CHECK_THROWS_WITH(env.step(sum_tau, {1, 1, 1}),
                    Catch::Matchers::ContainsSubstring("cpu-share"));
}

TEST_CASE("episodes terminate after T steps and steps are deterministic") {
  LabeledDataset ds = small_dataset();
  EnvConfig cfg;
  cfg.steps_per_episode = 5;
  WirelessEnv a(cfg, &ds, 101), b(cfg, &ds, 101);
  a.reset();
  b.reset();
  for (int i = 0; i < 5; ++i) {
    CHECK_FALSE(a.done());
    StepMetrics ma = a.step(even_action(cfg, 0.005), {1, 0, 1});
    StepMetrics mb = b.step(even_action(cfg, 0.005), {1, 0, 1});
    CHECK(ma.mean_qoe == mb.mean_qoe);
    CHECK(ma.mean_delay_s == mb.mean_delay_s);
    CHECK(a.state().h == b.state().h);
  }
  CHECK(a.done());
  CHECK_THROWS_AS(a.step(even_action(cfg, 0.005), {1, 1, 1}), std::logic_error);
  a.reset();
  CHECK_FALSE(a.done());
}

TEST_CASE("next-step corruption follows this step's packet error") {
  LabeledDataset ds = small_dataset();
  EnvConfig cfg;
  WirelessEnv env(cfg, &ds, 55);
  env.reset();
  // first observation is clean
  for (int k = 0; k < cfg.users; ++k) {
    CHECK(env.state().corrupted[k].samples.values ==
          env.state().windows[k].samples.values);
  }
  // a starved power action corrupts what the BS sees next step
  ActionVector weak = even_action(cfg, 1e-9);
  StepMetrics m = env.step(weak, {0, 0, 0});
  for (int k = 0; k < cfg.users; ++k) {
    CHECK(m.packet_error[k] == Catch::Approx(1.0).margin(1e-9));
    CHECK(env.state().corrupted[k].samples.values !=
          env.state().windows[k].samples.values);
  }
}
