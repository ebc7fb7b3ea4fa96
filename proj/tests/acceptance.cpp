// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>

#include "mird/mird.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mird;
using mird::testing::max_abs_diff;
using mird::testing::random_image;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome schedule_exactness() {
  const auto t0 = Clock::now();
  ScheduleConfig c;
  c.kappa = 2.0;
  c.steps = 20;
  c.p = 0.3;
  c.eta_T_sum = 0.99;
  const NoiseSchedule s = build_schedule(c);
  bool ok = std::abs(s.eta_sum(1) - 0.0004) <= 1e-12 && std::abs(s.eta_sum(20) - 0.99) <= 1e-12;
  for (int t = 1; t <= 20; ++t) ok = ok && s.eta_sum(t) > s.eta_sum(t - 1);
  const double secs = seconds_since(t0);
  return {ok && secs < 1.0, fmt("eta1=%.17g etaT=%.17g %.3fs", s.eta_sum(1), s.eta_sum(20), secs)};
}

Outcome single_condition_reduction() {
  std::mt19937_64 gen(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto lad = mird::testing::random_ladder(gen, 2 + trial % 15, 1);
    const NoiseSchedule s = NoiseSchedule::from_ladder(lad.eta_sum, {1.0}, lad.kappa);
    const int t = 2 + trial % (s.steps() - 1);
    const double xt = 2 * u(gen) - 0.5, x0 = u(gen), y = u(gen);
    const double eta = lad.eta_sum[t], eta_prev = lad.eta_sum[t - 1], alpha = eta - eta_prev;
    const Posterior p = posterior_stats(Image(1, 1, 1, xt), Image(1, 1, 1, x0), ConditionSet({Image(1, 1, 1, y)}), s, t);
    worst = std::max(worst, std::abs(p.mean.at(0, 0) - (eta_prev / eta * xt + alpha / eta * x0)));
    worst = std::max(worst, std::abs(p.sigma2 - lad.kappa * lad.kappa * eta_prev * alpha / eta));
  }
  return {worst <= 1e-10, fmt("max error %.3g", worst)};
}

Outcome gaussian_conditioning() {
  std::mt19937_64 gen(202);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 4;
    const auto lad = mird::testing::random_ladder(gen, 2 + trial % 19, n);
    const NoiseSchedule s = NoiseSchedule::from_ladder(lad.eta_sum, lad.weights, lad.kappa);
    const int t = 1 + trial % s.steps();
    std::vector<double> j(n), eta_prev(n), eta_t(n);
    std::vector<Image> conds;
    for (int i = 0; i < n; ++i) {
      j[i] = u(gen);
      conds.emplace_back(1, 1, 1, j[i]);
      eta_prev[i] = lad.weights[i] * lad.eta_sum[t - 1];
      eta_t[i] = lad.weights[i] * lad.eta_sum[t];
    }
    const double x0 = u(gen), xt = u(gen);
    const auto want = mird::testing::gaussian_conditioning(eta_prev, eta_t, lad.kappa, x0, j, xt);
    const Posterior p = posterior_stats(Image(1, 1, 1, xt), Image(1, 1, 1, x0), ConditionSet(conds), s, t);
    worst = std::max({worst, std::abs(p.mean.at(0, 0) - want.mean), std::abs(p.sigma2 - want.var)});
  }
  return {worst <= 1e-8, fmt("max error %.3g", worst)};
}

Outcome marginal_composition() {
  const auto t0 = Clock::now();
  const int n = 100000;
  const NoiseSchedule s = build_schedule({});
  const double clean = 0.3;
  const std::vector<double> j{1.0, 0.0};
  const ConditionSet conds({Image(1, n, 1, j[0]), Image(1, n, 1, j[1])});
  const Image i_tau(1, n, 1, clean);
  Rng rng(12345);
  Image x = i_tau;
  bool ok = true;
  double worst_z = 0, worst_ratio = 1;
  for (int t = 1; t <= s.steps(); ++t) {
    x = forward_step(x, i_tau, conds, s, t, rng);
    if (t % 5 != 0 && t != 1) continue;
    double want_mean = clean;
    for (std::size_t i = 0; i < j.size(); ++i) want_mean += s.weights()[i] * s.eta_sum(t) * (j[i] - clean);
    const double want_var = 4.0 * s.eta_sum(t);
    double m = 0, v = 0;
    for (double d : x.data()) m += d;
    m /= n;
    for (double d : x.data()) v += (d - m) * (d - m);
    v /= n - 1;
    const double z = (m - want_mean) / std::sqrt(want_var / n);
    worst_z = std::max(worst_z, std::abs(z));
    if (std::abs(v / want_var - 1) > std::abs(worst_ratio - 1)) worst_ratio = v / want_var;
    ok = ok && std::abs(z) <= 4.0 && v / want_var >= 0.97 && v / want_var <= 1.03;
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 30.0, fmt("max |z| %.2f, worst variance ratio %.4f, %.1fs", worst_z, worst_ratio, secs)};
}

Outcome oracle_collapse() {
  double worst = 0;
  for (std::uint64_t k = 0; k < 10; ++k) {
    const TripletSample t = gen_triplet(random_scene(64, 64, 500 + k, {2, 6.0}), 0.5);
    const ConditionSet conds({t.i0, t.i1});
    ScheduleConfig c;
    c.weights = partition_weights(0.5);
    const SamplerRun run = reverse_sample(conds, build_schedule(c), oracle_denoiser(t.i_tau), 0.5, k);
    worst = std::max(worst, max_abs_diff(run.final, t.i_tau));
  }
  return {worst <= 1e-5, fmt("max error %.3g over 10 triplets", worst)};
}

Outcome tau_endpoints() {
  const auto t0 = Clock::now();
  const SceneSpec s = panning_texture_scene(64, 96, 10, 1);
  const Image i0 = render(s, 0.0), i1 = render(s, 1.0);
  const double at0 = tau_ifd(i0, i0, i1).tau;
  const TripletSample mid = gen_triplet(s, 0.5), third = gen_triplet(s, 0.3);
  const double at_mid = tau_ifd(mid.i0, mid.i_tau, mid.i1).tau;
  const double at_third = tau_ifd(third.i0, third.i_tau, third.i1).tau;
  const double secs = seconds_since(t0);
  const bool ok = at0 <= 0.02 && std::abs(at_mid - 0.5) <= 0.05 && std::abs(at_third - 0.3) <= 0.05 && secs < 60;
  return {ok, fmt("tau(I0)=%.4f tau(0.5)=%.4f tau(0.3)=%.4f %.1fs", at0, at_mid, at_third, secs)};
}

Outcome warp_identities() {
  const Image img = random_image(24, 32, 3, 7);
  const FlowField zero(24, 32);
  const Image z = importance_z(img, img, zero);
  const double splat_err = max_abs_diff(softmax_splat(img, zero, z, 1.0).image, img);
  const double warp_err = max_abs_diff(backward_warp(img, zero), img);
  const Image flat(24, 32, 3, 0.42);
  const FlowField moving(24, 32, 1.5, -0.75);
  const SplatResult sp = softmax_splat(flat, moving, Image(24, 32, 1, 0.0), 1.0);
  double const_err = max_abs_diff(backward_warp(flat, moving), flat);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 32; ++x)
      if (sp.mask.at(y, x) > 0)
        for (int c = 0; c < 3; ++c) const_err = std::max(const_err, std::abs(sp.image.at(y, x, c) - 0.42));
  const bool ok = splat_err <= 1e-6 && warp_err == 0.0 && const_err <= 1e-12;
  return {ok, fmt("splat %.3g, warp %.3g, constant %.3g", splat_err, warp_err, const_err)};
}

Outcome edge_formulas() {
  bool exact = true;
  for (double v : dog(Image(32, 32, 1, 0.61)).data()) exact = exact && v == 0.5;
  Image step(16, 80, 1, 0.1);
  for (int y = 0; y < 16; ++y)
    for (int x = 30; x < 80; ++x) step.at(y, x) = 0.9;
  const EdgeParams p;
  const Mask e = edge_set(step, p);
  int last = -1;
  for (int x = 0; x < 80; ++x)
    if (e.at(8, x) > 0) last = x;
  double err = 1.0;
  if (last >= 0 && last + int(p.d) < 80) err = std::abs(nedt(step, p).at(8, last + int(p.d)) - (1.0 - std::exp(-1.0)));
  return {exact && err <= 1e-6, fmt("DoG exact=%d, NEDT error %.3g", int(exact), err)};
}

Outcome infill_rules() {
  const Image a = random_image(6, 6, 3, 1), b = random_image(6, 6, 3, 2);
  const Image i0 = random_image(6, 6, 3, 3), i1 = random_image(6, 6, 3, 4);
  auto bundle = [&](double m0, double m1) {
    WarpBundle w;
    w.img_0to_tau = a;
    w.img_1to_tau = b;
    w.mask_0 = Mask(6, 6, m0);
    w.mask_1 = Mask(6, 6, m1);
    return w;
  };
  bool ok = true;
  const Image both = infill(bundle(1, 1), i0, i1, 0.25);
  const Image one = infill(bundle(0, 1), i0, i1, 0.25);
  const Image none = infill(bundle(0, 0), i0, i1, 0.25);
  for (std::size_t k = 0; k < both.size(); ++k) {
    ok = ok && both.data()[k] == 0.5 * (a.data()[k] + b.data()[k]);
    ok = ok && one.data()[k] == b.data()[k];
    ok = ok && none.data()[k] == 0.75 * i0.data()[k] + 0.25 * i1.data()[k];
  }
  return {ok, "mask-blend examples"};
}

Outcome end_to_end() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::ostringstream gains;
  for (std::uint64_t k = 0; k < 20; ++k) {
    const TripletSample t = gen_triplet(random_scene(256, 448, 1000 + k), 0.5);
    InterpConfig cfg;
    cfg.denoiser = DenoiserKind::shrinkage;
    cfg.tau = 0.5;
    cfg.seed = k;
    const double ours = psnr(interpolate(t.i0, t.i1, cfg).frame, t.i_tau);
    const double base = psnr(overlay(t.i0, t.i1), t.i_tau);
    wins += ours > base;
    gains << (k ? " " : "") << fmt("%+.1f", ours - base);
  }
  const double secs = seconds_since(t0);
  return {wins >= 18 && secs < 600, fmt("%d/20 wins, %.0fs, dB gains: ", wins, secs) + gains.str()};
}

Outcome uncertainty_invariants() {
  const TripletSample t = gen_triplet(random_scene(96, 128, 77), 0.5);
  InterpConfig cfg;
  cfg.denoiser = DenoiserKind::shrinkage;
  cfg.seed = 3;
  const UncertaintyReport r = uncertainty(t.i0, t.i1, cfg, 10);
  bool ok = r.samples == 10 && r.mean_pairwise_corr >= -1 && r.mean_pairwise_corr <= 1;
  for (std::size_t k = 0; k < r.sd_map.size(); ++k)
    ok = ok && r.sd_map.data()[k] >= 0 && r.sd_map.data()[k] <= r.minmax_map.data()[k] + 1e-12;
  const double corr = pearson(r.sd_map.data(), rmse_map(interpolate(t.i0, t.i1, cfg).frame, t.i_tau).data());
  cfg.denoiser = DenoiserKind::oracle;
  cfg.ground_truth = t.i_tau;
  const UncertaintyReport o = uncertainty(t.i0, t.i1, cfg, 10);
  double oracle_sd = 0;
  for (double v : o.sd_map.data()) oracle_sd = std::max(oracle_sd, v);
  ok = ok && oracle_sd == 0.0 && corr >= 0.0;
  return {ok, fmt("corr %.4f, oracle max sd %.3g, sd-rmse pearson %.3f", r.mean_pairwise_corr, oracle_sd, corr)};
}

Outcome flo_round_trip() {
  const std::vector<unsigned char> golden = {'P', 'I', 'E', 'H', 1, 0, 0, 0, 1, 0, 0, 0,
                                             0x00, 0x00, 0xC0, 0x3F, 0x00, 0x00, 0x00, 0xC0};
  const FlowField g = decode_flo(golden);
  bool ok = g.height() == 1 && g.width() == 1 && g.u(0, 0) == 1.5 && g.v(0, 0) == -2.0;
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<float> d(-60.0f, 60.0f);
  FlowField f(17, 23);
  for (double& v : f.data()) v = d(gen);
  const auto path = std::filesystem::temp_directory_path() / "mird_acceptance.flo";
  write_flo(f, path);
  const FlowField back = read_flo(path);
  std::filesystem::remove(path);
  ok = ok && back.height() == 17 && back.width() == 23;
  for (std::size_t k = 0; ok && k < f.data().size(); ++k) ok = back.data()[k] == f.data()[k];
  ok = ok && encode_flo(back) == encode_flo(f);
  return {ok, "golden 1x1 and 17x23 file round trip"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"schedule exactness", schedule_exactness},
      {"single-condition reduction", single_condition_reduction},
      {"gaussian conditioning", gaussian_conditioning},
      {"marginal composition", marginal_composition},
      {"oracle chain collapse", oracle_collapse},
      {"tau endpoints and symmetry", tau_endpoints},
      {"warp identities", warp_identities},
      {"edge formulas", edge_formulas},
      {"infill rules", infill_rules},
      {"end-to-end quality floor", end_to_end},
      {"uncertainty invariants", uncertainty_invariants},
      {"flo round trip", flo_round_trip},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
