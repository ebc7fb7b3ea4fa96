#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "mird/denoisers.hpp"
#include "mird/diffusion.hpp"
#include "mird/mc_verify.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mird;
using mird::testing::max_abs_diff;
using mird::testing::random_image;

namespace {

ConditionSet scalar_conds(std::initializer_list<double> js, int n = 1) {
  std::vector<Image> v;
  for (double j : js) v.emplace_back(1, n, 1, j);
  return ConditionSet(std::move(v));
}

double mean_of(const Image& img) {
  double s = 0;
  for (double v : img.data()) s += v;
  return s / double(img.size());
}

double var_of(const Image& img) {
  const double m = mean_of(img);
  double s = 0;
  for (double v : img.data()) s += (v - m) * (v - m);
  return s / double(img.size() - 1);
}

}  // namespace

TEST(Residuals, DifferenceOfConditionAndEstimate) {
  const ConditionSet c = scalar_conds({0.5, 0.1});
  const auto r = residuals(Image(1, 1, 1, 0.3), c);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_NEAR(r[0].at(0, 0), 0.2, 1e-15);
  EXPECT_NEAR(r[1].at(0, 0), -0.2, 1e-15);
  EXPECT_EQ(residuals(Image(1, 1, 1, 1.0), scalar_conds({0.0}))[0].at(0, 0), -1.0);
}

TEST(ForwardStep, ZeroIncrementLeavesStateUnchanged) {
  const NoiseSchedule s = NoiseSchedule::from_ladder({0.0, 0.5, 0.5}, {0.5, 0.5}, 2.0, false);
  const Image x = random_image(4, 5, 1, 1);
  const ConditionSet c({random_image(4, 5, 1, 2), random_image(4, 5, 1, 3)});
  Rng rng(7);
  EXPECT_EQ(forward_step(x, random_image(4, 5, 1, 4), c, s, 2, rng), x);
}

TEST(ForwardStep, NoiselessDrift) {
  const NoiseSchedule s = NoiseSchedule::from_ladder({0.0, 0.04, 0.5}, {1.0}, 2.0).with_kappa(0.0);
  Rng rng(1);
  const Image out = forward_step(Image(1, 1, 1, 0.0), Image(1, 1, 1, 0.0), scalar_conds({1.0}), s, 1, rng);
  EXPECT_NEAR(out.at(0, 0), 0.04, 1e-15);
}

TEST(ForwardStep, NoiseOnlyMoments) {
  const int n = 100000;
  const NoiseSchedule s = NoiseSchedule::from_ladder({0.0, 0.04, 0.5}, {1.0}, 2.0);
  Rng rng(99);
  const Image out = forward_step(Image(1, n, 1, 0.0), Image(1, n, 1, 0.0), scalar_conds({0.0}, n), s, 1, rng);
  const double sd = std::sqrt(var_of(out));
  EXPECT_NEAR(mean_of(out), 0.0, 3 * 0.4 / std::sqrt(double(n)));
  EXPECT_NEAR(sd, 0.4, 3 * 0.4 / std::sqrt(2.0 * n));
}

TEST(ForwardMarginal, SymmetricConditionsCancel) {
  const int n = 100000;
  const NoiseSchedule s = NoiseSchedule::from_ladder({0.0, 0.5, 0.99}, {0.5, 0.5}, 2.0);
  Rng rng(5);
  const Image out = forward_marginal(Image(1, n, 1, 0.0), scalar_conds({1.0, -1.0}, n), s, 2, rng);
  EXPECT_NEAR(mean_of(out), 0.0, 3 * std::sqrt(3.96 / n));
  EXPECT_NEAR(var_of(out), 3.96, 3 * 3.96 * std::sqrt(2.0 / n));
}

TEST(ForwardMarginal, AllWeightOnOneCondition) {
  const NoiseSchedule s = NoiseSchedule::from_ladder({0.0, 0.5, 0.99}, {1.0, 0.0}, 2.0).with_kappa(0.0);
  Rng rng(5);
  EXPECT_NEAR(forward_marginal(Image(1, 1, 1, 0.0), scalar_conds({1.0, -1.0}), s, 2, rng).at(0, 0), 0.99, 1e-15);
}

TEST(ForwardMarginal, ZeroKappaIsDeterministic) {
  const NoiseSchedule s = build_schedule({}).with_kappa(0.0);
  const ConditionSet c({random_image(6, 6, 3, 1), random_image(6, 6, 3, 2)});
  const Image clean = random_image(6, 6, 3, 3);
  Rng a(1), b(2);
  for (int t = 1; t <= s.steps(); ++t) EXPECT_EQ(forward_marginal(clean, c, s, t, a), forward_marginal(clean, c, s, t, b));
}

TEST(ForwardMarginal, EndpointsTouchCleanFrameAndBlend) {
  const NoiseSchedule s = build_schedule({}).with_kappa(0.0);
  const ConditionSet c({random_image(6, 6, 1, 1), random_image(6, 6, 1, 2)});
  const Image clean = random_image(6, 6, 1, 3);
  Rng rng(0);
  double max_r = 0;
  for (const Image& r : residuals(clean, c))
    for (double v : r.data()) max_r = std::max(max_r, std::abs(v));
  EXPECT_LE(max_abs_diff(forward_marginal(clean, c, s, 1, rng), clean), s.eta_sum(1) * max_r + 1e-15);
  const Image end = forward_marginal(clean, c, s, 20, rng);
  for (std::size_t k = 0; k < end.size(); ++k) {
    const double want = (1 - 0.99) * clean.data()[k] + 0.99 * (0.5 * c[0].data()[k] + 0.5 * c[1].data()[k]);
    EXPECT_NEAR(end.data()[k], want, 1e-12);
  }
}

TEST(ForwardMarginal, StepCompositionMatchesClosedForm) {
  const int n = 60000;
  ScheduleConfig cfg;
  cfg.steps = 6;
  cfg.weights = {0.3, 0.7};
  const NoiseSchedule s = build_schedule(cfg);
  const ConditionSet c = scalar_conds({0.9, 0.1}, n);
  const Image clean(1, n, 1, 0.4);
  Rng rng(11);
  Image x = clean;
  for (int t = 1; t <= s.steps(); ++t) x = forward_step(x, clean, c, s, t, rng);
  const double want_mean = 0.4 + s.eta(6, 0) * 0.5 + s.eta(6, 1) * (-0.3);
  const double want_var = 4.0 * s.eta_sum(6);
  EXPECT_NEAR(mean_of(x), want_mean, 4 * std::sqrt(want_var / n));
  EXPECT_NEAR(var_of(x) / want_var, 1.0, 0.03);
}

TEST(Posterior, WorkedExample) {
  const NoiseSchedule s = NoiseSchedule::from_ladder({0.0, 0.3, 0.5}, {1.0}, 2.0);
  const Posterior p = posterior_stats(Image(1, 1, 1, 1.0), Image(1, 1, 1, 0.0), scalar_conds({0.0}), s, 2);
  EXPECT_NEAR(p.mean.at(0, 0), 0.6, 1e-12);
  EXPECT_NEAR(p.sigma2, 0.48, 1e-12);
}

TEST(Posterior, MatchesGaussianConditioning) {
  std::mt19937_64 gen(2024);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 4;
    const auto lad = mird::testing::random_ladder(gen, 6, n);
    const NoiseSchedule s = NoiseSchedule::from_ladder(lad.eta_sum, lad.weights, lad.kappa);
    const int t = 2 + trial % 5;
    std::vector<double> j(n), eta_prev(n), eta_t(n);
    std::vector<Image> imgs;
    for (int i = 0; i < n; ++i) {
      j[i] = u(gen);
      imgs.emplace_back(1, 1, 1, j[i]);
      eta_prev[i] = lad.weights[i] * lad.eta_sum[t - 1];
      eta_t[i] = lad.weights[i] * lad.eta_sum[t];
    }
    const double x0 = u(gen), xt = u(gen);
    const auto want = mird::testing::gaussian_conditioning(eta_prev, eta_t, lad.kappa, x0, j, xt);
    const Posterior p = posterior_stats(Image(1, 1, 1, xt), Image(1, 1, 1, x0), ConditionSet(imgs), s, t);
    ASSERT_NEAR(p.mean.at(0, 0), want.mean, 1e-8) << "trial " << trial;
    ASSERT_NEAR(p.sigma2, want.var, 1e-8) << "trial " << trial;
  }
}

TEST(Posterior, SingleConditionReduction) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const auto lad = mird::testing::random_ladder(gen, 5, 1);
    const NoiseSchedule s = NoiseSchedule::from_ladder(lad.eta_sum, {1.0}, lad.kappa);
    const int t = 2 + trial % 4;
    const double e = u(gen), xt = u(gen), y = u(gen);
    const double st = lad.eta_sum[t], sp = lad.eta_sum[t - 1], a = st - sp;
    // With one condition the residual terms cancel and y drops out.
    const double want = sp / st * xt + a / st * e;
    const Posterior p = posterior_stats(Image(1, 1, 1, xt), Image(1, 1, 1, e), scalar_conds({y}), s, t);
    EXPECT_NEAR(p.mean.at(0, 0), want, 1e-12);
    EXPECT_NEAR(p.sigma2, lad.kappa * lad.kappa * sp * a / st, 1e-12);
  }
}

TEST(Posterior, FirstStepCollapsesOntoEstimate) {
  const NoiseSchedule s = build_schedule({});
  const ConditionSet c({random_image(5, 5, 3, 1), random_image(5, 5, 3, 2)});
  const Image est = random_image(5, 5, 3, 3);
  const Posterior p = posterior_stats(random_image(5, 5, 3, 4), est, c, s, 1);
  EXPECT_EQ(p.sigma2, 0.0);
  EXPECT_LT(max_abs_diff(p.mean, est), 1e-12);
}

TEST(Posterior, ShapeAndCountMismatch) {
  const NoiseSchedule s = build_schedule({});
  const ConditionSet c({Image(3, 3, 1), Image(3, 3, 1)});
  EXPECT_THROW(posterior_stats(Image(3, 4, 1), Image(3, 3, 1), c, s, 2), InvalidInput);
  EXPECT_THROW(posterior_stats(Image(3, 3, 1), Image(3, 3, 1), ConditionSet({Image(3, 3, 1)}), s, 2), InvalidInput);
  EXPECT_THROW(posterior_stats(Image(3, 3, 1), Image(3, 3, 1), c, s, 21), InvalidInput);
}

TEST(PosteriorScalar, ExpandedAndSimplifiedCorrectionAgree) {
  std::mt19937_64 gen(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 3;
    posterior_scalar::Ladders l;
    std::vector<double> j(n);
    for (int i = 0; i < n; ++i) {
      l.eta_prev.push_back(0.3 * u(gen));
      l.eta_t.push_back(l.eta_prev.back() + 0.01 + 0.3 * u(gen));
      j[i] = u(gen);
    }
    const double xt = u(gen), ih = u(gen);
    const double a = posterior_scalar::mean_from_delta(l, xt, ih, posterior_scalar::delta_expanded(l, ih, j));
    const double b = posterior_scalar::mean_from_delta(l, xt, ih, posterior_scalar::delta_simplified(l, ih, j));
    ASSERT_NEAR(a, b, 1e-10);
  }
}

TEST(PosteriorScalar, CorrectionVanishesForProportionalLadders) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const double sp = 0.4 * u(gen), st = sp + 0.01 + 0.5 * u(gen);
    const std::vector<double> w{0.25, 0.75};
    posterior_scalar::Ladders l{{w[0] * st, w[1] * st}, {w[0] * sp, w[1] * sp}};
    const std::vector<double> j{u(gen), u(gen)};
    const double xt = u(gen), ih = u(gen);
    EXPECT_NEAR(posterior_scalar::delta_simplified(l, ih, j), 0.0, 1e-12);
    const auto want = mird::testing::gaussian_conditioning(l.eta_prev, l.eta_t, 1.5, ih, j, xt);
    EXPECT_NEAR(posterior_scalar::mean(l, xt, ih, j), want.mean, 1e-10);
    EXPECT_NEAR(posterior_scalar::variance(l, 1.5), want.var, 1e-10);
  }
}

TEST(ReverseSample, OracleCollapsesOntoGroundTruth) {
  const NoiseSchedule s = build_schedule({});
  const ConditionSet c({random_image(8, 8, 3, 1), random_image(8, 8, 3, 2)});
  const Image gt = random_image(8, 8, 3, 3);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SamplerRun r = reverse_sample(c, s, oracle_denoiser(gt), 0.5, seed);
    EXPECT_LE(max_abs_diff(r.final, gt), 1e-5);
  }
}

TEST(ReverseSample, SameSeedSameOutput) {
  const NoiseSchedule s = build_schedule({});
  const ConditionSet c({random_image(8, 8, 1, 1), random_image(8, 8, 1, 2)});
  const Denoiser d = shrinkage_denoiser(random_image(8, 8, 1, 3));
  SamplerOptions opt;
  opt.record_trajectory = true;
  const SamplerRun a = reverse_sample(c, s, d, 0.5, 42, opt), b = reverse_sample(c, s, d, 0.5, 42, opt);
  EXPECT_EQ(a.final, b.final);
  ASSERT_EQ(a.trajectory.size(), 20u);
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) EXPECT_EQ(a.trajectory[i], b.trajectory[i]);
  EXPECT_NE(reverse_sample(c, s, d, 0.5, 43).final, a.final);
  opt.stream = 1;
  EXPECT_NE(reverse_sample(c, s, d, 0.5, 42, opt).final, a.final);
}

TEST(ReverseSample, NoiselessWarpBlendPassesEstimateThrough) {
  const NoiseSchedule s = build_schedule({}).with_kappa(0.0);
  const ConditionSet c({random_image(8, 8, 3, 1), random_image(8, 8, 3, 2)});
  const Image est = random_image(8, 8, 3, 3);
  EXPECT_LE(max_abs_diff(reverse_sample(c, s, warp_blend_denoiser(est), 0.5, 1).final, est), 1e-12);
}

TEST(ReverseSample, NonFiniteDenoiserReportsStep) {
  const NoiseSchedule s = build_schedule({});
  const ConditionSet c({Image(4, 4, 1, 0.2), Image(4, 4, 1, 0.8)});
  const Denoiser bad = [](const Image& x, const ConditionSet&, double, int t, const NoiseSchedule&) {
    Image out = x;
    if (t == 7) out.data()[3] = std::nan("");
    return out;
  };
  try {
    reverse_sample(c, s, bad, 0.5, 1);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step 7"), std::string::npos) << e.what();
  }
  EXPECT_THROW(reverse_sample(c, s, Denoiser{}, 0.5, 1), ConfigError);
}

TEST(Denoisers, InversionRecoversCleanFrameWithoutNoise) {
  const NoiseSchedule s = build_schedule({}).with_kappa(0.0);
  const ConditionSet c({random_image(6, 6, 3, 1), random_image(6, 6, 3, 2)});
  const Image clean = random_image(6, 6, 3, 3);
  Rng rng(0);
  for (int t = 1; t <= s.steps(); ++t) {
    const Image xt = forward_marginal(clean, c, s, t, rng);
    EXPECT_LT(max_abs_diff(inversion_denoiser()(xt, c, 0.5, t, s), clean), 1e-10) << "t=" << t;
  }
}

TEST(Denoisers, LinearShrinkageWeightAtFirstStep) {
  ShrinkageOptions o;
  o.policy = ShrinkagePolicy::linear;
  EXPECT_NEAR(shrinkage_weight(build_schedule({}), 1, o), 0.9996, 1e-15);
}

TEST(Denoisers, SnrShrinkageWeightDecreasesWithNoise) {
  const NoiseSchedule s = build_schedule({});
  double prev = 1.0;
  for (int t = 1; t <= s.steps(); ++t) {
    const double w = shrinkage_weight(s, t);
    const double sv = 4.0 * s.eta_sum(t) / std::pow(1 - s.eta_sum(t), 2);
    EXPECT_NEAR(w, 0.0004 / (0.0004 + sv), 1e-15);
    EXPECT_LT(w, prev);
    prev = w;
  }
  EXPECT_EQ(shrinkage_weight(s.with_kappa(0.0), 5), 1.0);
}

TEST(Denoisers, PerPixelPriorVarianceSetsTheWeight) {
  const NoiseSchedule s = build_schedule({});
  const ConditionSet c({Image(1, 2, 1, 0.2), Image(1, 2, 1, 0.6)});
  const Image est(1, 2, 1, 0.5);
  Image pv(1, 2, 1, 0.0004);
  pv.at(0, 1) = 0.01;
  const Image x(1, 2, 1, 0.45);
  const Image inv = invert_marginal(x, c, s, 3);
  const Image out = shrinkage_denoiser(est, {}, pv)(x, c, 0.5, 3, s);
  for (int i = 0; i < 2; ++i) {
    const double lambda = shrinkage_weight(s, 3, pv.at(0, i));
    EXPECT_NEAR(out.at(0, i), lambda * inv.at(0, i) + (1 - lambda) * 0.5, 1e-15);
  }
  EXPECT_GT(shrinkage_weight(s, 3, 0.01), shrinkage_weight(s, 3, 0.0004));
  EXPECT_EQ(shrinkage_weight(s, 3, 0.0004), shrinkage_weight(s, 3));
  EXPECT_THROW(shrinkage_denoiser(est, {}, Image(1, 3, 1)), InvalidInput);
}

TEST(Denoisers, WarpBlendIgnoresNoisyState) {
  const NoiseSchedule s = build_schedule({});
  const ConditionSet c({Image(4, 4, 1, 0.0), Image(4, 4, 1, 1.0)});
  const Image est = random_image(4, 4, 1, 1);
  const Denoiser d = warp_blend_denoiser(est);
  EXPECT_EQ(d(random_image(4, 4, 1, 2), c, 0.5, 10, s), est);
  EXPECT_EQ(d(random_image(4, 4, 1, 3), c, 0.5, 3, s), est);
}

TEST(Denoisers, FactoryRequiresInputs) {
  EXPECT_THROW(make_denoiser(DenoiserKind::oracle, {}), ConfigError);
  EXPECT_THROW(make_denoiser(DenoiserKind::warp_blend, {}), ConfigError);
  EXPECT_THROW(make_denoiser(DenoiserKind::shrinkage, {}), ConfigError);
  EXPECT_NO_THROW(make_denoiser(DenoiserKind::inversion, {}));
  for (auto k : {DenoiserKind::oracle, DenoiserKind::inversion, DenoiserKind::warp_blend, DenoiserKind::shrinkage})
    EXPECT_EQ(parse_denoiser_kind(to_string(k)), k);
  EXPECT_THROW(parse_denoiser_kind("magic"), InvalidInput);
}

TEST(McVerify, DefaultScheduleAgreesWithClosedForms) {
  const VerifyReport r = mc_verify(build_schedule({}), {});
  ASSERT_FALSE(r.checks.empty());
  for (const Check& c : r.checks) EXPECT_TRUE(c.pass) << c.name << " " << c.statistic << " z=" << c.z;
}

TEST(McVerify, ThreeConditionScenario) {
  ScheduleConfig cfg;
  cfg.weights = {0.2, 0.5, 0.3};
  ScalarScenario sc{0.5, {0.9, 0.1, 0.4}};
  McOptions o;
  o.samples = 40000;
  EXPECT_TRUE(mc_verify(build_schedule(cfg), sc, o).all_pass());
}

TEST(McVerify, TooFewSamplesRejected) {
  McOptions o;
  o.samples = kMinVerifySamples - 1;
  EXPECT_THROW(mc_verify(build_schedule({}), {}, o), InvalidInput);
}

TEST(McVerify, BrokenLadderFailsMonotonicity) {
  std::vector<double> ladder = build_schedule({}).eta_sum();
  std::swap(ladder[9], ladder[10]);
  const NoiseSchedule bad = NoiseSchedule::from_ladder(ladder, {0.5, 0.5}, 2.0, false);
  const VerifyReport r = verify_schedule(bad, 0.0004, 0.99);
  EXPECT_FALSE(r.all_pass());
  EXPECT_EQ(r.checks.front().name, "schedule_monotone");
  EXPECT_FALSE(r.checks.front().pass);
  EXPECT_TRUE(verify_schedule(build_schedule({}), 0.0004, 0.99).all_pass());
}

TEST(McVerify, SingleConditionReductionPasses) {
  EXPECT_TRUE(verify_single_condition_reduction(1000, 4).all_pass());
}

TEST(McVerify, CsvHasHeaderAndOneRowPerCheck) {
  const VerifyReport r = verify_schedule(build_schedule({}), 0.0004, 0.99);
  std::ostringstream os;
  write_csv(os, r);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "check,statistic,expected,observed,z,verdict");
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "pass");
  }
  EXPECT_EQ(rows, r.checks.size());
}
