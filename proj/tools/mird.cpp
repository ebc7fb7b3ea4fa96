#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mird/mird.hpp"
#include "mird/scene_json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit : int { kOk = 0, kVerifyFail = 1, kUsage = 2, kIo = 3, kNumerical = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// flags > environment > defaults
template <typename T>
T from_env(const char* name, T fallback) {
  const char* raw = std::getenv(name);
  if (raw == nullptr || *raw == '\0') return fallback;
  std::istringstream in(raw);
  T v{};
  if (!(in >> v) || !in.eof()) throw UsageError(std::string(name) + ": cannot parse '" + raw + "'");
  return v;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;

  std::uint64_t resolved_seed() const { return seed ? *seed : from_env<std::uint64_t>("MIRD_SEED", 0); }
  int resolved_threads() const {
    const int t = threads ? *threads : from_env<int>("MIRD_THREADS", 0);
    if (t < 0) throw UsageError("thread count must be >= 0");
    return t;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "RNG seed (env MIRD_SEED, default 0)");
  cmd->add_option("--threads", c.threads, "worker threads, 0 = auto (env MIRD_THREADS)");
}

struct ScheduleFlags {
  int steps = 20;
  double kappa = 2.0;
  double p = 0.3;
  double eta_T = 0.99;
  std::optional<double> eta_1;

  mird::ScheduleConfig config() const {
    mird::ScheduleConfig c;
    c.steps = steps;
    c.kappa = kappa;
    c.p = p;
    c.eta_T_sum = eta_T;
    c.eta_1_sum = eta_1;
    return c;
  }
};

void add_schedule_flags(CLI::App* cmd, ScheduleFlags& s) {
  cmd->add_option("--steps", s.steps, "diffusion steps T")->check(CLI::Range(2, 10000));
  cmd->add_option("--kappa", s.kappa, "noise scale")->check(CLI::PositiveNumber);
  cmd->add_option("--p", s.p, "ladder exponent")->check(CLI::PositiveNumber);
  cmd->add_option("--eta-T", s.eta_T, "final ladder sum");
  cmd->add_option("--eta1", s.eta_1, "override the first ladder rung");
}

std::string fmt(double v, int precision = 10) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void ensure_dir(const fs::path& d) {
  std::error_code ec;
  fs::create_directories(d, ec);
  if (ec || !fs::is_directory(d)) throw mird::IoError("cannot create directory " + d.string());
}

// "ifd" or a number in [0,1]
struct TauChoice {
  bool ifd = false;
  double value = 0.5;
};

TauChoice parse_tau(const std::string& s) {
  TauChoice c;
  if (s == "ifd") {
    c.ifd = true;
    return c;
  }
  std::size_t used = 0;
  try {
    c.value = std::stod(s, &used);
  } catch (const std::exception&) {
    throw UsageError("--tau: expected a number in [0,1] or 'ifd', got '" + s + "'");
  }
  if (used != s.size()) throw UsageError("--tau: expected a number in [0,1] or 'ifd', got '" + s + "'");
  if (!(c.value >= 0.0 && c.value <= 1.0)) throw UsageError("--tau: " + s + " is outside the range [0,1]");
  return c;
}

// ---------------------------------------------------------------- interpolate

struct InterpFlags {
  Common common;
  ScheduleFlags sched;
  std::string i0, i1, gt, out, tau = "0.5", denoiser = "shrinkage", trajectory_dir;
};

mird::InterpConfig interp_config(const InterpFlags& f, std::optional<mird::Image> gt) {
  mird::InterpConfig cfg;
  cfg.schedule = f.sched.config();
  cfg.denoiser = mird::parse_denoiser_kind(f.denoiser);
  const TauChoice tau = parse_tau(f.tau);
  cfg.tau_source = tau.ifd ? mird::TauSource::ifd : mird::TauSource::fixed;
  cfg.tau = tau.value;
  if (tau.ifd && !gt) throw UsageError("--tau ifd needs the middle frame via --gt");
  if (cfg.denoiser == mird::DenoiserKind::oracle && !gt) throw UsageError("--denoiser oracle needs --gt");
  cfg.ground_truth = std::move(gt);
  cfg.seed = f.common.resolved_seed();
  cfg.threads = f.common.resolved_threads();
  return cfg;
}

int cmd_interpolate(const InterpFlags& f) {
  const auto t0 = std::chrono::steady_clock::now();
  parse_tau(f.tau);
  const mird::Image i0 = mird::read_png(f.i0);
  const mird::Image i1 = mird::read_png(f.i1);
  std::optional<mird::Image> gt;
  if (!f.gt.empty()) gt = mird::read_png(f.gt);
  mird::InterpConfig cfg = interp_config(f, gt);
  cfg.record_trajectory = !f.trajectory_dir.empty();
  const mird::Interpolation r = mird::interpolate(i0, i1, cfg);
  mird::write_png(r.frame, f.out);
  if (cfg.record_trajectory) {
    ensure_dir(f.trajectory_dir);
    const int T = cfg.schedule.steps;
    for (std::size_t k = 0; k < r.run.trajectory.size(); ++k) {
      std::ostringstream name;
      name << "x_t" << std::setw(4) << std::setfill('0') << (T - static_cast<int>(k)) << ".png";
      mird::write_png(mird::clamp_unit(r.run.trajectory[k]), fs::path(f.trajectory_dir) / name.str());
    }
  }
  json j;
  j["tau_used"] = r.tau_hat;
  j["tau_source"] = cfg.tau_source == mird::TauSource::ifd ? "ifd" : "fixed";
  j["steps"] = cfg.schedule.steps;
  j["seed"] = cfg.seed;
  j["denoiser"] = std::string(mird::to_string(cfg.denoiser));
  if (gt) {
    j["psnr"] = mird::psnr(r.frame, *gt);
    j["ssim"] = mird::ssim(r.frame, *gt);
  }
  j["out"] = f.out;
  j["wall_time_s"] = seconds_since(t0);
  std::cout << j.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- uncertainty

struct UncertaintyFlags {
  InterpFlags base;
  std::size_t samples = 10;
  std::string out_dir;
};

double visibility_scale(const mird::Image& m) {
  const double hi = *std::max_element(m.data().begin(), m.data().end());
  return hi > 0.0 ? 1.0 / hi : 1.0;
}

mird::Image scaled(mird::Image m, double s) {
  for (double& v : m.data()) v = std::min(1.0, v * s);
  return m;
}

double image_mean(const mird::Image& m) {
  double acc = 0.0;
  for (double v : m.data()) acc += v;
  return acc / static_cast<double>(m.size());
}

int cmd_uncertainty(const UncertaintyFlags& f) {
  const auto t0 = std::chrono::steady_clock::now();
  if (f.samples < 2) throw UsageError("--samples must be at least 2");
  parse_tau(f.base.tau);
  const mird::Image i0 = mird::read_png(f.base.i0);
  const mird::Image i1 = mird::read_png(f.base.i1);
  std::optional<mird::Image> gt;
  if (!f.base.gt.empty()) gt = mird::read_png(f.base.gt);
  const mird::InterpConfig cfg = interp_config(f.base, gt);
  const mird::UncertaintyReport r = mird::uncertainty(i0, i1, cfg, f.samples);

  ensure_dir(f.out_dir);
  const fs::path dir(f.out_dir);
  const double sd_scale = visibility_scale(r.sd_map);
  const double mm_scale = visibility_scale(r.minmax_map);
  mird::write_png(r.mean_img, dir / "mean.png");
  mird::write_png(scaled(r.sd_map, sd_scale), dir / "sd.png");
  mird::write_png(scaled(r.minmax_map, mm_scale), dir / "minmax.png");

  json j;
  j["samples"] = r.samples;
  j["seed"] = cfg.seed;
  j["tau_used"] = r.tau_hat;
  j["corr"] = r.mean_pairwise_corr;
  j["global_sd"] = image_mean(r.sd_map);
  j["global_minmax"] = image_mean(r.minmax_map);
  j["sd_scale"] = sd_scale;
  j["minmax_scale"] = mm_scale;
  if (gt) {
    const mird::Image err = mird::rmse_map(r.mean_img, *gt);
    j["sd_rmse_corr"] = mird::pearson(r.sd_map.data(), err.data());
    j["psnr_mean"] = mird::psnr(r.mean_img, *gt);
  }
  {
    std::ofstream os(dir / "summary.json");
    if (!os) throw mird::IoError("cannot write " + (dir / "summary.json").string());
    os << j.dump(2) << '\n';
  }
  j["wall_time_s"] = seconds_since(t0);
  std::cout << j.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- tau

struct TauFlags {
  Common common;
  std::string i0, i_tau, i1, flow0, flow1, mask_dir, dir, csv;
};

json tau_json(const mird::TauEstimate& e) {
  return {{"tau", e.tau}, {"mass0", e.mass_0}, {"mass1", e.mass_1}, {"degenerate", e.degenerate}};
}

int cmd_tau_single(const TauFlags& f) {
  if (f.i0.empty() || f.i_tau.empty() || f.i1.empty()) {
    throw UsageError("tau: give --i0, --i-tau and --i1, or --dir");
  }
  const mird::Image i0 = mird::read_png(f.i0);
  const mird::Image it = mird::read_png(f.i_tau);
  const mird::Image i1 = mird::read_png(f.i1);
  mird::TauFlows flows;
  if (!f.flow0.empty()) flows.from_0 = mird::read_flo(f.flow0);
  if (!f.flow1.empty()) flows.from_1 = mird::read_flo(f.flow1);
  const mird::TauDetail d = mird::tau_ifd_detailed(i0, it, i1, flows);
  if (!f.mask_dir.empty()) {
    ensure_dir(f.mask_dir);
    mird::write_png(d.mask_0, fs::path(f.mask_dir) / "mask0.png");
    mird::write_png(d.mask_1, fs::path(f.mask_dir) / "mask1.png");
  }
  if (d.estimate.degenerate) std::cerr << "warning: static triplet, tau defaulted to 0.5\n";
  std::cout << tau_json(d.estimate).dump() << '\n';
  return kOk;
}

int cmd_tau_batch(const TauFlags& f) {
  std::error_code ec;
  if (!fs::is_directory(f.dir, ec)) throw mird::IoError("tau: cannot read directory " + f.dir);
  const mird::TripletLoad load = mird::load_triplets(f.dir);
  for (const auto& [name, why] : load.errors) std::cerr << "skipped " << name << ": " << why << '\n';
  if (load.samples.empty()) std::cerr << "warning: no triplets found in " << f.dir << '\n';

  const std::size_t n = load.samples.size();
  std::vector<mird::TauEstimate> est(n);
  const int threads = std::max(1, std::min<int>(mird::resolve_threads(f.common.resolved_threads()), static_cast<int>(n)));
  std::vector<std::exception_ptr> errors(threads);
  auto worker = [&](int w) {
    try {
      for (std::size_t k = static_cast<std::size_t>(w); k < n; k += threads) {
        const auto& s = load.samples[k];
        est[k] = mird::tau_ifd(s.i0, s.i_tau, s.i1);
      }
    } catch (...) {
      errors[w] = std::current_exception();
    }
  };
  if (threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::ostringstream csv;
  csv.precision(10);
  csv << "path,tau,mass0,mass1,degenerate\n";
  for (std::size_t k = 0; k < n; ++k) {
    csv << (fs::path(f.dir) / load.samples[k].name).string() << ',' << est[k].tau << ',' << est[k].mass_0 << ','
        << est[k].mass_1 << ',' << (est[k].degenerate ? 1 : 0) << '\n';
  }
  if (f.csv.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream os(f.csv);
    if (!os) throw mird::IoError("cannot write " + f.csv);
    os << csv.str();
  }

  constexpr int kBins = 20;
  std::vector<int> counts(kBins, 0);
  double mean = 0.0, sq = 0.0;
  for (const auto& e : est) {
    ++counts[std::min(kBins - 1, static_cast<int>(e.tau * kBins))];
    mean += e.tau;
  }
  if (n > 0) mean /= static_cast<double>(n);
  for (const auto& e : est) sq += (e.tau - mean) * (e.tau - mean);
  const double sd = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;
  std::cerr << "tau histogram (" << n << " triplets, mean " << fmt(mean, 6) << ", sd " << fmt(sd, 6) << ")\n";
  for (int b = 0; b < kBins; ++b) {
    std::cerr << "  [" << fmt(b / 20.0, 3) << ", " << fmt((b + 1) / 20.0, 3) << ") " << counts[b] << ' '
              << std::string(counts[b], '#') << '\n';
  }
  return kOk;
}

// ---------------------------------------------------------------- schedule

struct ScheduleCmdFlags {
  ScheduleFlags sched;
  double tau = 0.5;
  std::string out;
};

int cmd_schedule(const ScheduleCmdFlags& f) {
  mird::ScheduleConfig cfg = f.sched.config();
  cfg.weights = mird::partition_weights(f.tau);
  const mird::NoiseSchedule s = mird::build_schedule(cfg);
  std::ostringstream csv;
  csv.precision(17);
  csv << "t,eta_sum,eta_1,eta_2,alpha_1,alpha_2,sigma_t\n";
  for (int t = 1; t <= s.steps(); ++t) {
    csv << t << ',' << s.eta_sum(t) << ',' << s.eta(t, 0) << ',' << s.eta(t, 1) << ',' << s.alpha(t, 0) << ','
        << s.alpha(t, 1) << ',' << std::sqrt(s.sigma2(t)) << '\n';
  }
  if (f.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream os(f.out);
    if (!os) throw mird::IoError("cannot write " + f.out);
    os << csv.str();
  }
  return kOk;
}

// ---------------------------------------------------------------- synth

struct SynthFlags {
  Common common;
  std::string spec, out;
  std::optional<std::uint64_t> random;
  int height = 256, width = 448;
  double tau = 0.5;
  bool flo = false;
};

int cmd_synth(const SynthFlags& f) {
  if (!(f.tau > 0.0 && f.tau < 1.0)) throw UsageError("--tau must lie in (0,1)");
  if (f.spec.empty() == !f.random.has_value()) throw UsageError("synth: give exactly one of --spec and --random");
  const mird::SceneSpec spec = f.random ? mird::random_scene(f.height, f.width, *f.random) : mird::read_scene(f.spec);
  const mird::TripletSample t = mird::gen_triplet(spec, f.tau);
  ensure_dir(f.out);
  const fs::path dir(f.out);
  mird::write_png(t.i0, dir / "frame1.png");
  mird::write_png(t.i_tau, dir / "frame2.png");
  mird::write_png(t.i1, dir / "frame3.png");
  if (f.flo) mird::write_flo(*t.gt_flow_01, dir / "gt.flo");
  json meta;
  meta["tau_true"] = f.tau;
  meta["height"] = spec.height;
  meta["width"] = spec.width;
  meta["scene"] = mird::scene_to_json(spec);
  std::ofstream os(dir / "meta.json");
  if (!os) throw mird::IoError("cannot write " + (dir / "meta.json").string());
  os << meta.dump(2) << '\n';
  std::cout << json{{"out", f.out}, {"tau_true", f.tau}}.dump() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- verify

struct VerifyFlags {
  Common common;
  ScheduleFlags sched;
  std::size_t samples = 100000;
  std::size_t trials = 1000;
  bool broken_schedule = false;
};

int cmd_verify(const VerifyFlags& f) {
  if (f.samples < mird::kMinVerifySamples) {
    throw UsageError("--samples must be at least " + std::to_string(mird::kMinVerifySamples));
  }
  mird::ScheduleConfig cfg = f.sched.config();
  const mird::NoiseSchedule good = mird::build_schedule(cfg);
  const double eta_1 = cfg.eta_1_sum ? *cfg.eta_1_sum : mird::first_rung(cfg.kappa);
  mird::VerifyReport report;
  if (f.broken_schedule) {
    std::vector<double> ladder = good.eta_sum();
    std::swap(ladder[ladder.size() / 2], ladder[ladder.size() / 2 + 1]);
    const auto broken = mird::NoiseSchedule::from_ladder(ladder, good.weights(), good.kappa(), false);
    report.append(mird::verify_schedule(broken, eta_1, cfg.eta_T_sum));
  } else {
    report.append(mird::verify_schedule(good, eta_1, cfg.eta_T_sum));
  }
  mird::McOptions opt;
  opt.samples = f.samples;
  opt.seed = f.common.resolved_seed();
  report.append(mird::mc_verify(good, mird::ScalarScenario{}, opt));
  report.append(mird::verify_single_condition_reduction(f.trials, opt.seed));
  mird::write_csv(std::cout, report);
  bool ok = true;
  for (const auto& c : report.checks) {
    if (!c.pass) {
      std::cerr << "FAILED check " << c.name << " (" << c.statistic << " = " << fmt(c.observed) << ", expected "
                << fmt(c.expected) << ")\n";
      ok = false;
    }
  }
  return ok ? kOk : kVerifyFail;
}

void add_interp_flags(CLI::App* cmd, InterpFlags& f) {
  cmd->add_option("--i0", f.i0, "first frame (PNG)")->required();
  cmd->add_option("--i1", f.i1, "last frame (PNG)")->required();
  cmd->add_option("--tau", f.tau, "time in [0,1] or 'ifd' (needs --gt)");
  cmd->add_option("--gt", f.gt, "middle frame for metrics, the oracle denoiser and --tau ifd");
  cmd->add_option("--denoiser", f.denoiser, "shrinkage | warp_blend | inversion | oracle");
  add_schedule_flags(cmd, f.sched);
  add_common(cmd, f.common);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiple-input residual diffusion frame interpolation"};
  app.require_subcommand(1);

  InterpFlags interp;
  auto* c_interp = app.add_subcommand("interpolate", "synthesise the frame at time tau");
  add_interp_flags(c_interp, interp);
  c_interp->add_option("--out", interp.out, "output PNG")->required();
  c_interp->add_option("--dump-trajectory", interp.trajectory_dir, "directory for the intermediate states");

  UncertaintyFlags unc;
  auto* c_unc = app.add_subcommand("uncertainty", "per-pixel spread over stochastic samples");
  add_interp_flags(c_unc, unc.base);
  c_unc->add_option("--samples", unc.samples, "number of samples");
  c_unc->add_option("--out", unc.out_dir, "output directory")->required();

  TauFlags tau;
  auto* c_tau = app.add_subcommand("tau", "estimate the temporal position of a middle frame");
  c_tau->add_option("--i0", tau.i0, "first frame");
  c_tau->add_option("--i-tau", tau.i_tau, "middle frame");
  c_tau->add_option("--i1", tau.i1, "last frame");
  c_tau->add_option("--flow0", tau.flow0, ".flo flow from the first frame to the middle frame");
  c_tau->add_option("--flow1", tau.flow1, ".flo flow from the last frame to the middle frame");
  c_tau->add_option("--masks", tau.mask_dir, "directory for mask0.png / mask1.png");
  c_tau->add_option("--dir", tau.dir, "batch mode: directory of frame1/2/3.png subfolders");
  c_tau->add_option("--csv", tau.csv, "batch CSV path (default stdout)");
  add_common(c_tau, tau.common);

  ScheduleCmdFlags sched;
  auto* c_sched = app.add_subcommand("schedule", "print the ladder as CSV");
  add_schedule_flags(c_sched, sched.sched);
  c_sched->add_option("--tau", sched.tau, "time fixing the partition weights")->check(CLI::Range(0.0, 1.0));
  c_sched->add_option("--out", sched.out, "CSV path (default stdout)");

  SynthFlags synth;
  auto* c_synth = app.add_subcommand("synth", "render a synthetic triplet");
  c_synth->add_option("--spec", synth.spec, "scene JSON");
  c_synth->add_option("--random", synth.random, "random scene from this seed instead of --spec");
  c_synth->add_option("--height", synth.height, "random scene height")->check(CLI::PositiveNumber);
  c_synth->add_option("--width", synth.width, "random scene width")->check(CLI::PositiveNumber);
  c_synth->add_option("--tau", synth.tau, "time of the middle frame in (0,1)");
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_flag("--flo", synth.flo, "also write gt.flo");

  VerifyFlags verify;
  auto* c_verify = app.add_subcommand("verify", "statistical checks of the sampler");
  add_schedule_flags(c_verify, verify.sched);
  c_verify->add_option("--samples", verify.samples, "Monte-Carlo samples");
  c_verify->add_option("--trials", verify.trials, "random ladders for the single-condition check");
  c_verify->add_flag("--inject-broken-schedule", verify.broken_schedule)->group("");
  add_common(c_verify, verify.common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (c_interp->parsed()) return cmd_interpolate(interp);
    if (c_unc->parsed()) return cmd_uncertainty(unc);
    if (c_tau->parsed()) return tau.dir.empty() ? cmd_tau_single(tau) : cmd_tau_batch(tau);
    if (c_sched->parsed()) return cmd_schedule(sched);
    if (c_synth->parsed()) return cmd_synth(synth);
    if (c_verify->parsed()) return cmd_verify(verify);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const mird::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const mird::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const mird::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kUsage;
  } catch (const mird::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumerical;
  }
  return kUsage;
}
