// Acceptance runner: one PASS/FAIL line per primary criterion.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "rfgen/cohort_io.hpp"
#include "rfgen/counterfactual.hpp"
#include "rfgen/errors.hpp"
#include "rfgen/evaluation.hpp"
#include "rfgen/metrics.hpp"
#include "rfgen/morpho.hpp"
#include "rfgen/phantom.hpp"
#include "rfgen/sampler.hpp"
#include "rfgen/trainer.hpp"
#include "test_util.hpp"

using namespace rfgen;

namespace {

constexpr std::uint64_t kCohortSeed = 7;
constexpr int kCohortSize = 25;
constexpr int kImageSize = 32;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const Outcome& o, double secs) {
  if (!o.pass) ++failures;
  std::printf("%s  %-28s %s  [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

template <typename Fn>
void criterion(const std::string& name, Fn&& fn) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(name, o, seconds_since(t0));
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t weights = 0;
  for (bool dose : {true, false}) {
    for (bool chemo : {true, false}) {
      ModelConfig cfg = tiny_config();
      cfg.use_dose = dose;
      cfg.use_chemo = chemo;
      const VelocityNet net(cfg);
      const auto p = net.init<double>(3, InitMode::Random);
      weights = std::max(weights, p.total_weights());
      std::mt19937_64 rng(5);
      const auto px = cfg.image_width * cfg.image_height;
      const nn::Mat<double> x1 = test::random_mat(3, px, rng, 0.5).cwiseAbs();
      const nn::Mat<double> x0 = test::random_mat(3, px, rng);
      const nn::Mat<double> spatial = test::random_mat(cfg.spatial_channels(), px, rng).cwiseAbs();
      const TreatmentContext ctx{200, Chemo::None, 1.1};
      const auto r = rf_loss_at<double>(net, p, x1, x0, 0.37, spatial, ctx);
      worst = std::max(worst, test::max_gradient_error(p, r.grad, [&](const ParamStore<double>& q) {
                         return rf_loss_at<double>(net, q, x1, x0, 0.37, spatial, ctx).loss;
                       }));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && weights <= 500 && secs < 60,
          fmt("max_rel_err=%.3g (<1e-4) weights=%zu (<=500) runtime=%.1fs (<60s)", worst, weights, secs)};
}

Outcome metric_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(21);
  double ssim_err = 0;
  for (int k = 0; k < 50; ++k) {
    const ImageF a = test::random_image(16, 16, 1, rng);
    ImageF b = test::random_image(16, 16, 1, rng);
    b.data = 0.6f * a.data + 0.4f * b.data;
    const double o = test::ssim_oracle(a, b);
    ssim_err = std::max(ssim_err, std::abs(ssim(a, b) - o) / std::max(std::abs(o), 1e-12));
  }
  double psnr_err = 0;
  for (int k = 0; k < 50; ++k) {
    const ImageF a = test::random_image(16, 16, 3, rng), b = test::random_image(16, 16, 3, rng);
    psnr_err = std::max(psnr_err, std::abs(psnr(a, b) - 10 * std::log10(1.0 / mse(a, b))));
  }
  SegmentationMask a(4, 1), b(4, 1), empty(4, 1);
  a.labels = {TissueClass::Tissue, TissueClass::Tissue, TissueClass::CSF, TissueClass::Background};
  b.labels = {TissueClass::Tissue, TissueClass::CSF, TissueClass::CSF, TissueClass::Background};
  const bool dice_ok = dice(a, b, TissueClass::Tissue) == 2.0 / 3.0 && dice(a, b, TissueClass::CSF) == 2.0 / 3.0 &&
                       dice(a, a, TissueClass::Tissue) == 1.0 && dice(a, empty, TissueClass::Tissue) == 0.0 &&
                       dice(empty, empty, TissueClass::CSF) == 1.0;
  const double secs = seconds_since(t0);
  return {ssim_err <= 1e-6 && psnr_err <= 1e-9 && dice_ok && secs < 60,
          fmt("ssim_rel_err=%.3g (<=1e-6, 50 pairs) psnr_err=%.3g (<=1e-9) dice_closed_form=%s", ssim_err, psnr_err,
              dice_ok ? "exact" : "WRONG")};
}

Outcome jacobian_analytics() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  double worst = 0;
  for (int k = 0; k < 50; ++k) {
    const double a = u(rng), b = u(rng), c = u(rng), d = u(rng);
    const double expect = std::log(std::abs((1 + a) * (1 + d) - b * c));
    const auto j = log_jacobian(test::affine_field(16, 12, a, b, c, d));
    for (int y = 1; y < 11; ++y)
      for (int x = 1; x < 15; ++x) worst = std::max(worst, std::abs(j(y, x) - expect));
  }
  double zero = 0;
  for (double v : log_jacobian(DisplacementField(16, 12)).log_det) zero = std::max(zero, std::abs(v));
  return {worst < 1e-6 && zero == 0.0, fmt("affine_max_err=%.3g (<1e-6, 50 fields) zero_field_max=%.3g", worst, zero)};
}

Outcome registration_recovery() {
  const auto t0 = Clock::now();
  const ImageF moving = test::blob(32, 15.5, 15.5, 5);
  const ImageF fixed = test::blob(32, 13.5, 15.5, 5);  // fixed(x) = moving(x + 2)
  const auto f = register_images(moving, fixed);
  double err = 0;
  int n = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (fixed(0, y, x) < 0.5f) continue;
      err += std::hypot(f.ux(y, x) - 2.0, f.uy(y, x));
      ++n;
    }
  }
  err /= n;

  const auto cohort = generate_cohort(20, kImageSize, 11);
  int increased = 0;
  double mean_gain = 0;
  for (const auto& r : cohort) {
    const ImageF fx = extract_channel(r.baseline, kT1);
    const ImageF mv = extract_channel(oracle_followup(r, {r.followup_days.back(), Chemo::None, 1.2}), kT1);
    const double before = mse(mv, fx);
    const double after = mse(warp(mv.cast<double>(), register_images(mv, fx)).cast<float>(), fx);
    increased += after > before;
    mean_gain += (before - after) / 20.0;
  }
  const double secs = seconds_since(t0);
  return {err <= 0.5 && increased == 0 && secs < 300,
          fmt("translation_err=%.3fpx (<=0.5) mse_increased=%d/20 mean_mse_drop=%.2e runtime=%.1fs (<300s)", err,
              increased, mean_gain, secs)};
}

struct TrainedModel {
  std::vector<PhantomRecord> cohort;
  ModelCheckpoint ckpt;
  std::vector<PhantomRecord> test;
  double train_cpu_seconds = -1;  // negative when loaded from disk
};

TrainedModel obtain_model(const std::string& load_path, const std::string& save_path) {
  TrainedModel m;
  m.cohort = generate_cohort(kCohortSize, kImageSize, kCohortSeed);
  if (!load_path.empty()) {
    m.ckpt = load_checkpoint(load_path);
  } else {
    const std::clock_t c0 = std::clock();
    const auto t0 = Clock::now();
    m.ckpt = train(m.cohort, ModelConfig{}, TrainHyper{}, [&](int epoch, double tl, double vl) {
      if (epoch % 10 == 0) {
        std::printf("      training epoch %d train %.4f val %.4f (%.0fs)\n", epoch, tl, vl, seconds_since(t0));
        std::fflush(stdout);
      }
    });
    m.train_cpu_seconds = static_cast<double>(std::clock() - c0) / CLOCKS_PER_SEC;
    if (!save_path.empty()) save_checkpoint(save_path, m.ckpt);
  }
  const auto split = split_cohort(m.cohort, m.ckpt.meta.seed);
  m.test = select_records(m.cohort, split.test);
  return m;
}

Outcome end_to_end(const TrainedModel& tm) {
  const FlowModel model(tm.ckpt);
  EvalOptions opts;
  opts.morphometry = false;
  const auto evals = evaluate(tm.test, model_predictor(model, 4, 0), opts);
  double ms = 0, mi = 0, ss = 0, si = 0, dice_sum = 0;
  int n_late = 0;
  for (const auto& e : evals) {
    dice_sum += e.model.dice_tissue;
    if (e.context.days_since_baseline < 180) continue;
    ms += e.model.mse;
    mi += e.identity.mse;
    ss += e.model.ssim;
    si += e.identity.ssim;
    ++n_late;
  }
  if (n_late == 0) return {false, "no test follow-ups at >= 180 days"};
  ms /= n_late, mi /= n_late, ss /= n_late, si /= n_late;
  const double mean_dice = dice_sum / static_cast<double>(evals.size());
  const bool time_ok = tm.train_cpu_seconds < 0 || tm.train_cpu_seconds <= 3600;
  const auto& losses = tm.ckpt.meta.train_loss;
  const double loss_drop = losses.empty() ? 0.0 : 1.0 - losses.back() / losses.front();
  const std::string timing = tm.train_cpu_seconds < 0 ? std::string("train_cpu=not measured (loaded)")
                                                      : fmt("train_cpu=%.0fs (<=3600)", tm.train_cpu_seconds);
  return {ss > si && ms < mi && mean_dice >= 0.85 && time_ok && loss_drop >= 0.5,
          fmt("n=%d ssim %.4f vs identity %.4f, mse %.5f vs identity %.5f, dice_tissue=%.3f (>=0.85, n=%zu) "
              "train_loss_drop=%.0f%% (>=50%%) ",
              n_late, ss, si, ms, mi, mean_dice, evals.size(), 100 * loss_drop) +
              timing};
}

Outcome few_step(const TrainedModel& tm) {
  const FlowModel model(tm.ckpt);
  double m4 = 0, m16 = 0, t4 = 0, t64 = 0;
  int n = 0;
  for (const auto& rec : tm.test) {
    for (int day : {180, 300, 420, 540, 660}) {
      for (Chemo chemo : {Chemo::None, Chemo::AdjuvantTMZ}) {
        const auto cond = build_conditioning(rec, {day, chemo, 1.0}, model.config());
        const auto sweep = step_sweep(model, cond, {4, 16, 64}, static_cast<std::uint64_t>(100 + n));
        m4 += sweep.mse_to_reference[0];
        m16 += sweep.mse_to_reference[1];
        t4 += sweep.seconds[0];
        t64 += sweep.seconds[2];
        ++n;
      }
    }
  }
  m4 /= n, m16 /= n;
  const double speedup = t64 / t4;
  return {n >= 20 && m4 <= 2 * m16 && speedup >= 10,
          fmt("contexts=%d mse(4,64)=%.3g <= 2*mse(16,64)=%.3g, speedup 64/4 steps=%.1fx (>=10)", n, m4, 2 * m16,
              speedup)};
}

Outcome counterfactual(const TrainedModel& tm) {
  const FlowModel model(tm.ckpt);
  const std::array<double, 3> doses{0.8, 1.0, 1.2};
  std::array<double, 3> area{}, oracle_area{};
  int n = 0;
  for (const auto& rec : tm.test) {
    for (int day = 180; day <= 720; day += 60) {
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        for (std::size_t k = 0; k < doses.size(); ++k) {
          const TreatmentContext ctx{day, Chemo::AdjuvantTMZ, doses[k]};
          const auto img = euler_sample(model, build_conditioning(rec, ctx, model.config()), {4, seed, {}});
          area[k] += class_area(segment(img), TissueClass::Tissue);
          oracle_area[k] += class_area(geometry_mask(geometry_at(rec, ctx), kImageSize), TissueClass::Tissue);
        }
        ++n;
      }
    }
  }
  for (auto* a : {&area, &oracle_area})
    for (auto& v : *a) v /= n;
  const bool monotone = area[0] >= area[1] && area[1] >= area[2];

  // Edema: None vs adjuvant TMZ on FLAIR inside the analytic ring, after onset.
  double signal = 0, oracle_signal = 0;
  int ring_px = 0;
  for (const auto& rec : tm.test) {
    if (rec.params.lesion_radius <= 0) continue;
    for (int day = 360; day <= 720; day += 60) {
      if (day <= rec.params.dynamics.edema_onset_day) continue;
      const TreatmentContext none{day, Chemo::None, 1.0}, tmz{day, Chemo::AdjuvantTMZ, 1.0};
      const auto ring = edema_ring_mask(geometry_at(rec, none), kImageSize);
      const ImageF on = oracle_followup(rec, none), ot = oracle_followup(rec, tmz);
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto pn = euler_sample(model, build_conditioning(rec, none, model.config()), {4, seed, {}});
        const auto pt = euler_sample(model, build_conditioning(rec, tmz, model.config()), {4, seed, {}});
        for (int y = 0; y < kImageSize; ++y) {
          for (int x = 0; x < kImageSize; ++x) {
            if (!ring[static_cast<std::size_t>(y * kImageSize + x)]) continue;
            signal += pn(kFlair, y, x) - pt(kFlair, y, x);
            oracle_signal += on(kFlair, y, x) - ot(kFlair, y, x);
            ++ring_px;
          }
        }
      }
    }
  }
  if (ring_px == 0) return {false, "no edema ring pixels in the test split"};
  signal /= ring_px;
  oracle_signal /= ring_px;
  const bool edema = signal >= kDisplayThreshold;
  return {monotone && edema,
          fmt("tissue_area dose 0.8/1.0/1.2 = %.2f/%.2f/%.2f (oracle %.2f/%.2f/%.2f) non-increasing=%s; "
              "edema FLAIR none-tmz=%.4f (>=%.4f, oracle %.4f, %d px)",
              area[0], area[1], area[2], oracle_area[0], oracle_area[1], oracle_area[2], monotone ? "yes" : "no", signal,
              kDisplayThreshold, oracle_signal, ring_px)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool same_tree(const std::filesystem::path& a, const std::filesystem::path& b) {
  int files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto other = b / std::filesystem::relative(e.path(), a);
    if (!std::filesystem::exists(other) || slurp(e.path()) != slurp(other)) return false;
    ++files;
  }
  return files > 0;
}

Outcome determinism(const TrainedModel& tm) {
  const auto dir = test::temp_dir("acceptance_determinism");
  save_cohort(dir / "a", generate_cohort(kCohortSize, kImageSize, kCohortSeed));
  save_cohort(dir / "b", generate_cohort(kCohortSize, kImageSize, kCohortSeed));
  const bool synth = same_tree(dir / "a", dir / "b");

  TrainHyper h;
  h.epochs = 1;
  h.steps_per_epoch = 3;
  h.val_samples = 8;
  h.threads = 1;
  const bool training = encode_checkpoint(train(tm.cohort, ModelConfig{}, h)) ==
                        encode_checkpoint(train(tm.cohort, ModelConfig{}, h));

  save_checkpoint(dir / "ck.bin", tm.ckpt);
  const auto back = load_checkpoint(dir / "ck.bin");
  const bool roundtrip = back.weights == tm.ckpt.weights && encode_checkpoint(back) == encode_checkpoint(tm.ckpt);

  const FlowModel m1(tm.ckpt), m2(back);
  const auto& rec = tm.test.front();
  const auto cond = build_conditioning(rec, reference_context(400), m1.config());
  const bool generate = euler_sample(m1, cond, {4, 42, {}}) == euler_sample(m1, cond, {4, 42, {}}) &&
                        euler_sample(m1, cond, {4, 42, {}}) == euler_sample(m2, cond, {4, 42, {}});
  std::filesystem::remove_all(dir);
  auto yn = [](bool b) { return b ? "bit-identical" : "DIFFERENT"; };
  return {synth && training && generate && roundtrip,
          fmt("synth=%s train=%s generate=%s checkpoint_roundtrip=%s", yn(synth), yn(training), yn(generate),
              yn(roundtrip))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string load_path, save_path;
  app.add_option("--checkpoint", load_path, "Use this checkpoint instead of training one");
  app.add_option("--save-checkpoint", save_path, "Write the trained checkpoint here");
  CLI11_PARSE(app, argc, argv);

  criterion("gradient_correctness", gradient_correctness);
  criterion("metric_oracles", metric_oracles);
  criterion("jacobian_analytics", jacobian_analytics);
  criterion("registration_recovery", registration_recovery);

  TrainedModel tm;
  try {
    tm = obtain_model(load_path, save_path);
  } catch (const std::exception& e) {
    for (const char* name : {"end_to_end_learning", "few_step_sampling", "counterfactual_response", "determinism"}) {
      report(name, {false, std::string("no model: ") + e.what()}, 0);
    }
    return 1;
  }
  criterion("end_to_end_learning", [&] { return end_to_end(tm); });
  criterion("few_step_sampling", [&] { return few_step(tm); });
  criterion("counterfactual_response", [&] { return counterfactual(tm); });
  criterion("determinism", [&] { return determinism(tm); });

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
