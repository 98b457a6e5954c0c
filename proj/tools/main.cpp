// rfgen command-line entry point: synth, train, eval, generate, grid, series, serve.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "png_sheet.hpp"
#include "rfgen/cohort_io.hpp"
#include "rfgen/counterfactual.hpp"
#include "rfgen/evaluation.hpp"
#include "rfgen/raw_io.hpp"
#include "rfgen/service.hpp"
#include "rfgen/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rfgen;

namespace {

enum ExitCode { kOk = 0, kUnexpected = 1, kArgument = 2, kConfig = 3, kIo = 4, kNumeric = 5 };

constexpr int kZoom = 4;

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read " + path.string());
  json j = json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ConfigError("invalid JSON in " + path.string());
  return j;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

void require_dir(const fs::path& p, const char* what) {
  if (!fs::is_directory(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

void print_resolved(const char* command, const json& resolved) {
  std::cout << command << " " << resolved.dump() << std::endl;
}

int channel_index(const std::string& name) {
  if (name == "t1") return kT1;
  if (name == "t1gd") return kT1Gd;
  if (name == "flair") return kFlair;
  throw ArgumentError("unknown channel '" + name + "' (t1, t1gd, flair)");
}

const PhantomRecord& find_record(const std::vector<PhantomRecord>& records, const std::string& id) {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw ArgumentError("no record '" + id + "' in cohort");
}

// Shared options of the sampling commands.
struct SampleArgs {
  std::string checkpoint, cohort, record, out;
  int days = 360;
  std::string chemo = "adjuvant_tmz";
  double dose_scale = 1.0;
  int steps = 4;
  std::uint64_t seed = 0;
  std::string channel = "flair";
  int threads = 1;

  void add(CLI::App* app, bool with_days) {
    app->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
    app->add_option("--cohort", cohort, "Cohort directory")->required();
    app->add_option("--record", record, "Record id")->required();
    app->add_option("--out", out, "Output directory")->required();
    if (with_days) app->add_option("--days", days, "Days since baseline");
    app->add_option("--chemo", chemo, "none | adjuvant_tmz | rert_tmz");
    app->add_option("--dose-scale", dose_scale, "Dose multiplier");
    app->add_option("--steps", steps, "Euler steps");
    app->add_option("--seed", seed, "Noise seed");
    app->add_option("--channel", channel, "Channel shown in the PNG sheet (t1, t1gd, flair)");
    app->add_option("--threads", threads, "Sampling threads");
  }

  json resolved() const {
    return {{"checkpoint", checkpoint}, {"cohort", cohort}, {"record", record}, {"out", out},
            {"days", days},             {"chemo", chemo},   {"dose_scale", dose_scale},
            {"steps", steps},           {"seed", seed}};
  }

  TreatmentContext context() const {
    TreatmentContext c{days, chemo_from_string(chemo), dose_scale};
    c.validate();
    return c;
  }
};

int cmd_synth(int n, int size, std::uint64_t seed, const std::string& out) {
  print_resolved("synth", {{"n", n}, {"size", size}, {"seed", seed}, {"out", out}});
  const auto records = generate_cohort(n, size, seed);
  save_cohort(out, records, {{"generator", {{"n", n}, {"size", size}, {"seed", seed}}}});
  std::cout << "wrote " << records.size() << " records to " << out << std::endl;
  return kOk;
}

struct TrainArgs {
  std::string cohort, out, config;
  std::optional<int> epochs, steps_per_epoch, batch, grad_accum, threads, val_samples;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::vector<int>> widths;
  bool no_dose = false, no_chemo = false;
};

int cmd_train(const TrainArgs& a) {
  require_dir(a.cohort, "cohort");
  ModelConfig cfg;
  TrainHyper hyper;
  if (!a.config.empty()) {
    require_file(a.config, "config");
    const json j = read_json(a.config);
    if (j.contains("model")) cfg = model_config_from_json(j["model"]);
    if (j.contains("train")) hyper = train_hyper_from_json(j["train"]);
  }
  if (a.epochs) hyper.epochs = *a.epochs;
  if (a.steps_per_epoch) hyper.steps_per_epoch = *a.steps_per_epoch;
  if (a.batch) hyper.batch = *a.batch;
  if (a.grad_accum) hyper.grad_accum = *a.grad_accum;
  if (a.threads) hyper.threads = *a.threads;
  if (a.val_samples) hyper.val_samples = *a.val_samples;
  if (a.lr) hyper.lr = *a.lr;
  if (a.seed) hyper.seed = *a.seed;
  if (a.widths) {
    if (a.widths->size() != 3) throw ArgumentError("--widths needs three values");
    cfg.widths = {(*a.widths)[0], (*a.widths)[1], (*a.widths)[2]};
  }
  if (a.no_dose) cfg.use_dose = false;
  if (a.no_chemo) cfg.use_chemo = false;
  const auto records = load_cohort(a.cohort);
  if (!records.empty()) {
    cfg.image_width = records.front().baseline.width;
    cfg.image_height = records.front().baseline.height;
  }
  cfg.validate();
  hyper.validate();
  const json resolved = {{"cohort", a.cohort}, {"out", a.out}, {"model", to_json(cfg)}, {"train", to_json(hyper)}};
  print_resolved("train", resolved);
  if (hyper.epochs == 0) {
    std::cerr << "warning: --epochs 0 writes the untrained initialization" << std::endl;
  }

  fs::create_directories(a.out);
  const auto t0 = std::chrono::steady_clock::now();
  const ModelCheckpoint ckpt = train(records, cfg, hyper, [&](int epoch, double tl, double vl) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "epoch " << epoch << " train_loss " << tl << " val_loss " << vl << " elapsed_s " << s << std::endl;
  });
  save_checkpoint(fs::path(a.out) / "checkpoint.bin", ckpt);
  write_json(fs::path(a.out) / "manifest.json",
             {{"command", "train"},
              {"resolved", resolved},
              {"config_hash", config_hash(resolved)},
              {"checkpoint", "checkpoint.bin"},
              {"selected_epoch", ckpt.meta.epoch},
              {"train_loss", ckpt.meta.train_loss},
              {"val_loss", ckpt.meta.val_loss},
              {"split", ckpt.meta.extra.value("split", json::object())}});
  std::cout << "wrote " << (fs::path(a.out) / "checkpoint.bin").string() << " (epoch " << ckpt.meta.epoch << ")"
            << std::endl;
  return kOk;
}

int cmd_eval(const std::string& checkpoint, const std::string& cohort, const std::string& split_name,
             const std::string& out, int steps, std::uint64_t seed, int min_days, bool morphometry, int threads) {
  require_file(checkpoint, "checkpoint");
  require_dir(cohort, "cohort");
  if (split_name != "train" && split_name != "val" && split_name != "test") {
    throw ArgumentError("--split must be train, val or test");
  }
  const FlowModel model(load_checkpoint(checkpoint));
  const auto records = load_cohort(cohort);
  const auto& extra = model.checkpoint().meta.extra;
  const CohortSplit split =
      extra.contains("split") ? split_from_json(extra["split"]) : split_cohort(records, model.checkpoint().meta.seed);
  const auto& ids = split_name == "train" ? split.train : (split_name == "val" ? split.val : split.test);
  if (ids.empty()) throw ArgumentError("split '" + split_name + "' has no patients");
  const auto selected = select_records(records, ids);

  const json resolved = {{"checkpoint", checkpoint}, {"cohort", cohort},   {"split", split_name},
                         {"out", out},               {"steps", steps},     {"seed", seed},
                         {"min_days", min_days},     {"morphometry", morphometry},
                         {"model", to_json(model.config())}};
  print_resolved("eval", resolved);

  EvalOptions opts;
  opts.min_days = min_days;
  opts.morphometry = morphometry;
  opts.threads = threads;
  const auto evals = evaluate(selected, model_predictor(model, steps, seed), opts);

  const fs::path dir(out);
  fs::create_directories(dir / "images");
  json files = json::array();
  for (const auto& e : evals) {
    const std::string name = e.record_id + "_day" + std::to_string(e.context.days_since_baseline) + ".json";
    write_json(dir / "images" / name, to_json(e));
    files.push_back("images/" + name);
  }
  json aggregate = aggregate_report(evals);
  aggregate["split"] = split_name;
  aggregate["record_ids"] = ids;
  aggregate["seed"] = seed;
  aggregate["config_hash"] = config_hash(resolved);
  write_json(dir / "aggregate.json", aggregate);
  write_json(dir / "manifest.json", {{"command", "eval"},
                                     {"resolved", resolved},
                                     {"config_hash", config_hash(resolved)},
                                     {"seed", seed},
                                     {"aggregate", "aggregate.json"},
                                     {"images", files}});
  std::cout << "images " << evals.size() << "  model ssim " << aggregate["model"]["ssim"]["mean"] << " mse "
            << aggregate["model"]["mse"]["mean"] << "  identity ssim " << aggregate["identity"]["ssim"]["mean"]
            << " mse " << aggregate["identity"]["mse"]["mean"] << std::endl;
  return kOk;
}

int cmd_generate(const SampleArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  require_dir(a.cohort, "cohort");
  print_resolved("generate", a.resolved());
  const FlowModel model(load_checkpoint(a.checkpoint));
  const auto records = load_cohort(a.cohort);
  const auto& rec = find_record(records, a.record);
  const TreatmentContext ctx = a.context();
  if (a.steps < 1) throw ArgumentError("--steps must be >= 1");
  const ImageF img = euler_sample(model, build_conditioning(rec, ctx, model.config()), {a.steps, a.seed, {}});
  ImageF diff = img;
  diff.data -= rec.baseline.data;

  const fs::path dir(a.out);
  fs::create_directories(dir);
  write_raw(dir / "image.raw", img);
  write_raw(dir / "diff_vs_baseline.raw", diff);
  const int ch = channel_index(a.channel);
  cli::Canvas canvas(3 * img.width * kZoom, img.height * kZoom);
  cli::draw_gray(canvas, rec.baseline, ch, 0, 0, kZoom);
  cli::draw_gray(canvas, img, ch, img.width * kZoom, 0, kZoom);
  cli::draw_signed(canvas, threshold_for_display(diff), ch, 2 * img.width * kZoom, 0, kZoom, 0.5);
  cli::write_png(dir / "preview.png", canvas);
  write_json(dir / "manifest.json", {{"command", "generate"},
                                     {"resolved", a.resolved()},
                                     {"context", to_json(ctx)},
                                     {"image", "image.raw"},
                                     {"diff_vs_baseline", "diff_vs_baseline.raw"},
                                     {"preview", "preview.png"}});
  std::cout << "wrote " << (dir / "image.raw").string() << std::endl;
  return kOk;
}

int cmd_grid(const SampleArgs& a) {
  require_file(a.checkpoint, "checkpoint");
  require_dir(a.cohort, "cohort");
  print_resolved("grid", a.resolved());
  const FlowModel model(load_checkpoint(a.checkpoint));
  const auto records = load_cohort(a.cohort);
  const auto& rec = find_record(records, a.record);
  GridOptions opts;
  opts.n_steps = a.steps;
  opts.threads = a.threads;
  const auto g = make_grid(model, rec, a.context(), a.seed, opts);
  export_grid(a.out, g);

  const int ch = channel_index(a.channel);
  const int tile = rec.baseline.width * kZoom, gap = kZoom;
  cli::Canvas canvas(6 * tile + 7 * gap, 3 * tile + 4 * gap);
  for (int i = 0; i < 9; ++i) {
    const int r = i / 3, c = i % 3;
    const int y = gap + r * (tile + gap);
    cli::draw_gray(canvas, g.images[static_cast<std::size_t>(i)], ch, gap + c * (tile + gap), y, kZoom);
    cli::draw_signed(canvas, g.display_diffs[static_cast<std::size_t>(i)], ch, gap + (3 + c) * (tile + gap), y, kZoom,
                     0.5);
  }
  cli::write_png(fs::path(a.out) / "contact.png", canvas);
  std::cout << "wrote grid to " << a.out << std::endl;
  return kOk;
}

int cmd_series(const SampleArgs& a, const std::vector<int>& days) {
  require_file(a.checkpoint, "checkpoint");
  require_dir(a.cohort, "cohort");
  json resolved = a.resolved();
  resolved.erase("days");
  resolved["day_list"] = days;
  print_resolved("series", resolved);
  const FlowModel model(load_checkpoint(a.checkpoint));
  const auto records = load_cohort(a.cohort);
  const auto& rec = find_record(records, a.record);
  GridOptions opts;
  opts.n_steps = a.steps;
  opts.threads = a.threads;
  TreatmentContext tmpl = a.context();
  const auto s = make_series(model, rec, tmpl, days, a.seed, opts);
  export_series(a.out, s);

  const int ch = channel_index(a.channel);
  const int tile = rec.baseline.width * kZoom, gap = kZoom;
  const int n = static_cast<int>(s.images.size());
  cli::Canvas canvas(n * (tile + gap) + gap, 2 * tile + 3 * gap);
  for (int i = 0; i < n; ++i) cli::draw_gray(canvas, s.images[static_cast<std::size_t>(i)], ch, gap + i * (tile + gap), gap, kZoom);
  for (int i = 0; i + 1 < n; ++i) {
    cli::draw_signed(canvas, s.display_diffs[static_cast<std::size_t>(i)], ch, gap + (i + 1) * (tile + gap),
                     2 * gap + tile, kZoom, 0.25);
  }
  cli::write_png(fs::path(a.out) / "contact.png", canvas);
  std::cout << "wrote series to " << a.out << std::endl;
  return kOk;
}

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

int cmd_serve(std::string checkpoint, std::string cohort, std::string host, int port) {
  // Explicit flags win; environment variables fill in the rest.
  if (checkpoint.empty()) checkpoint = env_or("RFGEN_CHECKPOINT", "");
  if (cohort.empty()) cohort = env_or("RFGEN_COHORT", "");
  if (host.empty()) host = env_or("RFGEN_HOST", "127.0.0.1");
  if (port < 0) port = std::stoi(env_or("RFGEN_PORT", "8080"));
  if (cohort.empty()) throw ArgumentError("serve needs --cohort or RFGEN_COHORT");
  require_dir(cohort, "cohort");
  if (!checkpoint.empty()) require_file(checkpoint, "checkpoint");
  print_resolved("serve", {{"checkpoint", checkpoint}, {"cohort", cohort}, {"host", host}, {"port", port}});

  ServiceOptions opts;
  opts.cohort = cohort;
  if (!checkpoint.empty()) opts.checkpoint = checkpoint;
  else std::cerr << "warning: no checkpoint, model endpoints will answer 503" << std::endl;
  const Service service(opts);
  std::cout << "listening on http://" << host << ":" << port << std::endl;
  run_server(service, host, port);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional rectified-flow follow-up generator on synthetic phantoms"};
  app.require_subcommand(1);
  std::function<int()> run;

  auto* synth = app.add_subcommand("synth", "Generate a phantom cohort");
  int n = 25, size = 32;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--n", n, "Number of patients");
  synth->add_option("--size", size, "Image size in pixels");
  synth->add_option("--seed", synth_seed, "Cohort seed")->required();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->callback([&] { run = [&] { return cmd_synth(n, size, synth_seed, synth_out); }; });

  auto* train_cmd = app.add_subcommand("train", "Train the velocity network");
  TrainArgs ta;
  train_cmd->add_option("--cohort", ta.cohort, "Cohort directory")->required();
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--config", ta.config, "JSON file with 'model' and 'train' sections");
  train_cmd->add_option("--epochs", ta.epochs);
  train_cmd->add_option("--steps-per-epoch", ta.steps_per_epoch);
  train_cmd->add_option("--batch", ta.batch);
  train_cmd->add_option("--grad-accum", ta.grad_accum);
  train_cmd->add_option("--threads", ta.threads);
  train_cmd->add_option("--val-samples", ta.val_samples);
  train_cmd->add_option("--lr", ta.lr);
  train_cmd->add_option("--seed", ta.seed);
  train_cmd->add_option("--widths", ta.widths, "Channel widths per level")->expected(3)->delimiter(',');
  train_cmd->add_flag("--no-dose", ta.no_dose, "Drop dose-map conditioning");
  train_cmd->add_flag("--no-chemo", ta.no_chemo, "Drop chemotherapy conditioning");
  train_cmd->callback([&] { run = [&] { return cmd_train(ta); }; });

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
  std::string ev_ckpt, ev_cohort, ev_split = "test", ev_out;
  int ev_steps = 4, ev_min_days = 0, ev_threads = 1;
  std::uint64_t ev_seed = 0;
  bool ev_no_morpho = false;
  eval->add_option("--checkpoint", ev_ckpt)->required();
  eval->add_option("--cohort", ev_cohort)->required();
  eval->add_option("--split", ev_split, "train | val | test");
  eval->add_option("--out", ev_out)->required();
  eval->add_option("--steps", ev_steps);
  eval->add_option("--seed", ev_seed);
  eval->add_option("--min-days", ev_min_days, "Skip follow-ups earlier than this day");
  eval->add_option("--threads", ev_threads);
  eval->add_flag("--no-morphometry", ev_no_morpho);
  eval->callback([&] {
    run = [&] {
      return cmd_eval(ev_ckpt, ev_cohort, ev_split, ev_out, ev_steps, ev_seed, ev_min_days, !ev_no_morpho, ev_threads);
    };
  });

  SampleArgs gen_args, grid_args, series_args;
  auto* generate = app.add_subcommand("generate", "Sample one follow-up");
  gen_args.add(generate, true);
  generate->callback([&] { run = [&] { return cmd_generate(gen_args); }; });

  auto* grid = app.add_subcommand("grid", "3x3 dose/chemo counterfactual grid");
  grid_args.add(grid, true);
  grid->callback([&] { run = [&] { return cmd_grid(grid_args); }; });

  auto* series = app.add_subcommand("series", "Temporal counterfactual series");
  series_args.add(series, false);
  std::vector<int> day_list = default_series_days();
  series->add_option("--day-list", day_list, "Strictly increasing days")->delimiter(',');
  series->callback([&] { run = [&] { return cmd_series(series_args, day_list); }; });

  auto* serve = app.add_subcommand("serve", "HTTP API");
  std::string sv_ckpt, sv_cohort, sv_host;
  int sv_port = -1;
  serve->add_option("--checkpoint", sv_ckpt, "Checkpoint file (env RFGEN_CHECKPOINT)");
  serve->add_option("--cohort", sv_cohort, "Cohort directory (env RFGEN_COHORT)");
  serve->add_option("--host", sv_host, "Bind address (env RFGEN_HOST, default 127.0.0.1)");
  serve->add_option("--port", sv_port, "Port (env RFGEN_PORT, default 8080)");
  serve->callback([&] { run = [&] { return cmd_serve(sv_ckpt, sv_cohort, sv_host, sv_port); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kArgument;
  }
  try {
    return run();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return kConfig;
  } catch (const ArgumentError& e) {
    std::cerr << "argument error: " << e.what() << std::endl;
    return kArgument;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << std::endl;
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << std::endl;
    return kNumeric;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << std::endl;
    return kNumeric;
  } catch (const SamplingError& e) {
    std::cerr << "sampling error: " << e.what() << std::endl;
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kUnexpected;
  }
}
