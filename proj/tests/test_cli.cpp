#include <doctest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "test_util.hpp"

using nlohmann::json;
using rfgen::test::temp_dir;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

RunResult run(const std::string& args) {
  const std::string cmd = std::string(RFGEN_BIN) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const std::filesystem::path& p) { return json::parse(slurp(p)); }

// Tiny model so one epoch finishes in a fraction of a second.
std::filesystem::path write_small_config(const std::filesystem::path& dir, bool chemo) {
  const json cfg = {{"model",
                     {{"widths", {4, 4, 8}},
                      {"heads", 1},
                      {"context_dim", 4},
                      {"time_embed_dim", 4},
                      {"time_hidden_dim", 8},
                      {"context_embed_dim", 4},
                      {"use_chemo", chemo}}},
                    {"train", {{"batch", 2}, {"grad_accum", 1}, {"steps_per_epoch", 2}, {"val_samples", 2}}}};
  const auto path = dir / (chemo ? "small.json" : "small_nochemo.json");
  std::ofstream(path) << cfg.dump(2);
  return path;
}

}  // namespace

TEST_CASE("synth is deterministic for a fixed seed") {
  const auto dir = temp_dir("cli_synth");
  REQUIRE(run("synth --n 6 --size 16 --seed 4 --out " + (dir / "a").string()).code == 0);
  REQUIRE(run("synth --n 6 --size 16 --seed 4 --out " + (dir / "b").string()).code == 0);
  int compared = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(e.path(), dir / "a");
    CHECK_MESSAGE(slurp(e.path()) == slurp(dir / "b" / rel), rel.string());
    ++compared;
  }
  CHECK(compared > 6);
}

TEST_CASE("argument errors exit with code 2") {
  CHECK(run("").code == 2);
  CHECK(run("synth --n 3").code == 2);
  CHECK(run("frobnicate").code == 2);
}

TEST_CASE("missing cohort exits with an IO error") {
  const auto dir = temp_dir("cli_missing");
  CHECK(run("train --cohort " + (dir / "nope").string() + " --out " + (dir / "o").string()).code == 4);
}

TEST_CASE("train, eval, generate and grid end to end") {
  const auto dir = temp_dir("cli_pipeline");
  const auto cohort = (dir / "cohort").string();
  REQUIRE(run("synth --n 6 --size 16 --seed 2 --out " + cohort).code == 0);
  const auto cfg = write_small_config(dir, true);

  SUBCASE("zero epochs warns and still writes a checkpoint") {
    const auto r = run("train --cohort " + cohort + " --out " + (dir / "t0").string() + " --config " + cfg.string() +
                       " --epochs 0");
    CHECK(r.code == 0);
    CHECK(r.out.find("warning") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "t0" / "checkpoint.bin"));
  }

  SUBCASE("pipeline") {
    const auto train_dir = dir / "t1";
    const auto r = run("train --cohort " + cohort + " --out " + train_dir.string() + " --config " + cfg.string() +
                       " --epochs 1 --seed 3");
    REQUIRE_MESSAGE(r.code == 0, r.out);
    const auto ckpt = (train_dir / "checkpoint.bin").string();
    CHECK(read_json(train_dir / "manifest.json").contains("config_hash"));

    const auto ev = run("eval --checkpoint " + ckpt + " --cohort " + cohort + " --split test --steps 2 --out " +
                        (dir / "ev").string());
    REQUIRE_MESSAGE(ev.code == 0, ev.out);
    const auto agg = read_json(dir / "ev" / "aggregate.json");
    CHECK(agg.contains("model"));
    CHECK(agg.contains("identity"));
    CHECK(agg["identity"]["ssim"]["n"].get<int>() > 0);

    const auto g1 = run("generate --checkpoint " + ckpt + " --cohort " + cohort + " --record " +
                        agg["record_ids"][0].get<std::string>() + " --days 400 --seed 9 --out " + (dir / "g1").string());
    REQUIRE_MESSAGE(g1.code == 0, g1.out);
    run("generate --checkpoint " + ckpt + " --cohort " + cohort + " --record " + agg["record_ids"][0].get<std::string>() +
        " --days 400 --seed 9 --out " + (dir / "g2").string());
    CHECK(slurp(dir / "g1" / "image.raw") == slurp(dir / "g2" / "image.raw"));
    CHECK(std::filesystem::exists(dir / "g1" / "preview.png"));

    const auto gr = run("grid --checkpoint " + ckpt + " --cohort " + cohort + " --record " +
                        agg["record_ids"][0].get<std::string>() + " --days 400 --out " + (dir / "grid").string());
    REQUIRE_MESSAGE(gr.code == 0, gr.out);
    CHECK(read_json(dir / "grid" / "manifest.json")["cells"].size() == 9);
  }

  SUBCASE("grid needs dose and chemo conditioning") {
    const auto nochemo = write_small_config(dir, false);
    REQUIRE(run("train --cohort " + cohort + " --out " + (dir / "t2").string() + " --config " + nochemo.string() +
                " --epochs 0")
                .code == 0);
    const auto r = run("grid --checkpoint " + (dir / "t2" / "checkpoint.bin").string() + " --cohort " + cohort +
                       " --record P000 --days 400 --out " + (dir / "g").string());
    CHECK(r.code == 3);
  }
}
