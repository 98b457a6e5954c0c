#include <doctest.h>

#include <thread>

#include "rfgen/cohort_io.hpp"
#include "rfgen/raw_io.hpp"
#include "rfgen/service.hpp"
#include "test_util.hpp"

// After Eigen: glibc's resolver header defines a `res` macro.
#include <httplib.h>

using namespace rfgen;
using nlohmann::json;

namespace {

struct Fixture {
  std::filesystem::path dir;
  std::vector<PhantomRecord> records;

  Fixture() : dir(test::temp_dir("service")), records(generate_cohort(4, 16, 5)) {
    save_cohort(dir / "cohort", records, {{"cohort_id", "desk"}});
    ModelConfig c;
    c.image_width = c.image_height = 16;
    c.widths = {4, 4, 8};
    c.heads = 1;
    c.context_dim = 4;
    c.time_embed_dim = 4;
    c.time_hidden_dim = 8;
    c.context_embed_dim = 4;
    save_checkpoint(dir / "model.bin", initial_checkpoint(c, 3, InitMode::Random));
  }

  ServiceOptions options(bool with_model = true) const {
    ServiceOptions o;
    o.cohort = dir / "cohort";
    if (with_model) o.checkpoint = dir / "model.bin";
    return o;
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

// Runs the service on an ephemeral port for the lifetime of the object.
class RunningServer {
 public:
  explicit RunningServer(const Service& service) {
    service.install(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~RunningServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

}  // namespace

TEST_CASE("read-only endpoints") {
  const Service service(fixture().options());
  RunningServer server(service);
  auto cli = server.client();

  auto model = cli.Get("/api/model");
  REQUIRE(model);
  CHECK(model->status == 200);
  const auto m = body_of(model);
  CHECK(m["conditioning"]["use_dose"] == true);
  CHECK(m["conditioning"]["use_chemo"] == true);

  auto cohort = cli.Get("/api/cohort");
  REQUIRE(cohort);
  const auto c = body_of(cohort);
  CHECK(c["cohort_id"] == "desk");
  CHECK(c["count"] == fixture().records.size());
  CHECK(c["records"].size() == fixture().records.size());

  auto base = cli.Get("/api/cohort/P002/baseline");
  REQUIRE(base);
  CHECK(base->status == 200);
  const auto b = body_of(base);
  CHECK(decode_raw(base64_decode(b["baseline"].get<std::string>())) == fixture().records[2].baseline);
  CHECK(decode_raw(base64_decode(b["dose"].get<std::string>())) == fixture().records[2].dose);

  auto missing = cli.Get("/api/cohort/P999/baseline");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  CHECK(body_of(missing)["error"]["code"] == "unknown_record");

  auto nowhere = cli.Get("/api/nothing");
  REQUIRE(nowhere);
  CHECK(nowhere->status == 404);
  CHECK(body_of(nowhere)["error"]["code"] == "not_found");
}

TEST_CASE("generate is deterministic and validated") {
  const Service service(fixture().options());
  RunningServer server(service);
  auto cli = server.client();
  const json req = {{"record_id", "P001"},
                    {"context", {{"days_since_baseline", 360}, {"chemo", "none"}, {"dose_scale", 1.1}}},
                    {"seed", 9}};
  auto a = cli.Post("/api/generate", req.dump(), "application/json");
  auto b = cli.Post("/api/generate", req.dump(), "application/json");
  REQUIRE(a);
  REQUIRE(b);
  REQUIRE(a->status == 200);
  const auto ja = body_of(a), jb = body_of(b);
  CHECK(ja["image"] == jb["image"]);
  CHECK(ja["n_steps"] == 4);
  CHECK(ja["metrics"].contains("ssim"));
  const ImageF img = decode_raw(base64_decode(ja["image"].get<std::string>()));
  const ImageF diff = decode_raw(base64_decode(ja["diff_vs_baseline"].get<std::string>()));
  ImageF expect = img;
  expect.data -= fixture().records[1].baseline.data;
  CHECK(diff == expect);

  auto status_of = [&](const json& r) { return cli.Post("/api/generate", r.dump(), "application/json")->status; };
  json bad = req;
  bad["n_steps"] = 0;
  CHECK(status_of(bad) == 422);
  bad = req;
  bad["record_id"] = "P404";
  CHECK(status_of(bad) == 404);
  bad = req;
  bad["cohort_id"] = "other";
  CHECK(status_of(bad) == 404);
  bad = req;
  bad["context"]["dose_scale"] = -2;
  CHECK(status_of(bad) == 422);
  bad = req;
  bad["context"]["chemo"] = "unknown";
  CHECK(status_of(bad) == 422);
  bad = req;
  bad["seed"] = "abc";
  CHECK(status_of(bad) == 422);
  CHECK(cli.Post("/api/generate", "{not json", "application/json")->status == 400);
  CHECK(cli.Post("/api/generate", "[1,2]", "application/json")->status == 422);
}

TEST_CASE("metrics are absent outside the modeled time range") {
  const Service service(fixture().options());
  const auto r = service.generate(json{{"record_id", "P000"}, {"context", {{"days_since_baseline", 900}}}}.dump());
  CHECK(r.status == 200);
  CHECK(r.body["metrics"].is_null());
}

TEST_CASE("model endpoints answer 503 without a checkpoint") {
  const Service service(fixture().options(false));
  RunningServer server(service);
  auto cli = server.client();
  CHECK(cli.Get("/api/model")->status == 503);
  CHECK(cli.Get("/api/cohort")->status == 200);
  auto r = cli.Post("/api/generate", json{{"record_id", "P000"}}.dump(), "application/json");
  CHECK(r->status == 503);
  CHECK(body_of(r)["error"]["code"] == "model_not_loaded");
  // Validation still runs first.
  CHECK(cli.Post("/api/generate", json{{"record_id", "P000"}, {"n_steps", 0}}.dump(), "application/json")->status == 422);
}

TEST_CASE("counterfactual endpoints") {
  const Service service(fixture().options());
  RunningServer server(service);
  auto cli = server.client();
  const json req = {{"record_id", "P000"}, {"context", {{"days_since_baseline", 400}}}, {"seed", 2}};
  auto g = cli.Post("/api/counterfactual/grid", req.dump(), "application/json");
  REQUIRE(g);
  REQUIRE(g->status == 200);
  const auto jg = body_of(g);
  REQUIRE(jg["cells"].size() == 9);
  const ImageF center = decode_raw(base64_decode(jg["cells"][4]["diff"].get<std::string>()));
  CHECK(center.data.cwiseAbs().maxCoeff() == 0.0f);

  json sreq = req;
  sreq["days"] = {60, 120, 180, 240, 300, 360, 420, 480};
  auto s = cli.Post("/api/counterfactual/series", sreq.dump(), "application/json");
  REQUIRE(s);
  REQUIRE(s->status == 200);
  const auto js = body_of(s);
  CHECK(js["images"].size() == 8);
  CHECK(js["diffs"].size() == 7);

  sreq["days"] = {120, 60};
  CHECK(cli.Post("/api/counterfactual/series", sreq.dump(), "application/json")->status == 422);
  json unknown = req;
  unknown["record_id"] = "nobody";
  CHECK(cli.Post("/api/counterfactual/grid", unknown.dump(), "application/json")->status == 404);
}

TEST_CASE("concurrent identical requests return identical bodies") {
  const Service service(fixture().options());
  RunningServer server(service);
  const json req = {{"record_id", "P003"}, {"context", {{"days_since_baseline", 200}}}, {"seed", 4}};
  std::vector<std::string> images(6);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < images.size(); ++i) {
    threads.emplace_back([&, i] {
      auto cli = server.client();
      auto r = cli.Post("/api/generate", req.dump(), "application/json");
      if (r && r->status == 200) images[i] = json::parse(r->body)["image"].get<std::string>();
    });
  }
  for (auto& t : threads) t.join();
  for (const auto& im : images) {
    CHECK_FALSE(im.empty());
    CHECK(im == images[0]);
  }
}

TEST_CASE("service construction errors") {
  ServiceOptions o = fixture().options();
  o.cohort = fixture().dir / "missing";
  CHECK_THROWS_AS(Service{o}, IoError);
  o = fixture().options();
  o.checkpoint = fixture().dir / "missing.bin";
  CHECK_THROWS_AS(Service{o}, IoError);
}
