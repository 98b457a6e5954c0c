#include "rfgen/service.hpp"

#include <chrono>

#include <httplib.h>

#include "rfgen/cohort_io.hpp"
#include "rfgen/counterfactual.hpp"
#include "rfgen/metrics.hpp"
#include "rfgen/raw_io.hpp"
#include "rfgen/sampler.hpp"

namespace rfgen {

using nlohmann::json;

namespace {

// Raised inside handlers and mapped to a response by `guarded`.
struct HttpError {
  int status;
  std::string code;
  std::string message;
};

json parse_body(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded()) throw HttpError{400, "malformed_json", "request body is not valid JSON"};
  if (!j.is_object()) throw HttpError{422, "invalid_request", "request body must be a JSON object"};
  return j;
}

template <typename T>
T field(const json& j, const char* name, T fallback) {
  if (!j.contains(name)) return fallback;
  try {
    return j.at(name).get<T>();
  } catch (const json::exception&) {
    throw HttpError{422, "invalid_request", std::string("field '") + name + "' has the wrong type"};
  }
}

std::string b64(const ImageF& img) { return base64_encode(encode_raw(img)); }

template <typename Fn>
ApiResponse guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const HttpError& e) {
    return api_error(e.status, e.code, e.message);
  } catch (const ConfigError& e) {
    return api_error(422, "unsupported_conditioning", e.what());
  } catch (const ArgumentError& e) {
    return api_error(422, "invalid_request", e.what());
  } catch (const SamplingError& e) {
    return api_error(500, "sampling_failed", e.what());
  } catch (const std::exception& e) {
    return api_error(500, "internal_error", e.what());
  }
}

}  // namespace

ApiResponse api_error(int status, const std::string& code, const std::string& message) {
  return {status, {{"error", {{"code", code}, {"message", message}}}}};
}

Service::Service(const ServiceOptions& opts) {
  records_ = load_cohort(opts.cohort);
  const json manifest = load_cohort_manifest(opts.cohort);
  cohort_id_ = manifest.value("cohort_id", std::filesystem::absolute(opts.cohort).lexically_normal().filename().string());
  if (cohort_id_.empty()) cohort_id_ = "cohort";
  if (opts.checkpoint) {
    model_ = std::make_unique<FlowModel>(load_checkpoint(*opts.checkpoint));
    const auto& cfg = model_->config();
    for (const auto& r : records_) {
      if (r.baseline.width != cfg.image_width || r.baseline.height != cfg.image_height) {
        throw ConfigError("checkpoint image size does not match cohort record " + r.id);
      }
    }
  }
}

const PhantomRecord* Service::find(const std::string& id) const {
  for (const auto& r : records_)
    if (r.id == id) return &r;
  return nullptr;
}

ApiResponse Service::model_info() const {
  if (!model_) return api_error(503, "model_not_loaded", "no checkpoint loaded");
  const auto& ck = model_->checkpoint();
  return {200,
          {{"config", to_json(ck.config)},
           {"conditioning", {{"use_dose", ck.config.use_dose}, {"use_chemo", ck.config.use_chemo}}},
           {"weights", ck.weights.total_weights()},
           {"epoch", ck.meta.epoch},
           {"seed", ck.meta.seed}}};
}

ApiResponse Service::cohort_listing() const {
  json records = json::array();
  for (const auto& r : records_) {
    records.push_back({{"id", r.id},
                       {"label", r.label == SliceLabel::Diseased ? "diseased" : "healthy_appearing"},
                       {"followup_days", r.followup_days}});
  }
  return {200, {{"cohort_id", cohort_id_}, {"count", records_.size()}, {"records", records}}};
}

ApiResponse Service::baseline(const std::string& record_id) const {
  const auto* r = find(record_id);
  if (!r) return api_error(404, "unknown_record", "no record '" + record_id + "'");
  return {200, {{"id", r->id}, {"baseline", b64(r->baseline)}, {"dose", b64(r->dose)}}};
}

ApiResponse Service::generate(const std::string& request_body) const {
  return guarded([&]() -> ApiResponse {
    const json req = parse_body(request_body);
    const auto cohort = field<std::string>(req, "cohort_id", cohort_id_);
    const auto record_id = field<std::string>(req, "record_id", "");
    const int n_steps = field<int>(req, "n_steps", 4);
    const auto seed = field<std::uint64_t>(req, "seed", 0);
    if (record_id.empty()) throw HttpError{422, "invalid_request", "record_id is required"};
    if (n_steps < 1) throw HttpError{422, "invalid_request", "n_steps must be >= 1"};
    const TreatmentContext ctx = context_from_json(req.value("context", json::object()));
    if (cohort != cohort_id_) throw HttpError{404, "unknown_cohort", "no cohort '" + cohort + "'"};
    const auto* rec = find(record_id);
    if (!rec) throw HttpError{404, "unknown_record", "no record '" + record_id + "'"};
    if (!model_) throw HttpError{503, "model_not_loaded", "no checkpoint loaded"};

    const auto t0 = std::chrono::steady_clock::now();
    const ImageF img = euler_sample(*model_, build_conditioning(*rec, ctx, model_->config()), {n_steps, seed, {}});
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    ImageF diff = img;
    diff.data -= rec->baseline.data;
    json out = {{"record_id", rec->id},
                {"context", to_json(ctx)},
                {"n_steps", n_steps},
                {"seed", seed},
                {"image", b64(img)},
                {"diff_vs_baseline", b64(diff)},
                {"timing_ms", ms}};
    // The phantom oracle is defined over the modeled time range only.
    if (ctx.days_since_baseline <= kMaxDays) {
      const ImageF truth = oracle_followup(*rec, ctx);
      const double p = psnr(img, truth);
      out["metrics"] = {{"mse", mse(img, truth)}, {"psnr", std::isinf(p) ? json(nullptr) : json(p)}, {"ssim", ssim(img, truth)}};
    } else {
      out["metrics"] = nullptr;
    }
    return {200, out};
  });
}

ApiResponse Service::grid(const std::string& request_body) const {
  return guarded([&]() -> ApiResponse {
    const json req = parse_body(request_body);
    const auto record_id = field<std::string>(req, "record_id", "");
    const int n_steps = field<int>(req, "n_steps", 4);
    const auto seed = field<std::uint64_t>(req, "seed", 0);
    if (record_id.empty()) throw HttpError{422, "invalid_request", "record_id is required"};
    if (n_steps < 1) throw HttpError{422, "invalid_request", "n_steps must be >= 1"};
    const TreatmentContext ref = context_from_json(req.value("context", json::object()));
    const auto* rec = find(record_id);
    if (!rec) throw HttpError{404, "unknown_record", "no record '" + record_id + "'"};
    if (!model_) throw HttpError{503, "model_not_loaded", "no checkpoint loaded"};
    GridOptions opts;
    opts.n_steps = n_steps;
    return {200, to_json(make_grid(*model_, *rec, ref, seed, opts), true)};
  });
}

ApiResponse Service::series(const std::string& request_body) const {
  return guarded([&]() -> ApiResponse {
    const json req = parse_body(request_body);
    const auto record_id = field<std::string>(req, "record_id", "");
    const int n_steps = field<int>(req, "n_steps", 4);
    const auto seed = field<std::uint64_t>(req, "seed", 0);
    const auto days = field<std::vector<int>>(req, "days", default_series_days());
    if (record_id.empty()) throw HttpError{422, "invalid_request", "record_id is required"};
    if (n_steps < 1) throw HttpError{422, "invalid_request", "n_steps must be >= 1"};
    const TreatmentContext tmpl = context_from_json(req.value("context", json::object()));
    const auto* rec = find(record_id);
    if (!rec) throw HttpError{404, "unknown_record", "no record '" + record_id + "'"};
    if (!model_) throw HttpError{503, "model_not_loaded", "no checkpoint loaded"};
    GridOptions opts;
    opts.n_steps = n_steps;
    return {200, to_json(make_series(*model_, *rec, tmpl, days, seed, opts), true)};
  });
}

void Service::install(httplib::Server& server) const {
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get("/api/model", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, model_info()); });
  server.Get("/api/cohort", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, cohort_listing()); });
  server.Get(R"(/api/cohort/([^/]+)/baseline)", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, baseline(req.matches[1]));
  });
  server.Post("/api/generate",
              [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, generate(req.body)); });
  server.Post("/api/counterfactual/grid",
              [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, grid(req.body)); });
  server.Post("/api/counterfactual/series",
              [this, reply](const httplib::Request& req, httplib::Response& res) { reply(res, series(req.body)); });
  server.set_error_handler([reply](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      reply(res, api_error(res.status, res.status == 404 ? "not_found" : "http_error", httplib::status_message(res.status)));
    }
  });
}

void run_server(const Service& service, const std::string& host, int port) {
  httplib::Server server;
  service.install(server);
  if (!server.listen(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
}

}  // namespace rfgen
