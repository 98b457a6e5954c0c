#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rfgen/flow.hpp"

namespace httplib {
class Server;
}

namespace rfgen {

struct ServiceOptions {
  std::optional<std::filesystem::path> checkpoint;  // absent: model endpoints answer 503
  std::filesystem::path cohort;
};

/// Outcome of one API call, independent of the transport.
struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

/// Immutable after construction; every handler is a pure function of its
/// request, so one instance can serve concurrent requests.
class Service {
 public:
  explicit Service(const ServiceOptions& opts);

  bool model_loaded() const { return model_ != nullptr; }
  const std::string& cohort_id() const { return cohort_id_; }

  ApiResponse model_info() const;
  ApiResponse cohort_listing() const;
  ApiResponse baseline(const std::string& record_id) const;
  ApiResponse generate(const std::string& request_body) const;
  ApiResponse grid(const std::string& request_body) const;
  ApiResponse series(const std::string& request_body) const;

  /// Registers every /api route on `server`.
  void install(httplib::Server& server) const;

 private:
  const PhantomRecord* find(const std::string& id) const;

  std::unique_ptr<FlowModel> model_;
  std::string cohort_id_;
  std::vector<PhantomRecord> records_;
};

/// Blocks serving the API on host:port. Throws IoError if the bind fails.
void run_server(const Service& service, const std::string& host, int port);

/// {"error": {"code": ..., "message": ...}}
ApiResponse api_error(int status, const std::string& code, const std::string& message);

}  // namespace rfgen
