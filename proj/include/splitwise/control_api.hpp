#pragma once

#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "splitwise/latency.hpp"
#include "splitwise/runtime.hpp"

namespace httplib {
class Server;
}

namespace splitwise {

struct ApiResponse {
  int status = 200;
  std::string body;  // JSON
};

/// HTTP control plane of the cloud daemon, versioned under /api:
///
///   GET  /api/model     layer table with FLOPs and output bytes
///   GET  /api/profiles  stored device/server profiles
///   GET  /api/plan      active plan
///   POST /api/whatif    {bandwidth_mbps, overhead_ms?, split_point?, include_endpoints?}
///   POST /api/plan      same body; persists and activates the plan
///   GET  /api/live      text/event-stream of served requests (?limit=N closes after N)
///
/// Malformed bodies answer 400, planning failures 422; both carry {"error": ...}.
///
/// A device profile holding split totals (measured mode) answers what-if and
/// plan requests from the totals alone; bandwidth then only labels the plan.
class ControlApi {
 public:
  ControlApi(CloudServer& server, std::optional<LayerProfile> device, std::optional<LayerProfile> server_profile,
             std::string plan_path = {});
  ~ControlApi();
  ControlApi(const ControlApi&) = delete;
  ControlApi& operator=(const ControlApi&) = delete;

  /// Binds (port 0 picks a free port) and serves on a background thread.
  void start(const Endpoint& listen);
  void stop();
  std::uint16_t port() const { return port_; }

  // Request handlers, usable without a socket.
  ApiResponse get_model() const;
  ApiResponse get_profiles() const;
  ApiResponse get_plan() const;
  ApiResponse post_whatif(const std::string& body) const;
  ApiResponse post_plan(const std::string& body);

 private:
  CloudServer& server_;
  std::optional<LayerProfile> device_;
  std::optional<LayerProfile> server_profile_;
  std::string plan_path_;
  std::unique_ptr<httplib::Server> http_;
  std::thread thread_;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
};

}  // namespace splitwise
