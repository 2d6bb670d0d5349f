#include "splitwise/control_api.hpp"

#include <httplib.h>
#include <json.hpp>

#include "splitwise/error.hpp"
#include "splitwise/model_io.hpp"
#include "splitwise/planner.hpp"

namespace splitwise {

namespace {

using nlohmann::json;

struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PlanRequest {
  LinkModel link;
  std::optional<std::size_t> split_point;
  bool include_endpoints = false;
};

ApiResponse error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}.dump()};
}

PlanRequest parse_plan_request(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception&) {
    throw BadRequest("body is not JSON");
  }
  if (!doc.is_object()) throw BadRequest("body must be a JSON object");
  PlanRequest req;
  if (!doc.contains("bandwidth_mbps") || !doc["bandwidth_mbps"].is_number()) {
    throw BadRequest("bandwidth_mbps must be a number");
  }
  req.link.bandwidth_mbps = doc["bandwidth_mbps"].get<double>();
  if (doc.contains("overhead_ms")) {
    if (!doc["overhead_ms"].is_number()) throw BadRequest("overhead_ms must be a number");
    req.link.overhead_ms = doc["overhead_ms"].get<double>();
  }
  if (doc.contains("split_point") && !doc["split_point"].is_null()) {
    if (!doc["split_point"].is_number_unsigned()) throw BadRequest("split_point must be a non-negative integer");
    req.split_point = doc["split_point"].get<std::size_t>();
  }
  if (doc.contains("include_endpoints")) {
    if (!doc["include_endpoints"].is_boolean()) throw BadRequest("include_endpoints must be a boolean");
    req.include_endpoints = doc["include_endpoints"].get<bool>();
  }
  try {
    req.link.validate();
  } catch (const Error& e) {
    throw BadRequest(e.what());
  }
  return req;
}

json layer_profile_or_null(const std::optional<LayerProfile>& p) {
  return p ? json::parse(profile_to_json(*p)) : json(nullptr);
}

}  // namespace

ControlApi::ControlApi(CloudServer& server, std::optional<LayerProfile> device,
                       std::optional<LayerProfile> server_profile, std::string plan_path)
    : server_(server),
      device_(std::move(device)),
      server_profile_(std::move(server_profile)),
      plan_path_(std::move(plan_path)) {
  const std::size_t n = server_.graph().layer_count();
  for (const auto* p : {&device_, &server_profile_}) {
    if (!*p) continue;
    if ((*p)->has_split_totals()) {
      if ((*p)->split_totals_ms.rbegin()->first > n) {
        fail(ErrorCode::kInvalidArgument, "split totals reach beyond the served model");
      }
    } else if ((*p)->layer_count() != n) {
      fail(ErrorCode::kInvalidArgument, "profile covers " + std::to_string((*p)->layer_count()) +
                                            " layers, the served model has " + std::to_string(n));
    }
  }
}

ControlApi::~ControlApi() { stop(); }

namespace {

SplitPlan make_plan(const std::optional<LayerProfile>& device, const std::optional<LayerProfile>& server,
                    std::size_t layer_count, const PlanRequest& req) {
  if (device && device->has_split_totals()) {
    std::vector<std::size_t> candidates;
    if (req.split_point) {
      candidates = {*req.split_point};
    } else {
      for (const auto& [c, t] : device->split_totals_ms) candidates.push_back(c);
    }
    auto plan = greedy_split(*device, candidates);
    plan.link = req.link;
    return plan;
  }
  if (!device || !server) fail(ErrorCode::kInvalidArgument, "no device/server profiles loaded");
  const auto candidates = req.split_point ? std::vector<std::size_t>{*req.split_point}
                                          : candidate_range(layer_count, req.include_endpoints);
  return greedy_split(*device, *server, req.link, candidates);
}

}  // namespace

ApiResponse ControlApi::get_model() const {
  const auto& g = server_.graph();
  json doc;
  doc["model_hash"] = server_.model_hash_hex();
  doc["input_shape"] = g.input_shape();
  doc["input_bytes"] = bytes_of_shape(g.input_shape());
  doc["layer_count"] = g.layer_count();
  doc["total_flops"] = g.total_flops();
  const auto plan = server_.plan();
  doc["split_point"] = plan ? json(plan->split_point) : json(nullptr);
  auto& layers = doc["layers"] = json::array();
  for (const auto& layer : g.layers()) {
    const auto& s = layer.spec;
    layers.push_back({{"layer", s.index},
                      {"name", s.name},
                      {"kind", std::string(to_string(s.kind))},
                      {"output_shape", s.output_shape},
                      {"flops", flops_of_layer(s)},
                      {"output_bytes", output_bytes_of_layer(s)}});
  }
  return {200, doc.dump()};
}

ApiResponse ControlApi::get_profiles() const {
  return {200, json{{"device", layer_profile_or_null(device_)}, {"server", layer_profile_or_null(server_profile_)}}
                   .dump()};
}

ApiResponse ControlApi::get_plan() const {
  const auto plan = server_.plan();
  if (!plan) return error_response(404, "no active plan");
  return {200, plan_to_json(*plan)};
}

ApiResponse ControlApi::post_whatif(const std::string& body) const {
  PlanRequest req;
  try {
    req = parse_plan_request(body);
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  }
  try {
    const auto plan = make_plan(device_, server_profile_, server_.graph().layer_count(), req);
    json doc;
    doc["argmin"] = plan.split_point;
    doc["mode"] = plan.mode == PlanMode::kPredicted ? "predicted" : "measured";
    doc["link"] = {{"bandwidth_mbps", req.link.bandwidth_mbps}, {"overhead_ms", req.link.overhead_ms}};
    auto& candidates = doc["candidates"] = json::array();
    for (const auto& b : plan.candidates) candidates.push_back(json::parse(breakdown_to_json(b)));
    return {200, doc.dump()};
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
}

ApiResponse ControlApi::post_plan(const std::string& body) {
  PlanRequest req;
  try {
    req = parse_plan_request(body);
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  }
  SplitPlan plan;
  try {
    plan = make_plan(device_, server_profile_, server_.graph().layer_count(), req);
    plan.model_hash = server_.model_hash_hex();
    if (const auto current = server_.plan()) plan.strategy_ref = current->strategy_ref;
    server_.activate_plan(plan);
  } catch (const Error& e) {
    return error_response(422, e.what());
  }
  const auto text = plan_to_json(plan);
  if (!plan_path_.empty()) {
    try {
      write_text(plan_path_, text);
    } catch (const Error& e) {
      return error_response(500, std::string("plan activated but not persisted: ") + e.what());
    }
  }
  return {200, text};
}

void ControlApi::start(const Endpoint& listen) {
  if (http_) return;
  http_ = std::make_unique<httplib::Server>();
  auto reply = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  http_->Get("/api/model", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, get_model()); });
  http_->Get("/api/profiles",
             [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, get_profiles()); });
  http_->Get("/api/plan", [this, reply](const httplib::Request&, httplib::Response& res) { reply(res, get_plan()); });
  http_->Post("/api/whatif", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, post_whatif(req.body));
  });
  http_->Post("/api/plan", [this, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, post_plan(req.body));
  });
  http_->Get("/api/live", [this](const httplib::Request& req, httplib::Response& res) {
    std::size_t limit = 0;
    if (req.has_param("limit")) {
      try {
        limit = std::stoul(req.get_param_value("limit"));
      } catch (const std::exception&) {
        res.status = 400;
        res.set_content(json{{"error", "limit must be a non-negative integer"}}.dump(), "application/json");
        return;
      }
    }
    struct Cursor {
      std::uint64_t after = 0;
      std::size_t sent = 0;
    };
    auto cursor = std::make_shared<Cursor>();
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, limit, cursor](std::size_t, httplib::DataSink& sink) {
      if (stopping_.load() || !server_.running()) {
        sink.done();
        return true;
      }
      const auto events = server_.events_after(cursor->after, std::chrono::milliseconds(500));
      if (events.empty()) {
        const std::string keepalive = ": keepalive\n\n";
        return sink.write(keepalive.data(), keepalive.size());
      }
      for (const auto& e : events) {
        const auto line = "data: " + live_event_to_json(e) + "\n\n";
        if (!sink.write(line.data(), line.size())) return false;
        cursor->after = e.seq;
        if (limit != 0 && ++cursor->sent >= limit) {
          sink.done();
          return true;
        }
      }
      return true;
    });
  });

  int port = 0;
  if (listen.port == 0) {
    port = http_->bind_to_any_port(listen.host);
  } else {
    port = http_->bind_to_port(listen.host, listen.port) ? listen.port : -1;
  }
  if (port <= 0) {
    http_.reset();
    fail(ErrorCode::kTransport, "cannot bind control API on " + listen.to_string());
  }
  port_ = static_cast<std::uint16_t>(port);
  stopping_ = false;
  thread_ = std::thread([this] { http_->listen_after_bind(); });
}

void ControlApi::stop() {
  if (!http_) return;
  stopping_ = true;
  http_->stop();
  if (thread_.joinable()) thread_.join();
  http_.reset();
}

}  // namespace splitwise
