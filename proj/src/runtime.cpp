#include "splitwise/runtime.hpp"

#include <json.hpp>

#include "splitwise/error.hpp"
#include "splitwise/model_io.hpp"

namespace splitwise {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

double unix_ms_now() {
  return std::chrono::duration<double, std::milli>(std::chrono::system_clock::now().time_since_epoch()).count();
}

wire::ErrorKind kind_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnsupportedVersion: return wire::ErrorKind::kVersion;
    case ErrorCode::kProtocol:
    case ErrorCode::kFraming: return wire::ErrorKind::kProtocol;
    case ErrorCode::kInvalidShape: return wire::ErrorKind::kShape;
    default: return wire::ErrorKind::kInternal;
  }
}

Shape shape_of(const wire::Feature& f) { return Shape(f.dims.begin(), f.dims.end()); }

}  // namespace

std::string live_event_to_json(const LiveEvent& e) {
  nlohmann::json j = {{"seq", e.seq},
                      {"request_id", e.request_id},
                      {"split_point", e.split_point},
                      {"t_server_ms", e.t_server_ms},
                      {"feature_bytes", e.feature_bytes},
                      {"predicted_total_ms", e.predicted_total_ms},
                      {"unix_ms", e.unix_ms}};
  return j.dump();
}

CloudServer::CloudServer(ModelGraph graph, std::optional<SplitPlan> plan, ServerConfig config)
    : graph_(std::move(graph)), hash_(splitwise::model_hash(graph_)), hash_hex_(hex(hash_)), config_(config) {
  if (!graph_.has_weights()) fail(ErrorCode::kInvalidModel, "the cloud daemon needs a model with weights");
  if (plan) activate_plan(std::move(*plan));
}

CloudServer::~CloudServer() { stop(); }

void CloudServer::start() {
  if (running_.exchange(true)) return;
  listener_ = Listener(config_.listen);
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void CloudServer::stop() {
  if (!running_.exchange(false)) return;
  listener_.shutdown();
  if (accept_thread_.joinable()) accept_thread_.join();
  reap_connections(true);
  events_cv_.notify_all();
  std::lock_guard lock(stop_mutex_);
  stop_cv_.notify_all();
}

void CloudServer::wait() {
  std::unique_lock lock(stop_mutex_);
  stop_cv_.wait(lock, [this] { return !running_.load(); });
}

std::shared_ptr<const SplitPlan> CloudServer::plan() const {
  std::lock_guard lock(plan_mutex_);
  return plan_;
}

void CloudServer::activate_plan(SplitPlan plan) {
  if (plan.split_point > graph_.layer_count()) {
    fail(ErrorCode::kInvalidArgument, "plan split point " + std::to_string(plan.split_point) + " exceeds " +
                                          std::to_string(graph_.layer_count()) + " layers");
  }
  if (plan.model_hash.empty()) {
    plan.model_hash = hash_hex_;
  } else if (plan.model_hash != hash_hex_) {
    fail(ErrorCode::kInvalidArgument, "plan was made for model " + plan.model_hash + ", serving " + hash_hex_);
  }
  auto next = std::make_shared<const SplitPlan>(std::move(plan));
  std::lock_guard lock(plan_mutex_);
  plan_ = std::move(next);
}

bool CloudServer::accepts_split(std::size_t split) const {
  if (split > graph_.layer_count()) return false;
  if (config_.profiling_mode || split == 0) return true;
  const auto active = plan();
  return active && active->split_point == split;
}

void CloudServer::accept_loop() {
  while (running_.load()) {
    Socket socket = listener_.accept();
    if (!socket.valid()) break;
    if (!running_.load()) break;
    reap_connections(false);
    auto conn = std::make_unique<Connection>();
    conn->socket = std::move(socket);
    Connection* raw = conn.get();
    raw->thread = std::thread([this, raw] {
      try {
        serve_connection(raw->socket);
      } catch (const std::exception&) {
        // Connection-level failures end only that connection.
      }
      raw->socket.shutdown();
      raw->done.store(true);
    });
    std::lock_guard lock(connections_mutex_);
    connections_.push_back(std::move(conn));
  }
}

void CloudServer::reap_connections(bool all) {
  std::vector<std::unique_ptr<Connection>> finished;
  {
    std::lock_guard lock(connections_mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (all || (*it)->done.load()) {
        if (all) (*it)->socket.shutdown();
        finished.push_back(std::move(*it));
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& c : finished) c->thread.join();
}

void CloudServer::serve_connection(Socket& socket) {
  FrameChannel channel(socket);
  auto send_error = [&](wire::ErrorKind kind, const std::string& message) {
    try {
      channel.send(wire::ErrorMsg{kind, message});
    } catch (const Error&) {
    }
  };

  std::size_t split = 0;
  bool greeted = false;
  while (running_.load()) {
    wire::Message message;
    try {
      message = channel.receive();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTransport) send_error(kind_for(e.code()), e.what());
      return;
    }

    if (std::holds_alternative<wire::Ping>(message)) {
      channel.send(wire::Pong{});
      continue;
    }
    if (auto* hello = std::get_if<wire::Hello>(&message)) {
      // A HELLO on an established session re-handshakes at a new split.
      greeted = false;
      if (hello->model_hash != hash_) {
        channel.send(wire::HelloAck{wire::AckStatus::kHashMismatch});
        return;
      }
      if (!accepts_split(hello->split_point)) {
        channel.send(wire::HelloAck{wire::AckStatus::kBadSplit});
        return;
      }
      split = hello->split_point;
      greeted = true;
      channel.send(wire::HelloAck{wire::AckStatus::kOk});
      continue;
    }
    auto* feature = std::get_if<wire::Feature>(&message);
    if (!feature || !greeted) {
      send_error(wire::ErrorKind::kProtocol, greeted ? "unexpected message type" : "expected HELLO first");
      return;
    }

    const Shape expected = graph_.shape_after(split);
    const Shape got = shape_of(*feature);
    if (got != expected) {
      send_error(wire::ErrorKind::kShape,
                 "feature shape " + to_string(got) + " does not match " + to_string(expected) + " after layer " +
                     std::to_string(split));
      return;
    }

    Tensor input(got, std::move(feature->data));
    Tensor output;
    std::uint64_t compute_ns = 0;
    try {
      std::unique_lock<std::mutex> serial(compute_mutex_, std::defer_lock);
      if (config_.profiling_mode) serial.lock();
      const auto t0 = Clock::now();
      output = graph_.forward_range(input, split + 1, graph_.layer_count());
      compute_ns = static_cast<std::uint64_t>(
          std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count());
    } catch (const Error& e) {
      send_error(kind_for(e.code()), e.what());
      return;
    }

    LiveEvent event;
    event.request_id = feature->request_id;
    event.split_point = split;
    event.t_server_ms = static_cast<double>(compute_ns) / 1e6;
    event.feature_bytes = input.byte_size();
    if (const auto active = plan(); active && active->split_point == split) {
      event.predicted_total_ms = active->predicted.total_ms;
    }
    event.unix_ms = unix_ms_now();
    // Published before the reply so a client that has its RESULT also sees the event.
    publish(event);

    channel.send(wire::Result{feature->request_id, std::vector<float>(output.values().begin(), output.values().end()),
                              compute_ns});
  }
}

void CloudServer::publish(LiveEvent event) {
  {
    std::lock_guard lock(events_mutex_);
    event.seq = next_seq_++;
    events_.push_back(event);
    while (events_.size() > config_.live_history) events_.pop_front();
  }
  events_cv_.notify_all();
}

std::uint64_t CloudServer::last_seq() const {
  std::lock_guard lock(events_mutex_);
  return next_seq_ - 1;
}

std::vector<LiveEvent> CloudServer::events_after(std::uint64_t after, std::chrono::milliseconds wait) const {
  std::unique_lock lock(events_mutex_);
  events_cv_.wait_for(lock, wait, [&] { return next_seq_ - 1 > after || !running_.load(); });
  std::vector<LiveEvent> out;
  for (const auto& e : events_) {
    if (e.seq > after) out.push_back(e);
  }
  return out;
}

EdgeSession::EdgeSession(const Endpoint& server, const ModelGraph& graph, std::size_t split_point, LinkShaper uplink)
    : graph_(graph), hash_(model_hash(graph)), socket_(Socket::connect(server)), channel_(socket_, uplink) {
  handshake(split_point);
}

void EdgeSession::handshake(std::size_t split_point) {
  if (split_point > graph_.layer_count()) {
    fail(ErrorCode::kInvalidArgument, "split point " + std::to_string(split_point) + " exceeds " +
                                          std::to_string(graph_.layer_count()) + " layers");
  }
  if (split_point > 0xFFFF) fail(ErrorCode::kInvalidArgument, "split point does not fit the handshake");
  channel_.send(wire::Hello{hash_, static_cast<std::uint16_t>(split_point)});
  const auto reply = channel_.receive();
  if (const auto* err = std::get_if<wire::ErrorMsg>(&reply)) {
    fail(ErrorCode::kHandshake, "server error " + std::to_string(static_cast<int>(err->code)) + ": " + err->message);
  }
  const auto* ack = std::get_if<wire::HelloAck>(&reply);
  if (!ack) fail(ErrorCode::kProtocol, "expected HELLO_ACK");
  switch (ack->status) {
    case wire::AckStatus::kOk:
      split_ = split_point;
      return;
    case wire::AckStatus::kHashMismatch:
      fail(ErrorCode::kHandshake, "server rejected the model hash (ACK status 1)");
    case wire::AckStatus::kBadSplit:
      fail(ErrorCode::kHandshake,
           "server rejected split point " + std::to_string(split_point) + " (ACK status 2)");
  }
  fail(ErrorCode::kProtocol, "unknown ACK status");
}

InferenceOutcome EdgeSession::infer(const Tensor& input) {
  InferenceOutcome out;
  out.request_id = next_request_++;

  const auto t0 = Clock::now();
  const Tensor feature = graph_.forward_range(input, 1, split_);
  const auto t1 = Clock::now();

  wire::Feature frame;
  frame.request_id = out.request_id;
  frame.dims.assign(feature.shape().begin(), feature.shape().end());
  frame.data.assign(feature.values().begin(), feature.values().end());

  const auto sent = Clock::now();
  channel_.send(frame);
  auto reply = channel_.receive();
  const auto received = Clock::now();

  if (const auto* err = std::get_if<wire::ErrorMsg>(&reply)) {
    const auto code = err->code == wire::ErrorKind::kShape ? ErrorCode::kInvalidShape : ErrorCode::kProtocol;
    fail(code, "server error " + std::to_string(static_cast<int>(err->code)) + ": " + err->message);
  }
  auto* result = std::get_if<wire::Result>(&reply);
  if (!result) fail(ErrorCode::kProtocol, "expected RESULT");
  if (result->request_id != out.request_id) {
    fail(ErrorCode::kProtocol, "RESULT for request " + std::to_string(result->request_id) + ", expected " +
                                   std::to_string(out.request_id));
  }
  if (result->logits.size() != graph_.class_count()) {
    fail(ErrorCode::kProtocol, "RESULT carries " + std::to_string(result->logits.size()) + " values, expected " +
                                   std::to_string(graph_.class_count()));
  }
  out.logits = Tensor(graph_.output_shape(), std::move(result->logits));

  auto& m = out.measured;
  m.split_point = split_;
  m.t_device_ms = split_ == 0 ? 0.0 : ms_between(t0, t1);
  m.t_server_ms = static_cast<double>(result->server_compute_ns) / 1e6;
  m.t_tx_ms = std::max(0.0, ms_between(sent, received) - m.t_server_ms);
  m.total_ms = m.t_device_ms + m.t_tx_ms + m.t_server_ms;
  return out;
}

void EdgeSession::ping() {
  channel_.send(wire::Ping{});
  const auto reply = channel_.receive();
  if (!std::holds_alternative<wire::Pong>(reply)) fail(ErrorCode::kProtocol, "expected PONG");
}

InferMode infer_mode_from_string(const std::string& name) {
  if (name == "co") return InferMode::kCo;
  if (name == "device") return InferMode::kDevice;
  if (name == "server") return InferMode::kServer;
  fail(ErrorCode::kInvalidArgument, "unknown mode '" + name + "' (co, device, server)");
}

std::string_view to_string(InferMode mode) {
  switch (mode) {
    case InferMode::kCo: return "co";
    case InferMode::kDevice: return "device";
    case InferMode::kServer: return "server";
  }
  return "?";
}

InferenceOutcome run_device_only(const ModelGraph& graph, const Tensor& input) {
  InferenceOutcome out;
  const auto t0 = Clock::now();
  out.logits = graph.forward(input);
  const auto t1 = Clock::now();
  out.measured.split_point = graph.layer_count();
  out.measured.t_device_ms = ms_between(t0, t1);
  out.measured.total_ms = out.measured.t_device_ms;
  return out;
}

InferenceOutcome run_edge_inference(const Endpoint& server, const ModelGraph& graph, const SplitPlan& plan,
                                    const Tensor& input, InferMode mode, LinkShaper uplink) {
  if (mode == InferMode::kDevice) return run_device_only(graph, input);
  const std::size_t split = mode == InferMode::kServer ? 0 : plan.split_point;
  EdgeSession session(server, graph, split, uplink);
  return session.infer(input);
}

std::vector<LatencyBreakdown> measure_end_to_end(EdgeSession& session, const Tensor& input, std::size_t runs) {
  std::vector<LatencyBreakdown> out;
  out.reserve(runs);
  for (std::size_t run = 0; run < runs; ++run) {
    try {
      out.push_back(session.infer(input).measured);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kTransport) throw;
      fail(ErrorCode::kTransport, "run " + std::to_string(run) + ": " + e.what());
    }
  }
  return out;
}

LayerProfile measure_split_totals(const Endpoint& server, const ModelGraph& graph,
                                  const std::vector<std::size_t>& candidates, const Tensor& input, std::size_t runs,
                                  LinkShaper uplink) {
  if (runs == 0) fail(ErrorCode::kInvalidArgument, "runs must be positive");
  LayerProfile profile;
  profile.repeats = runs;
  profile.input_bytes = input.byte_size();
  profile.host = "measured against " + server.to_string();
  profile.model_hash = hex(model_hash(graph));
  std::optional<EdgeSession> session;
  for (const std::size_t c : candidates) {
    std::vector<double> totals;
    if (c == graph.layer_count()) {
      // Device-only needs no server.
      run_device_only(graph, input);
      for (std::size_t r = 0; r < runs; ++r) totals.push_back(run_device_only(graph, input).measured.total_ms);
    } else {
      if (session) {
        session->handshake(c);
      } else {
        session.emplace(server, graph, c, uplink);
      }
      session->infer(input);  // warmup
      for (const auto& b : measure_end_to_end(*session, input, runs)) totals.push_back(b.total_ms);
    }
    profile.split_totals_ms[c] = median(totals);
  }
  return profile;
}

}  // namespace splitwise
