#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "splitwise/latency.hpp"
#include "splitwise/model_graph.hpp"
#include "splitwise/planner.hpp"
#include "splitwise/socket.hpp"

namespace splitwise {

struct ServerConfig {
  Endpoint listen;
  /// Accept any split point and run one request at a time across all
  /// connections, so that measured planning sees undisturbed timings.
  bool profiling_mode = false;
  std::size_t live_history = 256;
};

/// One served request, as published on the live feed.
struct LiveEvent {
  std::uint64_t seq = 0;
  std::uint64_t request_id = 0;
  std::size_t split_point = 0;
  double t_server_ms = 0.0;
  std::uint64_t feature_bytes = 0;
  double predicted_total_ms = 0.0;  // active plan's prediction, 0 when none
  double unix_ms = 0.0;
};

std::string live_event_to_json(const LiveEvent& event);

/// Cloud daemon: serves layers c+1..N for every connected edge.
///
/// Splits accepted at handshake: the active plan's split, 0 (server-only
/// baseline), and in profiling mode any split in [0, N].
class CloudServer {
 public:
  CloudServer(ModelGraph graph, std::optional<SplitPlan> plan, ServerConfig config = {});
  ~CloudServer();
  CloudServer(const CloudServer&) = delete;
  CloudServer& operator=(const CloudServer&) = delete;

  void start();
  void stop();
  /// Blocks until stop() is called from another thread.
  void wait();
  bool running() const { return running_.load(); }
  std::uint16_t port() const { return listener_.port(); }

  const ModelGraph& graph() const { return graph_; }
  const std::string& model_hash_hex() const { return hash_hex_; }
  const std::array<std::uint8_t, 32>& model_hash() const { return hash_; }
  bool profiling_mode() const { return config_.profiling_mode; }

  std::shared_ptr<const SplitPlan> plan() const;
  /// Validates and atomically activates `plan`. New handshakes see it at once;
  /// sessions already past the handshake keep their split.
  void activate_plan(SplitPlan plan);
  bool accepts_split(std::size_t split) const;

  /// Events with seq > `after`. Waits up to `wait` for one to arrive.
  std::vector<LiveEvent> events_after(std::uint64_t after, std::chrono::milliseconds wait) const;
  std::uint64_t last_seq() const;

 private:
  void accept_loop();
  void serve_connection(Socket& socket);
  void publish(LiveEvent event);

  ModelGraph graph_;
  std::array<std::uint8_t, 32> hash_{};
  std::string hash_hex_;
  ServerConfig config_;
  Listener listener_;

  mutable std::mutex plan_mutex_;
  std::shared_ptr<const SplitPlan> plan_;

  std::mutex compute_mutex_;  // held per request in profiling mode

  struct Connection {
    std::thread thread;
    Socket socket;
    std::atomic<bool> done{false};
  };
  std::mutex connections_mutex_;
  std::vector<std::unique_ptr<Connection>> connections_;
  void reap_connections(bool all);

  mutable std::mutex events_mutex_;
  mutable std::condition_variable events_cv_;
  std::deque<LiveEvent> events_;
  std::uint64_t next_seq_ = 1;

  std::thread accept_thread_;
  std::atomic<bool> running_{false};
  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
};

struct InferenceOutcome {
  Tensor logits;
  LatencyBreakdown measured;
  std::uint64_t request_id = 0;
};

/// Persistent edge-side session: handshakes once, then one request at a time.
class EdgeSession {
 public:
  /// Connects and sends HELLO. A non-zero ACK status throws a handshake error
  /// naming the status.
  EdgeSession(const Endpoint& server, const ModelGraph& graph, std::size_t split_point, LinkShaper uplink = {});

  std::size_t split_point() const { return split_; }
  /// Re-handshakes on the open connection; the session then runs at `split_point`.
  void handshake(std::size_t split_point);
  InferenceOutcome infer(const Tensor& input);
  void ping();

 private:
  const ModelGraph& graph_;
  std::array<std::uint8_t, 32> hash_;
  std::size_t split_ = 0;
  Socket socket_;
  FrameChannel channel_;
  std::uint64_t next_request_ = 1;
};

enum class InferMode { kCo, kDevice, kServer };

InferMode infer_mode_from_string(const std::string& name);
std::string_view to_string(InferMode mode);

/// Everything on this host; no network.
InferenceOutcome run_device_only(const ModelGraph& graph, const Tensor& input);

/// One inference in the requested mode: co uses plan.split_point, server uses
/// c = 0, device never touches the network.
InferenceOutcome run_edge_inference(const Endpoint& server, const ModelGraph& graph, const SplitPlan& plan,
                                    const Tensor& input, InferMode mode, LinkShaper uplink = {});

/// `runs` back-to-back inferences over the session. Transport failures carry
/// the run index.
std::vector<LatencyBreakdown> measure_end_to_end(EdgeSession& session, const Tensor& input, std::size_t runs);

/// Median total per candidate split, measured one candidate after another on
/// a single session (the server must run in profiling mode for splits other
/// than its plan's and 0).
LayerProfile measure_split_totals(const Endpoint& server, const ModelGraph& graph,
                                  const std::vector<std::size_t>& candidates, const Tensor& input, std::size_t runs,
                                  LinkShaper uplink = {});

}  // namespace splitwise
