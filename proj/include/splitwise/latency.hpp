#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "splitwise/model_graph.hpp"
#include "splitwise/tensor.hpp"

namespace splitwise {

struct LayerTiming {
  std::size_t layer = 0;
  LayerKind kind = LayerKind::kRelu;
  std::string name;
  double compute_ms = 0.0;
  std::uint64_t output_bytes = 0;

  friend bool operator==(const LayerTiming&, const LayerTiming&) = default;
};

/// Per-layer compute latency on one host. A profile may instead carry only
/// measured end-to-end totals keyed by split point (`split_totals_ms`), as
/// produced by repeated live measurements.
struct LayerProfile {
  std::vector<LayerTiming> layers;
  std::uint64_t input_bytes = 0;
  std::size_t repeats = 0;
  std::string host;
  std::string model_hash;
  std::map<std::size_t, double> split_totals_ms;

  bool has_split_totals() const { return !split_totals_ms.empty(); }
  std::size_t layer_count() const { return layers.size(); }

  friend bool operator==(const LayerProfile&, const LayerProfile&) = default;
};

struct LinkModel {
  double bandwidth_mbps = 50.0;  // 1 Mbps = 10^6 bit/s
  double overhead_ms = 0.0;

  void validate() const;
};

struct LatencyBreakdown {
  std::size_t split_point = 0;
  double t_device_ms = 0.0;
  double t_tx_ms = 0.0;
  double t_server_ms = 0.0;
  double total_ms = 0.0;
  bool components_known = true;  // false for totals-only measurements
};

/// Wire time for `bytes` over `link`: 8*bytes / (Mbps*10^6) seconds, in ms, plus overhead.
double transmission_ms(std::uint64_t bytes, const LinkModel& link);

/// Median of the samples (mean of the middle pair for even counts).
double median(std::vector<double> samples);

/// Times every layer with a monotonic clock: one warmup pass, then the median
/// over `repeats` passes.
LayerProfile profile_layers(const ModelGraph& graph, const Tensor& sample_input, std::size_t repeats);

/// Latency of splitting after layer c (0 = everything on the server,
/// N = everything on the device; at N only the final output crosses the link).
LatencyBreakdown predict_latency(const LayerProfile& device, const LayerProfile& server, const LinkModel& link,
                                 std::size_t c);

/// Copies of a profile with every compute latency multiplied by `factor`.
LayerProfile scaled(const LayerProfile& profile, double factor);

std::string profile_to_json(const LayerProfile& profile);
LayerProfile profile_from_json(const std::string& text);
LayerProfile load_profile(const std::string& path);

std::string local_host_description();

}  // namespace splitwise
