#include "splitwise/latency.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <unistd.h>

#include <json.hpp>

#include "splitwise/error.hpp"
#include "splitwise/model_io.hpp"

namespace splitwise {

void LinkModel::validate() const {
  if (!(bandwidth_mbps > 0.0)) fail(ErrorCode::kInvalidArgument, "bandwidth must be positive");
  if (!(overhead_ms >= 0.0) || !std::isfinite(overhead_ms)) {
    fail(ErrorCode::kInvalidArgument, "overhead must be a non-negative number");
  }
}

double transmission_ms(std::uint64_t bytes, const LinkModel& link) {
  link.validate();
  return 8.0 * static_cast<double>(bytes) / (link.bandwidth_mbps * 1e6) * 1000.0 + link.overhead_ms;
}

double median(std::vector<double> samples) {
  if (samples.empty()) fail(ErrorCode::kInvalidArgument, "median of no samples");
  std::sort(samples.begin(), samples.end());
  const std::size_t mid = samples.size() / 2;
  if (samples.size() % 2 == 1) return samples[mid];
  return 0.5 * (samples[mid - 1] + samples[mid]);
}

LayerProfile profile_layers(const ModelGraph& graph, const Tensor& sample_input, std::size_t repeats) {
  if (repeats < 3) fail(ErrorCode::kInvalidArgument, "profiling needs at least 3 repeats");
  if (sample_input.shape() != graph.input_shape()) {
    fail(ErrorCode::kInvalidArgument, "sample input " + to_string(sample_input.shape()) + " does not match model input " +
                                          to_string(graph.input_shape()));
  }
  using Clock = std::chrono::steady_clock;
  const std::size_t n = graph.layer_count();
  std::vector<std::vector<double>> samples(n);

  (void)graph.forward(sample_input);  // warmup
  for (std::size_t r = 0; r < repeats; ++r) {
    Tensor x = sample_input;
    for (std::size_t i = 1; i <= n; ++i) {
      const auto start = Clock::now();
      x = graph.forward_layer(i, x);
      const auto stop = Clock::now();
      samples[i - 1].push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
  }

  LayerProfile profile;
  profile.repeats = repeats;
  profile.host = local_host_description();
  profile.model_hash = hex(model_hash(graph));
  profile.input_bytes = bytes_of_shape(graph.input_shape());
  for (std::size_t i = 1; i <= n; ++i) {
    const auto& spec = graph.layer(i).spec;
    profile.layers.push_back({i, spec.kind, spec.name, median(samples[i - 1]), output_bytes_of_layer(spec)});
  }
  return profile;
}

LatencyBreakdown predict_latency(const LayerProfile& device, const LayerProfile& server, const LinkModel& link,
                                 std::size_t c) {
  if (device.layers.size() != server.layers.size() || device.input_bytes != server.input_bytes) {
    fail(ErrorCode::kInvalidArgument, "device and server profiles describe different models");
  }
  for (std::size_t i = 0; i < device.layers.size(); ++i) {
    if (device.layers[i].output_bytes != server.layers[i].output_bytes) {
      fail(ErrorCode::kInvalidArgument, "device and server profiles disagree at layer " + std::to_string(i + 1));
    }
  }
  const std::size_t n = device.layers.size();
  if (n == 0) fail(ErrorCode::kInvalidArgument, "empty profile");
  if (c > n) fail(ErrorCode::kInvalidArgument, "split point " + std::to_string(c) + " beyond " + std::to_string(n));

  LatencyBreakdown b;
  b.split_point = c;
  for (std::size_t i = 0; i < c; ++i) b.t_device_ms += device.layers[i].compute_ms;
  for (std::size_t i = c; i < n; ++i) b.t_server_ms += server.layers[i].compute_ms;
  const std::uint64_t bytes = c == 0 ? device.input_bytes : device.layers[c - 1].output_bytes;
  b.t_tx_ms = transmission_ms(bytes, link);
  b.total_ms = b.t_device_ms + b.t_tx_ms + b.t_server_ms;
  return b;
}

LayerProfile scaled(const LayerProfile& profile, double factor) {
  LayerProfile out = profile;
  for (auto& l : out.layers) l.compute_ms *= factor;
  for (auto& [c, t] : out.split_totals_ms) t *= factor;
  return out;
}

std::string profile_to_json(const LayerProfile& p) {
  nlohmann::ordered_json doc;
  if (p.has_split_totals()) {
    doc["format"] = "split-totals";
    doc["unit"] = "ms";
    auto& totals = doc["split_totals"] = nlohmann::ordered_json::array();
    for (const auto& [c, t] : p.split_totals_ms) totals.push_back({{"split_point", c}, {"total_ms", t}});
    return doc.dump(2);
  }
  doc["format"] = "layer-profile";
  doc["host"] = p.host;
  doc["repeats"] = p.repeats;
  doc["model_hash"] = p.model_hash;
  doc["input_bytes"] = p.input_bytes;
  auto& layers = doc["layers"] = nlohmann::ordered_json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"layer", l.layer},
                      {"kind", std::string(to_string(l.kind))},
                      {"name", l.name},
                      {"compute_ms", l.compute_ms},
                      {"output_bytes", l.output_bytes}});
  }
  return doc.dump(2);
}

LayerProfile profile_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    LayerProfile p;
    if (doc.value("format", std::string("layer-profile")) == "split-totals") {
      for (const auto& e : doc.at("split_totals")) {
        p.split_totals_ms[e.at("split_point").get<std::size_t>()] = e.at("total_ms").get<double>();
      }
      if (p.split_totals_ms.empty()) fail(ErrorCode::kFormat, "split-totals profile has no entries");
      return p;
    }
    p.host = doc.value("host", std::string{});
    p.repeats = doc.value("repeats", std::size_t{0});
    p.model_hash = doc.value("model_hash", std::string{});
    p.input_bytes = doc.at("input_bytes").get<std::uint64_t>();
    for (const auto& e : doc.at("layers")) {
      LayerTiming t;
      t.layer = e.at("layer").get<std::size_t>();
      t.kind = layer_kind_from_string(e.at("kind").get<std::string>());
      t.name = e.value("name", std::string{});
      t.compute_ms = e.at("compute_ms").get<double>();
      t.output_bytes = e.at("output_bytes").get<std::uint64_t>();
      if (t.compute_ms < 0) fail(ErrorCode::kFormat, "negative layer latency");
      if (t.layer != p.layers.size() + 1) fail(ErrorCode::kFormat, "profile layers must be ordered from 1");
      p.layers.push_back(std::move(t));
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "bad profile JSON: " + std::string(e.what()));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kFormat) throw;
    fail(ErrorCode::kFormat, e.what());
  }
}

LayerProfile load_profile(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::kIo, "cannot open " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return profile_from_json(buf.str());
}

std::string local_host_description() {
  char name[256] = {};
  if (gethostname(name, sizeof(name) - 1) != 0) name[0] = '\0';
  std::ostringstream out;
  out << (name[0] ? name : "unknown") << " (" << std::thread::hardware_concurrency() << " threads)";
  return out.str();
}

}  // namespace splitwise
