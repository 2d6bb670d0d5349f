#include "splitwise/planner.hpp"

#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "splitwise/error.hpp"
#include "splitwise/sha256.hpp"

namespace splitwise {

std::vector<std::size_t> candidate_range(std::size_t layer_count, bool include_endpoints) {
  std::vector<std::size_t> out;
  for (std::size_t c = include_endpoints ? 0 : 1; c <= layer_count; ++c) out.push_back(c);
  return out;
}

SplitPlan greedy_split(const CandidateEvaluator& evaluate, const std::vector<std::size_t>& candidates) {
  if (candidates.empty()) fail(ErrorCode::kInvalidArgument, "empty candidate range");
  SplitPlan plan;
  bool first = true;
  for (auto c : candidates) {
    const auto b = evaluate(c);
    plan.candidates.push_back(b);
    if (first || b.total_ms < plan.predicted.total_ms ||
        (b.total_ms == plan.predicted.total_ms && c < plan.split_point)) {
      plan.predicted = b;
      plan.split_point = c;
      first = false;
    }
  }
  return plan;
}

SplitPlan greedy_split(const LayerProfile& device, const LayerProfile& server, const LinkModel& link,
                       const std::vector<std::size_t>& candidates) {
  if (device.has_split_totals()) return greedy_split(device, candidates);
  link.validate();
  auto plan = greedy_split([&](std::size_t c) { return predict_latency(device, server, link, c); }, candidates);
  plan.link = link;
  plan.model_hash = device.model_hash;
  return plan;
}

SplitPlan greedy_split(const LayerProfile& measured_totals, const std::vector<std::size_t>& candidates) {
  auto plan = greedy_split(
      [&](std::size_t c) {
        auto it = measured_totals.split_totals_ms.find(c);
        if (it == measured_totals.split_totals_ms.end()) {
          fail(ErrorCode::kInvalidArgument, "no measurement for split point " + std::to_string(c));
        }
        LatencyBreakdown b;
        b.split_point = c;
        b.total_ms = it->second;
        b.components_known = false;
        return b;
      },
      candidates);
  plan.mode = PlanMode::kMeasured;
  return plan;
}

BaselineReport make_baseline_report(double device_only_ms, double server_only_ms, double co_inference_ms,
                                    std::size_t split_point) {
  if (!(co_inference_ms > 0.0)) fail(ErrorCode::kInvalidArgument, "co-inference latency must be positive");
  BaselineReport r;
  r.device_only_ms = device_only_ms;
  r.server_only_ms = server_only_ms;
  r.co_inference_ms = co_inference_ms;
  r.split_point = split_point;
  r.speedup_vs_device = device_only_ms / co_inference_ms;
  r.speedup_vs_server = server_only_ms / co_inference_ms;
  return r;
}

BaselineReport compare_baselines(const LayerProfile& device, const LayerProfile& server, const LinkModel& link,
                                 const SplitPlan& plan) {
  const std::size_t n = device.layer_count();
  return make_baseline_report(predict_latency(device, server, link, n).total_ms,
                              predict_latency(device, server, link, 0).total_ms, plan.predicted.total_ms,
                              plan.split_point);
}

TwoStageResult two_stage_optimize(const ModelGraph& graph, const ValidationSet& valset, const AgentConfig& config,
                                  double budget, const ProfileFn& profiler, const LinkModel& link,
                                  std::vector<std::size_t> candidates) {
  auto stage1 = run_pruning_search(graph, valset, config, budget);
  TwoStageResult out;
  out.strategy = stage1.strategy;
  out.search = std::move(stage1.search);
  out.pruned = apply_strategy(graph, out.strategy, config.min_action);

  std::tie(out.device_profile, out.server_profile) = profiler(out.pruned);
  if (candidates.empty()) candidates = candidate_range(out.pruned.layer_count(), false);
  out.plan = greedy_split(out.device_profile, out.server_profile, link, candidates);
  out.plan.model_hash = hex(model_hash(out.pruned));
  const auto strategy_json = strategy_to_json(out.strategy);
  out.plan.strategy_ref = hex(sha256(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(strategy_json.data()), strategy_json.size())));

  nlohmann::ordered_json prov;
  prov["seed"] = config.seed;
  prov["episodes"] = config.episodes;
  prov["budget"] = budget;
  prov["min_action"] = config.min_action;
  prov["buffer_capacity"] = config.buffer_capacity;
  prov["batch_size"] = config.batch_size;
  prov["gamma"] = config.gamma;
  prov["sigma0"] = config.sigma0;
  prov["warmup_episodes"] = config.warmup_episodes;
  prov["sigma_decay"] = config.sigma_decay;
  prov["actor_lr"] = config.actor_lr;
  prov["critic_lr"] = config.critic_lr;
  prov["tau"] = config.tau;
  prov["bandwidth_mbps"] = link.bandwidth_mbps;
  prov["overhead_ms"] = link.overhead_ms;
  prov["original_model_hash"] = hex(model_hash(graph));
  out.provenance = prov.dump(2);
  return out;
}

namespace {

nlohmann::ordered_json breakdown_json(const LatencyBreakdown& b) {
  nlohmann::ordered_json j;
  j["split_point"] = b.split_point;
  if (b.components_known) {
    j["t_device_ms"] = b.t_device_ms;
    j["t_tx_ms"] = b.t_tx_ms;
    j["t_server_ms"] = b.t_server_ms;
  } else {
    j["t_device_ms"] = nullptr;
    j["t_tx_ms"] = nullptr;
    j["t_server_ms"] = nullptr;
  }
  j["total_ms"] = b.total_ms;
  return j;
}

LatencyBreakdown breakdown_from(const nlohmann::json& j) {
  LatencyBreakdown b;
  b.split_point = j.value("split_point", std::size_t{0});
  b.total_ms = j.at("total_ms").get<double>();
  b.components_known = !j.at("t_device_ms").is_null();
  if (b.components_known) {
    b.t_device_ms = j.at("t_device_ms").get<double>();
    b.t_tx_ms = j.at("t_tx_ms").get<double>();
    b.t_server_ms = j.at("t_server_ms").get<double>();
  }
  return b;
}

}  // namespace

std::string breakdown_to_json(const LatencyBreakdown& b) { return breakdown_json(b).dump(); }

std::string plan_to_json(const SplitPlan& plan) {
  nlohmann::ordered_json doc;
  doc["model_hash"] = plan.model_hash;
  doc["split_point"] = plan.split_point;
  doc["strategy_ref"] = plan.strategy_ref.empty() ? nlohmann::ordered_json(nullptr)
                                                  : nlohmann::ordered_json(plan.strategy_ref);
  doc["mode"] = plan.mode == PlanMode::kPredicted ? "predicted" : "measured";
  auto predicted = breakdown_json(plan.predicted);
  predicted.erase("split_point");
  doc["predicted"] = predicted;
  doc["link"] = {{"bandwidth_mbps", plan.link.bandwidth_mbps}, {"overhead_ms", plan.link.overhead_ms}};
  auto& candidates = doc["candidates"] = nlohmann::ordered_json::array();
  for (const auto& b : plan.candidates) candidates.push_back(breakdown_json(b));
  return doc.dump(2);
}

SplitPlan plan_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    SplitPlan plan;
    plan.model_hash = doc.value("model_hash", std::string{});
    plan.split_point = doc.at("split_point").get<std::size_t>();
    if (doc.contains("strategy_ref") && doc.at("strategy_ref").is_string()) {
      plan.strategy_ref = doc.at("strategy_ref").get<std::string>();
    }
    plan.mode = doc.value("mode", std::string("predicted")) == "measured" ? PlanMode::kMeasured : PlanMode::kPredicted;
    plan.predicted = breakdown_from(doc.at("predicted"));
    plan.predicted.split_point = plan.split_point;
    if (doc.contains("link")) {
      plan.link.bandwidth_mbps = doc.at("link").at("bandwidth_mbps").get<double>();
      plan.link.overhead_ms = doc.at("link").at("overhead_ms").get<double>();
    }
    if (doc.contains("candidates")) {
      for (const auto& c : doc.at("candidates")) plan.candidates.push_back(breakdown_from(c));
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, "bad plan JSON: " + std::string(e.what()));
  }
}

SplitPlan load_plan(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::kIo, "cannot open " + path);
  std::stringstream buf;
  buf << f.rdbuf();
  return plan_from_json(buf.str());
}

std::string baseline_report_to_json(const BaselineReport& r) {
  nlohmann::ordered_json doc;
  doc["split_point"] = r.split_point;
  doc["device_only_ms"] = r.device_only_ms;
  doc["server_only_ms"] = r.server_only_ms;
  doc["co_inference_ms"] = r.co_inference_ms;
  doc["speedup_vs_device"] = r.speedup_vs_device;
  doc["speedup_vs_server"] = r.speedup_vs_server;
  return doc.dump(2);
}

}  // namespace splitwise
