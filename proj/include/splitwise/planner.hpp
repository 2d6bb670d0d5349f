#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "splitwise/ddpg.hpp"
#include "splitwise/latency.hpp"
#include "splitwise/model_io.hpp"
#include "splitwise/pruning.hpp"

namespace splitwise {

enum class PlanMode { kPredicted, kMeasured };

/// Split after layer `split_point`: layers 1..c on the device, c+1..N on the server.
struct SplitPlan {
  std::size_t split_point = 0;
  std::string model_hash;
  std::string strategy_ref;  // SHA-256 of the strategy JSON, empty when unpruned
  PlanMode mode = PlanMode::kPredicted;
  LatencyBreakdown predicted;
  LinkModel link;
  std::vector<LatencyBreakdown> candidates;  // every evaluated split, in order
};

using CandidateEvaluator = std::function<LatencyBreakdown(std::size_t)>;

/// 1..N, or 0..N with endpoints (server-only and device-only).
std::vector<std::size_t> candidate_range(std::size_t layer_count, bool include_endpoints);

/// Evaluates every candidate and keeps the smallest total; ties go to the
/// smaller split point.
SplitPlan greedy_split(const CandidateEvaluator& evaluate, const std::vector<std::size_t>& candidates);

SplitPlan greedy_split(const LayerProfile& device, const LayerProfile& server, const LinkModel& link,
                       const std::vector<std::size_t>& candidates);

/// Greedy selection over measured totals (split-totals profile).
SplitPlan greedy_split(const LayerProfile& measured_totals, const std::vector<std::size_t>& candidates);

struct BaselineReport {
  double device_only_ms = 0.0;
  double server_only_ms = 0.0;
  double co_inference_ms = 0.0;
  std::size_t split_point = 0;
  double speedup_vs_device = 0.0;
  double speedup_vs_server = 0.0;
};

BaselineReport compare_baselines(const LayerProfile& device, const LayerProfile& server, const LinkModel& link,
                                 const SplitPlan& plan);
BaselineReport make_baseline_report(double device_only_ms, double server_only_ms, double co_inference_ms,
                                     std::size_t split_point);

/// Profiles a model as seen by the device and by the server.
using ProfileFn = std::function<std::pair<LayerProfile, LayerProfile>(const ModelGraph&)>;

struct TwoStageResult {
  PruningStrategy strategy;
  ModelGraph pruned;
  LayerProfile device_profile;
  LayerProfile server_profile;
  SplitPlan plan;
  SearchResult search;
  std::string provenance;  // JSON: seeds, agent config, budget, link
};

/// Stage 1 searches a pruning strategy; stage 2 re-profiles the pruned model
/// and picks the split greedily over `candidates` (empty = 1..N).
TwoStageResult two_stage_optimize(const ModelGraph& graph, const ValidationSet& valset, const AgentConfig& config,
                                  double budget, const ProfileFn& profiler, const LinkModel& link,
                                  std::vector<std::size_t> candidates = {});

std::string plan_to_json(const SplitPlan& plan);
SplitPlan plan_from_json(const std::string& text);
SplitPlan load_plan(const std::string& path);
std::string baseline_report_to_json(const BaselineReport& report);
std::string breakdown_to_json(const LatencyBreakdown& b);

}  // namespace splitwise
