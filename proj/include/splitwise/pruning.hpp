#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "splitwise/model_graph.hpp"
#include "splitwise/model_io.hpp"

namespace splitwise {

inline constexpr double kDefaultMinKeepRatio = 0.1;

/// Running FLOPs accounts over the prunable (convolution) layers. The
/// identity removed() + unvisited() + retained_visited() == total() holds
/// after every action; removed() is accumulated independently of the other
/// two so the identity is a genuine cross-check.
class FlopsLedger {
 public:
  FlopsLedger() = default;
  explicit FlopsLedger(const ModelGraph& original);

  std::uint64_t total() const noexcept { return total_; }
  std::uint64_t removed() const noexcept { return removed_; }
  std::uint64_t unvisited() const;
  std::uint64_t retained_visited() const;
  /// Current FLOPs of prunable layers strictly after `layer_index`.
  std::uint64_t rest_after(std::size_t layer_index) const;

  bool is_prunable(std::size_t layer_index) const { return entries_.contains(layer_index); }
  std::vector<std::size_t> layers() const;
  bool visited(std::size_t layer_index) const { return entries_.at(layer_index).visited; }
  std::uint64_t original_flops(std::size_t layer_index) const { return entries_.at(layer_index).original; }
  std::uint64_t current_flops(std::size_t layer_index) const { return entries_.at(layer_index).current; }
  /// Realized fraction of output channels kept (1 for unvisited layers).
  double kept_fraction(std::size_t layer_index) const { return entries_.at(layer_index).kept_fraction; }
  double retained_fraction() const;

  /// Re-reads the current FLOPs of `layer_index` from `graph`, adding any
  /// decrease to removed().
  void refresh(const ModelGraph& graph, std::size_t layer_index);
  void mark_visited(std::size_t layer_index, double kept_fraction);

 private:
  struct Entry {
    std::uint64_t original = 0;
    std::uint64_t current = 0;
    bool visited = false;
    double kept_fraction = 1.0;
  };
  std::map<std::size_t, Entry> entries_;
  std::uint64_t total_ = 0;
  std::uint64_t removed_ = 0;
};

/// Per-feature min-max bounds over the prunable layers of the unpruned model.
/// FLOPs reduced/remaining are scaled by total prunable FLOPs instead.
class StateNormalizer {
 public:
  StateNormalizer() = default;
  explicit StateNormalizer(const ModelGraph& original);

  std::array<double, 11> normalize(const std::array<double, 11>& raw) const;

 private:
  std::array<double, 11> lo_{};
  std::array<double, 11> hi_{};
  double total_flops_ = 1.0;
};

/// Layer embedding fed to the agent:
/// (i, n, c, h, w, stride, k, FLOPs[i], F_rdc, F_rest, a_prev).
struct LayerState {
  static constexpr std::size_t kFeatures = 11;
  std::array<double, kFeatures> raw{};
  std::array<double, kFeatures> normalized{};

  double flops() const { return raw[7]; }
  double reduced() const { return raw[8]; }
  double rest() const { return raw[9]; }
  double previous_action() const { return raw[10]; }
};

LayerState build_state(const ModelGraph& graph, std::size_t layer_index, const FlopsLedger& ledger, double a_prev,
                       const StateNormalizer& normalizer);

/// Largest keep ratio for `layer_index` that still lets every later
/// prunable layer sit at `min_keep` while retained FLOPs stay within
/// `budget` (a fraction of the original prunable FLOPs). Retained FLOPs are
/// bounded per layer by original FLOPs times its kept output fraction.
double clamp_action_for_budget(double raw_action, std::size_t layer_index, const FlopsLedger& ledger, double budget,
                               double min_keep = kDefaultMinKeepRatio);

/// Throws budget-infeasible when even all-min_keep cannot meet the budget.
void check_budget_feasible(double budget, double min_keep = kDefaultMinKeepRatio);

/// max(1, round-half-up(keep_ratio * channels)), capped at channels.
std::size_t kept_channel_count(double keep_ratio, std::size_t channels);

/// Indices (ascending) of the `keep` output filters with the largest L2
/// norm; ties go to the lower index.
std::vector<std::size_t> select_channels(const Tensor& weights, std::size_t keep);

struct ActionResult {
  std::size_t kept_channels = 0;
  std::size_t original_channels = 0;
  std::vector<std::size_t> kept_indices;
};

/// Prunes output channels of conv layer `layer_index` and the matching input
/// slices of the next parametric layer, then re-chains shapes and updates
/// the ledger.
ActionResult apply_action(ModelGraph& graph, std::size_t layer_index, double keep_ratio, FlopsLedger& ledger,
                          double min_keep = kDefaultMinKeepRatio);

struct PruningStrategy {
  std::map<std::size_t, double> keep_ratios;            // prunable layer -> action
  std::map<std::size_t, std::size_t> kept_channels;     // realized
  std::map<std::size_t, std::size_t> original_channels;
  double realized_flops_ratio = 1.0;
  double budget = 1.0;
  double reward = 0.0;

  friend bool operator==(const PruningStrategy&, const PruningStrategy&) = default;
};

/// Applies every action of `strategy` in chain order to a copy of `graph`.
ModelGraph apply_strategy(const ModelGraph& graph, const PruningStrategy& strategy,
                          double min_keep = kDefaultMinKeepRatio);

/// Identity strategy (every prunable layer keeps all channels).
PruningStrategy full_strategy(const ModelGraph& graph);

struct AccuracyReport {
  std::map<std::size_t, double> top_k;
  std::size_t sample_count = 0;

  double at(std::size_t k) const { return top_k.at(k); }
};

/// Top-k accuracy; ties in the final outputs go to the lower class index.
AccuracyReport evaluate_accuracy(const ModelGraph& graph, const ValidationSet& valset,
                                 const std::vector<std::size_t>& k_list = {1, 3, 5});

/// Rank of `label` among `scores` under the same tie rule (0 = best).
std::size_t label_rank(std::span<const float> scores, std::size_t label);

/// Walks the prunable layers of one model copy in order: observe, clamp,
/// apply. Owns the working graph and its ledger.
class PruningSession {
 public:
  PruningSession(const ModelGraph& original, double budget, double min_keep = kDefaultMinKeepRatio);

  bool done() const { return step_ >= prunable_.size(); }
  std::size_t step() const { return step_; }
  std::size_t step_count() const { return prunable_.size(); }
  std::size_t current_layer() const { return prunable_.at(step_); }

  LayerState state() const;
  double clamp(double raw_action) const;
  /// Clamps, applies, and advances; returns the action actually taken.
  double act(double raw_action);

  const ModelGraph& graph() const { return graph_; }
  const FlopsLedger& ledger() const { return ledger_; }
  const PruningStrategy& strategy() const { return strategy_; }
  double previous_action() const { return a_prev_; }

 private:
  ModelGraph graph_;
  FlopsLedger ledger_;
  StateNormalizer normalizer_;
  std::vector<std::size_t> prunable_;
  PruningStrategy strategy_;
  std::size_t step_ = 0;
  double budget_;
  double min_keep_;
  double a_prev_ = 1.0;
};

std::string strategy_to_json(const PruningStrategy& strategy);
PruningStrategy strategy_from_json(const std::string& text);

}  // namespace splitwise
