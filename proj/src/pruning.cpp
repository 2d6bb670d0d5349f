#include "splitwise/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "splitwise/error.hpp"

namespace splitwise {

// ---- FlopsLedger ------------------------------------------------------------

FlopsLedger::FlopsLedger(const ModelGraph& original) {
  for (auto index : original.prunable_layers()) {
    const auto f = flops_of_layer(original.layer(index).spec);
    entries_[index] = Entry{f, f, false, 1.0};
    total_ += f;
  }
}

std::vector<std::size_t> FlopsLedger::layers() const {
  std::vector<std::size_t> out;
  for (const auto& [index, e] : entries_) out.push_back(index);
  return out;
}

std::uint64_t FlopsLedger::unvisited() const {
  std::uint64_t sum = 0;
  for (const auto& [index, e] : entries_) {
    if (!e.visited) sum += e.current;
  }
  return sum;
}

std::uint64_t FlopsLedger::retained_visited() const {
  std::uint64_t sum = 0;
  for (const auto& [index, e] : entries_) {
    if (e.visited) sum += e.current;
  }
  return sum;
}

std::uint64_t FlopsLedger::rest_after(std::size_t layer_index) const {
  std::uint64_t sum = 0;
  for (auto it = entries_.upper_bound(layer_index); it != entries_.end(); ++it) sum += it->second.current;
  return sum;
}

double FlopsLedger::retained_fraction() const {
  if (total_ == 0) return 1.0;
  return static_cast<double>(unvisited() + retained_visited()) / static_cast<double>(total_);
}

void FlopsLedger::refresh(const ModelGraph& graph, std::size_t layer_index) {
  auto& e = entries_.at(layer_index);
  const auto now = flops_of_layer(graph.layer(layer_index).spec);
  if (now > e.current) fail(ErrorCode::kInvalidModel, "pruning increased FLOPs of a layer");
  removed_ += e.current - now;
  e.current = now;
}

void FlopsLedger::mark_visited(std::size_t layer_index, double kept_fraction) {
  auto& e = entries_.at(layer_index);
  e.visited = true;
  e.kept_fraction = kept_fraction;
}

// ---- State ------------------------------------------------------------------

namespace {

std::array<double, 11> raw_features(const ModelGraph& graph, std::size_t index, double flops, double reduced,
                                    double rest, double a_prev) {
  const auto& s = graph.layer(index).spec;
  return {static_cast<double>(index),
          static_cast<double>(s.n),
          static_cast<double>(s.c),
          static_cast<double>(s.input_shape[1]),
          static_cast<double>(s.input_shape[2]),
          static_cast<double>(s.stride),
          static_cast<double>(s.kh),
          flops,
          reduced,
          rest,
          a_prev};
}

}  // namespace

StateNormalizer::StateNormalizer(const ModelGraph& original) {
  const auto prunable = original.prunable_layers();
  lo_.fill(0.0);
  hi_.fill(1.0);
  if (prunable.empty()) return;
  FlopsLedger ledger(original);
  total_flops_ = std::max<double>(1.0, static_cast<double>(ledger.total()));
  bool first = true;
  for (auto index : prunable) {
    const auto f = raw_features(original, index, static_cast<double>(ledger.original_flops(index)), 0, 0, 1);
    for (std::size_t k = 0; k < 8; ++k) {
      lo_[k] = first ? f[k] : std::min(lo_[k], f[k]);
      hi_[k] = first ? f[k] : std::max(hi_[k], f[k]);
    }
    first = false;
  }
}

std::array<double, 11> StateNormalizer::normalize(const std::array<double, 11>& raw) const {
  std::array<double, 11> out{};
  for (std::size_t k = 0; k < 8; ++k) {
    const double span = hi_[k] - lo_[k];
    out[k] = span > 0 ? std::clamp((raw[k] - lo_[k]) / span, 0.0, 1.0) : 0.0;
  }
  out[8] = std::clamp(raw[8] / total_flops_, 0.0, 1.0);
  out[9] = std::clamp(raw[9] / total_flops_, 0.0, 1.0);
  out[10] = std::clamp(raw[10], 0.0, 1.0);
  return out;
}

LayerState build_state(const ModelGraph& graph, std::size_t layer_index, const FlopsLedger& ledger, double a_prev,
                       const StateNormalizer& normalizer) {
  if (!ledger.is_prunable(layer_index)) {
    fail(ErrorCode::kInvalidArgument, "layer " + std::to_string(layer_index) + " is not prunable");
  }
  LayerState state;
  state.raw = raw_features(graph, layer_index, static_cast<double>(ledger.current_flops(layer_index)),
                           static_cast<double>(ledger.removed()), static_cast<double>(ledger.rest_after(layer_index)),
                           a_prev);
  state.normalized = normalizer.normalize(state.raw);
  return state;
}

// ---- Budget -----------------------------------------------------------------

void check_budget_feasible(double budget, double min_keep) {
  if (!(budget > 0.0) || !(min_keep > 0.0) || min_keep > 1.0) {
    fail(ErrorCode::kInvalidArgument, "budget and minimum keep ratio must lie in (0,1]");
  }
  if (min_keep > budget) {
    fail(ErrorCode::kBudgetInfeasible, "target FLOPs ratio " + std::to_string(budget) +
                                           " is below the minimum keep ratio " + std::to_string(min_keep));
  }
}

double clamp_action_for_budget(double raw_action, std::size_t layer_index, const FlopsLedger& ledger, double budget,
                               double min_keep) {
  if (!ledger.is_prunable(layer_index)) {
    fail(ErrorCode::kInvalidArgument, "layer " + std::to_string(layer_index) + " is not prunable");
  }
  const double action = std::clamp(raw_action, min_keep, 1.0);
  if (budget >= 1.0) return action;

  double committed = 0.0;
  double future = 0.0;
  const double own = static_cast<double>(ledger.original_flops(layer_index));
  for (auto index : ledger.layers()) {
    const double f = static_cast<double>(ledger.original_flops(index));
    if (index < layer_index) {
      committed += f * ledger.kept_fraction(index);
    } else if (index > layer_index) {
      future += f * min_keep;
    }
  }
  if (own <= 0.0) return action;
  const double allowed = (budget * static_cast<double>(ledger.total()) - committed - future) / own;
  return std::clamp(std::min(action, allowed), min_keep, 1.0);
}

// ---- Channel selection and surgery -----------------------------------------

std::size_t kept_channel_count(double keep_ratio, std::size_t channels) {
  const auto k = static_cast<std::size_t>(std::floor(keep_ratio * static_cast<double>(channels) + 0.5));
  return std::clamp<std::size_t>(k, 1, channels);
}

std::vector<std::size_t> select_channels(const Tensor& weights, std::size_t keep) {
  const std::size_t n = weights.dim(0);
  const std::size_t per = weights.size() / n;
  std::vector<double> norms(n);
  for (std::size_t o = 0; o < n; ++o) {
    double sq = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double v = weights.data()[o * per + j];
      sq += v * v;
    }
    norms[o] = std::sqrt(sq);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
  order.resize(std::min(keep, n));
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

// Keeps the listed blocks along the outermost axis (each block `inner` wide).
Tensor keep_outer(const Tensor& t, const std::vector<std::size_t>& keep) {
  const std::size_t inner = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = keep.size();
  std::vector<float> values;
  values.reserve(keep.size() * inner);
  for (auto k : keep) values.insert(values.end(), t.data() + k * inner, t.data() + (k + 1) * inner);
  return Tensor(std::move(shape), std::move(values));
}

// Keeps column blocks of width `block` from an (rows, cols) row-major tensor,
// or channel slices from an (n, c, kh, kw) kernel when block == kh*kw.
Tensor keep_inner(const Tensor& t, const std::vector<std::size_t>& keep, std::size_t old_blocks) {
  const std::size_t rows = t.dim(0);
  const std::size_t row_len = t.size() / rows;
  const std::size_t block = row_len / old_blocks;
  Shape shape = t.shape();
  shape[1] = t.rank() == 2 ? keep.size() * block : keep.size();
  std::vector<float> values;
  values.reserve(rows * keep.size() * block);
  for (std::size_t r = 0; r < rows; ++r) {
    const float* row = t.data() + r * row_len;
    for (auto k : keep) values.insert(values.end(), row + k * block, row + (k + 1) * block);
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace

ActionResult apply_action(ModelGraph& graph, std::size_t layer_index, double keep_ratio, FlopsLedger& ledger,
                          double min_keep) {
  if (!ledger.is_prunable(layer_index)) {
    fail(ErrorCode::kInvalidArgument, "layer " + std::to_string(layer_index) + " is not prunable");
  }
  if (!(keep_ratio >= min_keep - 1e-12 && keep_ratio <= 1.0 + 1e-12)) {
    fail(ErrorCode::kInvalidArgument, "keep ratio " + std::to_string(keep_ratio) + " outside [min_keep, 1]");
  }
  Layer& layer = graph.mutable_layer(layer_index);
  const std::size_t n = layer.spec.n;
  ActionResult result;
  result.original_channels = n;
  result.kept_channels = kept_channel_count(keep_ratio, n);

  if (graph.has_weights()) {
    result.kept_indices = select_channels(layer.weights, result.kept_channels);
  } else {
    result.kept_indices.resize(result.kept_channels);
    std::iota(result.kept_indices.begin(), result.kept_indices.end(), 0);
  }

  if (result.kept_channels != n) {
    const auto& keep = result.kept_indices;
    layer.spec.n = keep.size();
    if (graph.has_weights()) {
      layer.weights = keep_outer(layer.weights, keep);
      Eigen::VectorXf bias(static_cast<Eigen::Index>(keep.size()));
      for (std::size_t i = 0; i < keep.size(); ++i) bias[static_cast<Eigen::Index>(i)] = layer.bias[static_cast<Eigen::Index>(keep[i])];
      layer.bias = std::move(bias);
    }
    if (auto next = graph.next_parametric(layer_index)) {
      Layer& consumer = graph.mutable_layer(*next);
      if (consumer.spec.kind == LayerKind::kConv2d) {
        consumer.spec.c = keep.size();
      } else {
        if (consumer.spec.c % n != 0) fail(ErrorCode::kInvalidModel, "linear input does not split into channels");
        consumer.spec.c = consumer.spec.c / n * keep.size();
      }
      if (graph.has_weights()) consumer.weights = keep_inner(consumer.weights, keep, n);
    }
    graph.rechain();
    ledger.refresh(graph, layer_index);
    if (auto next = graph.next_parametric(layer_index); next && ledger.is_prunable(*next)) {
      ledger.refresh(graph, *next);
    }
  }
  ledger.mark_visited(layer_index, static_cast<double>(result.kept_channels) / static_cast<double>(n));
  return result;
}

ModelGraph apply_strategy(const ModelGraph& graph, const PruningStrategy& strategy, double min_keep) {
  ModelGraph pruned = graph;
  FlopsLedger ledger(pruned);
  for (const auto& [index, ratio] : strategy.keep_ratios) apply_action(pruned, index, ratio, ledger, min_keep);
  return pruned;
}

PruningStrategy full_strategy(const ModelGraph& graph) {
  PruningStrategy s;
  for (auto index : graph.prunable_layers()) {
    s.keep_ratios[index] = 1.0;
    s.kept_channels[index] = graph.layer(index).spec.n;
    s.original_channels[index] = graph.layer(index).spec.n;
  }
  return s;
}

// ---- Accuracy ---------------------------------------------------------------

std::size_t label_rank(std::span<const float> scores, std::size_t label) {
  const float target = scores[label];
  std::size_t rank = 0;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > target || (scores[j] == target && j < label)) ++rank;
  }
  return rank;
}

AccuracyReport evaluate_accuracy(const ModelGraph& graph, const ValidationSet& valset,
                                 const std::vector<std::size_t>& k_list) {
  if (valset.input_shape != graph.input_shape()) {
    fail(ErrorCode::kInvalidArgument, "validation inputs " + to_string(valset.input_shape) +
                                          " do not match model input " + to_string(graph.input_shape()));
  }
  if (valset.samples.empty()) fail(ErrorCode::kInvalidArgument, "empty validation set");
  std::map<std::size_t, std::size_t> correct;
  for (auto k : k_list) correct[k] = 0;
  for (const auto& sample : valset.samples) {
    const Tensor out = graph.forward(sample.input);
    if (sample.label >= out.size()) fail(ErrorCode::kInvalidArgument, "label exceeds model output size");
    const auto rank = label_rank(out.values(), sample.label);
    for (auto& [k, count] : correct) {
      if (rank < k) ++count;
    }
  }
  AccuracyReport report;
  report.sample_count = valset.samples.size();
  for (const auto& [k, count] : correct) {
    report.top_k[k] = static_cast<double>(count) / static_cast<double>(report.sample_count);
  }
  return report;
}

// ---- Session ----------------------------------------------------------------

PruningSession::PruningSession(const ModelGraph& original, double budget, double min_keep)
    : graph_(original),
      ledger_(original),
      normalizer_(original),
      prunable_(original.prunable_layers()),
      budget_(budget),
      min_keep_(min_keep) {
  check_budget_feasible(budget, min_keep);
  strategy_.budget = budget;
}

LayerState PruningSession::state() const {
  return build_state(graph_, current_layer(), ledger_, a_prev_, normalizer_);
}

double PruningSession::clamp(double raw_action) const {
  return clamp_action_for_budget(raw_action, current_layer(), ledger_, budget_, min_keep_);
}

double PruningSession::act(double raw_action) {
  const auto index = current_layer();
  const double action = clamp(raw_action);
  const auto result = apply_action(graph_, index, action, ledger_, min_keep_);
  strategy_.keep_ratios[index] = action;
  strategy_.kept_channels[index] = result.kept_channels;
  strategy_.original_channels[index] = result.original_channels;
  strategy_.realized_flops_ratio = ledger_.retained_fraction();
  a_prev_ = action;
  ++step_;
  return action;
}

// ---- JSON -------------------------------------------------------------------

std::string strategy_to_json(const PruningStrategy& s) {
  nlohmann::ordered_json doc;
  auto keyed = [](const auto& m) {
    nlohmann::ordered_json obj = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m) obj[std::to_string(k)] = v;
    return obj;
  };
  doc["keep_ratios"] = keyed(s.keep_ratios);
  doc["kept_channels"] = keyed(s.kept_channels);
  doc["original_channels"] = keyed(s.original_channels);
  doc["realized_flops_ratio"] = s.realized_flops_ratio;
  doc["budget"] = s.budget;
  doc["reward"] = s.reward;
  return doc.dump(2);
}

PruningStrategy strategy_from_json(const std::string& text) {
  try {
    const auto doc = nlohmann::json::parse(text);
    PruningStrategy s;
    // A bare {layer: ratio} object is accepted as well as the full export.
    const auto& ratios = doc.contains("keep_ratios") ? doc.at("keep_ratios") : doc;
    for (const auto& [k, v] : ratios.items()) s.keep_ratios[std::stoul(k)] = v.get<double>();
    if (doc.contains("kept_channels")) {
      for (const auto& [k, v] : doc.at("kept_channels").items()) s.kept_channels[std::stoul(k)] = v.get<std::size_t>();
    }
    if (doc.contains("original_channels")) {
      for (const auto& [k, v] : doc.at("original_channels").items()) {
        s.original_channels[std::stoul(k)] = v.get<std::size_t>();
      }
    }
    s.realized_flops_ratio = doc.value("realized_flops_ratio", 1.0);
    s.budget = doc.value("budget", 1.0);
    s.reward = doc.value("reward", 0.0);
    return s;
  } catch (const std::exception& e) {
    fail(ErrorCode::kFormat, "bad strategy JSON: " + std::string(e.what()));
  }
}

}  // namespace splitwise
