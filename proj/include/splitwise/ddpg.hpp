#pragma once

#include <cstdint>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "splitwise/mlp.hpp"
#include "splitwise/model_io.hpp"
#include "splitwise/pruning.hpp"

namespace splitwise {

using Net = MlpNet<double>;
using StateVector = Eigen::VectorXd;

inline constexpr Eigen::Index kStateDim = static_cast<Eigen::Index>(LayerState::kFeatures);

enum class OptimizerKind { kAdam, kSgd };

struct AgentConfig {
  std::size_t buffer_capacity = 500;
  std::size_t episodes = 400;
  std::size_t batch_size = 64;
  std::size_t hidden = 300;
  double gamma = 1.0;
  double sigma0 = 0.5;
  std::size_t warmup_episodes = 100;
  double sigma_decay = 0.95;
  double baseline_decay = 0.95;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double tau = 0.01;
  double min_action = kDefaultMinKeepRatio;
  bool explore = true;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Transition {
  StateVector state;
  double action = 0.0;
  double reward = 0.0;
  StateVector next_state;
  bool terminal = false;
};

/// Fixed-capacity FIFO of transitions.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return items_[i]; }

  /// Uniform sampling with replacement.
  std::vector<Transition> sample(std::size_t count, std::mt19937_64& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

/// Actor mu (state -> action in (0,1)), critic Q (state ++ action -> value),
/// and their target copies.
struct AgentNets {
  Net actor;
  Net critic;
  Net actor_target;
  Net critic_target;
  AdamOptimizer<double> actor_opt;
  AdamOptimizer<double> critic_opt;
  OptimizerKind optimizer = OptimizerKind::kAdam;
};

AgentNets make_agent_nets(std::size_t hidden, std::mt19937_64& rng, OptimizerKind optimizer = OptimizerKind::kAdam);

double policy(const Net& actor, const StateVector& state);
double q_value(const Net& critic, const StateVector& state, double action);

/// Exploration sample from N(mu(s), sigma^2) truncated to [min_action, 1] by
/// rejection (100 attempts, then clamp). Without exploration, or with
/// sigma == 0, returns mu(s) clamped.
double select_action(const AgentNets& nets, const StateVector& state, double sigma, bool explore,
                     std::mt19937_64& rng, double min_action = kDefaultMinKeepRatio);

/// y = r - b, plus gamma * Q'(s', mu'(s')) for non-terminal transitions.
double compute_target(const Transition& t, const AgentNets& nets, double baseline, double gamma);

/// One step on the critic over the mean squared Bellman residual; returns the
/// loss before the step.
double critic_update(AgentNets& nets, const std::vector<Transition>& batch, double baseline, double gamma,
                     double lr);

/// One ascent step on mean Q(s, mu(s)); returns the objective before the step.
double actor_update(AgentNets& nets, const std::vector<Transition>& batch, double lr);

/// Soft-updates both target networks.
void soft_update(AgentNets& nets, double tau);

/// Exploration noise for a 0-based episode: constant for the warmup
/// episodes, then exponential decay.
double sigma_for_episode(const AgentConfig& config, std::size_t episode);

/// Sequential decision problem driven by the agent: one action per step,
/// a scalar reward at the end of each episode.
class SearchEnvironment {
 public:
  virtual ~SearchEnvironment() = default;
  virtual std::size_t step_count() const = 0;
  virtual void reset() = 0;
  virtual StateVector observe() const = 0;
  /// Applies (and possibly clamps) the action; returns the action taken.
  virtual double act(double action) = 0;
  virtual double terminal_reward() = 0;
};

struct EpisodeRecord {
  std::size_t episode = 0;
  double reward = 0.0;
  double sigma = 0.0;
  double baseline = 0.0;
  std::vector<double> actions;
};

struct SearchResult {
  std::vector<double> best_actions;
  double best_reward = 0.0;
  std::size_t best_episode = 0;
  std::vector<EpisodeRecord> trace;
  AgentNets nets;
};

SearchResult run_search(SearchEnvironment& env, const AgentConfig& config);

/// Greedy (noise-free) rollout of the current actor.
double evaluate_policy(SearchEnvironment& env, const AgentNets& nets, std::vector<double>* actions = nullptr);

/// Reward = top-1 accuracy of the pruned model on the validation set.
class PruningEnvironment : public SearchEnvironment {
 public:
  PruningEnvironment(const ModelGraph& graph, const ValidationSet& valset, double budget,
                     double min_keep = kDefaultMinKeepRatio);

  std::size_t step_count() const override;
  void reset() override;
  StateVector observe() const override;
  double act(double action) override;
  double terminal_reward() override;

  const PruningSession& session() const { return session_; }

 private:
  const ModelGraph& graph_;
  const ValidationSet& valset_;
  double budget_;
  double min_keep_;
  PruningSession session_;
};

/// Analytic environment: reward = 1 - sum_l w_l (a_l - a*_l)^2.
class QuadraticEnvironment : public SearchEnvironment {
 public:
  QuadraticEnvironment(std::vector<double> targets, std::vector<double> weights);

  std::size_t step_count() const override { return targets_.size(); }
  void reset() override;
  StateVector observe() const override;
  double act(double action) override;
  double terminal_reward() override;

  double reward_of(const std::vector<double>& actions) const;

 private:
  std::vector<double> targets_;
  std::vector<double> weights_;
  std::vector<double> actions_;
};

struct PruningSearchResult {
  PruningStrategy strategy;
  SearchResult search;
};

/// Runs the agent over the prunable layers of `graph` and returns the best
/// strategy found, with realized channel counts.
PruningSearchResult run_pruning_search(const ModelGraph& graph, const ValidationSet& valset,
                                       const AgentConfig& config, double budget);

std::string trace_to_csv(const std::vector<EpisodeRecord>& trace);
std::string trace_to_json(const SearchResult& result);

}  // namespace splitwise
