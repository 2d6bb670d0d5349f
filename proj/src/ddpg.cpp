#include "splitwise/ddpg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "splitwise/error.hpp"

namespace splitwise {

using Matrix = Net::Matrix;

void AgentConfig::validate() const {
  if (buffer_capacity == 0 || episodes == 0 || batch_size == 0 || hidden == 0) {
    fail(ErrorCode::kInvalidArgument, "agent sizes must be positive");
  }
  if (gamma < 0 || sigma0 < 0 || sigma_decay <= 0 || sigma_decay > 1 || baseline_decay < 0 || baseline_decay > 1 ||
      actor_lr < 0 || critic_lr < 0 || tau < 0 || tau > 1) {
    fail(ErrorCode::kInvalidArgument, "agent hyperparameter out of range");
  }
  if (!(min_action > 0.0 && min_action <= 1.0)) fail(ErrorCode::kInvalidArgument, "min action must lie in (0,1]");
}

// ---- Replay buffer ----------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) fail(ErrorCode::kInvalidArgument, "replay buffer capacity must be positive");
}

void ReplayBuffer::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<Transition> ReplayBuffer::sample(std::size_t count, std::mt19937_64& rng) const {
  if (items_.empty()) fail(ErrorCode::kInvalidArgument, "sampling from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<Transition> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(items_[pick(rng)]);
  return out;
}

// ---- Networks ---------------------------------------------------------------

AgentNets make_agent_nets(std::size_t hidden, std::mt19937_64& rng, OptimizerKind optimizer) {
  const auto h = static_cast<Eigen::Index>(hidden);
  AgentNets nets;
  nets.actor = make_mlp<double>({kStateDim, h, h, 1}, OutputActivation::kSigmoid, rng);
  nets.critic = make_mlp<double>({kStateDim + 1, h, h, 1}, OutputActivation::kIdentity, rng);
  nets.actor_target = nets.actor;
  nets.critic_target = nets.critic;
  nets.actor_opt = AdamOptimizer<double>(nets.actor);
  nets.critic_opt = AdamOptimizer<double>(nets.critic);
  nets.optimizer = optimizer;
  return nets;
}

namespace {

Matrix critic_input(const Matrix& states, const Matrix& actions) {
  Matrix x(states.rows() + 1, states.cols());
  x.topRows(states.rows()) = states;
  x.bottomRows(1) = actions;
  return x;
}

Matrix stack_states(const std::vector<Transition>& batch, bool next) {
  Matrix s(kStateDim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& v = next ? batch[i].next_state : batch[i].state;
    if (v.size() != kStateDim) fail(ErrorCode::kInvalidShape, "transition state has wrong dimension");
    s.col(static_cast<Eigen::Index>(i)) = v;
  }
  return s;
}

void apply_step(Net& net, AdamOptimizer<double>& opt, OptimizerKind kind, const MlpGradients<double>& grads,
                double lr) {
  if (kind == OptimizerKind::kAdam) {
    opt.step(net, grads, lr);
  } else {
    sgd_step(net, grads, lr);
  }
}

Eigen::VectorXd compute_targets(const std::vector<Transition>& batch, const AgentNets& nets, double baseline,
                                double gamma) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(batch.size()));
  const Matrix next = stack_states(batch, true);
  const Matrix next_actions = mlp_forward(nets.actor_target, next).output;
  const Matrix next_q = mlp_forward(nets.critic_target, critic_input(next, next_actions)).output;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto col = static_cast<Eigen::Index>(i);
    y[col] = batch[i].reward - baseline;
    if (!batch[i].terminal) y[col] += gamma * next_q(0, col);
  }
  return y;
}

}  // namespace

double policy(const Net& actor, const StateVector& state) { return mlp_forward(actor, state).output(0, 0); }

double q_value(const Net& critic, const StateVector& state, double action) {
  StateVector x(state.size() + 1);
  x << state, action;
  return mlp_forward(critic, x).output(0, 0);
}

double select_action(const AgentNets& nets, const StateVector& state, double sigma, bool explore,
                     std::mt19937_64& rng, double min_action) {
  if (sigma < 0) fail(ErrorCode::kInvalidArgument, "exploration sigma must be non-negative");
  const double mu = policy(nets.actor, state);
  if (!explore || sigma == 0.0) return std::clamp(mu, min_action, 1.0);
  std::normal_distribution<double> noise(mu, sigma);
  double draw = mu;
  for (int attempt = 0; attempt < 100; ++attempt) {
    draw = noise(rng);
    if (draw >= min_action && draw <= 1.0) return draw;
  }
  return std::clamp(draw, min_action, 1.0);
}

double compute_target(const Transition& t, const AgentNets& nets, double baseline, double gamma) {
  double y = t.reward - baseline;
  if (!t.terminal) {
    const double next_action = policy(nets.actor_target, t.next_state);
    y += gamma * q_value(nets.critic_target, t.next_state, next_action);
  }
  return y;
}

double critic_update(AgentNets& nets, const std::vector<Transition>& batch, double baseline, double gamma,
                     double lr) {
  if (batch.empty()) fail(ErrorCode::kInvalidArgument, "critic update needs a non-empty batch");
  const auto n = static_cast<double>(batch.size());
  const Eigen::VectorXd y = compute_targets(batch, nets, baseline, gamma);
  const Matrix states = stack_states(batch, false);
  Matrix actions(1, states.cols());
  for (std::size_t i = 0; i < batch.size(); ++i) actions(0, static_cast<Eigen::Index>(i)) = batch[i].action;
  const auto cache = mlp_forward(nets.critic, critic_input(states, actions));
  const Matrix residual = cache.output - y.transpose();
  const double loss = residual.squaredNorm() / n;
  const auto grads = mlp_backward(nets.critic, cache, (2.0 / n) * residual);
  apply_step(nets.critic, nets.critic_opt, nets.optimizer, grads, lr);
  return loss;
}

double actor_update(AgentNets& nets, const std::vector<Transition>& batch, double lr) {
  if (batch.empty()) fail(ErrorCode::kInvalidArgument, "actor update needs a non-empty batch");
  const auto n = static_cast<double>(batch.size());
  const Matrix states = stack_states(batch, false);
  const auto actor_cache = mlp_forward(nets.actor, states);
  const auto critic_cache = mlp_forward(nets.critic, critic_input(states, actor_cache.output));
  const double objective = critic_cache.output.sum() / n;
  const Matrix d_q = Matrix::Constant(1, states.cols(), 1.0 / n);
  const auto critic_grads = mlp_backward(nets.critic, critic_cache, d_q);
  // Ascent on Q: descend on -dQ/da.
  const Matrix d_action = -critic_grads.input.bottomRows(1);
  const auto actor_grads = mlp_backward(nets.actor, actor_cache, d_action);
  apply_step(nets.actor, nets.actor_opt, nets.optimizer, actor_grads, lr);
  return objective;
}

void soft_update(AgentNets& nets, double tau) {
  soft_update(nets.actor_target, nets.actor, tau);
  soft_update(nets.critic_target, nets.critic, tau);
}

double sigma_for_episode(const AgentConfig& config, std::size_t episode) {
  if (episode < config.warmup_episodes) return config.sigma0;
  return config.sigma0 * std::pow(config.sigma_decay, static_cast<double>(episode - config.warmup_episodes + 1));
}

// ---- Search loop ------------------------------------------------------------

SearchResult run_search(SearchEnvironment& env, const AgentConfig& config) {
  config.validate();
  const std::size_t steps = env.step_count();
  if (steps == 0) fail(ErrorCode::kInvalidArgument, "environment has no decision steps");

  std::mt19937_64 rng(config.seed);
  SearchResult result;
  result.nets = make_agent_nets(config.hidden, rng, config.optimizer);
  auto& nets = result.nets;
  ReplayBuffer buffer(config.buffer_capacity);
  double baseline = 0.0;
  bool have_baseline = false;

  for (std::size_t episode = 0; episode < config.episodes; ++episode) {
    const double sigma = sigma_for_episode(config, episode);
    env.reset();
    EpisodeRecord record;
    record.episode = episode;
    record.sigma = sigma;
    double reward = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      Transition tr;
      tr.state = env.observe();
      tr.action = env.act(select_action(nets, tr.state, sigma, config.explore, rng, config.min_action));
      record.actions.push_back(tr.action);
      if (t + 1 < steps) {
        tr.next_state = env.observe();
      } else {
        reward = env.terminal_reward();
        tr.reward = reward;
        tr.next_state = StateVector::Zero(kStateDim);
        tr.terminal = true;
      }
      buffer.push(std::move(tr));
      if (buffer.size() >= config.batch_size) {
        const auto batch = buffer.sample(config.batch_size, rng);
        critic_update(nets, batch, baseline, config.gamma, config.critic_lr);
        actor_update(nets, batch, config.actor_lr);
        soft_update(nets, config.tau);
      }
    }
    if (episode == 0 || reward > result.best_reward) {
      result.best_reward = reward;
      result.best_actions = record.actions;
      result.best_episode = episode;
    }
    baseline = have_baseline ? config.baseline_decay * baseline + (1.0 - config.baseline_decay) * reward : reward;
    have_baseline = true;
    record.reward = reward;
    record.baseline = baseline;
    result.trace.push_back(std::move(record));
  }
  return result;
}

double evaluate_policy(SearchEnvironment& env, const AgentNets& nets, std::vector<double>* actions) {
  env.reset();
  std::mt19937_64 unused(0);
  for (std::size_t t = 0; t < env.step_count(); ++t) {
    const double a = env.act(select_action(nets, env.observe(), 0.0, false, unused));
    if (actions) actions->push_back(a);
  }
  return env.terminal_reward();
}

// ---- Environments -----------------------------------------------------------

PruningEnvironment::PruningEnvironment(const ModelGraph& graph, const ValidationSet& valset, double budget,
                                       double min_keep)
    : graph_(graph), valset_(valset), budget_(budget), min_keep_(min_keep), session_(graph, budget, min_keep) {
  if (graph.prunable_layers().empty()) fail(ErrorCode::kInvalidArgument, "model has no prunable layers");
  if (valset.input_shape != graph.input_shape()) {
    fail(ErrorCode::kInvalidArgument, "validation set does not match the model input");
  }
}

std::size_t PruningEnvironment::step_count() const { return session_.step_count(); }

void PruningEnvironment::reset() { session_ = PruningSession(graph_, budget_, min_keep_); }

StateVector PruningEnvironment::observe() const {
  const auto state = session_.state();
  return Eigen::Map<const StateVector>(state.normalized.data(), kStateDim);
}

double PruningEnvironment::act(double action) { return session_.act(action); }

double PruningEnvironment::terminal_reward() { return evaluate_accuracy(session_.graph(), valset_, {1}).at(1); }

QuadraticEnvironment::QuadraticEnvironment(std::vector<double> targets, std::vector<double> weights)
    : targets_(std::move(targets)), weights_(std::move(weights)) {
  if (targets_.empty() || targets_.size() != weights_.size()) {
    fail(ErrorCode::kInvalidArgument, "targets and weights must be non-empty and equally long");
  }
}

void QuadraticEnvironment::reset() { actions_.clear(); }

StateVector QuadraticEnvironment::observe() const {
  StateVector s = StateVector::Zero(kStateDim);
  const std::size_t t = actions_.size();
  s[0] = targets_.size() > 1 ? static_cast<double>(t) / static_cast<double>(targets_.size() - 1) : 0.0;
  s[1] = actions_.empty() ? 1.0 : actions_.back();
  if (t + 2 < static_cast<std::size_t>(kStateDim)) s[static_cast<Eigen::Index>(t + 2)] = 1.0;
  return s;
}

double QuadraticEnvironment::act(double action) {
  if (actions_.size() >= targets_.size()) fail(ErrorCode::kInvalidArgument, "episode already complete");
  actions_.push_back(action);
  return action;
}

double QuadraticEnvironment::terminal_reward() { return reward_of(actions_); }

double QuadraticEnvironment::reward_of(const std::vector<double>& actions) const {
  if (actions.size() != targets_.size()) fail(ErrorCode::kInvalidArgument, "need one action per step");
  double r = 1.0;
  for (std::size_t l = 0; l < targets_.size(); ++l) r -= weights_[l] * (actions[l] - targets_[l]) * (actions[l] - targets_[l]);
  return r;
}

// ---- Pruning search ---------------------------------------------------------

PruningSearchResult run_pruning_search(const ModelGraph& graph, const ValidationSet& valset,
                                       const AgentConfig& config, double budget) {
  check_budget_feasible(budget, config.min_action);
  PruningEnvironment env(graph, valset, budget, config.min_action);
  PruningSearchResult out;
  out.search = run_search(env, config);
  PruningSession replay(graph, budget, config.min_action);
  for (double a : out.search.best_actions) replay.act(a);
  out.strategy = replay.strategy();
  out.strategy.reward = out.search.best_reward;
  return out;
}

std::string trace_to_csv(const std::vector<EpisodeRecord>& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "episode,reward,sigma,baseline\n";
  for (const auto& r : trace) out << r.episode << ',' << r.reward << ',' << r.sigma << ',' << r.baseline << '\n';
  return out.str();
}

std::string trace_to_json(const SearchResult& result) {
  nlohmann::ordered_json doc;
  doc["best_reward"] = result.best_reward;
  doc["best_episode"] = result.best_episode;
  doc["best_actions"] = result.best_actions;
  auto& episodes = doc["episodes"] = nlohmann::ordered_json::array();
  for (const auto& r : result.trace) {
    episodes.push_back({{"episode", r.episode}, {"reward", r.reward}, {"sigma", r.sigma},
                        {"baseline", r.baseline}, {"actions", r.actions}});
  }
  return doc.dump(2);
}

}  // namespace splitwise
