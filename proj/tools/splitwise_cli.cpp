// splitwise: command-line front end for pruning, profiling, split planning
// and collaborative inference.
//
// Exit codes: 0 ok, 1 other failure, 2 usage, 3 format, 4 transport.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <pthread.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "splitwise/control_api.hpp"
#include "splitwise/ddpg.hpp"
#include "splitwise/error.hpp"
#include "splitwise/latency.hpp"
#include "splitwise/model_io.hpp"
#include "splitwise/planner.hpp"
#include "splitwise/pruning.hpp"
#include "splitwise/runtime.hpp"
#include "splitwise/sha256.hpp"

namespace sw = splitwise;

namespace {

int exit_code_for(sw::ErrorCode code) {
  switch (code) {
    case sw::ErrorCode::kInvalidArgument:
    case sw::ErrorCode::kBudgetInfeasible: return 2;
    case sw::ErrorCode::kFormat:
    case sw::ErrorCode::kInvalidModel: return 3;
    case sw::ErrorCode::kTransport:
    case sw::ErrorCode::kHandshake:
    case sw::ErrorCode::kProtocol:
    case sw::ErrorCode::kUnsupportedVersion:
    case sw::ErrorCode::kFraming: return 4;
    default: return 1;
  }
}

sw::Tensor input_or_random(const sw::ModelGraph& graph, const std::string& path) {
  if (!path.empty()) return sw::load_input_bin(path, graph.input_shape());
  std::mt19937_64 rng(1);
  std::normal_distribution<float> dist;
  sw::Tensor t(graph.input_shape());
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

std::string hash_of_file(const std::string& path) {
  const auto bytes = sw::read_file(path);
  return sw::hex(sw::sha256(bytes));
}

std::string breakdown_csv_row(std::size_t run, const sw::LatencyBreakdown& b) {
  std::ostringstream out;
  out << run << ',' << b.split_point << ',' << b.t_device_ms << ',' << b.t_tx_ms << ',' << b.t_server_ms << ','
      << b.total_ms << '\n';
  return out.str();
}

sw::LinkShaper shaper_for(double mbps, double overhead_ms) {
  if (mbps <= 0.0) return {};
  return sw::LinkShaper(sw::LinkModel{mbps, overhead_ms});
}

std::size_t argmax(const sw::Tensor& t) {
  const auto v = t.values();
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// -- profile ------------------------------------------------------------------

struct ProfileArgs {
  std::string model, out, input;
  std::size_t repeats = 10;
};

int run_profile(const ProfileArgs& a) {
  const auto graph = sw::load_any_model(a.model);
  const auto input = input_or_random(graph, a.input);
  auto profile = sw::profile_layers(graph, input, a.repeats);
  profile.model_hash = sw::hex(sw::model_hash(graph));
  sw::write_text(a.out, sw::profile_to_json(profile) + "\n");
  double total = 0.0;
  for (const auto& l : profile.layers) total += l.compute_ms;
  std::cout << nlohmann::json{{"out", a.out}, {"layers", profile.layers.size()}, {"total_ms", total}}.dump() << '\n';
  return 0;
}

// -- prune --------------------------------------------------------------------

struct PruneArgs {
  std::string model, valset, out, strategy, trace;
  double ratio = 0.5;
  sw::AgentConfig agent;
};

int run_prune(const PruneArgs& a) {
  const auto graph = sw::load_model(a.model);
  const auto valset = sw::load_valset(a.valset);
  const auto result = sw::run_pruning_search(graph, valset, a.agent, a.ratio);
  const auto pruned = sw::apply_strategy(graph, result.strategy, a.agent.min_action);
  sw::save_model(pruned, a.out);
  if (!a.strategy.empty()) sw::write_text(a.strategy, sw::strategy_to_json(result.strategy) + "\n");
  if (!a.trace.empty()) sw::write_text(a.trace, sw::trace_to_csv(result.search.trace));

  const auto before = sw::evaluate_accuracy(graph, valset);
  const auto after = sw::evaluate_accuracy(pruned, valset);
  nlohmann::json summary = {{"out", a.out},
                            {"best_episode", result.search.best_episode},
                            {"reward", result.strategy.reward},
                            {"flops_ratio", result.strategy.realized_flops_ratio},
                            {"top1_before", before.at(1)},
                            {"top1_after", after.at(1)}};
  std::cout << summary.dump() << '\n';
  return 0;
}

// -- plan ---------------------------------------------------------------------

struct PlanArgs {
  std::string model, device_profile, server_profile, out, connect, input, strategy;
  double bandwidth = 50.0, overhead = 0.0;
  bool measured = false, include_endpoints = false;
  std::size_t runs = 10;
};

int run_plan(const PlanArgs& a) {
  const sw::LinkModel link{a.bandwidth, a.overhead};
  link.validate();
  sw::SplitPlan plan;
  std::optional<sw::ModelGraph> graph;
  if (!a.model.empty()) graph = sw::load_any_model(a.model);

  if (a.measured) {
    if (a.connect.empty()) sw::fail(sw::ErrorCode::kInvalidArgument, "--measured needs --connect");
    if (!graph) sw::fail(sw::ErrorCode::kInvalidArgument, "--measured needs --model");
    const auto input = input_or_random(*graph, a.input);
    const auto candidates = sw::candidate_range(graph->layer_count(), a.include_endpoints);
    const auto totals = sw::measure_split_totals(sw::Endpoint::parse(a.connect), *graph, candidates, input, a.runs);
    plan = sw::greedy_split(totals, candidates);
  } else {
    if (a.device_profile.empty()) sw::fail(sw::ErrorCode::kInvalidArgument, "--device-profile is required");
    const auto device = sw::load_profile(a.device_profile);
    if (device.has_split_totals()) {
      std::vector<std::size_t> candidates;
      for (const auto& [c, t] : device.split_totals_ms) {
        if (c != 0 || a.include_endpoints) candidates.push_back(c);
      }
      plan = sw::greedy_split(device, candidates);
    } else {
      if (a.server_profile.empty()) sw::fail(sw::ErrorCode::kInvalidArgument, "--server-profile is required");
      const auto server = sw::load_profile(a.server_profile);
      if (graph && device.layer_count() != graph->layer_count()) {
        sw::fail(sw::ErrorCode::kInvalidArgument, "profile does not cover the model's layers");
      }
      plan = sw::greedy_split(device, server, link,
                              sw::candidate_range(device.layer_count(), a.include_endpoints));
    }
  }
  plan.link = link;
  if (graph) plan.model_hash = sw::hex(sw::model_hash(*graph));
  if (!a.strategy.empty()) plan.strategy_ref = hash_of_file(a.strategy);
  sw::write_text(a.out, sw::plan_to_json(plan) + "\n");
  std::cout << nlohmann::json{{"out", a.out}, {"split_point", plan.split_point}, {"total_ms", plan.predicted.total_ms}}
                   .dump()
            << '\n';
  return 0;
}

// -- serve --------------------------------------------------------------------

struct ServeArgs {
  std::string listen = "127.0.0.1:7878", model, plan, http, device_profile, server_profile, input;
  bool profiling = false;
  std::size_t repeats = 5;
};

int run_serve(const ServeArgs& a) {
  // Block termination signals before any thread starts so sigwait sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto graph = sw::load_model(a.model);
  std::optional<sw::SplitPlan> plan;
  if (!a.plan.empty()) plan = sw::load_plan(a.plan);

  std::optional<sw::LayerProfile> device, server_profile;
  if (!a.device_profile.empty()) device = sw::load_profile(a.device_profile);
  if (!a.server_profile.empty()) server_profile = sw::load_profile(a.server_profile);
  if (!a.http.empty() && !device && !server_profile) {
    // Nothing supplied: both halves are assumed to look like this host.
    auto local = sw::profile_layers(graph, input_or_random(graph, a.input), a.repeats);
    local.model_hash = sw::hex(sw::model_hash(graph));
    device = local;
    server_profile = local;
  }

  sw::ServerConfig config;
  config.listen = sw::Endpoint::parse(a.listen);
  config.profiling_mode = a.profiling;
  sw::CloudServer server(std::move(graph), plan, config);
  server.start();

  std::unique_ptr<sw::ControlApi> api;
  if (!a.http.empty()) {
    api = std::make_unique<sw::ControlApi>(server, device, server_profile, a.plan);
    api->start(sw::Endpoint::parse(a.http));
  }

  nlohmann::json ready = {{"listen", config.listen.host + ":" + std::to_string(server.port())},
                          {"model_hash", server.model_hash_hex()},
                          {"split_point", plan ? nlohmann::json(plan->split_point) : nlohmann::json(nullptr)},
                          {"profiling", a.profiling}};
  if (api) ready["http"] = sw::Endpoint::parse(a.http).host + ":" + std::to_string(api->port());
  std::cout << ready.dump() << std::endl;

  int sig = 0;
  sigwait(&signals, &sig);
  if (api) api->stop();
  server.stop();
  return 0;
}

// -- infer --------------------------------------------------------------------

struct InferArgs {
  std::string connect, model, plan, input, mode = "co", out;
  double link_mbps = 0.0, link_overhead = 0.0;
};

int run_infer(const InferArgs& a) {
  const auto graph = sw::load_model(a.model);
  const auto input = sw::load_input_bin(a.input, graph.input_shape());
  const auto mode = sw::infer_mode_from_string(a.mode);
  sw::InferenceOutcome outcome;
  if (mode == sw::InferMode::kDevice) {
    outcome = sw::run_device_only(graph, input);
  } else {
    if (a.connect.empty()) sw::fail(sw::ErrorCode::kInvalidArgument, "--connect is required for mode " + a.mode);
    sw::SplitPlan plan;
    if (mode == sw::InferMode::kCo) {
      if (a.plan.empty()) sw::fail(sw::ErrorCode::kInvalidArgument, "--plan is required for mode co");
      plan = sw::load_plan(a.plan);
    }
    outcome = sw::run_edge_inference(sw::Endpoint::parse(a.connect), graph, plan, input, mode,
                                     shaper_for(a.link_mbps, a.link_overhead));
  }
  if (!a.out.empty()) sw::save_input_bin(outcome.logits, a.out);
  const auto& m = outcome.measured;
  nlohmann::json doc = {{"mode", a.mode},
                        {"split_point", m.split_point},
                        {"argmax", argmax(outcome.logits)},
                        {"output", std::vector<float>(outcome.logits.values().begin(), outcome.logits.values().end())},
                        {"t_device_ms", m.t_device_ms},
                        {"t_tx_ms", m.t_tx_ms},
                        {"t_server_ms", m.t_server_ms},
                        {"total_ms", m.total_ms}};
  std::cout << doc.dump() << '\n';
  return 0;
}

// -- bench --------------------------------------------------------------------

struct BenchArgs {
  std::string connect, model, plan, input, csv;
  std::size_t runs = 10;
  double link_mbps = 0.0, link_overhead = 0.0;
};

int run_bench(const BenchArgs& a) {
  const auto graph = sw::load_model(a.model);
  const auto input = sw::load_input_bin(a.input, graph.input_shape());
  const auto plan = sw::load_plan(a.plan);
  const auto endpoint = sw::Endpoint::parse(a.connect);
  const auto shaper = shaper_for(a.link_mbps, a.link_overhead);
  if (a.runs == 0) sw::fail(sw::ErrorCode::kInvalidArgument, "--runs must be positive");

  auto over_network = [&](std::size_t split) {
    sw::EdgeSession session(endpoint, graph, split, shaper);
    session.infer(input);  // warmup
    return sw::measure_end_to_end(session, input, a.runs);
  };
  const auto co = over_network(plan.split_point);
  const auto device = [&] {
    std::vector<sw::LatencyBreakdown> rows;
    sw::run_device_only(graph, input);
    for (std::size_t r = 0; r < a.runs; ++r) rows.push_back(sw::run_device_only(graph, input).measured);
    return rows;
  }();
  const auto server = over_network(0);

  std::string csv = "run,c,t_device_ms,t_tx_ms,t_server_ms,total_ms\n";
  for (const auto* rows : {&co, &device, &server}) {
    for (std::size_t r = 0; r < rows->size(); ++r) csv += breakdown_csv_row(r, (*rows)[r]);
  }
  if (!a.csv.empty()) sw::write_text(a.csv, csv);

  auto median_total = [](const std::vector<sw::LatencyBreakdown>& rows) {
    std::vector<double> t;
    for (const auto& b : rows) t.push_back(b.total_ms);
    return sw::median(t);
  };
  const auto report =
      sw::make_baseline_report(median_total(device), median_total(server), median_total(co), plan.split_point);
  std::cout << nlohmann::json::parse(sw::baseline_report_to_json(report)).dump() << '\n';
  return 0;
}

// -- report -------------------------------------------------------------------

struct ReportArgs {
  std::string plan, device_profile, server_profile, csv;
};

int run_report(const ReportArgs& a) {
  const auto plan = sw::load_plan(a.plan);
  const auto device = sw::load_profile(a.device_profile);
  const auto server = sw::load_profile(a.server_profile);
  if (device.has_split_totals() || server.has_split_totals()) {
    sw::fail(sw::ErrorCode::kInvalidArgument, "report needs per-layer profiles");
  }
  std::ostringstream csv;
  csv << "layer,name,kind,device_ms,server_ms,output_bytes,t_tx_ms,split_total_ms,chosen\n";
  for (const auto& l : device.layers) {
    const auto b = sw::predict_latency(device, server, plan.link, l.layer);
    csv << l.layer << ',' << l.name << ',' << sw::to_string(l.kind) << ',' << l.compute_ms << ','
        << server.layers[l.layer - 1].compute_ms << ',' << l.output_bytes << ',' << b.t_tx_ms << ',' << b.total_ms
        << ',' << (l.layer == plan.split_point ? 1 : 0) << '\n';
  }
  if (!a.csv.empty()) sw::write_text(a.csv, csv.str());
  const auto report = sw::compare_baselines(device, server, plan.link, plan);
  std::cout << nlohmann::json::parse(sw::baseline_report_to_json(report)).dump() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Edge-cloud split inference: channel pruning, latency profiling, split planning, serving"};
  app.require_subcommand(1);

  ProfileArgs profile;
  auto* p = app.add_subcommand("profile", "Time every layer of a model on this host");
  p->add_option("--model", profile.model, "Model (.swmf, or .json descriptor)")->required();
  p->add_option("--out", profile.out, "Profile JSON to write")->required();
  p->add_option("--repeats", profile.repeats, "Timed passes per layer (median)")->check(CLI::Range(3, 100000));
  p->add_option("--input", profile.input, "Raw input tensor (.bin); random when omitted");

  PruneArgs prune;
  auto* r = app.add_subcommand("prune", "Search per-layer keep ratios with the DDPG agent and prune");
  r->add_option("--model", prune.model, "Model (.swmf)")->required();
  r->add_option("--valset", prune.valset, "Validation set (.swds)")->required();
  r->add_option("--target-flops-ratio", prune.ratio, "Retained-FLOPs budget over conv layers")->required();
  r->add_option("--episodes", prune.agent.episodes, "Search episodes");
  r->add_option("--seed", prune.agent.seed, "RNG seed");
  r->add_option("--out", prune.out, "Pruned model to write")->required();
  r->add_option("--strategy", prune.strategy, "Strategy JSON to write");
  r->add_option("--trace", prune.trace, "Per-episode reward CSV to write");
  r->add_option("--warmup", prune.agent.warmup_episodes, "Episodes with constant exploration noise");
  r->add_option("--min-keep", prune.agent.min_action, "Smallest keep ratio the agent may choose");

  PlanArgs plan;
  auto* n = app.add_subcommand("plan", "Choose the split point");
  n->add_option("--model", plan.model, "Model (.swmf or .json); sets the plan's model hash");
  n->add_option("--device-profile", plan.device_profile, "Device profile JSON (or split-totals JSON)");
  n->add_option("--server-profile", plan.server_profile, "Server profile JSON");
  n->add_option("--bandwidth-mbps", plan.bandwidth, "Link bandwidth, 1 Mbps = 10^6 bit/s");
  n->add_option("--overhead-ms", plan.overhead, "Fixed per-transfer overhead");
  n->add_option("--out", plan.out, "Plan JSON to write")->required();
  n->add_flag("--measured", plan.measured, "Measure every candidate live instead of predicting");
  n->add_option("--connect", plan.connect, "Cloud daemon for --measured (host:port)");
  n->add_option("--runs", plan.runs, "Runs per candidate for --measured")->check(CLI::PositiveNumber);
  n->add_option("--input", plan.input, "Input tensor for --measured; random when omitted");
  n->add_flag("--include-endpoints", plan.include_endpoints, "Also consider c = 0 and c = N");
  n->add_option("--strategy", plan.strategy, "Strategy JSON the model was pruned with (recorded by hash)");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Run the cloud daemon");
  s->add_option("--listen", serve.listen, "TCP address for edge sessions (host:port, port 0 = any)");
  s->add_option("--model", serve.model, "Model (.swmf)")->required();
  s->add_option("--plan", serve.plan, "Plan JSON; also where POST /api/plan persists");
  s->add_option("--http", serve.http, "Control API address (host:port)");
  s->add_option("--device-profile", serve.device_profile, "Device profile for the control API");
  s->add_option("--server-profile", serve.server_profile, "Server profile for the control API");
  s->add_flag("--profiling", serve.profiling, "Accept any split and serialize requests (measured planning)");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Classify one input");
  i->add_option("--connect", infer.connect, "Cloud daemon (host:port)");
  i->add_option("--model", infer.model, "Model (.swmf)")->required();
  i->add_option("--plan", infer.plan, "Plan JSON (mode co)");
  i->add_option("--input", infer.input, "Raw input tensor (.bin)")->required();
  i->add_option("--mode", infer.mode, "co, device or server")->check(CLI::IsMember({"co", "device", "server"}));
  i->add_option("--out", infer.out, "Write the output vector as raw little-endian floats");
  i->add_option("--link-mbps", infer.link_mbps, "Throttle the uplink to this bandwidth (0 = off)");
  i->add_option("--link-overhead-ms", infer.link_overhead, "Extra per-transfer delay when throttling");

  BenchArgs bench;
  auto* b = app.add_subcommand("bench", "Compare co-inference with device-only and server-only");
  b->add_option("--connect", bench.connect, "Cloud daemon (host:port)")->required();
  b->add_option("--model", bench.model, "Model (.swmf)")->required();
  b->add_option("--plan", bench.plan, "Plan JSON")->required();
  b->add_option("--input", bench.input, "Raw input tensor (.bin)")->required();
  b->add_option("--runs", bench.runs, "Runs per mode")->check(CLI::PositiveNumber);
  b->add_option("--csv", bench.csv, "CSV to write: co rows, then device rows, then server rows");
  b->add_option("--link-mbps", bench.link_mbps, "Throttle the uplink to this bandwidth (0 = off)");
  b->add_option("--link-overhead-ms", bench.link_overhead, "Extra per-transfer delay when throttling");

  ReportArgs report;
  auto* t = app.add_subcommand("report", "Per-layer latency table and baseline comparison");
  t->add_option("--plan", report.plan, "Plan JSON")->required();
  t->add_option("--device-profile", report.device_profile, "Device profile JSON")->required();
  t->add_option("--server-profile", report.server_profile, "Server profile JSON")->required();
  t->add_option("--csv", report.csv, "Layer table CSV to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*p) return run_profile(profile);
    if (*r) return run_prune(prune);
    if (*n) return run_plan(plan);
    if (*s) return run_serve(serve);
    if (*i) return run_infer(infer);
    if (*b) return run_bench(bench);
    if (*t) return run_report(report);
  } catch (const sw::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
