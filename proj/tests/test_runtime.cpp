#include <doctest.h>

#include <json.hpp>

#include "splitwise/control_api.hpp"
#include "splitwise/error.hpp"
#include "splitwise/runtime.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> (pulled in here) defines a _res macro.
#include <httplib.h>

using namespace splitwise;
using json = nlohmann::json;

namespace {

SplitPlan plan_at(const ModelGraph& g, std::size_t c) {
  SplitPlan p;
  p.split_point = c;
  p.model_hash = hex(model_hash(g));
  return p;
}

Endpoint local(std::uint16_t port) { return Endpoint{"127.0.0.1", port}; }

wire::HelloAck raw_hello(std::uint16_t port, const std::array<std::uint8_t, 32>& hash, std::uint16_t split) {
  auto socket = Socket::connect(local(port));
  FrameChannel ch(socket);
  ch.send(wire::Hello{hash, split});
  return std::get<wire::HelloAck>(ch.receive());
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

}  // namespace

TEST_SUITE("runtime") {
  TEST_CASE("endpoint parsing") {
    const auto e = Endpoint::parse("10.0.0.2:7070");
    CHECK(e.host == "10.0.0.2");
    CHECK(e.port == 7070);
    CHECK(Endpoint::parse(":80").host == "0.0.0.0");
    CHECK_THROWS_AS(Endpoint::parse("nohost"), Error);
    CHECK_THROWS_AS(Endpoint::parse("h:99999"), Error);
  }

  TEST_CASE("handshake statuses") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 6));
    server.start();
    const auto hash = model_hash(g);
    CHECK(raw_hello(server.port(), hash, 6).status == wire::AckStatus::kOk);
    CHECK(raw_hello(server.port(), hash, 0).status == wire::AckStatus::kOk);
    CHECK(raw_hello(server.port(), hash, 5).status == wire::AckStatus::kBadSplit);
    CHECK(raw_hello(server.port(), hash, 21).status == wire::AckStatus::kBadSplit);
    auto other = hash;
    other[0] ^= 1;
    CHECK(raw_hello(server.port(), other, 6).status == wire::AckStatus::kHashMismatch);

    CHECK(code_of([&] { EdgeSession(local(server.port()), g, 5); }) == ErrorCode::kHandshake);
    std::mt19937_64 rng(41);
    const auto wrong = test::small_cnn(rng);
    CHECK(code_of([&] { EdgeSession(local(server.port()), wrong, 6); }) == ErrorCode::kHandshake);
    server.stop();
  }

  TEST_CASE("wrong feature shape answers an error frame") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 6));
    server.start();
    auto socket = Socket::connect(local(server.port()));
    FrameChannel ch(socket);
    ch.send(wire::Hello{model_hash(g), 6});
    REQUIRE(std::get<wire::HelloAck>(ch.receive()).status == wire::AckStatus::kOk);
    ch.send(wire::Feature{1, 0, {2, 2}, {1, 2, 3, 4}});
    const auto reply = ch.receive();
    REQUIRE(std::holds_alternative<wire::ErrorMsg>(reply));
    CHECK(std::get<wire::ErrorMsg>(reply).code == wire::ErrorKind::kShape);

    // Feature before HELLO on a fresh connection.
    auto fresh = Socket::connect(local(server.port()));
    FrameChannel ch2(fresh);
    ch2.send(wire::Feature{1, 0, {1}, {0}});
    CHECK(std::get<wire::ErrorMsg>(ch2.receive()).code == wire::ErrorKind::kProtocol);

    // Garbage bytes.
    auto junk = Socket::connect(local(server.port()));
    const std::vector<std::uint8_t> bytes = {'S', 'W', 'I', 'R', 9, 5, 0, 0, 0, 0, 0, 0};
    junk.send_all(bytes);
    FrameChannel ch3(junk);
    CHECK(std::get<wire::ErrorMsg>(ch3.receive()).code == wire::ErrorKind::kVersion);
    server.stop();
  }

  TEST_CASE("co-inference equals single-host inference at every split") {
    const auto g = test::toy_model();
    CloudServer server(g, std::nullopt, ServerConfig{{"127.0.0.1", 0}, true});
    server.start();
    std::mt19937_64 rng(42);
    const auto x = test::random_tensor(g.input_shape(), rng);
    const auto expected = g.forward(x);
    EdgeSession session(local(server.port()), g, 0);
    for (std::size_t c = 0; c <= g.layer_count(); ++c) {
      CAPTURE(c);
      session.handshake(c);
      CHECK(session.split_point() == c);
      const auto out = session.infer(x);
      CHECK(test::max_abs_diff(out.logits, expected) <= 1e-5f);
      const auto& m = out.measured;
      CHECK(m.total_ms == doctest::Approx(m.t_device_ms + m.t_tx_ms + m.t_server_ms));
    }
    server.stop();
  }

  TEST_CASE("request ids, ping, and the live feed") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 3));
    server.start();
    EdgeSession session(local(server.port()), g, 3);
    session.ping();
    const auto x = Tensor(g.input_shape());
    const auto a = session.infer(x);
    const auto b = session.infer(x);
    CHECK(b.request_id == a.request_id + 1);
    const auto events = server.events_after(0, std::chrono::milliseconds(1000));
    REQUIRE(events.size() == 2);
    CHECK(events[0].request_id == a.request_id);
    CHECK(events[1].seq == events[0].seq + 1);
    CHECK(events[0].split_point == 3);
    CHECK(events[0].feature_bytes == split_bytes(g, 3));
    CHECK(server.last_seq() == events[1].seq);
    const auto j = json::parse(live_event_to_json(events[0]));
    CHECK(j["split_point"] == 3);
    CHECK(server.events_after(server.last_seq(), std::chrono::milliseconds(10)).empty());
    server.stop();
  }

  TEST_CASE("inference modes") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 6));
    server.start();
    const auto x = load_input_bin(test::fixture("inputs/sample_1.bin"), g.input_shape());
    const auto plan = plan_at(g, 6);
    const auto device = run_edge_inference(local(server.port()), g, plan, x, InferMode::kDevice);
    const auto co = run_edge_inference(local(server.port()), g, plan, x, InferMode::kCo);
    const auto srv = run_edge_inference(local(server.port()), g, plan, x, InferMode::kServer);
    CHECK(device.logits == g.forward(x));
    CHECK(test::max_abs_diff(co.logits, device.logits) <= 1e-5f);
    CHECK(test::max_abs_diff(srv.logits, device.logits) <= 1e-5f);
    CHECK(device.measured.t_tx_ms == 0.0);
    CHECK(srv.measured.t_device_ms == 0.0);
    CHECK(infer_mode_from_string("co") == InferMode::kCo);
    CHECK(to_string(InferMode::kServer) == "server");
    CHECK_THROWS_AS(infer_mode_from_string("edge"), Error);
    server.stop();
  }

  TEST_CASE("measured breakdowns") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 3));
    server.start();
    EdgeSession session(local(server.port()), g, 3);
    const auto runs = measure_end_to_end(session, Tensor(g.input_shape()), 10);
    REQUIRE(runs.size() == 10);
    for (const auto& b : runs) {
      CHECK(b.t_device_ms >= 0.0);
      CHECK(b.t_tx_ms >= 0.0);
      CHECK(b.t_server_ms >= 0.0);
      CHECK(b.total_ms == doctest::Approx(b.t_device_ms + b.t_tx_ms + b.t_server_ms));
      CHECK(b.split_point == 3);
    }
    server.stop();
  }

  TEST_CASE("connection loss names the run") {
    const auto g = test::toy_model();
    auto server = std::make_unique<CloudServer>(g, plan_at(g, 3));
    server->start();
    EdgeSession session(local(server->port()), g, 3);
    server->stop();
    try {
      measure_end_to_end(session, Tensor(g.input_shape()), 3);
      FAIL("expected a transport error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kTransport);
      CHECK(std::string(e.what()).find("run 0") != std::string::npos);
    }
    CHECK(code_of([&] { EdgeSession(local(server->port()), g, 3); }) == ErrorCode::kTransport);
  }

  TEST_CASE("a wider emulated link lowers transmission time") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 1));
    server.start();
    const auto x = Tensor(g.input_shape());
    auto median_tx = [&](double mbps) {
      EdgeSession s(local(server.port()), g, 1, LinkShaper(LinkModel{mbps, 0}));
      std::vector<double> tx;
      for (const auto& b : measure_end_to_end(s, x, 5)) tx.push_back(b.t_tx_ms);
      return median(tx);
    };
    const double narrow = median_tx(20);
    const double wide = median_tx(200);
    MESSAGE("t_tx 20 Mbps " << narrow << " ms, 200 Mbps " << wide << " ms");
    CHECK(narrow > wide);
    CHECK(narrow >= transmission_ms(split_bytes(g, 1), LinkModel{20, 0}));
    server.stop();
  }

  TEST_CASE("measured split totals") {
    const auto g = test::toy_model();
    CloudServer server(g, std::nullopt, ServerConfig{{"127.0.0.1", 0}, true});
    server.start();
    const auto totals = measure_split_totals(local(server.port()), g, {1, 6, 20}, Tensor(g.input_shape()), 3);
    REQUIRE(totals.has_split_totals());
    CHECK(totals.split_totals_ms.size() == 3);
    for (const auto& [c, t] : totals.split_totals_ms) CHECK(t > 0.0);
    CHECK(greedy_split(totals, {1, 6, 20}).mode == PlanMode::kMeasured);
    server.stop();
  }
}

TEST_SUITE("control-api") {
  TEST_CASE("model and profiles") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 6));
    ControlApi api(server, std::nullopt, std::nullopt);
    const auto r = api.get_model();
    CHECK(r.status == 200);
    const auto j = json::parse(r.body);
    CHECK(j["model_hash"] == hex(model_hash(g)));
    CHECK(j["layer_count"] == 20);
    CHECK(j["input_bytes"] == 12288);
    CHECK(j["layers"].size() == 20);
    CHECK(j["layers"][0]["flops"] == 442368);
    CHECK(j["layers"][0]["output_bytes"] == 32768);
    CHECK(j["split_point"] == 6);
    CHECK(api.get_plan().status == 200);
    CHECK(json::parse(api.get_plan().body)["split_point"] == 6);

    CloudServer bare(g, std::nullopt);
    ControlApi none(bare, std::nullopt, std::nullopt);
    CHECK(none.get_plan().status == 404);
    CHECK(none.post_whatif(R"({"bandwidth_mbps": 50})").status == 422);
  }

  TEST_CASE("what-if over the table 2 totals") {
    const auto g = test::toy_model();
    CloudServer server(g, std::nullopt);
    const auto totals = load_profile(test::fixture("table2.json").string());
    ControlApi api(server, totals, std::nullopt);
    const auto r = api.post_whatif(R"({"bandwidth_mbps": 50})");
    REQUIRE(r.status == 200);
    const auto j = json::parse(r.body);
    CHECK(j["argmin"] == 6);
    CHECK(j["mode"] == "measured");
    CHECK(j["candidates"].size() == 20);
  }

  TEST_CASE("what-if predictions and validation") {
    const auto g = test::toy_model();
    CloudServer server(g, std::nullopt);
    const auto dev = profile_layers(g, Tensor(g.input_shape()), 3);
    ControlApi api(server, dev, scaled(dev, 0.25));
    const auto a = json::parse(api.post_whatif(R"({"bandwidth_mbps": 10, "include_endpoints": true})").body);
    const auto b = json::parse(api.post_whatif(R"({"bandwidth_mbps": 20, "include_endpoints": true})").body);
    REQUIRE(a["candidates"].size() == 21);
    for (std::size_t i = 0; i < 21; ++i) {
      CHECK(b["candidates"][i]["t_tx_ms"].get<double>() ==
            doctest::Approx(a["candidates"][i]["t_tx_ms"].get<double>() / 2));
    }
    const auto pinned = json::parse(api.post_whatif(R"({"bandwidth_mbps": 10, "split_point": 4})").body);
    CHECK(pinned["candidates"].size() == 1);
    CHECK(pinned["candidates"][0]["split_point"] == 4);

    CHECK(api.post_whatif("not json").status == 400);
    CHECK(api.post_whatif("{}").status == 400);
    CHECK(api.post_whatif(R"({"bandwidth_mbps": "fast"})").status == 400);
    CHECK(api.post_whatif(R"({"bandwidth_mbps": -5})").status == 400);
    CHECK(api.post_whatif(R"({"bandwidth_mbps": 5, "split_point": 99})").status == 422);
    CHECK(json::parse(api.post_whatif("{}").body).contains("error"));

    LayerProfile short_profile = dev;
    short_profile.layers.pop_back();
    CHECK_THROWS_AS(ControlApi(server, short_profile, std::nullopt), Error);
  }

  TEST_CASE("plan activation re-arms the daemon and persists") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 6));
    server.start();
    const auto dev = profile_layers(g, Tensor(g.input_shape()), 3);
    const auto path = std::filesystem::temp_directory_path() / "splitwise_test_plan.json";
    ControlApi api(server, dev, scaled(dev, 0.25), path.string());
    const auto r = api.post_plan(R"({"bandwidth_mbps": 50, "split_point": 9})");
    REQUIRE(r.status == 200);
    CHECK(server.plan()->split_point == 9);
    CHECK(load_plan(path.string()).split_point == 9);
    CHECK(raw_hello(server.port(), model_hash(g), 9).status == wire::AckStatus::kOk);
    CHECK(raw_hello(server.port(), model_hash(g), 6).status == wire::AckStatus::kBadSplit);
    std::filesystem::remove(path);
    server.stop();
  }

  TEST_CASE("http surface") {
    const auto g = test::toy_model();
    CloudServer server(g, plan_at(g, 6));
    server.start();
    const auto dev = profile_layers(g, Tensor(g.input_shape()), 3);
    ControlApi api(server, dev, scaled(dev, 0.25));
    api.start(Endpoint{"127.0.0.1", 0});
    REQUIRE(api.port() != 0);

    httplib::Client client("127.0.0.1", api.port());
    auto model = client.Get("/api/model");
    REQUIRE(model);
    CHECK(model->status == 200);
    CHECK(json::parse(model->body)["layer_count"] == 20);
    auto bad = client.Post("/api/whatif", "{", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);

    // Two requests, then read them back from the live stream.
    EdgeSession session(local(server.port()), g, 6);
    session.infer(Tensor(g.input_shape()));
    session.infer(Tensor(g.input_shape()));
    auto live = client.Get("/api/live?limit=2");
    REQUIRE(live);
    CHECK(live->status == 200);
    CHECK(live->get_header_value("Content-Type").find("text/event-stream") == 0);
    std::vector<json> events;
    std::size_t pos = 0;
    while ((pos = live->body.find("data: ", pos)) != std::string::npos) {
      const auto end = live->body.find("\n\n", pos);
      events.push_back(json::parse(live->body.substr(pos + 6, end - pos - 6)));
      pos = end;
    }
    REQUIRE(events.size() == 2);
    CHECK(events[0]["split_point"] == 6);
    CHECK(events[1]["seq"].get<int>() == events[0]["seq"].get<int>() + 1);
    api.stop();
    server.stop();
  }
}
