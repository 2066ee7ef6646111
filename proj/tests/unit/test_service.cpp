#include <doctest.h>

#include <thread>

#include "../support/oracles.hpp"
#include "rcbf/service.hpp"

using namespace rcbf;
using namespace rcbf::testing;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {
Dataset small_dataset() {
  Dataset ds;
  ds.geometry = ArrayGeometry::centered(1, 4, 0.3e-3, 0.3e-3);
  AcquisitionDescriptor& d = ds.frame.descriptor;
  d.acquisition_mode = AcquisitionMode::Forces;
  d.sample_count = 128;
  d.channel_count = 4;
  d.transmit_count = 4;
  d.format = SampleFormat::Int16;
  d.channel_map = identity_channel_map(4);
  Phantom ph;
  ph.scatterers = {{{0, 0, 2e-3}, 1.0}};
  SimulationOptions o;
  o.amplitude = 300;
  ds.frame = simulate(ph, ds.geometry, d, GaussianPulse{}, o);
  return ds;
}

EngineConfig engine_config(const Dataset& ds) {
  EngineConfig c;
  c.pipeline.geometry = ds.geometry;
  ParameterSet s;
  s.beamform.region_min = {-1e-3, 0, 1e-3};
  s.beamform.region_max = {1e-3, 0, 3e-3};
  s.beamform.points = {6, 1, 5};
  c.pipeline.sets = {s};
  c.pipeline.slot_capacity_bytes = ds.frame.descriptor.payload_bytes();
  c.source = dataset_loop_source(ds);
  c.rate_hz = 200;
  c.stats_interval = 100000ms;
  return c;
}

// Next text message of the given type, skipping Stats unless asked for.
json next_of(Channel& ch, const std::string& type, std::chrono::milliseconds timeout = 2000ms) {
  const auto until = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < until) {
    auto m = ch.receive(20ms);
    if (!m || m->binary) continue;
    json j = json::parse(m->data);
    if (j["type"] == type) return j;
  }
  FAIL("timed out waiting for " << type);
  return {};
}

std::vector<uint8_t> next_binary(Channel& ch) {
  for (int i = 0; i < 100; ++i) {
    auto m = ch.receive(20ms);
    if (m && m->binary) return {m->data.begin(), m->data.end()};
  }
  FAIL("no binary message");
  return {};
}

template <class Pred>
bool eventually(Pred p) {
  for (int i = 0; i < 200; ++i) {
    if (p()) return true;
    std::this_thread::sleep_for(5ms);
  }
  return false;
}
}  // namespace

TEST_CASE("client queue drops the oldest frame") {
  ClientQueue q(2);
  for (int i = 0; i < 5; ++i) q.push({json{{"n", i}}, nullptr});
  CHECK(q.size() == 2);
  CHECK(q.dropped() == 3);
  CHECK(q.pop()->header["n"] == 3);
  CHECK(q.pop()->header["n"] == 4);
  CHECK_FALSE(q.pop());
}

TEST_CASE("parameter json helpers") {
  CHECK(section_of_key("beamform.f_number") == Section::Beamform);
  CHECK(section_of_key("filter.tap_count") == Section::Filter);
  CHECK_THROWS(section_of_key("colour.map"));
  CHECK_THROWS(section_of_key("display"));
  ParameterSet s;
  const SectionFlags f = apply_params_json(s, json{{"beamform.points", json::array({2, 1, 3})},
                                                   {"display.mode", "power"},
                                                   {"filter.tap_count", 12},
                                                   {"beamform.coherence_weighting", true}});
  CHECK(f == (Section::Beamform | Section::Display | Section::Filter));
  CHECK(s.beamform.points == std::array<uint32_t, 3>{2, 1, 3});
  CHECK(s.display.mode == DisplayMode::Power);
  CHECK(s.beamform.filter.tap_count == 12);
  CHECK(s.beamform.coherence_weighting);
  CHECK_THROWS_AS(apply_params_json(s, json{{"beamform.f_number", "abc"}}), std::invalid_argument);
  const json pj = parameter_set_json(s);
  CHECK(pj["params"]["display.mode"] == "power");
  const json e = error_message("bad_field", "nope", "x");
  CHECK(e["type"] == "Error");
  CHECK(e["field"] == "x");
  CHECK_FALSE(error_message("internal", "boom").contains("field"));
}

TEST_CASE("sources") {
  const Dataset ds = small_dataset();
  auto src = dataset_loop_source(ds);
  CHECK(buffers_bit_equal(src(0).data, ds.frame.data));
  CHECK(buffers_bit_equal(src(5).data, ds.frame.data));

  LiveSimulatorConfig c;
  c.geometry = ds.geometry;
  c.descriptor = ds.frame.descriptor;
  c.descriptor.format = SampleFormat::Float32;
  c.phantom.scatterers = {{{0, 0, 2e-3}, 1.0}};
  c.animate = true;
  c.animation_amplitude = 0.2e-3;
  c.rate_hz = 4;
  auto sim = simulator_source(c);
  CHECK(buffers_bit_equal(sim(0).data, sim(4).data));
  CHECK_FALSE(buffers_bit_equal(sim(0).data, sim(1).data));
  c.rate_hz = 0;
  CHECK_THROWS(simulator_source(c));
}

TEST_CASE("session protocol over a memory channel") {
  const Dataset ds = small_dataset();
  Engine engine(engine_config(ds));
  auto [server, client] = make_memory_channel_pair();
  engine.attach(server);

  const json hello = next_of(*client, "Hello");
  CHECK(hello["version"] == kProtocolVersion);
  REQUIRE(hello["sets"].size() == 1);
  CHECK(hello["sets"][0]["id"] == 0);
  CHECK(hello["sets"][0]["params"]["beamform.points"].is_string());
  CHECK(hello["descriptor"].is_null());

  SUBCASE("frames") {
    REQUIRE(engine.step());
    const json fr = next_of(*client, "FrameReady");
    CHECK(fr["frame_id"] == 1);
    CHECK(fr["rf_frame_id"] == 1);
    CHECK(fr["set_id"] == 0);
    CHECK(fr["encoding"] == "gray8");
    CHECK(fr["dims"] == json::array({6, 1, 5}));
    CHECK(fr["bytes"] == 16 + 30);
    CHECK(fr["output_transform"].size() == 16);
    CHECK(fr["display"]["mode"] == "log");
    CHECK(fr["non_finite_input"] == false);
    const auto payload = next_binary(*client);
    CHECK(payload.size() == 46);
    CHECK(payload[0] == 6);
    REQUIRE(engine.step());
    const json fr2 = next_of(*client, "FrameReady");
    CHECK(fr2["frame_id"] == 2);
    CHECK(fr2["image_id"].get<uint64_t>() > fr["image_id"].get<uint64_t>());
    CHECK(engine.images_emitted() == 2);
    CHECK(engine.frames_ingested() == 2);

    client->send_text(json{{"type", "Hello"}}.dump());
    CHECK(next_of(*client, "Hello")["descriptor"]["channel_count"] == 4);
  }

  SUBCASE("set params, display and plane") {
    client->send_text(json{{"type", "SetParams"}, {"set_id", 0}, {"params", {{"beamform.points", "3,1,4"}}}}.dump());
    REQUIRE(eventually([&] { return engine.pipeline().active_sets()[0].beamform.points[0] == 3; }));
    client->send_text(json{{"type", "SetParams"}, {"set_id", 9}, {"params", {{"beamform.points", "2,1,2"}}}}.dump());
    REQUIRE(eventually([&] { return engine.pipeline().active_sets().size() == 2; }));
    client->send_text(json{{"type", "SetDisplay"}, {"mode", "power"}, {"power_threshold", 0.2}}.dump());
    REQUIRE(eventually([&] {
      for (const auto& s : engine.pipeline().active_sets())
        if (s.display.mode != DisplayMode::Power) return false;
      return true;
    }));
    std::vector<double> m(16, 0.0);
    m[0] = m[5] = m[10] = m[15] = 1.0;
    m[11] = 1e-3;
    client->send_text(json{{"type", "SetPlane"}, {"set_id", 0}, {"output_transform", m}}.dump());
    REQUIRE(eventually([&] { return engine.pipeline().active_sets()[0].beamform.output_transform(2, 3) == 1e-3; }));

    REQUIRE(engine.step());
    const json a = next_of(*client, "FrameReady");
    const json b = next_of(*client, "FrameReady");
    CHECK(a["set_id"] == 0);
    CHECK(a["dims"] == json::array({3, 1, 4}));
    CHECK(a["display"]["mode"] == "power");
    CHECK(a["output_transform"][11] == 1e-3);
    CHECK(b["set_id"] == 9);
    CHECK(b["frame_id"] == 2);
  }

  SUBCASE("errors") {
    client->send_text("{not json");
    CHECK(next_of(*client, "Error")["code"] == "bad_json");
    client->send_text(json{{"kind", "x"}}.dump());
    CHECK(next_of(*client, "Error")["code"] == "bad_message");
    client->send_text(json{{"type", "Dance"}}.dump());
    CHECK(next_of(*client, "Error")["code"] == "bad_type");
    const std::vector<uint8_t> blob{1};
    client->send_binary(blob);
    CHECK(next_of(*client, "Error")["code"] == "bad_message");
    client->send_text(json{{"type", "SetParams"}, {"set_id", 0}, {"params", {{"beamform.f_number", -2}}}}.dump());
    const json v = next_of(*client, "Error");
    CHECK(v["code"] == "validation");
    CHECK(v["violations"].size() >= 1);
    client->send_text(json{{"type", "SetParams"}, {"set_id", 0}, {"params", {{"beamform.bogus", 1}}}}.dump());
    const json f = next_of(*client, "Error");
    CHECK(f["code"] == "bad_field");
    CHECK(f["field"] == "beamform.bogus");
    client->send_text(json{{"type", "SetPlane"}, {"set_id", 3}, {"output_transform", json::array()}}.dump());
    CHECK(next_of(*client, "Error")["code"] == "bad_field");
    client->send_text(json{{"type", "RequestSnapshot"}}.dump());
    CHECK(next_of(*client, "Error")["code"] == "no_frame");
    client->send_text(json{{"type", "TGC"}, {"gains", {1, 2}}}.dump());
    client->send_text(json{{"type", "Hello"}}.dump());
    CHECK(next_of(*client, "Hello")["version"] == 1);
  }

  SUBCASE("snapshot") {
    REQUIRE(engine.step());
    next_of(*client, "FrameReady");
    next_binary(*client);
    client->send_text(json{{"type", "RequestSnapshot"}, {"set_id", 0}}.dump());
    const json snap = next_of(*client, "FrameReady");
    CHECK(snap["snapshot"] == true);
    CHECK(snap["encoding"] == "rawf32");
    CHECK(snap["frame_id"] == 2);
    CHECK(snap["params"]["beamform.points"].is_string());
    const auto payload = next_binary(*client);
    CHECK(payload.size() == snap["bytes"].get<std::size_t>());
    const ImageFrame img = decode_raw_f32(payload);
    CHECK(img.dims == std::array<uint32_t, 3>{6, 1, 5});
  }

  engine.stop();
  CHECK_FALSE(client->is_open());
}

TEST_CASE("slow clients lose the oldest frames") {
  const Dataset ds = small_dataset();
  Engine engine(engine_config(ds));
  auto [server, client] = make_memory_channel_pair();
  engine.attach(server);
  next_of(*client, "Hello");
  for (int i = 0; i < 20; ++i) REQUIRE(engine.step());
  uint64_t last = 0;
  int seen = 0;
  while (auto m = client->receive(200ms)) {
    if (m->binary) continue;
    const json j = json::parse(m->data);
    if (j["type"] != "FrameReady") continue;
    CHECK(j["frame_id"].get<uint64_t>() == last + 1);
    CHECK(j["rf_frame_id"].get<uint64_t>() >= last + 1);
    last = j["frame_id"];
    ++seen;
  }
  CHECK(seen >= 1);
  CHECK(seen <= 20);
  CHECK(engine.images_emitted() == 20);
  engine.stop();
}

TEST_CASE("stats are sent periodically") {
  const Dataset ds = small_dataset();
  EngineConfig c = engine_config(ds);
  c.stats_interval = 30ms;
  Engine engine(c);
  auto [server, client] = make_memory_channel_pair();
  engine.attach(server);
  REQUIRE(engine.step());
  const json st = next_of(*client, "Stats");
  CHECK(st["frames_ingested"] == 1);
  CHECK(st["images_emitted"] == 1);
  bool has_das = false;
  for (const auto& s : st["stages"]) has_das = has_das || s["stage"] == "das";
  CHECK(has_das);
  CHECK(st.contains("upload_interval_ns"));
  CHECK(st.contains("dropped"));
  engine.stop();
}

TEST_CASE("websocket server streams live frames") {
  const Dataset ds = small_dataset();
  Engine engine(engine_config(ds));
  WebSocketServer server(engine, "127.0.0.1", 0);
  auto client = websocket_connect("127.0.0.1", server.port(), "/");
  REQUIRE(client);
  next_of(*client, "Hello");
  engine.start();
  const json fr = next_of(*client, "FrameReady");
  CHECK(fr["encoding"] == "gray8");
  const auto payload = next_binary(*client);
  CHECK(payload.size() == fr["bytes"].get<std::size_t>());
  CHECK(engine.session_count() == 1);
  server.stop();
  engine.stop();
  CHECK(engine.frames_ingested() >= 1);
  CHECK(engine.source_errors() == 0);
}

TEST_CASE("source failures are counted") {
  const Dataset ds = small_dataset();
  EngineConfig c = engine_config(ds);
  c.source = [](uint64_t) -> RfFrame { throw std::runtime_error("device unplugged"); };
  Engine engine(c);
  CHECK_FALSE(engine.step());
  CHECK(engine.source_errors() == 1);
}
