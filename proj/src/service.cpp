#include "rcbf/service.hpp"

#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>

namespace rcbf {

using nlohmann::json;

// ---------------------------------------------------------------- sources

FrameSource dataset_loop_source(Dataset dataset) {
  auto ds = std::make_shared<const Dataset>(std::move(dataset));
  return [ds](uint64_t) { return ds->frame; };
}

FrameSource simulator_source(LiveSimulatorConfig config) {
  validate_excitation(config.excitation);
  if (config.animate && (config.rate_hz <= 0 || config.animation_period_s <= 0))
    throw std::invalid_argument("animated simulator needs positive rate and period");
  auto c = std::make_shared<const LiveSimulatorConfig>(std::move(config));
  return [c](uint64_t index) {
    Phantom p = c->phantom;
    if (c->animate) {
      const double t = static_cast<double>(index) / c->rate_hz;
      const double dz = c->animation_amplitude * std::sin(2 * std::numbers::pi * t / c->animation_period_s);
      for (auto& s : p.scatterers) s.position.z += dz;
    }
    SimulationOptions o = c->options;
    o.seed = c->options.seed + index;
    return simulate(p, c->geometry, c->descriptor, c->excitation, o);
  };
}

// ---------------------------------------------------------------- message helpers

namespace {

struct FieldError : std::invalid_argument {
  FieldError(std::string f, const std::string& what) : std::invalid_argument(what), field(std::move(f)) {}
  std::string field;
};

json vec3_json(Vec3 v) { return json::array({v.x, v.y, v.z}); }

json mat4_json(const Mat4& m) { return json(m.m); }

json display_json(const DisplaySettings& d) {
  return {{"mode", d.mode == DisplayMode::Log ? "log" : "power"},
          {"dynamic_range_db", d.dynamic_range_db},
          {"power_threshold", d.power_threshold}};
}

std::string scalar_text(const json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number()) return v.dump();
  throw FieldError(key, key + ": expected a string, number or boolean");
}

std::string value_text(const json& v, const std::string& key) {
  if (!v.is_array()) return scalar_text(v, key);
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += scalar_text(v[i], key);
  }
  return out;
}

double number_field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw FieldError(key, std::string(key) + ": expected a number");
  return it->get<double>();
}

uint32_t set_id_field(const json& j) {
  const auto it = j.find("set_id");
  if (it == j.end() || !it->is_number_unsigned() || it->get<uint64_t>() > UINT32_MAX)
    throw FieldError("set_id", "set_id: expected a non-negative integer");
  return it->get<uint32_t>();
}

std::vector<double> numbers_field(const json& j, const char* key, std::size_t n) {
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array() || it->size() != n)
    throw FieldError(key, std::string(key) + ": expected an array of " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (const auto& v : *it) {
    if (!v.is_number()) throw FieldError(key, std::string(key) + ": expected numbers");
    out.push_back(v.get<double>());
  }
  return out;
}

std::optional<ParameterSet> find_set(const std::vector<ParameterSet>& sets, uint32_t id) {
  for (const auto& s : sets)
    if (s.id == id) return s;
  return std::nullopt;
}

}  // namespace

json descriptor_summary(const AcquisitionDescriptor& d) {
  return {{"sample_count", d.sample_count},
          {"channel_count", d.channel_count},
          {"transmit_count", d.transmit_count},
          {"format", std::string(to_string(d.format))},
          {"mode", std::string(to_string(d.acquisition_mode))},
          {"sampling_freq", d.sampling_freq},
          {"demodulation_freq", d.demodulation_freq},
          {"sound_speed", d.sound_speed},
          {"time_offset", d.time_offset}};
}

json parameter_set_json(const ParameterSet& set) {
  json params = json::object();
  for (const auto& [k, v] : param_values(set)) params[k] = v;
  return {{"id", set.id}, {"params", params}};
}

Section section_of_key(std::string_view key) {
  const auto dot = key.find('.');
  const std::string_view prefix = key.substr(0, dot);
  if (dot != std::string_view::npos) {
    if (prefix == "acquisition") return Section::Acquisition;
    if (prefix == "geometry") return Section::Geometry;
    if (prefix == "beamform") return Section::Beamform;
    if (prefix == "filter") return Section::Filter;
    if (prefix == "display") return Section::Display;
  }
  throw std::invalid_argument("unknown parameter key " + std::string(key));
}

SectionFlags apply_params_json(ParameterSet& set, const json& params) {
  if (!params.is_object()) throw FieldError("params", "params: expected an object");
  SectionFlags touched = 0;
  for (const auto& [key, value] : params.items()) {
    try {
      const Section s = section_of_key(key);
      apply_param(set, key, value_text(value, key));
      touched |= static_cast<uint32_t>(s);
    } catch (const FieldError&) {
      throw;
    } catch (const std::exception& e) {
      throw FieldError(key, e.what());
    }
  }
  return touched;
}

json error_message(std::string_view code, std::string_view message, std::string_view field) {
  json j = {{"type", "Error"}, {"code", code}, {"message", message}};
  if (!field.empty()) j["field"] = field;
  return j;
}

// ---------------------------------------------------------------- ClientQueue

void ClientQueue::push(OutgoingFrame frame) {
  std::lock_guard lock(mutex_);
  items_.push_back(std::move(frame));
  while (items_.size() > depth_) {
    items_.pop_front();
    ++dropped_;
  }
}

std::optional<OutgoingFrame> ClientQueue::pop() {
  std::lock_guard lock(mutex_);
  if (items_.empty()) return std::nullopt;
  OutgoingFrame f = std::move(items_.front());
  items_.pop_front();
  return f;
}

std::size_t ClientQueue::size() const {
  std::lock_guard lock(mutex_);
  return items_.size();
}

uint64_t ClientQueue::dropped() const {
  std::lock_guard lock(mutex_);
  return dropped_;
}

// ---------------------------------------------------------------- Engine

struct Engine::Session {
  std::shared_ptr<Channel> channel;
  ClientQueue queue;
  std::atomic<bool> stop{false};
  std::atomic<bool> done{false};
  uint64_t next_frame_id = 1;
  std::thread thread;
};

Engine::Engine(EngineConfig config) : config_(std::move(config)) {
  if (!config_.source) throw std::invalid_argument("engine needs a frame source");
  pipeline_ = std::make_unique<Pipeline>(config_.pipeline);
  descriptor_ = config_.descriptor_hint;
  pipeline_->set_present_hook([this](ImageFrame&, const ParameterSet& p) {
    std::lock_guard lock(state_mutex_);
    used_params_[p.id] = p;
  });
}

Engine::~Engine() { stop(); }

void Engine::log(std::string_view msg) const {
  if (config_.log) config_.log(msg);
  else std::cerr << msg << '\n';
}

void Engine::start() {
  if (ingest_running_ || stopped_) return;
  ingest_running_ = true;
  compute_running_ = true;
  compute_thread_ = std::thread([this] { compute_loop(); });
  ingest_thread_ = std::thread([this] { ingest_loop(); });
}

void Engine::stop() {
  if (stopped_.exchange(true)) return;
  {
    std::lock_guard lock(wake_mutex_);
    ingest_running_ = false;
  }
  wake_cv_.notify_all();
  if (ingest_thread_.joinable()) ingest_thread_.join();
  if (compute_thread_.joinable()) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
    while (pipeline_->ring().ready_count() > 0 && std::chrono::steady_clock::now() < deadline)
      std::this_thread::sleep_for(std::chrono::milliseconds(1));
    compute_running_ = false;
    compute_thread_.join();
  }
  pipeline_->close();

  std::list<std::unique_ptr<Session>> sessions;
  {
    std::lock_guard lock(sessions_mutex_);
    sessions.swap(sessions_);
  }
  for (auto& s : sessions) {
    s->stop = true;
    s->channel->close();
  }
  for (auto& s : sessions)
    if (s->thread.joinable()) s->thread.join();
}

bool Engine::ingest_one(uint64_t index) {
  RfFrame frame;
  try {
    frame = config_.source(index);
  } catch (const std::exception& e) {
    ++source_errors_;
    log("source error on frame " + std::to_string(index) + ": " + e.what());
    return false;
  }
  {
    std::lock_guard lock(state_mutex_);
    descriptor_ = frame.descriptor;
  }
  try {
    pipeline_->submit_frame(frame);
  } catch (const PipelineClosed&) {
    return false;
  } catch (const std::exception& e) {
    ++source_errors_;
    log("ingest rejected frame " + std::to_string(index) + ": " + e.what());
    return false;
  }
  ++frames_ingested_;
  return true;
}

void Engine::ingest_loop() {
  using clock = std::chrono::steady_clock;
  const auto period = config_.rate_hz > 0
                          ? std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / config_.rate_hz))
                          : clock::duration::zero();
  auto next = clock::now();
  while (ingest_running_) {
    ingest_one(next_index_++);
    if (period == clock::duration::zero()) continue;
    next += period;
    const auto now = clock::now();
    // After a long stall, restart the schedule rather than bursting to catch up.
    if (next + period < now) next = now;
    std::unique_lock lock(wake_mutex_);
    wake_cv_.wait_until(lock, next, [this] { return !ingest_running_; });
  }
}

void Engine::compute_loop() {
  while (compute_running_) {
    try {
      auto r = pipeline_->process_next_for(std::chrono::milliseconds(20));
      if (r) broadcast(*r);
    } catch (const PipelineClosed&) {
      break;
    } catch (const PipelineError& e) {
      log(e.what());
    }
  }
}

bool Engine::step() {
  if (!ingest_one(next_index_++)) return false;
  try {
    const FrameResult r = pipeline_->process_next();
    broadcast(r);
    for (const auto& o : r.outputs)
      if (!o.image) return false;
    return true;
  } catch (const PipelineError& e) {
    log(e.what());
    return false;
  }
}

void Engine::broadcast(const FrameResult& result) {
  reap_sessions();
  for (const SetOutput& out : result.outputs) {
    if (!out.image) {
      log("set " + std::to_string(out.set_id) + " failed in " + out.failed_stage + ": " + out.error);
      continue;
    }
    ParameterSet params;
    {
      std::lock_guard lock(state_mutex_);
      const auto it = used_params_.find(out.set_id);
      if (it != used_params_.end()) params = it->second;
      else params.id = out.set_id;
      latest_[out.set_id] = Latest{*out.image, params, result.frame_id};
    }
    const ImageFrame& img = *out.image;
    auto payload = std::make_shared<const std::vector<uint8_t>>(encode_gray8(display_transform(img, params.display)));
    json header = {{"type", "FrameReady"},
                   {"image_id", ++image_seq_},
                   {"rf_frame_id", result.frame_id},
                   {"set_id", out.set_id},
                   {"dims", img.dims},
                   {"encoding", "gray8"},
                   {"bytes", payload->size()},
                   {"region_min", vec3_json(params.beamform.region_min)},
                   {"region_max", vec3_json(params.beamform.region_max)},
                   {"output_transform", mat4_json(params.beamform.output_transform)},
                   {"display", display_json(params.display)},
                   {"non_finite_input", img.non_finite_input}};
    ++images_emitted_;
    std::lock_guard lock(sessions_mutex_);
    for (auto& s : sessions_)
      if (!s->done) s->queue.push(OutgoingFrame{header, payload});
  }
}

void Engine::attach(std::shared_ptr<Channel> channel) {
  reap_sessions();
  auto s = std::make_unique<Session>();
  s->channel = std::move(channel);
  Session* raw = s.get();
  std::lock_guard lock(sessions_mutex_);
  if (stopped_) {
    s->channel->close();
    return;
  }
  sessions_.push_back(std::move(s));
  raw->thread = std::thread([this, raw] { session_loop(*raw); });
}

void Engine::reap_sessions() {
  std::list<std::unique_ptr<Session>> finished;
  {
    std::lock_guard lock(sessions_mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      if ((*it)->done) {
        finished.push_back(std::move(*it));
        it = sessions_.erase(it);
      } else {
        ++it;
      }
    }
  }
  for (auto& s : finished)
    if (s->thread.joinable()) s->thread.join();
}

std::size_t Engine::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  std::size_t n = 0;
  for (const auto& s : sessions_) n += !s->done;
  return n;
}

uint64_t Engine::frames_dropped() const {
  std::lock_guard lock(sessions_mutex_);
  uint64_t n = 0;
  for (const auto& s : sessions_) n += s->queue.dropped();
  return n;
}

json Engine::hello() const {
  json sets = json::array();
  for (const auto& s : pipeline_->active_sets()) sets.push_back(parameter_set_json(s));
  std::lock_guard lock(state_mutex_);
  return {{"type", "Hello"},
          {"version", kProtocolVersion},
          {"sets", sets},
          {"descriptor", descriptor_ ? descriptor_summary(*descriptor_) : json(nullptr)}};
}

json Engine::stats(const Session& s) const {
  json stages = json::array();
  for (const auto& st : pipeline_->timings().stats())
    stages.push_back({{"stage", st.stage}, {"mean_ns", st.mean_ns}, {"last_ns", st.last_ns}, {"frames", st.frames}});
  return {{"type", "Stats"},
          {"stages", stages},
          {"upload_interval_ns", pipeline_->timings().upload_interval_ns()},
          {"images_emitted", images_emitted_.load()},
          {"frames_ingested", frames_ingested_.load()},
          {"dropped", s.queue.dropped()}};
}

void Engine::send_frame(Session& s, const OutgoingFrame& f) {
  json header = f.header;
  header["frame_id"] = s.next_frame_id++;
  if (s.channel->send_text(header.dump())) s.channel->send_binary(*f.payload);
}

void Engine::session_loop(Session& s) {
  s.channel->send_text(hello().dump());
  auto next_stats = std::chrono::steady_clock::now() + config_.stats_interval;
  while (!s.stop && s.channel->is_open()) {
    if (auto m = s.channel->receive(std::chrono::milliseconds(5))) handle(s, *m);
    while (auto f = s.queue.pop()) send_frame(s, *f);
    const auto now = std::chrono::steady_clock::now();
    if (now >= next_stats) {
      s.channel->send_text(stats(s).dump());
      next_stats = now + config_.stats_interval;
    }
  }
  s.done = true;
}

void Engine::handle(Session& s, const ChannelMessage& m) {
  const auto reply = [&](const json& j) { s.channel->send_text(j.dump()); };
  if (m.binary) return reply(error_message("bad_message", "clients may only send text messages"));
  const json j = json::parse(m.data, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return reply(error_message("bad_json", "message is not a JSON object"));
  const auto t = j.find("type");
  if (t == j.end() || !t->is_string()) return reply(error_message("bad_message", "missing type", "type"));
  const std::string type = t->get<std::string>();

  const auto submit = [&](const ParameterSet& set) {
    const UpdateAck ack = pipeline_->update_parameters(set);
    if (ack.accepted) return;
    std::string msg = "parameter set " + std::to_string(set.id) + " rejected:";
    json violations = json::array();
    for (const auto& v : ack.violations) {
      msg += " " + v.field + " (" + v.rule + ")";
      violations.push_back({{"field", v.field}, {"rule", v.rule}});
    }
    json e = error_message("validation", msg, ack.violations.empty() ? "" : ack.violations.front().field);
    e["violations"] = violations;
    reply(e);
  };
  const auto existing = [&](uint32_t id) {
    auto set = find_set(pipeline_->active_sets(), id);
    if (!set) throw FieldError("set_id", "no active parameter set " + std::to_string(id));
    return *set;
  };

  try {
    if (type == "Hello") {
      reply(hello());
    } else if (type == "SetParams") {
      const uint32_t id = set_id_field(j);
      const auto params = j.find("params");
      if (params == j.end()) throw FieldError("params", "params: missing");
      auto current = find_set(pipeline_->active_sets(), id);
      ParameterSet set = current.value_or(ParameterSet{});
      set.id = id;
      const SectionFlags touched = apply_params_json(set, *params);
      set.dirty = current ? touched : kAllSections;
      if (set.dirty == 0) return;
      submit(set);
    } else if (type == "SetDisplay") {
      std::vector<ParameterSet> targets;
      if (j.contains("set_id")) targets.push_back(existing(set_id_field(j)));
      else targets = pipeline_->active_sets();
      for (auto& set : targets) {
        if (const auto mode = j.find("mode"); mode != j.end()) {
          if (*mode == "log") set.display.mode = DisplayMode::Log;
          else if (*mode == "power") set.display.mode = DisplayMode::Power;
          else throw FieldError("mode", "mode: expected \"log\" or \"power\"");
        }
        if (j.contains("dynamic_range_db")) set.display.dynamic_range_db = number_field(j, "dynamic_range_db");
        if (j.contains("power_threshold")) set.display.power_threshold = number_field(j, "power_threshold");
        set.dirty = static_cast<uint32_t>(Section::Display);
      }
      for (const auto& set : targets) submit(set);
    } else if (type == "SetPlane") {
      ParameterSet set = existing(set_id_field(j));
      const auto m4 = numbers_field(j, "output_transform", 16);
      std::copy(m4.begin(), m4.end(), set.beamform.output_transform.m.begin());
      if (j.contains("region_min")) {
        const auto v = numbers_field(j, "region_min", 3);
        set.beamform.region_min = {v[0], v[1], v[2]};
      }
      if (j.contains("region_max")) {
        const auto v = numbers_field(j, "region_max", 3);
        set.beamform.region_max = {v[0], v[1], v[2]};
      }
      set.dirty = static_cast<uint32_t>(Section::Beamform);
      submit(set);
    } else if (type == "RequestSnapshot") {
      std::optional<Latest> latest;
      {
        std::lock_guard lock(state_mutex_);
        if (j.contains("set_id")) {
          const uint32_t id = set_id_field(j);
          if (auto it = latest_.find(id); it != latest_.end()) latest = it->second;
        } else if (!latest_.empty()) {
          latest = latest_.begin()->second;
        }
      }
      if (!latest) return reply(error_message("no_frame", "no image has been produced for that set yet", "set_id"));
      auto payload = std::make_shared<const std::vector<uint8_t>>(encode_raw_f32(latest->image));
      json header = {{"type", "FrameReady"},
                     {"rf_frame_id", latest->rf_frame_id},
                     {"set_id", latest->params.id},
                     {"dims", latest->image.dims},
                     {"encoding", "rawf32"},
                     {"bytes", payload->size()},
                     {"snapshot", true},
                     {"region_min", vec3_json(latest->params.beamform.region_min)},
                     {"region_max", vec3_json(latest->params.beamform.region_max)},
                     {"output_transform", mat4_json(latest->params.beamform.output_transform)},
                     {"display", display_json(latest->params.display)},
                     {"params", parameter_set_json(latest->params)["params"]}};
      send_frame(s, OutgoingFrame{header, payload});
    } else if (type == "TGC" || type == "TransmitPower") {
      // Reserved for hardware controls; accepted and ignored.
    } else {
      reply(error_message("bad_type", "unknown message type \"" + type + "\"", "type"));
    }
  } catch (const FieldError& e) {
    reply(error_message("bad_field", e.what(), e.field));
  } catch (const std::exception& e) {
    reply(error_message("internal", e.what()));
  }
}

// ---------------------------------------------------------------- WebSocketServer

WebSocketServer::WebSocketServer(Engine& engine, const std::string& host, uint16_t port)
    : engine_(engine), listener_(host, port) {
  thread_ = std::thread([this] {
    while (running_) {
      try {
        if (auto ch = listener_.accept(std::chrono::milliseconds(100))) engine_.attach(ch);
      } catch (const std::exception& e) {
        std::cerr << "accept failed: " << e.what() << '\n';
      }
    }
  });
}

WebSocketServer::~WebSocketServer() { stop(); }

void WebSocketServer::stop() {
  running_ = false;
  if (thread_.joinable()) thread_.join();
  listener_.close();
}

}  // namespace rcbf
