#include "rcbf/cli.hpp"

#include <unistd.h>

#include <CLI11.hpp>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "rcbf/decode.hpp"
#include "rcbf/io.hpp"
#include "rcbf/pipeline.hpp"
#include "rcbf/service.hpp"

namespace rcbf::cli {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const std::size_t next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) return out;
    pos = next + 1;
  }
}

double to_double(std::string_view s, std::string_view what) {
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw std::invalid_argument(std::string(what) + ": not a number: '" + std::string(s) + "'");
  return v;
}

uint32_t to_u32(std::string_view s, std::string_view what) {
  uint32_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument(std::string(what) + ": not an unsigned integer: '" + std::string(s) + "'");
  return v;
}

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

std::string summary(const AcquisitionDescriptor& d) {
  std::ostringstream os;
  os << "samples=" << d.sample_count << " channels=" << d.channel_count << " transmits=" << d.transmit_count
     << " format=" << to_string(d.format) << " mode=" << to_string(d.acquisition_mode) << " fs=" << d.sampling_freq
     << " fd=" << d.demodulation_freq << " c=" << d.sound_speed << " t0=" << d.time_offset;
  return os.str();
}

double excitation_length(const Excitation& e) {
  const auto [a, b] = excitation_support(e);
  return b - a;
}

void print_timings(std::ostream& out, const StageTimings& t, std::size_t points) {
  out << "stage,ns,ns_per_point\n";
  for (const auto& s : t.stats()) {
    out << s.stage << ',' << std::llround(s.mean_ns) << ',' << std::setprecision(6)
        << (points ? s.mean_ns / static_cast<double>(points) : 0.0) << '\n';
  }
}

}  // namespace

// ---------------------------------------------------------------- helpers

Phantom load_phantom(std::string_view spec) {
  Phantom p;
  if (spec == "builtin:point") {
    p.scatterers.push_back({{0, 0, 20e-3}, 1.0});
    return p;
  }
  if (spec == "builtin:grid") {
    for (double z : {10e-3, 20e-3, 30e-3})
      for (double x : {-5e-3, 0.0, 5e-3}) p.scatterers.push_back({{x, 0, z}, 1.0});
    return p;
  }
  if (spec.substr(0, 8) == "builtin:") throw std::invalid_argument("unknown builtin phantom " + std::string(spec));
  std::ifstream in{std::string(spec)};
  if (!in) throw std::runtime_error("cannot open phantom file " + std::string(spec));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    Scatterer s;
    if (!(ls >> s.position.x)) continue;
    if (!(ls >> s.position.y >> s.position.z))
      throw std::invalid_argument("phantom line " + std::to_string(n) + ": expected x y z [reflectivity]");
    if (!(ls >> s.reflectivity)) s.reflectivity = 1.0;
    p.scatterers.push_back(s);
  }
  if (p.scatterers.empty()) throw std::invalid_argument("phantom file has no scatterers");
  return p;
}

Excitation parse_excitation(std::string_view spec, double center_freq) {
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  const std::string_view args = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  Excitation e;
  if (kind == "gaussian") {
    GaussianPulse g;
    g.center_freq = center_freq;
    if (!args.empty()) g.fractional_bandwidth = to_double(args, "gaussian bandwidth");
    e = g;
  } else if (kind == "chirp") {
    ChirpSpec c;
    if (!args.empty()) {
      const auto parts = split(args, ',');
      if (parts.size() != 3) throw std::invalid_argument("chirp excitation: expected chirp:<f0>,<f1>,<duration>");
      c.f_start = to_double(parts[0], "chirp f0");
      c.f_end = to_double(parts[1], "chirp f1");
      c.duration = to_double(parts[2], "chirp duration");
    }
    e = c;
  } else {
    throw std::invalid_argument("unknown excitation '" + std::string(spec) + "'");
  }
  validate_excitation(e);
  return e;
}

DisplaySettings parse_display(std::string_view spec) {
  DisplaySettings d;
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) throw std::invalid_argument("display: expected log:<dB> or power:<threshold>");
  const std::string_view kind = spec.substr(0, colon);
  const double v = to_double(spec.substr(colon + 1), "display value");
  if (kind == "log") {
    if (!(v > 0)) throw std::invalid_argument("display: dynamic range must be positive");
    d.mode = DisplayMode::Log;
    d.dynamic_range_db = v;
  } else if (kind == "power") {
    if (!(v >= 0 && v < 1)) throw std::invalid_argument("display: power threshold must be in [0, 1)");
    d.mode = DisplayMode::Power;
    d.power_threshold = v;
  } else {
    throw std::invalid_argument("display: unknown mode '" + std::string(kind) + "'");
  }
  return d;
}

SimulationPlan plan_simulation(const SimulationSetup& s) {
  SimulationPlan plan;
  plan.phantom = load_phantom(s.phantom);
  plan.phantom.sound_speed = s.sound_speed;
  plan.excitation = parse_excitation(s.excitation, s.center_freq);
  if (s.elements < 1) throw std::invalid_argument("elements must be >= 1");
  if (!(s.center_freq > 0) || !(s.sampling_freq > 0)) throw std::invalid_argument("fc and fs must be positive");

  const bool hercules = s.mode == AcquisitionMode::Hercules;
  const uint32_t rows = s.rows ? s.rows : (hercules ? s.elements : 1);
  const double pitch = s.pitch > 0 ? s.pitch : s.sound_speed / s.center_freq;
  plan.geometry = ArrayGeometry::centered(rows, s.elements, pitch, pitch);

  AcquisitionDescriptor& d = plan.descriptor;
  d.acquisition_mode = s.mode;
  d.format = s.format;
  d.sampling_freq = s.sampling_freq;
  d.demodulation_freq = s.center_freq;
  d.sound_speed = s.sound_speed;
  d.channel_count = s.elements;
  d.channel_map = identity_channel_map(s.elements);
  // Transmit on rows only when a second dimension exists.
  d.transmit_rows = rows > 1 && !hercules;

  const uint32_t tx_lines = d.transmit_rows ? rows : s.elements;
  const double aperture = s.elements * pitch;
  switch (s.mode) {
    case AcquisitionMode::Forces:
    case AcquisitionMode::RawSa: d.transmit_count = tx_lines; break;
    case AcquisitionMode::Hercules: d.transmit_count = rows; break;
    case AcquisitionMode::UForces: {
      if (d.transmit_rows) throw std::invalid_argument("uforces transmits on the receive lines; use --rows 1");
      const uint32_t k = s.transmits ? s.transmits : std::max(1u, s.elements / 4);
      if (k > s.elements) throw std::invalid_argument("uforces transmits exceed elements");
      std::vector<uint32_t> idx;
      for (uint32_t i = 0; i < k; ++i) idx.push_back(static_cast<uint32_t>((uint64_t{i} * s.elements) / k));
      d.transmit_count = k;
      d.sparse_transmit_indices = idx;
      break;
    }
    case AcquisitionMode::Tpw: {
      const uint32_t k = s.transmits ? s.transmits : 16;
      d.transmit_count = k;
      const double max_angle = 15.0 * std::numbers::pi / 180.0;
      for (uint32_t i = 0; i < k; ++i) {
        const double a = k == 1 ? 0.0 : -max_angle + 2 * max_angle * i / (k - 1.0);
        const Vec3 dir = d.transmit_rows ? Vec3{0, std::sin(a), std::cos(a)} : Vec3{std::sin(a), 0, std::cos(a)};
        d.transmit_models.emplace_back(PlaneTransmit{dir});
      }
      break;
    }
    case AcquisitionMode::Vls: {
      const uint32_t k = s.transmits ? s.transmits : 16;
      d.transmit_count = k;
      for (uint32_t i = 0; i < k; ++i) {
        const double u = k == 1 ? 0.0 : -0.25 + 0.5 * i / (k - 1.0);
        const Vec3 f = d.transmit_rows ? Vec3{0, u * aperture, -10e-3} : Vec3{u * aperture, 0, -10e-3};
        d.transmit_models.emplace_back(VirtualSourceTransmit{f});
      }
      break;
    }
    case AcquisitionMode::Flash: d.transmit_count = 1; break;
  }

  if (s.samples) {
    d.sample_count = s.samples;
  } else {
    double r_max = 0;
    const double half_diag = 0.5 * std::hypot(aperture, rows * pitch);
    for (const auto& sc : plan.phantom.scatterers) r_max = std::max(r_max, norm(sc.position) + half_diag);
    const double t = 2.0 * r_max / s.sound_speed + excitation_length(plan.excitation) + 10e-6;
    d.sample_count = static_cast<uint32_t>(std::ceil(t * s.sampling_freq / 64.0) * 64.0);
  }
  if (const auto v = validate_descriptor(d); !v.empty())
    throw std::invalid_argument("invalid acquisition: " + v.front().field + ": " + v.front().rule);

  plan.options.noise_rms = s.noise;
  plan.options.seed = s.seed;
  plan.options.workers = s.workers;
  plan.options.amplitude = s.amplitude > 0 ? s.amplitude
                           : (s.format == SampleFormat::Int16 || s.format == SampleFormat::Int16Complex) ? 100.0
                                                                                                          : 1.0;
  return plan;
}

BeamformParams default_beamform(const AcquisitionDescriptor& d, const ArrayGeometry& g) {
  BeamformParams p;
  const double half = 0.5 * std::max(g.column_count * g.column_pitch, g.row_count * g.row_pitch);
  const double depth = 0.5 * d.sound_speed * (d.time_offset + d.sample_count / d.sampling_freq);
  const double lambda = d.sound_speed / std::max(d.demodulation_freq, 1e6);
  p.region_min = {-half, 0, std::min(2e-3, 0.5 * depth)};
  p.region_max = {half, 0, depth};
  const auto lateral = static_cast<uint32_t>(std::clamp(std::ceil(2 * half / (lambda / 2)), 16.0, 512.0));
  const auto axial = static_cast<uint32_t>(std::clamp(std::ceil((depth - p.region_min.z) / (lambda / 4)), 16.0, 1024.0));
  p.points = {lateral, 1, axial};
  return p;
}

BenchConfig parse_bench_config(std::string_view spec) {
  BenchConfig c;
  if (spec == "table3") {
    c.name = "table3";
    c.samples = 2816;
    c.channels = 128;
    c.transmits = 128;
    c.image_x = 1024;
    c.image_z = 1024;
    c.filter_taps = 166;
    c.frames = 1;
    return c;
  }
  if (spec == "small") {
    c.name = "small";
    return c;
  }
  if (spec.substr(0, 7) == "custom:") {
    const auto parts = split(spec.substr(7), ',');
    if (parts.size() != 6)
      throw std::invalid_argument("custom bench: expected custom:samples,channels,transmits,image_x,image_z,taps");
    c.name = "custom";
    c.samples = to_u32(parts[0], "samples");
    c.channels = to_u32(parts[1], "channels");
    c.transmits = to_u32(parts[2], "transmits");
    c.image_x = to_u32(parts[3], "image_x");
    c.image_z = to_u32(parts[4], "image_z");
    c.filter_taps = to_u32(parts[5], "taps");
    if (!c.samples || !c.channels || !c.image_x || !c.image_z || c.filter_taps < 2)
      throw std::invalid_argument("custom bench: sizes must be positive and taps >= 2");
    if (!is_power_of_two(c.transmits)) throw std::invalid_argument("custom bench: transmits must be a power of two");
    return c;
  }
  throw std::invalid_argument("unknown bench config '" + std::string(spec) + "'");
}

std::size_t bench_memory_estimate(const BenchConfig& c) {
  const std::size_t samples = std::size_t{c.samples} * c.channels * c.transmits;
  // RF int16 source + ring slots, demodulated and decoded complex blocks, image.
  return samples * 2 * 5 + samples * 8 * 2 + std::size_t{c.image_x} * c.image_z * 8 * 2;
}

// ---------------------------------------------------------------- commands

namespace {

struct BeamformArgs {
  std::string in, params, out, display, exported = "pgm";
  unsigned workers = 1;
};

int cmd_simulate(const SimulationSetup& setup, const std::string& out_path, std::ostream& out) {
  const SimulationPlan plan = plan_simulation(setup);
  const RfFrame frame = simulate(plan.phantom, plan.geometry, plan.descriptor, plan.excitation, plan.options);
  write_dataset(out_path, frame, plan.geometry);
  out << summary(frame.descriptor) << '\n';
  out << "geometry: rows=" << plan.geometry.row_count << " columns=" << plan.geometry.column_count
      << " pitch=" << plan.geometry.column_pitch << '\n';
  out << "wrote " << out_path << '\n';
  return kExitOk;
}

int cmd_beamform(const BeamformArgs& a, std::ostream& out, std::ostream& err) {
  const Dataset ds = read_dataset(a.in);
  std::vector<ParameterSet> sets;
  if (!a.params.empty()) {
    sets = read_params(a.params);
  } else {
    ParameterSet s;
    s.beamform = default_beamform(ds.frame.descriptor, ds.geometry);
    sets.push_back(s);
  }
  if (!a.display.empty()) {
    const DisplaySettings d = parse_display(a.display);
    for (auto& s : sets) s.display = d;
  }
  const bool pgm = a.exported == "pgm" || a.exported == "both";
  const bool raw = a.exported == "raw" || a.exported == "both";

  PipelineConfig config;
  config.geometry = ds.geometry;
  config.sets = sets;
  config.workers = a.workers;
  config.slots = 2;
  config.slot_capacity_bytes = std::max<std::size_t>(ds.frame.descriptor.payload_bytes(), 1);
  Pipeline pipeline(config);
  for (const auto& v : validate_parameter_set(sets.front()))
    err << "warning: " << v.field << ": " << v.rule << '\n';

  pipeline.submit_frame(ds.frame);
  FrameResult result;
  try {
    result = pipeline.process_next();
  } catch (const PipelineError& e) {
    err << "error: stage " << e.stage() << ": " << e.what() << '\n';
    return kExitRuntime;
  }
  for (const auto& w : result.warnings) err << "warning: " << w.field << ": " << w.rule << '\n';
  int status = kExitOk;
  for (const SetOutput& o : result.outputs) {
    if (!o.image) {
      err << "error: set " << o.set_id << " stage " << o.failed_stage << ": " << o.error << '\n';
      status = kExitRuntime;
      continue;
    }
    const ParameterSet* set = nullptr;
    for (const auto& s : sets)
      if (s.id == o.set_id) set = &s;
    const std::string base = a.out + ".set" + std::to_string(o.set_id);
    if (pgm) {
      export_image(*o.image, set->display, base + ".pgm", ImageFormat::Pgm8);
      out << "wrote " << base << ".pgm\n";
    }
    if (raw) {
      export_image(*o.image, set->display, base + ".raw", ImageFormat::RawF32);
      out << "wrote " << base << ".raw\n";
    }
    out << "set " << o.set_id << ": " << o.image->dims[0] << 'x' << o.image->dims[1] << 'x' << o.image->dims[2]
        << " points\n";
    for (const auto& t : o.image->stage_timings)
      out << "  " << t.stage << ' ' << t.ns << " ns (" << std::setprecision(4)
          << static_cast<double>(t.ns) / static_cast<double>(std::max<uint64_t>(o.image->points_beamformed, 1))
          << " ns/point)\n";
  }
  return status;
}

int cmd_bench(const std::string& spec, const std::string& method, uint32_t frames, unsigned workers,
              std::ostream& out, std::ostream& err) {
  BenchConfig c = parse_bench_config(spec);
  if (frames) c.frames = frames;
  const std::size_t need = bench_memory_estimate(c);
  const long pages = ::sysconf(_SC_PHYS_PAGES);
  const long page = ::sysconf(_SC_PAGE_SIZE);
  const double avail = pages > 0 && page > 0 ? static_cast<double>(pages) * static_cast<double>(page) : 0;
  if (avail > 0 && static_cast<double>(need) > 0.8 * avail) {
    err << "error: bench config '" << c.name << "' needs about " << need / (1u << 20) << " MiB but only "
        << static_cast<std::size_t>(avail) / (1u << 20) << " MiB are installed; try --config small\n";
    return kExitRuntime;
  }

  const double fs = 20e6, fd = 5e6, speed = 1540.0;
  const double pitch = speed / fd;
  AcquisitionDescriptor d;
  d.sample_count = c.samples;
  d.channel_count = c.channels;
  d.transmit_count = c.transmits;
  d.format = SampleFormat::Int16;
  d.sampling_freq = fs;
  d.demodulation_freq = fd;
  d.sound_speed = speed;
  d.channel_map = identity_channel_map(c.channels);
  ArrayGeometry g = ArrayGeometry::centered(1, c.channels, pitch, pitch);
  if (method == "forces") {
    d.acquisition_mode = AcquisitionMode::Forces;
    if (c.transmits != c.channels) {
      g = ArrayGeometry::centered(c.transmits, c.channels, pitch, pitch);
      d.transmit_rows = true;
    }
  } else if (method == "hercules") {
    d.acquisition_mode = AcquisitionMode::Hercules;
    g = ArrayGeometry::centered(c.transmits, c.channels, pitch, pitch);
  } else if (method == "tpw") {
    d.acquisition_mode = AcquisitionMode::Tpw;
    for (uint32_t i = 0; i < c.transmits; ++i) {
      const double a = (c.transmits == 1 ? 0.0 : -15.0 + 30.0 * i / (c.transmits - 1.0)) * std::numbers::pi / 180;
      d.transmit_models.emplace_back(PlaneTransmit{{std::sin(a), 0, std::cos(a)}});
    }
  } else {
    throw std::invalid_argument("bench method must be forces, hercules or tpw");
  }

  RfFrame frame;
  frame.descriptor = d;
  frame.data = make_sample_buffer(d.format, d.total_samples());
  std::mt19937 rng(1234);
  std::uniform_int_distribution<int> dist(-2000, 2000);
  for (auto& v : std::get<std::vector<int16_t>>(frame.data)) v = static_cast<int16_t>(dist(rng));

  ParameterSet set;
  set.beamform = default_beamform(d, g);
  set.beamform.points = {c.image_x, 1, c.image_z};
  set.beamform.interpolation = c.interpolation;
  set.beamform.filter.kind = FilterSpec::Kind::MatchedChirp;
  set.beamform.filter.tap_count = c.filter_taps;
  set.beamform.filter.chirp = ChirpSpec{3e6, 7e6, (c.filter_taps - 1) / fs};

  PipelineConfig config;
  config.geometry = g;
  config.sets = {set};
  config.workers = workers;
  config.slots = 2;
  config.slot_capacity_bytes = d.payload_bytes();
  Pipeline pipeline(config);

  out << "# config=" << c.name << " method=" << method << " input_samples=" << c.samples << " channels=" << c.channels
      << " emissions=" << c.transmits << " total_samples=" << d.total_samples()
      << " interpolation=" << to_string(c.interpolation) << " filter_taps=" << c.filter_taps
      << " points=" << c.image_x << "x" << c.image_z << " frames=" << c.frames << " workers=" << workers << '\n';
  for (uint32_t i = 0; i < c.frames; ++i) {
    pipeline.submit_frame(frame);
    const FrameResult r = pipeline.process_next();
    for (const auto& o : r.outputs)
      if (!o.image) {
        err << "error: stage " << o.failed_stage << ": " << o.error << '\n';
        return kExitRuntime;
      }
  }
  print_timings(out, pipeline.timings(), set.beamform.point_count());
  return kExitOk;
}

struct ServeArgs {
  std::string listen = "127.0.0.1:8080";
  std::string source = "simulator";
  std::string params;
  double rate = 10.0;
  double duration = 0;
  unsigned workers = 1;
};

int cmd_serve(const ServeArgs& a, const SimulationSetup& sim, std::ostream& out, std::ostream& err) {
  const auto colon = a.listen.rfind(':');
  if (colon == std::string::npos) throw CLI::ValidationError("--listen", "expected addr:port");
  const std::string host = a.listen.substr(0, colon);
  const uint32_t port = to_u32(a.listen.substr(colon + 1), "port");
  if (port > 65535) throw CLI::ValidationError("--listen", "port out of range");

  EngineConfig ec;
  ec.rate_hz = a.rate;
  ArrayGeometry geometry;
  AcquisitionDescriptor descriptor;
  if (a.source.rfind("dataset:", 0) == 0) {
    Dataset ds = read_dataset(a.source.substr(8));
    geometry = ds.geometry;
    descriptor = ds.frame.descriptor;
    ec.source = dataset_loop_source(std::move(ds));
  } else if (a.source == "simulator" || a.source == "simulator:animate") {
    const SimulationPlan plan = plan_simulation(sim);
    LiveSimulatorConfig lc;
    lc.phantom = plan.phantom;
    lc.geometry = plan.geometry;
    lc.descriptor = plan.descriptor;
    lc.excitation = plan.excitation;
    lc.options = plan.options;
    lc.animate = a.source == "simulator:animate";
    lc.rate_hz = a.rate > 0 ? a.rate : 10.0;
    geometry = plan.geometry;
    descriptor = plan.descriptor;
    ec.source = simulator_source(lc);
  } else {
    throw CLI::ValidationError("--source", "expected dataset:<file>, simulator or simulator:animate");
  }
  ec.descriptor_hint = descriptor;
  ec.pipeline.geometry = geometry;
  ec.pipeline.workers = a.workers;
  ec.pipeline.slot_capacity_bytes = std::max<std::size_t>(descriptor.payload_bytes(), 1);
  if (!a.params.empty()) {
    ec.pipeline.sets = read_params(a.params);
  } else {
    ParameterSet s;
    s.beamform = default_beamform(descriptor, geometry);
    ec.pipeline.sets = {s};
  }
  ec.log = [&err](std::string_view m) { err << m << '\n'; };

  Engine engine(std::move(ec));
  WebSocketServer server(engine, host, static_cast<uint16_t>(port));
  out << "listening on " << host << ':' << server.port() << '\n' << std::flush;
  engine.start();

  g_interrupted = false;
  auto prev_int = std::signal(SIGINT, on_signal);
  auto prev_term = std::signal(SIGTERM, on_signal);
  const auto start = std::chrono::steady_clock::now();
  while (!g_interrupted) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (a.duration > 0 && std::chrono::steady_clock::now() - start >= std::chrono::duration<double>(a.duration)) break;
  }
  std::signal(SIGINT, prev_int);
  std::signal(SIGTERM, prev_term);
  server.stop();
  engine.stop();
  out << "frames ingested " << engine.frames_ingested() << ", images emitted " << engine.images_emitted() << '\n';
  return kExitOk;
}

void add_simulation_options(CLI::App* cmd, SimulationSetup& s, std::string& mode, std::string& format) {
  cmd->add_option("--phantom", s.phantom, "builtin:point, builtin:grid or a scatterer file");
  cmd->add_option("--mode", mode, "forces, uforces, hercules, vls, tpw, flash or rawsa");
  cmd->add_option("--elements", s.elements, "array columns (receive channels)");
  cmd->add_option("--rows", s.rows, "array rows (0: 1, or square for hercules)");
  cmd->add_option("--pitch", s.pitch, "element pitch in meters (0: one wavelength)");
  cmd->add_option("--fc", s.center_freq, "center frequency in Hz");
  cmd->add_option("--fs", s.sampling_freq, "sampling frequency in Hz");
  cmd->add_option("--excitation", s.excitation, "gaussian[:bw] or chirp[:f0,f1,duration]");
  cmd->add_option("--format", format, "int16, int16_complex, float32 or float32_complex");
  cmd->add_option("--samples", s.samples, "samples per channel (0: fit the phantom)");
  cmd->add_option("--transmits", s.transmits, "transmit count for uforces, vls and tpw");
  cmd->add_option("--noise", s.noise, "additive noise rms before amplitude scaling");
  cmd->add_option("--seed", s.seed, "noise seed");
  cmd->add_option("--amplitude", s.amplitude, "output scale (0: 100 for integer formats, 1 for float)");
}

void resolve_simulation_enums(SimulationSetup& s, const std::string& mode, const std::string& format) {
  if (!mode.empty()) {
    const auto m = parse_acquisition_mode(mode);
    if (!m) throw CLI::ValidationError("--mode", "unknown acquisition mode '" + mode + "'");
    s.mode = *m;
  }
  if (!format.empty()) {
    const auto f = parse_sample_format(format);
    if (!f) throw CLI::ValidationError("--format", "unknown sample format '" + format + "'");
    s.format = *f;
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Row-column array beamforming toolkit", "rcbf"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rcbf 1.0");

  SimulationSetup sim;
  std::string sim_mode, sim_format, sim_out;
  unsigned workers = 1;
  auto* simulate = app.add_subcommand("simulate", "write a simulated dataset");
  add_simulation_options(simulate, sim, sim_mode, sim_format);
  simulate->add_option("--out", sim_out, "dataset path")->required();
  simulate->add_option("--workers", workers, "worker threads")->check(CLI::Range(1u, 256u));

  BeamformArgs bf;
  auto* beamform = app.add_subcommand("beamform", "reconstruct images from a dataset");
  beamform->add_option("--in", bf.in, "dataset path")->required();
  beamform->add_option("--params", bf.params, "parameter file");
  beamform->add_option("--out", bf.out, "output prefix")->required();
  beamform->add_option("--export", bf.exported, "pgm, raw or both")->check(CLI::IsMember({"pgm", "raw", "both"}));
  beamform->add_option("--display", bf.display, "log:<dB> or power:<threshold>");
  beamform->add_option("--workers", bf.workers, "worker threads")->check(CLI::Range(1u, 256u));

  std::string bench_config = "small", bench_method = "forces";
  uint32_t bench_frames = 0;
  unsigned bench_workers = 1;
  auto* bench = app.add_subcommand("bench", "per-stage throughput report (CSV)");
  bench->add_option("--config", bench_config, "table3, small or custom:samples,channels,transmits,x,z,taps");
  bench->add_option("--method", bench_method, "forces, hercules or tpw")
      ->check(CLI::IsMember({"forces", "hercules", "tpw"}));
  bench->add_option("--frames", bench_frames, "frames to average (0: config default)");
  bench->add_option("--workers", bench_workers, "worker threads")->check(CLI::Range(1u, 256u));

  ServeArgs sv;
  SimulationSetup serve_sim;
  serve_sim.phantom = "builtin:grid";
  std::string serve_mode, serve_format;
  auto* serve = app.add_subcommand("serve", "stream images to viewers over websocket");
  serve->add_option("--listen", sv.listen, "addr:port");
  serve->add_option("--source", sv.source, "dataset:<file>, simulator or simulator:animate");
  serve->add_option("--rate", sv.rate, "frames per second");
  serve->add_option("--params", sv.params, "parameter file");
  serve->add_option("--duration", sv.duration, "stop after this many seconds (0: until interrupted)");
  serve->add_option("--workers", sv.workers, "worker threads")->check(CLI::Range(1u, 256u));
  add_simulation_options(serve, serve_sim, serve_mode, serve_format);

  try {
    app.parse(argc, argv);
    if (simulate->parsed()) {
      resolve_simulation_enums(sim, sim_mode, sim_format);
      sim.workers = workers;
      return cmd_simulate(sim, sim_out, out);
    }
    if (beamform->parsed()) return cmd_beamform(bf, out, err);
    if (bench->parsed()) {
      try {
        parse_bench_config(bench_config);
      } catch (const std::invalid_argument& e) {
        throw CLI::ValidationError("--config", e.what());
      }
      return cmd_bench(bench_config, bench_method, bench_frames, bench_workers, out, err);
    }
    if (serve->parsed()) {
      resolve_simulation_enums(serve_sim, serve_mode, serve_format);
      return cmd_serve(sv, serve_sim, out, err);
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const PipelineError& e) {
    err << "error: stage " << e.stage() << ": " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("rcbf");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace rcbf::cli
