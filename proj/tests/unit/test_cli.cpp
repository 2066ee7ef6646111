#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "rcbf/cli.hpp"
#include "rcbf/io.hpp"

using namespace rcbf;
namespace fs = std::filesystem;

namespace {
struct Run {
  int code;
  std::string out, err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir() {
  const fs::path p = fs::temp_directory_path() / ("rcbf_cli_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("phantom specs") {
  const Phantom point = cli::load_phantom("builtin:point");
  REQUIRE(point.scatterers.size() == 1);
  CHECK(point.scatterers[0].position.z == doctest::Approx(20e-3));
  CHECK(cli::load_phantom("builtin:grid").scatterers.size() == 9);
  const fs::path f = temp_dir() / "ph.txt";
  std::ofstream(f) << "# x y z r\n0 0 0.01\n0.001 0 0.02 0.5\n";
  const Phantom file = cli::load_phantom(f.string());
  REQUIRE(file.scatterers.size() == 2);
  CHECK(file.scatterers[1].reflectivity == 0.5);
  CHECK_THROWS(cli::load_phantom("builtin:banana"));
  CHECK_THROWS(cli::load_phantom((temp_dir() / "none.txt").string()));
}

TEST_CASE("excitation and display specs") {
  CHECK(std::get<GaussianPulse>(cli::parse_excitation("gaussian", 4e6)).center_freq == 4e6);
  CHECK(std::get<GaussianPulse>(cli::parse_excitation("gaussian:0.3", 4e6)).fractional_bandwidth == 0.3);
  const ChirpSpec c = std::get<ChirpSpec>(cli::parse_excitation("chirp:2e6,6e6,1e-5", 4e6));
  CHECK(c.f_start == 2e6);
  CHECK(c.duration == 1e-5);
  CHECK_THROWS(cli::parse_excitation("square", 4e6));
  CHECK(cli::parse_display("log:45").dynamic_range_db == 45);
  CHECK(cli::parse_display("power:0.2").mode == DisplayMode::Power);
  CHECK_THROWS(cli::parse_display("gamma:2"));
}

TEST_CASE("simulation planning defaults") {
  cli::SimulationSetup s;
  s.elements = 16;
  const cli::SimulationPlan p = cli::plan_simulation(s);
  CHECK(p.geometry.row_count == 1);
  CHECK(p.geometry.column_count == 16);
  CHECK(p.geometry.column_pitch == doctest::Approx(1540.0 / 5e6));
  CHECK(p.descriptor.transmit_count == 16);
  CHECK(p.descriptor.sample_count % 64 == 0);
  CHECK(p.options.amplitude == 100);
  CHECK(validate_descriptor(p.descriptor).empty());

  s.mode = AcquisitionMode::Hercules;
  s.elements = 8;
  const cli::SimulationPlan h = cli::plan_simulation(s);
  CHECK(h.geometry.row_count == 8);
  s.mode = AcquisitionMode::UForces;
  s.elements = 16;
  CHECK(cli::plan_simulation(s).descriptor.transmit_count == 4);
  s.mode = AcquisitionMode::Tpw;
  s.format = SampleFormat::Float32;
  const cli::SimulationPlan t = cli::plan_simulation(s);
  CHECK(t.descriptor.transmit_models.size() == 16);
  CHECK(t.options.amplitude == 1);
  s.mode = AcquisitionMode::Forces;
  s.elements = 12;
  CHECK_THROWS(cli::plan_simulation(s));
}

TEST_CASE("bench configs") {
  const cli::BenchConfig t = cli::parse_bench_config("table3");
  CHECK(t.samples == 2816);
  CHECK(t.channels == 128);
  CHECK(t.transmits == 128);
  CHECK(t.image_x == 1024);
  CHECK(t.filter_taps == 166);
  const cli::BenchConfig c = cli::parse_bench_config("custom:64,8,8,16,16,9");
  CHECK(c.samples == 64);
  CHECK(c.filter_taps == 9);
  CHECK_THROWS(cli::parse_bench_config("custom:1,2"));
  CHECK_THROWS(cli::parse_bench_config("huge"));
  CHECK(cli::bench_memory_estimate(t) > cli::bench_memory_estimate(cli::parse_bench_config("small")));
}

TEST_CASE("simulate then beamform") {
  const fs::path dir = temp_dir();
  const std::string data = (dir / "point.rcbf").string();
  Run r = run({"simulate", "--out", data, "--elements", "8", "--samples", "512"});
  REQUIRE(r.code == 0);
  const Dataset ds = read_dataset(data);
  CHECK(ds.frame.descriptor.channel_count == 8);
  CHECK(ds.frame.descriptor.sample_count == 512);

  const fs::path params = dir / "p.txt";
  std::ofstream(params) << "beamform.points = 8, 1, 12\nbeamform.region_min = -0.002, 0, 0.018\n"
                           "beamform.region_max = 0.002, 0, 0.022\n[set 0]\n[set 3]\ndisplay.mode = power\n";
  const std::string prefix = (dir / "img").string();
  r = run({"beamform", "--in", data, "--out", prefix, "--params", params.string(), "--export", "both"});
  REQUIRE(r.code == 0);
  CHECK(fs::exists(prefix + ".set0.pgm"));
  CHECK(fs::exists(prefix + ".set3.raw"));
  CHECK(read_raw_f32(prefix + ".set3.raw").dims == std::array<uint32_t, 3>{8, 1, 12});
  CHECK(r.out.find("das") != std::string::npos);
}

TEST_CASE("bench prints a csv report") {
  const Run r = run({"bench", "--config", "custom:64,8,8,8,8,9", "--frames", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("# config=", 0) == 0);
  CHECK(r.out.find("stage,ns,ns_per_point") != std::string::npos);
  CHECK(r.out.find("\ndas,") != std::string::npos);
  CHECK(run({"bench", "--config", "custom:64,8,8,8,8,9", "--method", "hercules", "--frames", "1"}).code == 0);
}

TEST_CASE("serve runs for a fixed duration") {
  const Run r = run({"serve", "--listen", "127.0.0.1:0", "--source", "simulator", "--elements", "8",
                     "--duration", "0.3", "--rate", "20"});
  CHECK(r.code == 0);
  CHECK(r.out.find("listening") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(run({}).code == cli::kExitUsage);
  CHECK(run({"frobnicate"}).code == cli::kExitUsage);
  CHECK(run({"simulate"}).code == cli::kExitUsage);
  CHECK(run({"beamform", "--in", "x", "--out", "y", "--export", "jpeg"}).code == cli::kExitUsage);
  CHECK(run({"beamform", "--in", (temp_dir() / "missing.rcbf").string(), "--out", "y"}).code == cli::kExitRuntime);
  CHECK(run({"simulate", "--out", (temp_dir() / "x.rcbf").string(), "--mode", "forces", "--elements", "12"}).code ==
        cli::kExitRuntime);
  CHECK(run({"--help"}).code == cli::kExitOk);
}
