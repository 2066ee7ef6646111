#include <charconv>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "rcbf/io.hpp"

namespace rcbf {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double to_double(std::string_view s) {
  s = trim(s);
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw std::invalid_argument("expected a number, got '" + std::string(s) + "'");
  return v;
}

uint32_t to_u32(std::string_view s) {
  s = trim(s);
  uint32_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw std::invalid_argument("expected a non-negative integer, got '" + std::string(s) + "'");
  return v;
}

bool to_bool(std::string_view s) {
  s = trim(s);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true or false, got '" + std::string(s) + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ec == std::errc() ? p : buf);
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

std::vector<double> to_doubles(std::string_view s, std::size_t n) {
  const auto parts = split(s, ',');
  if (parts.size() != n) throw std::invalid_argument("expected " + std::to_string(n) + " comma-separated numbers");
  std::vector<double> out;
  for (auto p : parts) out.push_back(to_double(p));
  return out;
}

Vec3 to_vec3(std::string_view s) {
  const auto v = to_doubles(s, 3);
  return {v[0], v[1], v[2]};
}

std::string fmt_vec3(Vec3 v) { return fmt(v.x) + "," + fmt(v.y) + "," + fmt(v.z); }

Mat4 to_mat4(std::string_view s) {
  const auto v = to_doubles(s, 16);
  Mat4 m;
  std::copy(v.begin(), v.end(), m.m.begin());
  return m;
}

std::string fmt_mat4(const Mat4& m) {
  std::string out;
  for (std::size_t i = 0; i < 16; ++i) out += (i ? "," : "") + fmt(m.m[i]);
  return out;
}

std::vector<uint32_t> to_u32s(std::string_view s) {
  std::vector<uint32_t> out;
  for (auto p : split(s, ',')) out.push_back(to_u32(p));
  return out;
}

std::string fmt_u32s(const std::vector<uint32_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<double> to_double_list(std::string_view s) {
  std::vector<double> out;
  for (auto p : split(s, ',')) out.push_back(to_double(p));
  return out;
}

std::string fmt_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}

std::string_view filter_kind_name(FilterSpec::Kind k) {
  switch (k) {
    case FilterSpec::Kind::LowPass: return "lowpass";
    case FilterSpec::Kind::MatchedChirp: return "matched_chirp";
    case FilterSpec::Kind::MatchedWaveform: return "matched_waveform";
  }
  return "lowpass";
}

FilterSpec::Kind to_filter_kind(std::string_view s) {
  s = trim(s);
  if (s == "lowpass") return FilterSpec::Kind::LowPass;
  if (s == "matched_chirp") return FilterSpec::Kind::MatchedChirp;
  if (s == "matched_waveform") return FilterSpec::Kind::MatchedWaveform;
  throw std::invalid_argument("unknown filter kind '" + std::string(s) + "'");
}

using Getter = std::function<std::optional<std::string>(const ParameterSet&)>;
using Setter = std::function<void(ParameterSet&, std::string_view)>;

struct KeyDef {
  std::string name;
  Getter get;
  Setter set;
};

AcquisitionDescriptor& acq(ParameterSet& s) {
  if (!s.acquisition) s.acquisition = AcquisitionDescriptor{};
  return *s.acquisition;
}

ArrayGeometry& geo(ParameterSet& s) {
  if (!s.geometry) s.geometry = ArrayGeometry{};
  return *s.geometry;
}

template <class F>
Getter acq_get(F f) {
  return [f](const ParameterSet& s) -> std::optional<std::string> {
    if (!s.acquisition) return std::nullopt;
    return f(*s.acquisition);
  };
}

template <class F>
Getter geo_get(F f) {
  return [f](const ParameterSet& s) -> std::optional<std::string> {
    if (!s.geometry) return std::nullopt;
    return f(*s.geometry);
  };
}

const std::vector<KeyDef>& registry() {
  using D = const AcquisitionDescriptor&;
  using G = const ArrayGeometry&;
  using S = const ParameterSet&;
  using V = std::string_view;
  static const std::vector<KeyDef> keys = {
      {"acquisition.sample_count", acq_get([](D d) { return std::to_string(d.sample_count); }),
       [](ParameterSet& s, V v) { acq(s).sample_count = to_u32(v); }},
      {"acquisition.channel_count", acq_get([](D d) { return std::to_string(d.channel_count); }),
       [](ParameterSet& s, V v) { acq(s).channel_count = to_u32(v); }},
      {"acquisition.transmit_count", acq_get([](D d) { return std::to_string(d.transmit_count); }),
       [](ParameterSet& s, V v) { acq(s).transmit_count = to_u32(v); }},
      {"acquisition.format", acq_get([](D d) { return std::string(to_string(d.format)); }),
       [](ParameterSet& s, V v) {
         const auto f = parse_sample_format(trim(v));
         if (!f) throw std::invalid_argument("unknown sample format '" + std::string(v) + "'");
         acq(s).format = *f;
       }},
      {"acquisition.sampling_freq", acq_get([](D d) { return fmt(d.sampling_freq); }),
       [](ParameterSet& s, V v) { acq(s).sampling_freq = to_double(v); }},
      {"acquisition.demodulation_freq", acq_get([](D d) { return fmt(d.demodulation_freq); }),
       [](ParameterSet& s, V v) { acq(s).demodulation_freq = to_double(v); }},
      {"acquisition.sound_speed", acq_get([](D d) { return fmt(d.sound_speed); }),
       [](ParameterSet& s, V v) { acq(s).sound_speed = to_double(v); }},
      {"acquisition.time_offset", acq_get([](D d) { return fmt(d.time_offset); }),
       [](ParameterSet& s, V v) { acq(s).time_offset = to_double(v); }},
      {"acquisition.mode", acq_get([](D d) { return std::string(to_string(d.acquisition_mode)); }),
       [](ParameterSet& s, V v) {
         const auto m = parse_acquisition_mode(trim(v));
         if (!m) throw std::invalid_argument("unknown acquisition mode '" + std::string(v) + "'");
         acq(s).acquisition_mode = *m;
       }},
      {"acquisition.transmit_rows", acq_get([](D d) { return fmt_bool(d.transmit_rows); }),
       [](ParameterSet& s, V v) { acq(s).transmit_rows = to_bool(v); }},
      {"acquisition.receive_rows", acq_get([](D d) { return fmt_bool(d.receive_rows); }),
       [](ParameterSet& s, V v) { acq(s).receive_rows = to_bool(v); }},
      {"acquisition.quadrature_sampled", acq_get([](D d) { return fmt_bool(d.quadrature_sampled); }),
       [](ParameterSet& s, V v) { acq(s).quadrature_sampled = to_bool(v); }},
      {"acquisition.sparse_transmit_indices",
       [](S s) -> std::optional<std::string> {
         if (!s.acquisition || !s.acquisition->sparse_transmit_indices) return std::nullopt;
         return fmt_u32s(*s.acquisition->sparse_transmit_indices);
       },
       [](ParameterSet& s, V v) { acq(s).sparse_transmit_indices = to_u32s(v); }},
      {"acquisition.channel_map", acq_get([](D d) { return fmt_u32s(d.channel_map); }),
       [](ParameterSet& s, V v) { acq(s).channel_map = to_u32s(v); }},
      {"acquisition.transmit_models", acq_get([](D d) { return format_transmit_models(d.transmit_models); }),
       [](ParameterSet& s, V v) { acq(s).transmit_models = parse_transmit_models(v); }},

      {"geometry.row_pitch", geo_get([](G g) { return fmt(g.row_pitch); }),
       [](ParameterSet& s, V v) { geo(s).row_pitch = to_double(v); }},
      {"geometry.column_pitch", geo_get([](G g) { return fmt(g.column_pitch); }),
       [](ParameterSet& s, V v) { geo(s).column_pitch = to_double(v); }},
      {"geometry.row_count", geo_get([](G g) { return std::to_string(g.row_count); }),
       [](ParameterSet& s, V v) { geo(s).row_count = to_u32(v); }},
      {"geometry.column_count", geo_get([](G g) { return std::to_string(g.column_count); }),
       [](ParameterSet& s, V v) { geo(s).column_count = to_u32(v); }},
      {"geometry.global_to_array", geo_get([](G g) { return fmt_mat4(g.global_to_array); }),
       [](ParameterSet& s, V v) { geo(s).global_to_array = to_mat4(v); }},

      {"beamform.region_min", [](S s) { return std::optional(fmt_vec3(s.beamform.region_min)); },
       [](ParameterSet& s, V v) { s.beamform.region_min = to_vec3(v); }},
      {"beamform.region_max", [](S s) { return std::optional(fmt_vec3(s.beamform.region_max)); },
       [](ParameterSet& s, V v) { s.beamform.region_max = to_vec3(v); }},
      {"beamform.points",
       [](S s) {
         const auto& p = s.beamform.points;
         return std::optional(std::to_string(p[0]) + "," + std::to_string(p[1]) + "," + std::to_string(p[2]));
       },
       [](ParameterSet& s, V v) {
         const auto p = to_u32s(v);
         if (p.size() != 3) throw std::invalid_argument("expected Nx,Ny,Nz");
         s.beamform.points = {p[0], p[1], p[2]};
       }},
      {"beamform.output_transform", [](S s) { return std::optional(fmt_mat4(s.beamform.output_transform)); },
       [](ParameterSet& s, V v) { s.beamform.output_transform = to_mat4(v); }},
      {"beamform.f_number", [](S s) { return std::optional(fmt(s.beamform.f_number)); },
       [](ParameterSet& s, V v) { s.beamform.f_number = to_double(v); }},
      {"beamform.interpolation", [](S s) { return std::optional(std::string(to_string(s.beamform.interpolation))); },
       [](ParameterSet& s, V v) {
         const auto i = parse_interpolation(trim(v));
         if (!i) throw std::invalid_argument("unknown interpolation '" + std::string(v) + "'");
         s.beamform.interpolation = *i;
       }},
      {"beamform.transmit", [](S s) { return std::optional(format_transmit_models(s.beamform.transmit)); },
       [](ParameterSet& s, V v) { s.beamform.transmit = parse_transmit_models(v); }},
      {"beamform.coherence_weighting", [](S s) { return std::optional(fmt_bool(s.beamform.coherence_weighting)); },
       [](ParameterSet& s, V v) { s.beamform.coherence_weighting = to_bool(v); }},

      {"filter.kind", [](S s) { return std::optional(std::string(filter_kind_name(s.beamform.filter.kind))); },
       [](ParameterSet& s, V v) { s.beamform.filter.kind = to_filter_kind(v); }},
      {"filter.tap_count", [](S s) { return std::optional(std::to_string(s.beamform.filter.tap_count)); },
       [](ParameterSet& s, V v) { s.beamform.filter.tap_count = to_u32(v); }},
      {"filter.passband_fraction", [](S s) { return std::optional(fmt(s.beamform.filter.passband_fraction)); },
       [](ParameterSet& s, V v) { s.beamform.filter.passband_fraction = to_double(v); }},
      {"filter.chirp_f_start", [](S s) { return std::optional(fmt(s.beamform.filter.chirp.f_start)); },
       [](ParameterSet& s, V v) { s.beamform.filter.chirp.f_start = to_double(v); }},
      {"filter.chirp_f_end", [](S s) { return std::optional(fmt(s.beamform.filter.chirp.f_end)); },
       [](ParameterSet& s, V v) { s.beamform.filter.chirp.f_end = to_double(v); }},
      {"filter.chirp_duration", [](S s) { return std::optional(fmt(s.beamform.filter.chirp.duration)); },
       [](ParameterSet& s, V v) { s.beamform.filter.chirp.duration = to_double(v); }},
      {"filter.waveform", [](S s) { return std::optional(fmt_doubles(s.beamform.filter.waveform)); },
       [](ParameterSet& s, V v) { s.beamform.filter.waveform = to_double_list(v); }},
      {"filter.decimation_factor", [](S s) { return std::optional(std::to_string(s.beamform.decimation_factor)); },
       [](ParameterSet& s, V v) { s.beamform.decimation_factor = to_u32(v); }},

      {"display.mode", [](S s) { return std::optional(std::string(s.display.mode == DisplayMode::Log ? "log" : "power")); },
       [](ParameterSet& s, V v) {
         v = trim(v);
         if (v == "log") s.display.mode = DisplayMode::Log;
         else if (v == "power") s.display.mode = DisplayMode::Power;
         else throw std::invalid_argument("display mode must be log or power");
       }},
      {"display.dynamic_range_db", [](S s) { return std::optional(fmt(s.display.dynamic_range_db)); },
       [](ParameterSet& s, V v) { s.display.dynamic_range_db = to_double(v); }},
      {"display.power_threshold", [](S s) { return std::optional(fmt(s.display.power_threshold)); },
       [](ParameterSet& s, V v) { s.display.power_threshold = to_double(v); }},
  };
  return keys;
}

const KeyDef* find_key(std::string_view key) {
  for (const KeyDef& k : registry())
    if (k.name == key) return &k;
  return nullptr;
}

struct Assignment {
  std::string key;
  std::string value;
  std::size_t line;
};

void apply_at(ParameterSet& set, const Assignment& a) {
  try {
    apply_param(set, a.key, a.value);
  } catch (const std::invalid_argument& e) {
    throw ParamsError(a.line, e.what());
  }
}

}  // namespace

const std::vector<std::string>& param_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const KeyDef& k : registry()) out.push_back(k.name);
    return out;
  }();
  return names;
}

void apply_param(ParameterSet& set, std::string_view key, std::string_view value) {
  const KeyDef* k = find_key(trim(key));
  if (!k) throw std::invalid_argument("unknown key '" + std::string(trim(key)) + "'");
  try {
    k->set(set, value);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(k->name + ": " + e.what());
  }
}

std::string format_transmit_models(const std::vector<TransmitModel>& models) {
  std::string out;
  for (std::size_t i = 0; i < models.size(); ++i) {
    if (i) out += ";";
    const auto& m = models[i];
    if (const auto* e = std::get_if<ElementTransmit>(&m)) out += "element:" + std::to_string(e->index);
    else if (const auto* p = std::get_if<PlaneTransmit>(&m)) out += "plane:" + fmt_vec3(p->direction);
    else out += "vs:" + fmt_vec3(std::get<VirtualSourceTransmit>(m).focus);
  }
  return out;
}

std::vector<TransmitModel> parse_transmit_models(std::string_view text) {
  std::vector<TransmitModel> out;
  for (auto item : split(text, ';')) {
    const auto colon = item.find(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("transmit model needs kind:value");
    const auto kind = trim(item.substr(0, colon));
    const auto value = item.substr(colon + 1);
    if (kind == "element") out.emplace_back(ElementTransmit{to_u32(value)});
    else if (kind == "plane") out.emplace_back(PlaneTransmit{to_vec3(value)});
    else if (kind == "vs") out.emplace_back(VirtualSourceTransmit{to_vec3(value)});
    else throw std::invalid_argument("unknown transmit model '" + std::string(kind) + "'");
  }
  return out;
}

std::vector<ParameterSet> parse_params(std::string_view text) {
  std::vector<Assignment> base;
  std::vector<std::pair<uint32_t, std::vector<Assignment>>> blocks;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParamsError(line_no, "unterminated section header");
      const auto inner = trim(line.substr(1, line.size() - 2));
      if (inner.substr(0, 4) != "set " && inner.substr(0, 4) != "set\t")
        throw ParamsError(line_no, "expected [set N]");
      uint32_t id = 0;
      try {
        id = to_u32(inner.substr(4));
      } catch (const std::invalid_argument& e) {
        throw ParamsError(line_no, e.what());
      }
      for (const auto& b : blocks)
        if (b.first == id) throw ParamsError(line_no, "duplicate set " + std::to_string(id));
      blocks.push_back({id, {}});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParamsError(line_no, "expected key=value");
    Assignment a{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
    if (!find_key(a.key)) throw ParamsError(line_no, "unknown key '" + a.key + "'");
    (blocks.empty() ? base : blocks.back().second).push_back(std::move(a));
  }
  if (blocks.empty()) blocks.push_back({0, {}});
  std::vector<ParameterSet> sets;
  for (const auto& [id, assignments] : blocks) {
    ParameterSet s;
    s.id = id;
    for (const auto& a : base) apply_at(s, a);
    for (const auto& a : assignments) apply_at(s, a);
    sets.push_back(std::move(s));
  }
  return sets;
}

std::vector<std::pair<std::string, std::string>> param_values(const ParameterSet& set) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const KeyDef& k : registry())
    if (auto v = k.get(set)) out.emplace_back(k.name, *v);
  return out;
}

std::string serialize_params(const std::vector<ParameterSet>& sets) {
  std::ostringstream os;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (i) os << '\n';
    os << "[set " << sets[i].id << "]\n";
    for (const KeyDef& k : registry()) {
      if (auto v = k.get(sets[i])) os << k.name << '=' << *v << '\n';
    }
  }
  return os.str();
}

std::vector<ParameterSet> read_params(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_params(ss.str());
}

void write_params(const std::filesystem::path& path, const std::vector<ParameterSet>& sets) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot create " + path.string());
  out << serialize_params(sets);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace rcbf
