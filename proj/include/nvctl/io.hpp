#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "experiments.hpp"
#include "optimizer.hpp"
#include "propagation.hpp"
#include "spectrum.hpp"
#include "spin_model.hpp"

namespace nvctl {

using json = nlohmann::json;

namespace detail {

inline json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

inline std::optional<double> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_number()) throw FormatError("expected a number or null");
  return j.get<double>();
}

inline double number(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw FormatError(std::string("missing key '") + key + "'");
  if (!it->is_number()) throw FormatError(std::string("key '") + key + "' must be a number");
  return it->get<double>();
}

}  // namespace detail

// --- SystemParams ------------------------------------------------------------------

inline json to_json(const SystemParams& p) {
  return json{{"d_mhz", p.d_mhz},
              {"b_mt", p.b_mt},
              {"gamma_e", p.gamma_e},
              {"gamma_c", p.gamma_c},
              {"a_n", p.a_n},
              {"p_quad", p.p_quad},
              {"a_zz", p.a_zz},
              {"a_zx", p.a_zx},
              {"nu_e_override", detail::optional_to_json(p.nu_e_override)},
              {"nu_c_override", detail::optional_to_json(p.nu_c_override)},
              {"nu_n_override", detail::optional_to_json(p.nu_n_override)}};
}

// Missing keys keep their defaults; unknown keys are rejected.
inline SystemParams params_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("system parameters must be an object");
  SystemParams p;
  for (const auto& [key, v] : j.items()) {
    if (key == "d_mhz") p.d_mhz = detail::number(j, "d_mhz");
    else if (key == "b_mt") p.b_mt = detail::number(j, "b_mt");
    else if (key == "gamma_e") p.gamma_e = detail::number(j, "gamma_e");
    else if (key == "gamma_c") p.gamma_c = detail::number(j, "gamma_c");
    else if (key == "a_n") p.a_n = detail::number(j, "a_n");
    else if (key == "p_quad") p.p_quad = detail::number(j, "p_quad");
    else if (key == "a_zz") p.a_zz = detail::number(j, "a_zz");
    else if (key == "a_zx") p.a_zx = detail::number(j, "a_zx");
    else if (key == "nu_e_override") p.nu_e_override = detail::optional_from_json(v);
    else if (key == "nu_c_override") p.nu_c_override = detail::optional_from_json(v);
    else if (key == "nu_n_override") p.nu_n_override = detail::optional_from_json(v);
    else throw FormatError("unknown parameter key '" + key + "'");
  }
  p.validate();
  return p;
}

// --- PulseSequence -----------------------------------------------------------------

inline json to_json(const PulseSequence& s) {
  json segs = json::array();
  for (const auto& seg : s.segments) {
    if (const auto* p = std::get_if<Pulse>(&seg))
      segs.push_back({{"kind", "pulse"}, {"us", p->us}, {"phase_rad", p->phase_rad}});
    else
      segs.push_back({{"kind", "delay"}, {"us", std::get<Delay>(seg).us}});
  }
  return json{{"rabi_mhz", s.rabi_mhz}, {"segments", segs}};
}

// Values are taken verbatim; no phase wrapping on the way in.
inline PulseSequence sequence_from_json(const json& j) {
  if (!j.is_object() || !j.contains("segments") || !j["segments"].is_array())
    throw FormatError("pulse sequence needs a 'segments' array");
  PulseSequence s;
  s.rabi_mhz = detail::number(j, "rabi_mhz");
  for (const auto& seg : j["segments"]) {
    if (!seg.is_object() || !seg.contains("kind") || !seg["kind"].is_string())
      throw FormatError("segment without a kind");
    const std::string kind = seg["kind"].get<std::string>();
    if (kind == "delay")
      s.segments.emplace_back(Delay{detail::number(seg, "us")});
    else if (kind == "pulse")
      s.segments.emplace_back(Pulse{detail::number(seg, "us"), detail::number(seg, "phase_rad")});
    else
      throw FormatError("unknown segment kind '" + kind + "'");
  }
  s.validate();
  return s;
}

// --- results -----------------------------------------------------------------------

inline json to_json(const OptimResult& r) {
  return json{{"sequence", to_json(r.best_sequence)},
              {"genome", r.genome},
              {"fitness", r.fitness},
              {"fidelity", r.fidelity},
              {"robust_fidelity", detail::optional_to_json(r.robust_fidelity)},
              {"total_duration_us", r.total_duration},
              {"history", r.history},
              {"restart_best", r.restart_best},
              {"best_restart", r.best_restart},
              {"seed", r.seed}};
}

inline json to_json(const FidTrace& f) {
  return json{{"protocol", f.protocol}, {"tau_us", f.tau_us}, {"signal", f.signal}};
}

inline json to_json(const Spectrum& s) {
  return json{{"window", s.window},
              {"zerofill_factor", s.zerofill_factor},
              {"record_length_us", s.record_length_us},
              {"resolution_mhz", s.resolution()},
              {"freq_mhz", s.freq_mhz},
              {"amplitude", s.amplitude}};
}

inline json to_json(const PolarizationModel& m) {
  return json{{"c0", m.c0}, {"c1", m.c1}, {"c2", m.c2}, {"alpha", m.alpha}, {"beta", m.beta}, {"gamma", m.gamma}};
}

inline PolarizationModel polarization_model_from_json(const json& j) {
  if (!j.is_object()) throw FormatError("polarization model must be an object");
  PolarizationModel m;
  for (const auto& [key, v] : j.items()) {
    if (!v.is_number()) throw FormatError("model entry '" + key + "' must be a number");
    const double x = v.get<double>();
    if (key == "c0") m.c0 = x;
    else if (key == "c1") m.c1 = x;
    else if (key == "c2") m.c2 = x;
    else if (key == "alpha") m.alpha = x;
    else if (key == "beta") m.beta = x;
    else if (key == "gamma") m.gamma = x;
    else throw FormatError("unknown model key '" + key + "'");
  }
  m.validate();
  return m;
}

inline json to_json(const TableRow& r) {
  return json{{"table", r.table},       {"target", r.target},
              {"rabi_mhz", r.rabi_mhz}, {"n_pulses", r.n_pulses},
              {"mode", r.mode},         {"nu_c_mhz", r.nu_c_mhz},
              {"theta_minus_deg", r.theta_minus_deg}, {"fidelity", r.fidelity},
              {"duration_us", r.duration_us},         {"seed", r.seed}};
}

// --- CSV -----------------------------------------------------------------------------

// Shortest text that reads back to the same double.
inline std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvWriter& row(const std::vector<std::string>& cells) {
    if (cells.size() != header_.size()) throw DimensionMismatch("CSV row width differs from header");
    rows_.push_back(cells);
    return *this;
  }

  CsvWriter& row(const std::vector<double>& values) {
    std::vector<std::string> cells;
    cells.reserve(values.size());
    for (double v : values) cells.push_back(format_number(v));
    return row(cells);
  }

  std::string str() const {
    std::ostringstream os;
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << cells[i];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

inline std::string to_csv(const FidTrace& f) {
  CsvWriter w({"tau_us", "signal"});
  for (std::size_t i = 0; i < f.size(); ++i) w.row(std::vector<double>{f.tau_us[i], f.signal[i]});
  return w.str();
}

inline std::string to_csv(const Spectrum& s) {
  CsvWriter w({"freq_mhz", "amplitude"});
  for (std::size_t i = 0; i < s.size(); ++i) w.row(std::vector<double>{s.freq_mhz[i], s.amplitude[i]});
  return w.str();
}

inline std::string to_csv(const std::vector<TableRow>& rows) {
  CsvWriter w({"table", "target", "rabi_mhz", "n_pulses", "mode", "nu_c_mhz", "theta_minus_deg", "fidelity",
               "duration_us", "seed"});
  for (const auto& r : rows)
    w.row(std::vector<std::string>{r.table, r.target, format_number(r.rabi_mhz), std::to_string(r.n_pulses),
                                   r.mode, format_number(r.nu_c_mhz), format_number(r.theta_minus_deg),
                                   format_number(r.fidelity), format_number(r.duration_us),
                                   std::to_string(r.seed)});
  return w.str();
}

inline std::string history_csv(const OptimResult& r) {
  CsvWriter w({"generation", "fitness"});
  for (std::size_t i = 0; i < r.history.size(); ++i)
    w.row(std::vector<std::string>{std::to_string(i), format_number(r.history[i])});
  return w.str();
}

inline std::string to_csv(const std::vector<TrajectoryPoint>& traj) {
  CsvWriter w({"t_us", "electron_x", "electron_y", "electron_z", "carbon_x", "carbon_y", "carbon_z"});
  for (const auto& p : traj)
    w.row(std::vector<double>{p.t_us, p.electron.x, p.electron.y, p.electron.z, p.carbon.x, p.carbon.y, p.carbon.z});
  return w.str();
}

// Numeric columns by header name.
inline std::map<std::string, std::vector<double>> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("CSV is empty");
  std::vector<std::string> header;
  {
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) header.push_back(cell);
  }
  std::map<std::string, std::vector<double>> cols;
  for (const auto& h : header) cols[h];
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t k = 0;
    while (std::getline(ls, cell, ',')) {
      if (k >= header.size()) throw FormatError("too many cells on CSV line " + std::to_string(lineno));
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0) throw FormatError("non-numeric cell on CSV line " + std::to_string(lineno));
      cols[header[k++]].push_back(v);
    }
    if (k != header.size()) throw FormatError("short CSV line " + std::to_string(lineno));
  }
  return cols;
}

// --- files ---------------------------------------------------------------------------

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileMissing("cannot open '" + path.string() + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline PulseSequence read_sequence_file(const std::filesystem::path& path) {
  json j = read_json_file(path);
  // accept either a bare sequence or an optimizer result
  if (j.contains("sequence")) j = j["sequence"];
  return sequence_from_json(j);
}

inline FidTrace read_fid_csv(const std::filesystem::path& path) {
  const auto cols = parse_csv(read_text_file(path));
  const auto t = cols.find("tau_us"), s = cols.find("signal");
  if (t == cols.end() || s == cols.end()) throw FormatError("FID CSV needs tau_us and signal columns");
  return {"file", t->second, s->second};
}

}  // namespace nvctl
