#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "errors.hpp"
#include "experiments.hpp"
#include "fidelity.hpp"
#include "io.hpp"
#include "optimizer.hpp"
#include "propagation.hpp"
#include "spin_model.hpp"

namespace nvctl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

struct UsageError : Error {
  using Error::Error;
};

// Every key a config may set. Files and --set can only touch keys present here.
inline json default_config() {
  return json::parse(R"({
    "seed": 20190101,
    "out": "out",
    "params": {},
    "ga": {
      "population": 100, "generations": 300, "crossover_rate": 0.8, "mutation_rate": 0.15,
      "mutation_sigma": 0.05, "elite_count": 2, "tournament_size": 3, "restarts": 8, "workers": 1
    },
    "esr": {"linewidth_mhz": 0.02, "lo_mhz": -0.4, "hi_mhz": 0.4, "points": 1601},
    "optimize": {
      "target": "u_p", "n_pulses": 3, "rabi_mhz": 0.5, "mode": "free", "order": "pulse_first",
      "gate_mode": "strict", "duration_penalty": 0.0, "max_duration_us": "auto",
      "t_max_us": null, "tau_max_us": 10.0,
      "robust": {"enabled": false, "lo": 0.47, "hi": 0.53, "samples": 5}
    },
    "fid": {
      "protocol": "uc", "source": "ideal", "step_us": 1.0, "points": null, "polarization": 1.0,
      "sequence_uc": null, "sequence_uc_dagger": null, "sequence_u90": null, "sequence_ut": null,
      "rabi_ut_mhz": 0.5
    },
    "spectrum": {"input": null, "window": "hann", "zerofill": 4},
    "bloch": {"sequence": null, "initial": "rho_0", "dt_us": 0.01},
    "polarize": {"model": {}, "d_max_us": 50.0, "points": 501, "sequence": null},
    "fit": {
      "kind": "polarization", "input": null, "nu_mhz": null,
      "initial": {}, "b0": 0.13, "b1": 0.11, "bm1": 0.20, "f": 0.7
    },
    "tables": {"which": ["I", "II", "III"]}
  })");
}

namespace detail {

// Objects whose contents are free-form and validated by their own parsers.
inline bool free_form(const std::string& path) {
  return path == "params" || path == "polarize.model" || path == "fit.initial";
}

inline void check_known(const json& defaults, const json& cfg, const std::string& path) {
  if (!cfg.is_object() || free_form(path)) return;
  if (!defaults.is_object()) throw UsageError("config key '" + path + "' is not an object");
  for (const auto& [key, v] : cfg.items()) {
    const std::string sub = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) throw UsageError("unknown config key '" + sub + "'");
    if (defaults[key].is_object()) check_known(defaults[key], v, sub);
  }
}

inline json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return json(text);
  }
}

}  // namespace detail

// key=value with a dotted key; the value is read as JSON, or as a plain string.
inline void apply_override(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  json* node = &cfg;
  std::string path;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw UsageError("empty component in key '" + key + "'");
    path += (path.empty() ? "" : ".") + part;
    if (!node->is_object()) throw UsageError("'" + path + "' does not name a config section");
    if (dot == std::string::npos) {
      (*node)[part] = detail::parse_value(assignment.substr(eq + 1));
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
  detail::check_known(default_config(), cfg, "");
}

inline json resolve_config(const std::string& config_path, const std::vector<std::string>& sets,
                           const std::optional<std::uint64_t>& seed, const std::optional<std::string>& out) {
  json cfg = default_config();
  if (!config_path.empty()) {
    const json file = read_json_file(config_path);
    if (!file.is_object()) throw UsageError("config file must hold a JSON object");
    detail::check_known(cfg, file, "");
    cfg.merge_patch(file);
  }
  for (const auto& s : sets) apply_override(cfg, s);
  if (seed) cfg["seed"] = *seed;
  if (out) cfg["out"] = *out;
  return cfg;
}

// --- config accessors -----------------------------------------------------------------

namespace detail {

template <class T>
T get(const json& cfg, const std::string& dotted) {
  const json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw UsageError("missing config key '" + dotted + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  try {
    return node->get<T>();
  } catch (const json::exception&) {
    throw UsageError("config key '" + dotted + "' has the wrong type");
  }
}

inline bool is_null(const json& cfg, const std::string& section, const std::string& key) {
  return cfg.at(section).at(key).is_null();
}

inline GaConfig ga_config(const json& cfg) {
  GaConfig ga;
  ga.population = get<std::size_t>(cfg, "ga.population");
  ga.generations = get<std::size_t>(cfg, "ga.generations");
  ga.crossover_rate = get<double>(cfg, "ga.crossover_rate");
  ga.mutation_rate = get<double>(cfg, "ga.mutation_rate");
  ga.mutation_sigma = get<double>(cfg, "ga.mutation_sigma");
  ga.elite_count = get<std::size_t>(cfg, "ga.elite_count");
  ga.tournament_size = get<std::size_t>(cfg, "ga.tournament_size");
  ga.restarts = get<std::size_t>(cfg, "ga.restarts");
  ga.workers = get<std::size_t>(cfg, "ga.workers");
  ga.seed = get<std::uint64_t>(cfg, "seed");
  try {
    ga.validate();
  } catch (const InvalidParams& e) {
    throw UsageError(e.what());
  }
  return ga;
}

inline ControlProblem control_problem(const json& cfg, const SystemParams& p) {
  const auto target = get<std::string>(cfg, "optimize.target");
  const auto rabi = get<double>(cfg, "optimize.rabi_mhz");
  const auto mode = get<std::string>(cfg, "optimize.mode");
  if (mode != "free" && mode != "switched180") throw UsageError("optimize.mode must be free or switched180");
  Target t;
  try {
    t = build_target(target, p, rabi);
  } catch (const UnknownTarget& e) {
    throw UsageError(e.what());
  }
  auto prob = ControlProblem::make(p, std::move(t), get<std::size_t>(cfg, "optimize.n_pulses"), rabi,
                                   mode == "free" ? ControlMode::free_angles : ControlMode::switched180);
  const auto order = get<std::string>(cfg, "optimize.order");
  if (order != "pulse_first" && order != "delay_first")
    throw UsageError("optimize.order must be pulse_first or delay_first");
  prob.order = order == "pulse_first" ? SegmentOrder::pulse_first : SegmentOrder::delay_first;
  const auto gm = get<std::string>(cfg, "optimize.gate_mode");
  if (gm != "strict" && gm != "relaxed") throw UsageError("optimize.gate_mode must be strict or relaxed");
  prob.gate_mode = gm == "strict" ? GateMode::strict : GateMode::relaxed;
  prob.duration_penalty = get<double>(cfg, "optimize.duration_penalty");
  const json& cap = cfg["optimize"]["max_duration_us"];
  if (cap.is_string()) {
    if (cap.get<std::string>() != "auto") throw UsageError("optimize.max_duration_us must be a number, null or auto");
    prob.max_duration_us = default_duration_cap(target);
  } else if (!cap.is_null()) {
    prob.max_duration_us = get<double>(cfg, "optimize.max_duration_us");
  }
  if (!is_null(cfg, "optimize", "t_max_us")) prob.bounds.t_max_us = get<double>(cfg, "optimize.t_max_us");
  prob.bounds.tau_max_us = get<double>(cfg, "optimize.tau_max_us");
  if (get<bool>(cfg, "optimize.robust.enabled"))
    prob.robustness = RobustnessRange{get<double>(cfg, "optimize.robust.lo"), get<double>(cfg, "optimize.robust.hi"),
                                      get<std::size_t>(cfg, "optimize.robust.samples")};
  try {
    prob.validate();
  } catch (const InvalidParams& e) {
    throw UsageError(e.what());
  }
  return prob;
}

inline std::vector<double> fid_grid(const json& cfg, const std::string& protocol) {
  const double step = get<double>(cfg, "fid.step_us");
  std::size_t n = protocol == "uc_prime" ? 300 : 200;
  if (!is_null(cfg, "fid", "points")) n = get<std::size_t>(cfg, "fid.points");
  if (!(step > 0.0) || n < 2) throw UsageError("fid grid needs step_us > 0 and at least 2 points");
  return uniform_grid(step, n);
}

inline PulseSequence sequence_at(const json& cfg, const std::string& key) {
  const std::string section = key.substr(0, key.find('.'));
  const std::string leaf = key.substr(key.find('.') + 1);
  if (is_null(cfg, section, leaf)) throw FileMissing("config key '" + key + "' must name a sequence file");
  return read_sequence_file(get<std::string>(cfg, key));
}

inline FidTrace compute_fid(const json& cfg, const SystemParams& p) {
  const auto protocol = get<std::string>(cfg, "fid.protocol");
  const auto source = get<std::string>(cfg, "fid.source");
  if (source != "ideal" && source != "sequence" && source != "analytic")
    throw UsageError("fid.source must be ideal, sequence or analytic");
  const auto tau = fid_grid(cfg, protocol);
  if (protocol == "uc" || protocol == "uc_prime") {
    const bool prime = protocol == "uc_prime";
    if (source == "analytic") return analytic_fid(prime ? FidKind::uc_prime : FidKind::uc, p, tau);
    if (source == "ideal") {
      const Matrix uc = ideal_coherence_unitary(p);
      return prime ? fid_uc_prime_unitary(p, uc, uc.adjoint(), tau) : fid_uc_unitary(p, uc, uc.adjoint(), tau);
    }
    const auto a = sequence_at(cfg, "fid.sequence_uc"), b = sequence_at(cfg, "fid.sequence_uc_dagger");
    return prime ? fid_uc_prime(p, a, b, tau) : fid_uc(p, a, b, tau);
  }
  ElectronLevel level;
  if (protocol == "u90_ms0") level = ElectronLevel::ms0;
  else if (protocol == "u90_ms-1") level = ElectronLevel::ms_minus;
  else if (protocol == "u90_ms+1") level = ElectronLevel::ms_plus;
  else throw UsageError("unknown fid protocol '" + protocol + "'");
  if (source == "analytic") throw UsageError("no closed form for the U_90 protocols; use ideal or sequence");
  const double pol = get<double>(cfg, "fid.polarization");
  if (source == "ideal") return fid_u90(p, level, U90Readout::ideal(), tau, pol);
  const auto u90 = sequence_at(cfg, "fid.sequence_u90");
  const PulseSequence ut = is_null(cfg, "fid", "sequence_ut") ? ut_sequence(p, get<double>(cfg, "fid.rabi_ut_mhz"))
                                                              : sequence_at(cfg, "fid.sequence_ut");
  return fid_u90(p, level, u90, ut, tau, pol);
}

}  // namespace detail

// --- commands -------------------------------------------------------------------------

struct RunContext {
  json config;
  std::filesystem::path out;
  SystemParams params;
  std::vector<std::string> outputs;
  json summary = json::object();

  void write(const std::string& name, const std::string& text) {
    write_text_file(out / name, text);
    outputs.push_back(name);
  }
  void write(const std::string& name, const json& j) {
    write_json_file(out / name, j);
    outputs.push_back(name);
  }
};

inline void cmd_angles(RunContext& ctx) {
  const auto& p = ctx.params;
  const auto f = nuclear_frequencies(p);
  json j{{"nu_c_mhz", f.nu_c}, {"nu_minus_mhz", f.nu_minus}, {"nu_plus_mhz", f.nu_plus}};
  for (Branch b : {Branch::minus, Branch::plus}) {
    const char* key = b == Branch::minus ? "theta_minus_deg" : "theta_plus_deg";
    try {
      j[key] = quantization_angle(p, b);
    } catch (const DegenerateAxis&) {
      j[key] = nullptr;
    }
  }
  j["params"] = to_json(p);
  ctx.write("angles.json", j);
  ctx.summary = j;
  std::cout << "nu_C = " << format_number(f.nu_c) << " MHz\n"
            << "nu_- = " << format_number(f.nu_minus) << " MHz\n"
            << "nu_+ = " << format_number(f.nu_plus) << " MHz\n"
            << "theta_- = " << j["theta_minus_deg"].dump() << " deg\n"
            << "theta_+ = " << j["theta_plus_deg"].dump() << " deg\n";
}

inline void cmd_esr(RunContext& ctx) {
  const auto& cfg = ctx.config;
  using detail::get;
  const auto grid = linspace(get<double>(cfg, "esr.lo_mhz"), get<double>(cfg, "esr.hi_mhz"),
                             get<std::size_t>(cfg, "esr.points"));
  const double width = get<double>(cfg, "esr.linewidth_mhz");
  CsvWriter lines({"branch", "offset_mhz", "probability"});
  for (Branch b : {Branch::minus, Branch::plus}) {
    const auto ls = esr_lines(ctx.params, b);
    const std::string tag = b == Branch::minus ? "-1" : "+1";
    for (const auto& l : ls) lines.row(std::vector<std::string>{tag, format_number(l.offset_mhz), format_number(l.probability)});
    const Spectrum s = esr_spectrum(ls, width, grid);
    ctx.write("esr_" + std::string(b == Branch::minus ? "minus" : "plus") + ".csv", to_csv(s));
    ctx.summary[b == Branch::minus ? "maxima_minus" : "maxima_plus"] = local_maxima(s).size();
  }
  ctx.write("esr_lines.csv", lines.str());
}

inline void cmd_optimize(RunContext& ctx) {
  const auto prob = detail::control_problem(ctx.config, ctx.params);
  const auto ga = detail::ga_config(ctx.config);
  const OptimResult r = optimize(prob, ga);
  ctx.write("result.json", to_json(r));
  ctx.write("sequence.json", to_json(r.best_sequence));
  ctx.write("history.csv", history_csv(r));
  ctx.summary = {{"fidelity", r.fidelity},
                 {"robust_fidelity", r.robust_fidelity ? json(*r.robust_fidelity) : json(nullptr)},
                 {"total_duration_us", r.total_duration}};
  std::cout << "fidelity " << format_number(r.fidelity) << ", duration " << format_number(r.total_duration)
            << " us\n";
}

inline void cmd_fid(RunContext& ctx) {
  const FidTrace f = detail::compute_fid(ctx.config, ctx.params);
  ctx.write("fid.csv", to_csv(f));
  ctx.write("fid.json", to_json(f));
  ctx.summary = {{"protocol", f.protocol}, {"points", f.size()}};
}

inline void cmd_spectrum(RunContext& ctx) {
  const auto& cfg = ctx.config;
  FidTrace f;
  if (detail::is_null(cfg, "spectrum", "input")) {
    f = detail::compute_fid(cfg, ctx.params);
    ctx.write("fid.csv", to_csv(f));
  } else {
    f = read_fid_csv(detail::get<std::string>(cfg, "spectrum.input"));
  }
  const Spectrum s = spectrum_from_fid(f, Window::parse(detail::get<std::string>(cfg, "spectrum.window")),
                                       detail::get<int>(cfg, "spectrum.zerofill"));
  ctx.write("spectrum.csv", to_csv(s));
  json meta = to_json(s);
  meta.erase("freq_mhz");
  meta.erase("amplitude");
  json peaks = json::array();
  for (auto i : local_maxima(s, 0.2)) peaks.push_back({{"freq_mhz", s.freq_mhz[i]}, {"amplitude", s.amplitude[i]}});
  meta["peaks"] = peaks;
  meta["protocol"] = f.protocol;
  ctx.write("spectrum.json", meta);
  ctx.summary = meta;
}

inline void cmd_bloch(RunContext& ctx) {
  const auto& cfg = ctx.config;
  const PulseSequence seq = detail::sequence_at(cfg, "bloch.sequence");
  const auto init = detail::get<std::string>(cfg, "bloch.initial");
  DensityState rho;
  if (init == "rho_0") rho = initial_state();
  else if (init == "rho_c") rho = coherence_state(ctx.params);
  else if (init == "rho_p") rho = polarized_state();
  else throw UsageError("bloch.initial must be rho_0, rho_c or rho_p");
  const auto traj = trajectory(build_hamiltonian_subspace(ctx.params), seq, rho, detail::get<double>(cfg, "bloch.dt_us"));
  ctx.write("bloch.csv", to_csv(traj));
  const auto& last = traj.back();
  ctx.summary = {{"final_electron", {last.electron.x, last.electron.y, last.electron.z}},
                 {"final_carbon", {last.carbon.x, last.carbon.y, last.carbon.z}}};
}

inline void cmd_polarize(RunContext& ctx) {
  const auto& cfg = ctx.config;
  const PolarizationModel m = polarization_model_from_json(cfg["polarize"]["model"]);
  const double dmax = detail::get<double>(cfg, "polarize.d_max_us");
  const auto grid = linspace(0.0, dmax, detail::get<std::size_t>(cfg, "polarize.points"));
  const auto p = polarization_curve(m, grid);
  CsvWriter w({"d_us", "p"});
  for (std::size_t i = 0; i < grid.size(); ++i) w.row(std::vector<double>{grid[i], p[i]});
  ctx.write("polarization_curve.csv", w.str());
  const auto mx = polarization_maximum(m, 0.0, dmax);
  json j{{"model", to_json(m)}, {"maximum", {{"d_us", mx.d_us}, {"p", mx.p}}}};
  if (!detail::is_null(cfg, "polarize", "sequence")) {
    const auto o = polarization_protocol_sim(ctx.params, detail::sequence_at(cfg, "polarize.sequence"));
    j["protocol"] = {{"polarization", o.polarization}, {"peak_ratio", o.peak_ratio}};
  }
  ctx.write("polarize.json", j);
  ctx.summary = j;
}

inline void cmd_fit(RunContext& ctx) {
  const auto& cfg = ctx.config;
  const auto kind = detail::get<std::string>(cfg, "fit.kind");
  json j;
  if (kind == "fidelities") {
    const auto r = estimate_experimental_fidelities(detail::get<double>(cfg, "fit.b0"), detail::get<double>(cfg, "fit.b1"),
                                                    detail::get<double>(cfg, "fit.bm1"), detail::get<double>(cfg, "fit.f"));
    j = {{"f_180", r.f180}, {"f_u90", r.fu90}, {"f_uc", r.fuc}, {"unphysical", r.unphysical}};
    if (r.unphysical) std::cerr << "warning: fidelity estimate above 1\n";
  } else if (kind == "polarization" || kind == "sine") {
    if (detail::is_null(cfg, "fit", "input")) throw FileMissing("fit.input must name a CSV file");
    const auto cols = parse_csv(read_text_file(detail::get<std::string>(cfg, "fit.input")));
    auto column = [&](const char* name) {
      const auto it = cols.find(name);
      if (it == cols.end()) throw FormatError(std::string("input CSV lacks column '") + name + "'");
      return it->second;
    };
    if (kind == "polarization") {
      const auto r = fit_polarization(column("d_us"), column("p"), polarization_model_from_json(cfg["fit"]["initial"]));
      j = {{"model", to_json(r.model)}, {"residual_norm", r.residual_norm}, {"iterations", r.iterations},
           {"residual_history", r.residual_history}};
    } else {
      if (detail::is_null(cfg, "fit", "nu_mhz")) throw UsageError("fit.nu_mhz is required for a sine fit");
      const auto r = fit_fid_amplitude(column("tau_us"), column("signal"), detail::get<double>(cfg, "fit.nu_mhz"));
      j = {{"a", r.a}, {"b", r.b}, {"c", r.c}, {"residual_norm", r.residual_norm}};
    }
  } else {
    throw UsageError("fit.kind must be polarization, sine or fidelities");
  }
  ctx.write("fit.json", j);
  ctx.summary = j;
}

inline void cmd_tables(RunContext& ctx) {
  const auto which = detail::get<std::vector<std::string>>(ctx.config, "tables.which");
  const auto ga = detail::ga_config(ctx.config);
  for (const auto& w : which) {
    if (w != "I" && w != "II" && w != "III") throw UsageError("tables.which entries must be I, II or III");
    const auto rows = reproduce_tables(w, ctx.params, ga);
    ctx.write("table_" + w + ".csv", to_csv(rows));
    json arr = json::array();
    for (const auto& r : rows) arr.push_back(to_json(r));
    ctx.summary[w] = arr;
    for (const auto& r : rows)
      std::cout << "table " << r.table << "  " << r.target << "  rabi " << r.rabi_mhz << "  n " << r.n_pulses << "  "
                << r.mode << "  F " << format_number(r.fidelity) << "  T " << format_number(r.duration_us) << " us\n";
  }
}

// Parses arguments, runs one subcommand and returns the process exit code.
inline int run_cli(int argc, char** argv) {
  CLI::App app{"Indirect control of a 13C spin coupled to an NV center"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--set", sets, "dotted key=value override, repeatable");
  app.add_option("--seed", seed, "random seed");
  app.add_option("--out", out, "output directory");

  using Handler = void (*)(RunContext&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"angles", "quantization angles and nuclear frequencies", cmd_angles},
      {"esr", "ESR line positions, probabilities and rendered spectra", cmd_esr},
      {"optimize", "genetic pulse-sequence optimization", cmd_optimize},
      {"fid", "13C free-induction-decay trace", cmd_fid},
      {"spectrum", "spectrum of an FID trace", cmd_spectrum},
      {"bloch", "Bloch-sphere trajectory of a sequence", cmd_bloch},
      {"polarize", "polarization build-up curve and protocol", cmd_polarize},
      {"fit", "polarization, sinusoid and fidelity fits", cmd_fit},
      {"tables", "batch optimization tables", cmd_tables}};
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    RunContext ctx;
    ctx.config = resolve_config(config_path, sets, seed, out);
    ctx.out = detail::get<std::string>(ctx.config, "out");
    try {
      ctx.params = params_from_json(ctx.config["params"]);
    } catch (const Error& e) {
      throw UsageError(std::string("params: ") + e.what());
    }
    ctx.write("config.json", ctx.config);
    std::string name;
    for (const auto& [cname, help, fn] : commands) {
      if (app.got_subcommand(cname)) {
        name = cname;
        fn(ctx);
      }
    }
    json manifest{{"command", name}, {"seed", ctx.config["seed"]}, {"config", ctx.config}, {"summary", ctx.summary}};
    ctx.outputs.push_back("manifest.json");
    manifest["outputs"] = ctx.outputs;
    write_json_file(ctx.out / "manifest.json", manifest);
    return kExitOk;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace nvctl::cli
