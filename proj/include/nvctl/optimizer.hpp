#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "fidelity.hpp"
#include "propagation.hpp"
#include "spin_model.hpp"

namespace nvctl {

enum class ControlMode { free_angles, switched180 };

// Order of the two segments that make up one genome block. Pulse-first leaves a
// trailing free precession, which state transfers out of rho_0 need (rho_0 is
// stationary, so a leading delay is wasted); t_1 = 0 recovers delay-first.
enum class SegmentOrder { pulse_first, delay_first };

struct Bounds {
  double t_max_us = 4.0;
  double tau_max_us = 10.0;
};

struct ControlProblem {
  SystemParams params;
  Target target;
  std::size_t n_pulses = 3;
  double rabi_mhz = 0.5;
  ControlMode mode = ControlMode::free_angles;
  std::optional<RobustnessRange> robustness;
  Bounds bounds;
  double duration_penalty = 0.0;
  // Soft cap on the total sequence length; longer candidates lose fitness steeply.
  std::optional<double> max_duration_us;
  GateMode gate_mode = GateMode::strict;
  SegmentOrder order = SegmentOrder::pulse_first;

  // Default bounds: pulses up to a 360 deg flip, delays up to 10 us.
  static ControlProblem make(const SystemParams& params, Target target, std::size_t n_pulses,
                             double rabi_mhz, ControlMode mode = ControlMode::free_angles) {
    ControlProblem p;
    p.params = params;
    p.target = std::move(target);
    p.n_pulses = n_pulses;
    p.rabi_mhz = rabi_mhz;
    p.mode = mode;
    p.bounds = {2.0 / rabi_mhz, 10.0};
    return p;
  }

  void validate() const {
    params.validate();
    params.require_anisotropy();
    if (n_pulses < 1) throw InvalidParams("need at least one pulse");
    if (!(rabi_mhz > 0.0)) throw InvalidParams("Rabi frequency must be positive");
    if (!(bounds.t_max_us > 0.0) || !(bounds.tau_max_us > 0.0)) throw InvalidParams("bounds must be positive");
    if (duration_penalty < 0.0) throw InvalidParams("duration penalty must be non-negative");
    if (robustness) robustness->validate();
    if (max_duration_us && !(*max_duration_us > 0.0)) throw InvalidParams("duration cap must be positive");
  }

  std::size_t genes_per_pulse() const { return mode == ControlMode::free_angles ? 3 : 2; }
  std::size_t genome_length() const { return genes_per_pulse() * n_pulses; }

  // Pulse length that flips the pseudo-spin by 180 deg at the nominal amplitude.
  double pi_pulse_us() const { return 1.0 / (2.0 * rabi_mhz); }

  // Per-gene [lo, hi] and whether the gene is a phase.
  struct GeneSpec {
    double lo, hi;
    bool phase;
  };
  std::vector<GeneSpec> gene_specs() const {
    std::vector<GeneSpec> g;
    for (std::size_t k = 0; k < n_pulses; ++k) {
      g.push_back({0.0, bounds.tau_max_us, false});
      if (mode == ControlMode::free_angles) g.push_back({0.0, bounds.t_max_us, false});
      g.push_back({0.0, kTwoPi, true});
    }
    return g;
  }
};

// Genome blocks are (tau_k, t_k, phi_k) for free angles and (tau_k, phi_k) for
// switched control. Durations are clamped into bounds; phases wrap modulo 2pi.
inline PulseSequence decode(const ControlProblem& p, const std::vector<double>& genome) {
  if (genome.size() != p.genome_length()) throw BadGenomeLength("genome has the wrong length");
  PulseSequence s;
  s.rabi_mhz = p.rabi_mhz;
  const std::size_t g = p.genes_per_pulse();
  for (std::size_t k = 0; k < p.n_pulses; ++k) {
    const double* b = genome.data() + k * g;
    const double tau = std::clamp(b[0], 0.0, p.bounds.tau_max_us);
    const double t = p.mode == ControlMode::free_angles ? std::clamp(b[1], 0.0, p.bounds.t_max_us)
                                                        : p.pi_pulse_us();
    const double phi = b[g - 1];
    if (p.order == SegmentOrder::delay_first)
      s.delay(tau).pulse(t, phi);
    else
      s.pulse(t, phi).delay(tau);
  }
  return s;
}

inline std::vector<double> encode(const ControlProblem& p, const PulseSequence& s) {
  if (s.segments.size() != 2 * p.n_pulses) throw BadGenomeLength("sequence does not match the problem layout");
  std::vector<double> genome;
  genome.reserve(p.genome_length());
  for (std::size_t k = 0; k < p.n_pulses; ++k) {
    const Segment& first = s.segments[2 * k];
    const Segment& second = s.segments[2 * k + 1];
    const Segment& d = p.order == SegmentOrder::delay_first ? first : second;
    const Segment& q = p.order == SegmentOrder::delay_first ? second : first;
    const auto* delay = std::get_if<Delay>(&d);
    const auto* pulse = std::get_if<Pulse>(&q);
    if (!delay || !pulse) throw BadGenomeLength("sequence does not alternate as the layout requires");
    genome.push_back(delay->us);
    if (p.mode == ControlMode::free_angles) genome.push_back(pulse->us);
    genome.push_back(pulse->phase_rad);
  }
  return genome;
}

struct Evaluation {
  double fitness = 0.0;
  double fidelity = 0.0;  // at the nominal amplitude
  double robust = 0.0;    // mean over the robustness samples (== fidelity when not robust)
  double duration = 0.0;
};

// Fitness of genomes for one problem. Caches one eigendecomposition per amplitude;
// immutable, so evaluate() may run on several threads at once.
class FitnessFunction {
 public:
  using M4 = Eigen::Matrix4cd;

  explicit FitnessFunction(const ControlProblem& p)
      : problem_(p),
        evaluator_(build_hamiltonian_subspace(p.params), amplitudes(p)) {
    p.validate();
    if (const auto* g = std::get_if<UnitaryGoal>(&p.target.goal)) {
      unitary_ = true;
      target_u_ = M4(g->unitary);
    } else {
      const auto& s = std::get<StateGoal>(p.target.goal);
      rho0_ = M4(s.initial.matrix);
      rho_t_ = M4(s.target.matrix);
      const double pt = (rho_t_ * rho_t_).trace().real();
      if (pt < 1e-12) throw ZeroPurity("target state with vanishing purity");
      target_purity_ = pt;
    }
  }

  const ControlProblem& problem() const { return problem_; }

  double fidelity_of(const M4& u) const {
    if (unitary_) {
      if (problem_.gate_mode == GateMode::strict)
        return std::min(1.0, std::abs((target_u_.adjoint() * u).trace()) / 4.0);
      return gate_fidelity(Matrix(u), Matrix(target_u_), problem_.gate_mode);
    }
    const M4 rho = u * rho0_ * u.adjoint();
    const double pr = (rho * rho).trace().real();
    const double f = (rho_t_ * rho).trace().real() / std::sqrt(pr * target_purity_);
    return std::clamp(f, 0.0, 1.0);
  }

  Evaluation evaluate(const std::vector<double>& genome) const {
    return evaluate(decode(problem_, genome));
  }

  Evaluation evaluate(const PulseSequence& seq) const {
    Evaluation e;
    e.duration = seq.total_duration();
    e.fidelity = fidelity_of(evaluator_.propagator(seq, 0));
    if (evaluator_.rabi_count() > 1) {
      double sum = 0.0;
      for (std::size_t i = 1; i < evaluator_.rabi_count(); ++i) sum += fidelity_of(evaluator_.propagator(seq, i));
      e.robust = sum / static_cast<double>(evaluator_.rabi_count() - 1);
    } else {
      e.robust = e.fidelity;
    }
    e.fitness = e.robust;
    if (problem_.duration_penalty > 0.0)
      e.fitness -= problem_.duration_penalty * e.duration / problem_.bounds.tau_max_us;
    if (problem_.max_duration_us && e.duration > *problem_.max_duration_us)
      e.fitness -= (e.duration - *problem_.max_duration_us) / *problem_.max_duration_us;
    return e;
  }

 private:
  // Index 0 is the nominal amplitude, followed by the robustness samples.
  static std::vector<double> amplitudes(const ControlProblem& p) {
    std::vector<double> a{p.rabi_mhz};
    if (p.robustness)
      for (double r : p.robustness->samples()) a.push_back(r);
    return a;
  }

  ControlProblem problem_;
  SequenceEvaluator evaluator_;
  bool unitary_ = false;
  M4 target_u_ = M4::Identity();
  M4 rho0_ = M4::Zero();
  M4 rho_t_ = M4::Zero();
  double target_purity_ = 1.0;
};

inline double fitness(const ControlProblem& p, const std::vector<double>& genome) {
  return FitnessFunction(p).evaluate(genome).fitness;
}

struct GaConfig {
  std::size_t population = 100;
  std::size_t generations = 300;
  double crossover_rate = 0.8;
  double mutation_rate = 0.15;
  double mutation_sigma = 0.05;  // fraction of each gene's bound width
  std::size_t elite_count = 2;
  std::size_t tournament_size = 3;
  std::uint64_t seed = 20190101;
  std::size_t restarts = 8;
  std::size_t workers = 1;

  void validate() const {
    if (population < 2) throw InvalidParams("population must be at least 2");
    if (elite_count >= population) throw InvalidParams("elite_count must be below population");
    if (generations < 1 || restarts < 1) throw InvalidParams("need at least one generation and restart");
    if (tournament_size < 1) throw InvalidParams("tournament size must be positive");
    for (double r : {crossover_rate, mutation_rate})
      if (!(r >= 0.0 && r <= 1.0)) throw InvalidParams("rates must lie in [0, 1]");
    if (!(mutation_sigma >= 0.0)) throw InvalidParams("mutation sigma must be non-negative");
  }
};

struct OptimResult {
  PulseSequence best_sequence;
  std::vector<double> genome;
  double fitness = 0.0;
  double fidelity = 0.0;
  std::optional<double> robust_fidelity;
  double total_duration = 0.0;
  std::vector<double> history;       // best fitness per generation of the winning restart
  std::vector<double> restart_best;  // final best fitness of every restart
  std::size_t best_restart = 0;
  std::uint64_t seed = 0;
};

namespace detail {

struct Individual {
  std::vector<double> genome;
  Evaluation eval;
  bool evaluated = false;
};

// Higher fitness first, then shorter sequences, then lexicographically smaller genomes.
inline bool better(const Individual& a, const Individual& b) {
  if (a.eval.fitness != b.eval.fitness) return a.eval.fitness > b.eval.fitness;
  if (a.eval.duration != b.eval.duration) return a.eval.duration < b.eval.duration;
  return a.genome < b.genome;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline void evaluate_all(const FitnessFunction& f, std::vector<Individual>& pop, std::size_t workers) {
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < pop.size(); ++i)
    if (!pop[i].evaluated) todo.push_back(i);
  auto run = [&](std::size_t begin, std::size_t step) {
    for (std::size_t j = begin; j < todo.size(); j += step) {
      pop[todo[j]].eval = f.evaluate(pop[todo[j]].genome);
      pop[todo[j]].evaluated = true;
    }
  };
  if (workers <= 1 || todo.size() < 2) {
    run(0, 1);
    return;
  }
  const std::size_t n = std::min(workers, todo.size());
  std::vector<std::jthread> threads;
  for (std::size_t w = 0; w < n; ++w) threads.emplace_back(run, w, n);
}

}  // namespace detail

struct RestartOutcome {
  detail::Individual best;
  std::vector<double> history;
};

// One GA run. Selection and variation draw from a generator seeded only by
// (seed, restart), so results do not depend on the worker count.
inline RestartOutcome run_restart(const FitnessFunction& f, const GaConfig& ga, std::size_t restart) {
  using detail::Individual;
  const auto specs = f.problem().gene_specs();
  std::mt19937_64 rng(detail::splitmix64(ga.seed ^ detail::splitmix64(restart + 1)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  auto repair = [&](std::vector<double>& g) {
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] = specs[i].phase ? wrap_phase(g[i]) : std::clamp(g[i], specs[i].lo, specs[i].hi);
  };

  std::vector<Individual> pop(ga.population);
  for (auto& ind : pop) {
    ind.genome.resize(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
      ind.genome[i] = specs[i].lo + (specs[i].hi - specs[i].lo) * unit(rng);
  }

  RestartOutcome out;
  for (std::size_t gen = 0;; ++gen) {
    detail::evaluate_all(f, pop, ga.workers);
    std::sort(pop.begin(), pop.end(), detail::better);
    out.history.push_back(pop.front().eval.fitness);
    if (gen + 1 == ga.generations) break;

    auto tournament = [&]() -> const Individual& {
      std::size_t best = static_cast<std::size_t>(unit(rng) * pop.size()) % pop.size();
      for (std::size_t k = 1; k < ga.tournament_size; ++k) {
        const std::size_t c = static_cast<std::size_t>(unit(rng) * pop.size()) % pop.size();
        if (detail::better(pop[c], pop[best])) best = c;
      }
      return pop[best];
    };

    std::vector<Individual> next(pop.begin(), pop.begin() + static_cast<std::ptrdiff_t>(ga.elite_count));
    while (next.size() < ga.population) {
      const Individual& a = tournament();
      const Individual& b = tournament();
      Individual child;
      child.genome = a.genome;
      if (unit(rng) < ga.crossover_rate)
        for (std::size_t i = 0; i < child.genome.size(); ++i)
          if (unit(rng) < 0.5) child.genome[i] = b.genome[i];
      for (std::size_t i = 0; i < child.genome.size(); ++i)
        if (unit(rng) < ga.mutation_rate)
          child.genome[i] += ga.mutation_sigma * (specs[i].hi - specs[i].lo) * gauss(rng);
      repair(child.genome);
      next.push_back(std::move(child));
    }
    pop = std::move(next);
  }
  out.best = pop.front();
  return out;
}

inline OptimResult optimize(const ControlProblem& problem, const GaConfig& ga) {
  ga.validate();
  const FitnessFunction f(problem);
  OptimResult r;
  r.seed = ga.seed;
  std::optional<RestartOutcome> best;
  for (std::size_t k = 0; k < ga.restarts; ++k) {
    RestartOutcome o = run_restart(f, ga, k);
    r.restart_best.push_back(o.best.eval.fitness);
    if (!best || detail::better(o.best, best->best)) {
      best = std::move(o);
      r.best_restart = k;
    }
  }
  r.genome = best->best.genome;
  r.history = best->history;
  r.fitness = best->best.eval.fitness;
  r.best_sequence = decode(problem, r.genome);
  r.total_duration = r.best_sequence.total_duration();
  // reported figures come from the general propagation path, not the GA cache
  const Hamiltonian h = build_hamiltonian_subspace(problem.params);
  r.fidelity = fidelity(sequence_propagator(h, r.best_sequence), problem.target, problem.gate_mode);
  if (problem.robustness)
    r.robust_fidelity = robust_fidelity(r.best_sequence, problem.target, *problem.robustness, h, problem.gate_mode);
  return r;
}

// --- batch reproduction of the published tables ---------------------------------

struct TableRow {
  std::string table;
  std::string target;
  double rabi_mhz = 0.0;
  std::size_t n_pulses = 0;
  std::string mode;
  double nu_c_mhz = 0.0;
  double theta_minus_deg = 0.0;
  double fidelity = 0.0;
  double duration_us = 0.0;
  std::uint64_t seed = 0;
};

struct TableJob {
  std::string table;
  SystemParams params;
  std::string target;
  double rabi_mhz;
  std::size_t n_pulses;
  ControlMode mode;
  std::optional<double> max_duration_us;
};

// Soft caps per target: U_p at 10 us, U_90 at 15 us.
inline std::optional<double> default_duration_cap(const std::string& target) {
  if (target == "u_p") return 10.0;
  if (target == "u_90") return 15.0;
  return std::nullopt;
}

inline std::vector<TableJob> table_jobs(const std::string& which, const SystemParams& base) {
  std::vector<TableJob> jobs;
  if (which == "I") {
    for (double rabi : {0.2, 0.5, 10.0}) {
      jobs.push_back({"I", base, "u_p", rabi, 3, ControlMode::free_angles, 10.0});
      jobs.push_back({"I", base, "u_90", rabi, 2, ControlMode::free_angles, 15.0});
    }
  } else if (which == "II") {
    for (double rabi : {10.0, 0.5}) {
      jobs.push_back({"II", base, "u_p", rabi, 3, ControlMode::switched180, std::nullopt});
      jobs.push_back({"II", base, "u_90", rabi, 2, ControlMode::switched180, 15.0});
    }
  } else if (which == "III") {
    SystemParams p = base;
    p.nu_c_override = 0.3;
    for (std::size_t n : {3, 4, 5}) jobs.push_back({"III", p, "u_p", 0.5, n, ControlMode::free_angles, 10.0});
  } else {
    throw InvalidParams("unknown table '" + which + "' (expected I, II or III)");
  }
  return jobs;
}

inline TableRow run_table_job(const TableJob& job, GaConfig ga) {
  auto problem = ControlProblem::make(job.params, build_target(job.target, job.params, job.rabi_mhz),
                                      job.n_pulses, job.rabi_mhz, job.mode);
  problem.max_duration_us = job.max_duration_us;
  const OptimResult r = optimize(problem, ga);
  return {job.table,
          job.target,
          job.rabi_mhz,
          job.n_pulses,
          job.mode == ControlMode::free_angles ? "free" : "switched180",
          job.params.nu_c(),
          quantization_angle(job.params, Branch::minus),
          r.fidelity,
          r.total_duration,
          ga.seed};
}

// Rows of one table; row i runs with seed ga.seed + i.
inline std::vector<TableRow> reproduce_tables(const std::string& which, const SystemParams& base, GaConfig ga) {
  std::vector<TableRow> rows;
  const auto jobs = table_jobs(which, base);
  const std::uint64_t seed0 = ga.seed;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    ga.seed = seed0 + i;
    rows.push_back(run_table_job(jobs[i], ga));
  }
  return rows;
}

}  // namespace nvctl
