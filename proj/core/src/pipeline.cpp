#include "optcon/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "optcon/linalg.hpp"

namespace optcon {

namespace {

using json = nlohmann::json;

template <typename Fn>
auto staged(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, e.what());
  }
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string method_label(Method m) {
  if (m == Method::kTraditional) return "M1";
  if (m == Method::kDistributedError) return "M2";
  return std::string(method_name(m));
}

json to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const std::vector<double>& v) { return json(v); }

// ρ of [[closed, Ω], [0, observer]] is the larger of the two diagonal radii.
void fill_spectra(Design& d, const Matrix& closed, const Matrix& observer) {
  d.rho_closed_loop = linalg::spectral_radius(closed);
  d.rho_observer = linalg::spectral_radius(observer);
  d.sigma_bound = linalg::sigma_max(observer);
  d.rho_joint = std::max(d.rho_closed_loop, d.rho_observer);
}

SynthesisResult run_synthesis(const std::function<SynthesisResult()>& fn, const char* what,
                              std::vector<std::string>& warnings) {
  try {
    return fn();
  } catch (const SynthesisNonConvergence& e) {
    warnings.push_back(std::string(what) + ": iteration cap reached; using the best gains found");
    return e.best();
  }
}

void check_dare(const DareSolution& sol, const char* what, std::vector<std::string>& warnings) {
  if (!sol.positive_definite) {
    warnings.push_back(std::string(what) +
                       ": DARE solution is only positive semidefinite; closed-loop stability "
                       "is not guaranteed");
  }
}

void check_observer(const Design& d, const char* what, std::vector<std::string>& warnings) {
  if (d.sigma_bound >= 1.0) {
    warnings.push_back(std::string(what) + ": spectral-norm bound rho* = " + fmt("%.6g", d.sigma_bound) +
                       " >= 1 (LMI certificate not met)");
  }
  if (d.rho_observer >= 1.0) {
    warnings.push_back(std::string(what) + ": observer-error spectral radius " +
                       fmt("%.6g", d.rho_observer) + " >= 1; observers do not converge");
  }
}

json design_json(const Design& d) {
  json j;
  j["dare_residual"] = d.dare.residual;
  j["dare_iterations"] = d.dare.iterations;
  j["P_min_eigenvalue"] = d.dare.min_eigenvalue;
  j["P_positive_definite"] = d.dare.positive_definite;
  j["K"] = to_json(d.dare.gain);
  json blocks = json::array();
  for (const auto& k : d.K_blocks) blocks.push_back(to_json(k));
  j["K_blocks"] = std::move(blocks);
  j["rho_closed_loop"] = d.rho_closed_loop;
  if (d.synthesis) {
    json gains = json::array();
    for (const auto& g : d.synthesis->gains.gains) gains.push_back(to_json(g));
    j["observer_gains"] = std::move(gains);
    j["rho_observer"] = d.rho_observer;
    j["sigma_bound"] = d.sigma_bound;
    j["rho_joint"] = d.rho_joint;
    j["synthesis"] = {{"iterations", d.synthesis->report.iterations},
                      {"converged", d.synthesis->report.converged},
                      {"stop_reason", d.synthesis->report.stop_reason}};
  }
  return j;
}

}  // namespace

const MethodRun* RunReport::find(Method m) const {
  for (const auto& r : runs) {
    if (r.method == m) return &r;
  }
  return nullptr;
}

RunReport run_pipeline(const ScenarioSpec& spec, const PipelineOptions& opts) {
  RunReport rep;
  rep.scenario = spec.name;
  rep.inferred = spec.inferred;
  rep.report_steps = spec.report_steps;
  rep.consensus_threshold = spec.consensus_threshold;
  const AgentDynamics& dyn = spec.dynamics;
  const DirectedGraph g = staged("build", [&] { return spec.graph(); });

  const bool want_error = spec.wants(Method::kDistributedError) || spec.wants(Method::kCentralizedError);
  const bool want_state = spec.wants(Method::kDistributedState) || spec.wants(Method::kCentralizedState);

  std::optional<GlobalErrorSystem> sysE;
  std::optional<GlobalStateSystem> sysS;

  if (want_error) {
    sysE = staged("build", [&] {
      const EdgeLedger ledger = build_ledger(g, dyn.state_dim());
      return build_error_system(dyn, g, spec.weights, spec.error_measurement_plan(ledger));
    });
    for (const auto& w : sysE->warnings) rep.warnings.push_back("error system: " + w);
    Design d;
    d.dare = staged("dare", [&] {
      return solve_dare(DareProblem{sysE->A_tilde, sysE->B_bar, sysE->Q_tilde, sysE->R_blk});
    });
    check_dare(d.dare, "error design", rep.warnings);
    d.K_blocks = slice_all_gains(d.dare.gain, sysE->input_dims);
    const Matrix closed = sysE->A_tilde + sysE->B_bar * d.dare.gain;
    d.rho_closed_loop = linalg::spectral_radius(closed);
    if (spec.wants(Method::kDistributedError)) {
      d.synthesis = staged("synthesis", [&] {
        return run_synthesis([&] { return synthesize_error_observers(*sysE, d.K_blocks, spec.synthesis); },
                             "error observers", rep.warnings);
      });
      fill_spectra(d, closed, assemble_A_ec(*sysE, d.K_blocks, d.synthesis->gains));
      check_observer(d, "error observers", rep.warnings);
      d.cost_matrices = cost_difference_matrices(*sysE, d.dare.P, d.K_blocks);
    }
    rep.error_design = std::move(d);
  }

  if (want_state) {
    sysS = staged("build", [&] {
      return build_state_system(dyn, g, spec.weights, spec.state_measurement_plan());
    });
    for (const auto& w : sysS->warnings) rep.warnings.push_back("state system: " + w);
    Design d;
    d.dare = staged("dare", [&] {
      return solve_dare(DareProblem{sysS->A_tilde, sysS->B_tilde, sysS->Q_cal, sysS->R_blk});
    });
    check_dare(d.dare, "state design", rep.warnings);
    d.K_blocks = slice_all_gains(d.dare.gain, sysS->input_dims);
    const Matrix closed = sysS->A_tilde + sysS->B_tilde * d.dare.gain;
    d.rho_closed_loop = linalg::spectral_radius(closed);
    if (spec.wants(Method::kDistributedState)) {
      d.synthesis = staged("synthesis", [&] {
        return run_synthesis([&] { return synthesize_state_observers(*sysS, d.K_blocks, spec.synthesis); },
                             "state observers", rep.warnings);
      });
      fill_spectra(d, closed, assemble_A_c(*sysS, d.K_blocks, d.synthesis->gains));
      check_observer(d, "state observers", rep.warnings);
      d.cost_matrices = cost_difference_matrices(*sysS, d.dare.P, d.K_blocks);
    }
    rep.state_design = std::move(d);
  }

  bool run_baseline = spec.wants(Method::kTraditional);
  if (run_baseline && !dyn.homogeneous()) {
    rep.warnings.push_back("traditional baseline refused: agents have heterogeneous B_i");
    run_baseline = false;
  }
  if (run_baseline) {
    rep.baseline_F = staged("baseline", [&]() -> Matrix {
      if (spec.baseline_F) return *spec.baseline_F;
      return baseline_gain(dyn, g, spec.weights.Q, spec.baseline_R0 ? *spec.baseline_R0 : spec.weights.R[0]);
    });
  }
  if (opts.synthesize_only) return rep;

  for (Method m : spec.methods) {
    const std::string name(method_name(m));
    if (m == Method::kTraditional && !run_baseline) continue;
    MethodRun run;
    run.method = m;
    const SimulationConfig cfg = spec.simulation_config(m);
    run.trajectory = staged("simulate:" + name, [&] {
      switch (m) {
        case Method::kDistributedError:
          return simulate_distributed_error(dyn, *sysE, rep.error_design->K_blocks,
                                            rep.error_design->synthesis->gains, cfg);
        case Method::kDistributedState:
          return simulate_distributed_state(dyn, *sysS, rep.state_design->K_blocks,
                                            rep.state_design->synthesis->gains, cfg);
        case Method::kCentralizedError:
          return simulate_centralized(dyn, *sysE, rep.error_design->dare.gain, cfg);
        case Method::kCentralizedState:
          return simulate_centralized(dyn, *sysS, rep.state_design->dare.gain, cfg);
        case Method::kTraditional:
          break;
      }
      return simulate_traditional(dyn, g, *rep.baseline_F, spec.weights, cfg);
    });
    run.metrics = consensus_metrics(run.trajectory, spec.consensus_threshold);
    switch (m) {
      case Method::kDistributedError: run.rho = rep.error_design->rho_observer; break;
      case Method::kDistributedState: run.rho = rep.state_design->rho_observer; break;
      case Method::kCentralizedError: run.rho = rep.error_design->rho_closed_loop; break;
      case Method::kCentralizedState: run.rho = rep.state_design->rho_closed_loop; break;
      case Method::kTraditional:
        run.rho = staged("baseline", [&] { return traditional_consensus_radius(dyn, g, *rep.baseline_F); });
        break;
    }
    if (uses_observers(m)) {
      const Design& d = m == Method::kDistributedError ? *rep.error_design : *rep.state_design;
      staged("cost:" + name, [&] {
        try {
          run.costs = cost_breakdown(run.trajectory, d.dare.P, *d.cost_matrices,
                                     std::min(spec.cost_steps, spec.horizon));
        } catch (const TailNotConverged& e) {
          rep.warnings.push_back(name + ": cost certificate skipped (" + e.what() + ")");
        }
        return 0;
      });
    }
    rep.runs.push_back(std::move(run));
  }
  return rep;
}

std::string comparison_table_csv(const RunReport& report) {
  std::ostringstream os;
  os << "method,rho";
  for (int s : report.report_steps) os << ",step" << s;
  os << "\n";
  // M1 first, then M2, then anything else in run order.
  std::vector<const MethodRun*> order;
  for (Method m : {Method::kTraditional, Method::kDistributedError}) {
    if (const MethodRun* r = report.find(m)) order.push_back(r);
  }
  for (const auto& r : report.runs) {
    if (r.method != Method::kTraditional && r.method != Method::kDistributedError) order.push_back(&r);
  }
  for (const MethodRun* r : order) {
    os << method_label(r->method) << "," << fmt("%.4f", r->rho);
    for (int s : report.report_steps) {
      const int k = s - 1;
      os << ",";
      if (k < static_cast<int>(r->metrics.state_norms.size())) os << fmt("%.4f", r->metrics.state_norms[k][0]);
    }
    os << "\n";
  }
  return os.str();
}

std::string report_json(const RunReport& report) {
  json j;
  j["scenario"] = report.scenario;
  j["inferred"] = report.inferred;
  j["warnings"] = report.warnings;
  j["report_steps"] = report.report_steps;
  j["consensus_threshold"] = report.consensus_threshold;
  if (report.error_design) j["error_design"] = design_json(*report.error_design);
  if (report.state_design) j["state_design"] = design_json(*report.state_design);
  if (report.baseline_F) j["baseline"] = {{"F", to_json(*report.baseline_F)}};
  json methods = json::object();
  for (const auto& r : report.runs) {
    json m;
    m["label"] = method_label(r.method);
    m["rho"] = r.rho;
    m["settling_step"] = r.metrics.settling_step ? json(*r.metrics.settling_step) : json(nullptr);
    m["final_max_pairwise_error"] = r.metrics.max_pairwise_error.back();
    json norms = json::array();
    for (int s : report.report_steps) {
      const int k = s - 1;
      norms.push_back(k < static_cast<int>(r.metrics.state_norms.size()) ? json(r.metrics.state_norms[k][0])
                                                                         : json(nullptr));
    }
    m["x1_norms"] = std::move(norms);
    if (r.costs) {
      const CostBreakdown& c = *r.costs;
      m["cost"] = {{"J_star_distributed", c.J_star_distributed},
                   {"J_star_centralized", c.J_star_centralized},
                   {"delta_J_series", to_json(c.series)},
                   {"decay", {{"a_bar", c.decay.a_bar}, {"gamma", c.decay.gamma}}},
                   {"truncation_bound", c.truncation_bound},
                   {"identity_residuals", to_json(c.identity_residuals)}};
    }
    methods[std::string(method_name(r.method))] = std::move(m);
  }
  j["methods"] = std::move(methods);
  return j.dump(2) + "\n";
}

std::string trajectory_csv(const Trajectory& traj) {
  const int N = traj.num_agents();
  Eigen::Index n = 0, m = 0, o = 0;
  for (int i = 0; i < N; ++i) {
    n = std::max(n, traj.states[0][i].size());
    m = std::max(m, traj.inputs[0][i].size());
    if (!traj.observer_states.empty()) o = std::max(o, traj.observer_states[0][i].size());
  }
  std::ostringstream os;
  os << "k,agent";
  for (Eigen::Index c = 1; c <= n; ++c) os << ",x" << c;
  for (Eigen::Index c = 1; c <= m; ++c) os << ",u" << c;
  for (Eigen::Index c = 1; c <= o; ++c) os << ",obs" << c;
  os << ",stage_cost\n";
  auto cells = [&](const Vector* v, Eigen::Index width) {
    for (Eigen::Index c = 0; c < width; ++c) {
      os << ",";
      if (v && c < v->size()) os << fmt("%.17g", (*v)(c));
    }
  };
  for (int k = 0; k <= traj.horizon(); ++k) {
    for (int i = 0; i < N; ++i) {
      os << k << "," << (i + 1);
      cells(&traj.states[k][i], n);
      cells(&traj.inputs[k][i], m);
      cells(traj.observer_states.empty() ? nullptr : &traj.observer_states[k][i], o);
      os << "," << fmt("%.17g", traj.cost_increments[k]) << "\n";
    }
  }
  return os.str();
}

std::vector<std::filesystem::path> export_report(const RunReport& report,
                                                 const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << text;
    if (!out) throw Error("cannot write " + p.string());
    written.push_back(p);
  };
  put(dir / "report.json", report_json(report));
  put(dir / "table.csv", comparison_table_csv(report));
  for (const auto& r : report.runs) {
    put(dir / (std::string(method_name(r.method)) + ".csv"), trajectory_csv(r.trajectory));
  }
  return written;
}

}  // namespace optcon
