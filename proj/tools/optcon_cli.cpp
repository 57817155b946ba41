// optcon: run / compare / synth on a scenario file.
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "optcon/pipeline.hpp"

namespace {

struct Args {
  std::string scenario;
  std::string out;
  std::optional<int> horizon;
  std::optional<std::uint64_t> seed;
  std::string format = "json";
};

void add_common(CLI::App* cmd, Args& a, const char* default_format) {
  a.format = default_format;
  cmd->add_option("scenario", a.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Directory for report.json, table.csv and trajectory CSVs");
  cmd->add_option("--horizon", a.horizon, "Override the scenario horizon")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", a.seed, "Override the synthesis seed");
  cmd->add_option("--format", a.format, "Stdout format")
      ->check(CLI::IsMember({"json", "csv"}))
      ->capture_default_str();
}

optcon::ScenarioSpec load(const Args& a) {
  optcon::ScenarioSpec spec = optcon::load_scenario(a.scenario);
  if (a.horizon) {
    spec.horizon = *a.horizon;
    std::erase_if(spec.report_steps, [&](int s) { return s > spec.horizon + 1; });
  }
  if (a.seed) spec.synthesis.seed = *a.seed;
  return spec;
}

void finish(const optcon::RunReport& rep, const Args& a, const std::string& stdout_csv) {
  if (!a.out.empty()) {
    for (const auto& p : optcon::export_report(rep, a.out)) std::cerr << "wrote " << p.string() << "\n";
  }
  std::cout << (a.format == "csv" ? stdout_csv : optcon::report_json(rep));
  for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
}

std::string gains_csv(const optcon::RunReport& rep) {
  std::ostringstream os;
  os << "design,kind,agent,row,values\n";
  auto dump = [&](const char* design, const char* kind, const std::vector<optcon::Matrix>& ms) {
    for (std::size_t i = 0; i < ms.size(); ++i) {
      for (Eigen::Index r = 0; r < ms[i].rows(); ++r) {
        os << design << "," << kind << "," << i + 1 << "," << r + 1 << ",";
        for (Eigen::Index c = 0; c < ms[i].cols(); ++c) os << (c ? " " : "") << ms[i](r, c);
        os << "\n";
      }
    }
  };
  for (const auto& [name, d] : {std::pair{"error", &rep.error_design}, std::pair{"state", &rep.state_design}}) {
    if (!*d) continue;
    dump(name, "K", (*d)->K_blocks);
    if ((*d)->synthesis) dump(name, "observer", (*d)->synthesis->gains.gains);
  }
  return os.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed observer-based LQ consensus: synthesis and simulation"};
  app.require_subcommand(1);

  Args run_args, cmp_args, syn_args;
  auto* run = app.add_subcommand("run", "Full pipeline: gains, observers, rollouts, cost certificates");
  add_common(run, run_args, "json");
  auto* cmp = app.add_subcommand("compare", "Run every method in the scenario and print the comparison table");
  add_common(cmp, cmp_args, "csv");
  auto* syn = app.add_subcommand("synth", "Only compute feedback and observer gains");
  add_common(syn, syn_args, "json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      const auto rep = optcon::run_pipeline(load(run_args));
      finish(rep, run_args, optcon::comparison_table_csv(rep));
    } else if (cmp->parsed()) {
      const auto rep = optcon::run_pipeline(load(cmp_args));
      finish(rep, cmp_args, optcon::comparison_table_csv(rep));
      for (const auto& r : rep.runs) {
        std::cerr << optcon::method_name(r.method) << ": settling step "
                  << (r.metrics.settling_step ? std::to_string(*r.metrics.settling_step) : "none")
                  << "\n";
      }
    } else {
      optcon::PipelineOptions opts;
      opts.synthesize_only = true;
      const auto rep = optcon::run_pipeline(load(syn_args), opts);
      finish(rep, syn_args, gains_csv(rep));
    }
  } catch (const optcon::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
