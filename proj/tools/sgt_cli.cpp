#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sgt/config.hpp"
#include "sgt/report.hpp"
#include "sgt/sim.hpp"
#include "sgt/trace.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitIntegrity = 3;

std::vector<sgt::Scenario> parse_scenarios(const std::string& csv) {
  std::vector<sgt::Scenario> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto s = sgt::scenario_from_name(item);
    if (!s) throw sgt::ValidationError("unknown scenario '" + item + "'");
    out.push_back(*s);
  }
  if (out.empty()) throw sgt::ValidationError("no scenarios given");
  return out;
}

std::vector<sgt::Pass> parse_passes(const std::string& csv) {
  std::vector<sgt::Pass> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto p = sgt::pass_from_name(item);
    if (!p) throw sgt::ValidationError("unknown pass '" + item + "'");
    out.push_back(*p);
  }
  if (out.empty()) throw sgt::ValidationError("no passes given");
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f) throw sgt::ValidationError("cannot open '" + path + "' for writing");
  f << text;
}

struct CommonArgs {
  std::string config;
  std::string traces = "traces";
  std::string scenarios = "dc,in,in_out,in_out_wr";
  std::string passes = "fp,bp,wg";
  std::string format = "table";
  std::string output;
  std::string energy_model;
  std::uint64_t seed = 42;
  int steps = 1;
  bool half = false;
};

int run(int argc, char** argv) {
  CLI::App app{"sparse-gradient training accelerator model"};
  app.require_subcommand(1);
  CommonArgs a;

  CLI::App* gen = app.add_subcommand("gen-traces", "train on synthetic data and write step traces");
  gen->add_option("--config", a.config, "node + model config file")->required();
  gen->add_option("--traces", a.traces, "output directory");
  gen->add_option("--seed", a.seed, "rng seed");
  gen->add_option("--steps", a.steps, "training steps to record");
  gen->add_flag("--fp16", a.half, "store tensors as fp16");

  CLI::App* sim = app.add_subcommand("simulate", "replay traces through the cycle model");
  sim->add_option("--config", a.config, "node + model config file")->required();
  sim->add_option("--traces", a.traces, "trace directory or a single .sgtr file")->required();
  sim->add_option("--scenarios", a.scenarios, "comma list: dc,in,in_out,in_out_wr");
  sim->add_option("--passes", a.passes, "comma list: fp,bp,wg");
  sim->add_option("--format", a.format, "json | csv | table");
  sim->add_option("--output", a.output, "output path ('-' = stdout)");
  sim->add_option("--energy-model", a.energy_model, "per-event energy cost file");

  CLI::App* rep = app.add_subcommand("report", "re-render a json report");
  std::string report_path;
  rep->add_option("report", report_path, "report json produced by simulate")->required();
  rep->add_option("--format", a.format, "json | csv | table");
  rep->add_option("--output", a.output, "output path ('-' = stdout)");

  CLI11_PARSE(app, argc, argv);

  if (gen->parsed()) {
    const auto kv = sgt::parse_kv_file(a.config);
    sgt::TraceGenOptions opt;
    opt.steps = a.steps;
    opt.seed = a.seed;
    opt.half = a.half;
    opt.model = sgt::ModelConfig::from_kv(kv);
    const auto paths = sgt::generate_traces(a.traces, opt);
    for (const auto& p : paths) std::cout << p << "\n";
    return 0;
  }

  if (a.format != "json" && a.format != "csv" && a.format != "table")
    throw sgt::ValidationError("unknown format '" + a.format + "'");

  if (sim->parsed()) {
    const auto kv = sgt::parse_kv_file(a.config);
    const sgt::NodeConfig cfg = sgt::NodeConfig::from_kv(kv);
    const sgt::ModelConfig mc = sgt::ModelConfig::from_kv(kv);
    std::optional<sgt::EnergyModel> energy;
    if (!a.energy_model.empty())
      energy = sgt::EnergyModel::from_kv(sgt::parse_kv_file(a.energy_model));

    std::string trace_path = a.traces;
    if (std::filesystem::is_directory(trace_path)) {
      // replay the first step of a generated run
      std::vector<std::string> files;
      for (const auto& e : std::filesystem::directory_iterator(trace_path))
        if (e.path().extension() == ".sgtr") files.push_back(e.path().string());
      if (files.empty())
        throw sgt::ValidationError("no .sgtr files in '" + trace_path + "'");
      std::sort(files.begin(), files.end());
      trace_path = files.front();
    }
    const sgt::TraceFile tf = sgt::read_trace(trace_path);
    const sgt::ExperimentReport report = sgt::run_experiment(
        tf, mc, cfg, parse_scenarios(a.scenarios), parse_passes(a.passes), energy);
    if (a.format == "json")
      write_text(a.output, sgt::emit_json(report));
    else if (a.format == "csv")
      write_text(a.output, sgt::emit_csv(report));
    else
      write_text(a.output, sgt::emit_table(report));
    return 0;
  }

  // report: re-render
  std::ifstream f(report_path);
  if (!f) throw sgt::ValidationError("cannot open '" + report_path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const sgt::ExperimentReport report = sgt::read_json(ss.str());
  if (a.format == "json")
    write_text(a.output, sgt::emit_json(report));
  else if (a.format == "csv")
    write_text(a.output, sgt::emit_csv(report));
  else
    write_text(a.output, sgt::emit_table(report));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sgt::IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kExitIntegrity;
  } catch (const sgt::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
