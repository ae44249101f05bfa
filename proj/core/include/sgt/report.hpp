#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgt/config.hpp"
#include "sgt/sim.hpp"
#include "sgt/trace.hpp"

namespace sgt {

// Per-event energy costs in picojoules. All costs must be >= 0.
struct EnergyModel {
  double pj_mac = 1.0;
  double pj_sram_byte = 0.5;
  double pj_broadcast_byte = 1.0;
  double pj_offset_decode = 0.1;
  double pj_bitmap_test = 0.05;
  double pj_static_per_cycle = 10.0;

  void validate() const;
  static EnergyModel from_kv(const std::map<std::string, std::string>& kv);
};

// One (layer, pass, scenario) simulation outcome.
struct CellResult {
  int layer_id = 0;
  Pass pass = Pass::FP;
  Scenario scenario = Scenario::DC;
  std::uint64_t cycles = 0;
  double time_us = 0.0;
  double speedup_vs_dc = 1.0;
  MacStats macs;
  double util_ratio = 1.0;  // mean PE finish time / max
  std::uint64_t wr_events = 0;
  std::uint64_t sram_bytes = 0;
  std::uint64_t broadcast_bytes = 0;
  std::uint64_t offset_decodes = 0;
  std::uint64_t bitmap_tests = 0;
  double energy_pj = 0.0;  // 0 when no energy model given
};

// End-to-end roll-up for one scenario: cycles are the sum over every
// (layer, pass) cell, split by pass; energy is split by event category.
struct ScenarioTotals {
  Scenario scenario = Scenario::DC;
  std::uint64_t fp_cycles = 0, bp_cycles = 0, wg_cycles = 0;
  std::uint64_t total_cycles = 0;
  double speedup_vs_dc = 1.0;
  double mac_pj = 0.0, sram_pj = 0.0, broadcast_pj = 0.0;
  double offset_pj = 0.0, bitmap_pj = 0.0, static_pj = 0.0;
  double total_pj = 0.0;
};

struct ExperimentReport {
  std::string schema = "sgt-report-v1";
  NodeConfig config;
  std::vector<CellResult> cells;
  std::vector<ScenarioTotals> totals;  // one per requested scenario
};

// Replays one serialized training step through the cycle model. The dense
// baseline is always simulated internally so speedups are defined even when
// "dc" is not among the requested scenarios. Output-sparsity chaining: the
// backward pass of layer l uses the forward bitmap of layer l-1 when that
// layer ends in a ReLU; otherwise (first layer, pooled or linear outputs)
// a full bitmap is used and the run degenerates to input-only skipping.
ExperimentReport run_experiment(const TraceFile& step, const ModelConfig& mc,
                                const NodeConfig& cfg,
                                const std::vector<Scenario>& scenarios,
                                const std::vector<Pass>& passes,
                                const std::optional<EnergyModel>& energy);

double energy_estimate(const CellResult& cell, const EnergyModel& em);

// Deterministic serializations; emit_json round-trips through read_json.
std::string emit_json(const ExperimentReport& rep);
std::string emit_csv(const ExperimentReport& rep);
std::string emit_table(const ExperimentReport& rep);
ExperimentReport read_json(const std::string& text);

}  // namespace sgt
