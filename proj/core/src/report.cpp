#include "sgt/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace sgt {

void EnergyModel::validate() const {
  const double vals[] = {pj_mac,           pj_sram_byte, pj_broadcast_byte,
                         pj_offset_decode, pj_bitmap_test, pj_static_per_cycle};
  for (double v : vals)
    if (v < 0.0) throw ValidationError("EnergyModel: per-event costs must be >= 0");
}

EnergyModel EnergyModel::from_kv(const std::map<std::string, std::string>& kv) {
  EnergyModel em;
  auto get = [&](const char* key, double dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : std::stod(it->second);
  };
  em.pj_mac = get("pj_mac", em.pj_mac);
  em.pj_sram_byte = get("pj_sram_byte", em.pj_sram_byte);
  em.pj_broadcast_byte = get("pj_broadcast_byte", em.pj_broadcast_byte);
  em.pj_offset_decode = get("pj_offset_decode", em.pj_offset_decode);
  em.pj_bitmap_test = get("pj_bitmap_test", em.pj_bitmap_test);
  em.pj_static_per_cycle = get("pj_static_per_cycle", em.pj_static_per_cycle);
  em.validate();
  return em;
}

double energy_estimate(const CellResult& cell, const EnergyModel& em) {
  em.validate();
  return static_cast<double>(cell.macs.performed) * em.pj_mac +
         static_cast<double>(cell.sram_bytes) * em.pj_sram_byte +
         static_cast<double>(cell.broadcast_bytes) * em.pj_broadcast_byte +
         static_cast<double>(cell.offset_decodes) * em.pj_offset_decode +
         static_cast<double>(cell.bitmap_tests) * em.pj_bitmap_test +
         static_cast<double>(cell.cycles) * em.pj_static_per_cycle;
}

namespace {

struct LayerBundle {
  LayerSpec spec;
  Tensor3D f_in, f_out, g_out, g_in;
  FilterBank weights, dw;
  std::optional<OutputBitmap> mask;
  bool have_f_in = false, have_f_out = false, have_g_out = false, have_g_in = false;
  bool have_weights = false, have_dw = false;
};

std::vector<LayerBundle> unpack_step(const TraceFile& tf, const ModelConfig& mc) {
  std::vector<LayerBundle> layers;
  int c = mc.in_c, h = mc.in_h, w = mc.in_w;
  for (const LayerDesc& d : mc.layers) {
    LayerBundle b;
    b.spec = LayerSpec::make(c, h, w, d.filters, d.kernel, d.kernel, d.stride, d.pad, d.post);
    c = b.spec.m;
    h = b.spec.out_u;
    w = b.spec.out_v;
    if (d.post == PostOp::MaxPool) {
      h = (h - d.pool_window) / d.pool_stride + 1;
      w = (w - d.pool_window) / d.pool_stride + 1;
    }
    layers.push_back(std::move(b));
  }

  for (const TraceRecord& r : tf.records) {
    if (r.layer_id >= layers.size())
      throw IntegrityError("report: trace layer id " + std::to_string(r.layer_id) +
                           " out of range for the configured model");
    LayerBundle& b = layers[r.layer_id];
    switch (r.role) {
      case TraceRole::Activation: {
        Tensor3D t = tensor_from_record(r);
        if (!b.have_f_in) {
          b.f_in = std::move(t);
          b.have_f_in = true;
        } else {
          b.f_out = std::move(t);
          b.have_f_out = true;
        }
        break;
      }
      case TraceRole::Gradient: {
        Tensor3D t = tensor_from_record(r);
        if (!b.have_g_out) {
          b.g_out = std::move(t);
          b.have_g_out = true;
        } else {
          b.g_in = std::move(t);
          b.have_g_in = true;
        }
        break;
      }
      case TraceRole::WeightGrad:
        b.dw = filter_from_record(r);
        b.have_dw = true;
        break;
      case TraceRole::Weights:
        b.weights = filter_from_record(r);
        b.have_weights = true;
        break;
      case TraceRole::Bitmap:
        b.mask = bitmap_from_record(r);
        break;
      case TraceRole::Offsets:
        break;  // re-derived from the loaded activations
    }
  }

  for (std::size_t li = 0; li < layers.size(); ++li) {
    LayerBundle& b = layers[li];
    const std::string where = "report: layer " + std::to_string(li);
    if (!b.have_f_in || !b.have_weights || !b.have_g_out)
      throw IntegrityError(where + ": trace is missing required records");
    check_input_shape(b.f_in, b.spec);
    check_filter_shape(b.weights, b.spec);
    check_output_shape(b.g_out, b.spec);
  }
  return layers;
}

struct KeyLess {
  bool operator()(const std::pair<int, int>& a, const std::pair<int, int>& b) const {
    return a < b;
  }
};

}  // namespace

ExperimentReport run_experiment(const TraceFile& step, const ModelConfig& mc,
                                const NodeConfig& cfg,
                                const std::vector<Scenario>& scenarios,
                                const std::vector<Pass>& passes,
                                const std::optional<EnergyModel>& energy) {
  cfg.validate();
  if (energy) energy->validate();
  std::vector<LayerBundle> layers = unpack_step(step, mc);

  ExperimentReport rep;
  rep.config = cfg;

  // offsets are encoded once per traced tensor, as the indexing unit would
  std::vector<OffsetMap> f_in_off, g_out_off;
  for (const LayerBundle& b : layers) {
    f_in_off.push_back(encode_tc_offsets(b.f_in));
    g_out_off.push_back(encode_tc_offsets(b.g_out));
  }

  std::map<std::pair<int, int>, std::uint64_t, KeyLess> dc_cycles;
  auto simulate_cell = [&](int li, Pass pass, Scenario scen) {
    const LayerBundle& b = layers[li];
    LayerOperands ops;
    OutputBitmap full;
    if (pass == Pass::FP) {
      ops.input = &b.f_in;
      ops.input_offsets = &f_in_off[li];
      ops.weights = &b.weights;
    } else if (pass == Pass::BP) {
      ops.input = &b.g_out;
      ops.input_offsets = &g_out_off[li];
      ops.weights = &b.weights;
      if (scen == Scenario::IN_OUT || scen == Scenario::IN_OUT_WR) {
        const OutputBitmap* mask = nullptr;
        if (li > 0 && layers[li - 1].mask) {
          const OutputBitmap& m = *layers[li - 1].mask;
          if (m.c == b.spec.in_c && m.h == b.spec.in_h && m.w == b.spec.in_w) mask = &m;
        }
        if (!mask) {
          // no ReLU directly upstream (first layer, pooled boundary):
          // every gradient position must still be produced
          full = OutputBitmap(b.spec.in_c, b.spec.in_h, b.spec.in_w);
          std::fill(full.bytes.begin(), full.bytes.end(), static_cast<std::uint8_t>(0xff));
          mask = &full;
        }
        ops.out_bitmap = mask;
      }
    } else {
      ops.input = &b.g_out;
      ops.input_offsets = &g_out_off[li];
      ops.aux = &b.f_in;
      ops.aux_offsets = &f_in_off[li];
    }
    return simulate_layer(b.spec, ops, cfg, scen, pass);
  };

  for (int li = 0; li < static_cast<int>(layers.size()); ++li) {
    for (Pass pass : passes) {
      const auto key = std::make_pair(li, static_cast<int>(pass));
      {
        SimResult dc = simulate_cell(li, pass, Scenario::DC);
        dc_cycles[key] = dc.cycles.total_cycles;
      }
      for (Scenario scen : scenarios) {
        SimResult r = simulate_cell(li, pass, scen);
        CellResult cell;
        cell.layer_id = li;
        cell.pass = pass;
        cell.scenario = scen;
        cell.cycles = r.cycles.total_cycles;
        cell.time_us = static_cast<double>(cell.cycles) / (cfg.clock_ghz * 1000.0);
        cell.speedup_vs_dc =
            cell.cycles ? static_cast<double>(dc_cycles[key]) / static_cast<double>(cell.cycles)
                        : 1.0;
        cell.macs = r.macs;
        cell.util_ratio = r.cycles.avg_to_max_ratio;
        cell.wr_events = r.cycles.wr_events;
        cell.broadcast_bytes = r.cycles.broadcast_bytes;
        for (const PeCycleStats& pe : r.cycles.pe) {
          cell.sram_bytes += pe.sram_bytes;
          cell.offset_decodes += pe.offset_decodes;
          cell.bitmap_tests += pe.bitmap_tests;
        }
        if (energy) cell.energy_pj = energy_estimate(cell, *energy);
        rep.cells.push_back(cell);
      }
    }
  }

  std::uint64_t dc_total = 0;
  for (const auto& [key, cycles] : dc_cycles) dc_total += cycles;
  for (Scenario scen : scenarios) {
    ScenarioTotals tot;
    tot.scenario = scen;
    for (const CellResult& c : rep.cells) {
      if (c.scenario != scen) continue;
      if (c.pass == Pass::FP)
        tot.fp_cycles += c.cycles;
      else if (c.pass == Pass::BP)
        tot.bp_cycles += c.cycles;
      else
        tot.wg_cycles += c.cycles;
      if (energy) {
        tot.mac_pj += static_cast<double>(c.macs.performed) * energy->pj_mac;
        tot.sram_pj += static_cast<double>(c.sram_bytes) * energy->pj_sram_byte;
        tot.broadcast_pj += static_cast<double>(c.broadcast_bytes) * energy->pj_broadcast_byte;
        tot.offset_pj += static_cast<double>(c.offset_decodes) * energy->pj_offset_decode;
        tot.bitmap_pj += static_cast<double>(c.bitmap_tests) * energy->pj_bitmap_test;
        tot.static_pj += static_cast<double>(c.cycles) * energy->pj_static_per_cycle;
      }
    }
    tot.total_cycles = tot.fp_cycles + tot.bp_cycles + tot.wg_cycles;
    tot.speedup_vs_dc = tot.total_cycles
                            ? static_cast<double>(dc_total) / static_cast<double>(tot.total_cycles)
                            : 1.0;
    tot.total_pj = tot.mac_pj + tot.sram_pj + tot.broadcast_pj + tot.offset_pj + tot.bitmap_pj +
                   tot.static_pj;
    rep.totals.push_back(tot);
  }
  return rep;
}

namespace {

nlohmann::ordered_json config_to_json(const NodeConfig& c) {
  nlohmann::ordered_json j;
  j["Tx"] = c.tx;
  j["Ty"] = c.ty;
  j["lanes_per_pe"] = c.lanes_per_pe;
  j["entries_per_group"] = c.entries_per_group;
  j["groups"] = c.groups;
  j["sram_bw_bytes_per_cycle"] = c.sram_bw_bytes_per_cycle;
  j["broadcast_bw_bytes_per_cycle"] = c.broadcast_bw_bytes_per_cycle;
  j["adder_latency_cycles"] = c.adder_latency_cycles;
  j["wr_threshold"] = c.wr_threshold;
  j["wr_transfer_cost_bytes_per_element"] = c.wr_transfer_cost_bytes_per_element;
  j["clock_ghz"] = c.clock_ghz;
  j["reconfigurable_tree"] = c.reconfigurable_tree;
  j["wdu_interval_cycles"] = c.wdu_interval_cycles;
  return j;
}

NodeConfig config_from_json(const nlohmann::ordered_json& j) {
  NodeConfig c;
  c.tx = j.at("Tx");
  c.ty = j.at("Ty");
  c.lanes_per_pe = j.at("lanes_per_pe");
  c.entries_per_group = j.at("entries_per_group");
  c.groups = j.at("groups");
  c.sram_bw_bytes_per_cycle = j.at("sram_bw_bytes_per_cycle");
  c.broadcast_bw_bytes_per_cycle = j.at("broadcast_bw_bytes_per_cycle");
  c.adder_latency_cycles = j.at("adder_latency_cycles");
  c.wr_threshold = j.at("wr_threshold");
  c.wr_transfer_cost_bytes_per_element = j.at("wr_transfer_cost_bytes_per_element");
  c.clock_ghz = j.at("clock_ghz");
  c.reconfigurable_tree = j.at("reconfigurable_tree");
  c.wdu_interval_cycles = j.at("wdu_interval_cycles");
  return c;
}

}  // namespace

std::string emit_json(const ExperimentReport& rep) {
  nlohmann::ordered_json j;
  j["schema"] = rep.schema;
  j["config"] = config_to_json(rep.config);
  j["cells"] = nlohmann::ordered_json::array();
  for (const CellResult& c : rep.cells) {
    nlohmann::ordered_json jc;
    jc["layer"] = c.layer_id;
    jc["pass"] = pass_name(c.pass);
    jc["scenario"] = scenario_name(c.scenario);
    jc["cycles"] = c.cycles;
    jc["time_us"] = c.time_us;
    jc["speedup_vs_dc"] = c.speedup_vs_dc;
    jc["macs_performed"] = c.macs.performed;
    jc["macs_skipped_input"] = c.macs.skipped_input;
    jc["macs_skipped_output"] = c.macs.skipped_output;
    jc["macs_dense_total"] = c.macs.dense_total;
    jc["util_ratio"] = c.util_ratio;
    jc["wr_events"] = c.wr_events;
    jc["sram_bytes"] = c.sram_bytes;
    jc["broadcast_bytes"] = c.broadcast_bytes;
    jc["offset_decodes"] = c.offset_decodes;
    jc["bitmap_tests"] = c.bitmap_tests;
    jc["energy_pj"] = c.energy_pj;
    j["cells"].push_back(std::move(jc));
  }
  j["totals"] = nlohmann::ordered_json::array();
  for (const ScenarioTotals& t : rep.totals) {
    nlohmann::ordered_json jt;
    jt["scenario"] = scenario_name(t.scenario);
    jt["fp_cycles"] = t.fp_cycles;
    jt["bp_cycles"] = t.bp_cycles;
    jt["wg_cycles"] = t.wg_cycles;
    jt["total_cycles"] = t.total_cycles;
    jt["speedup_vs_dc"] = t.speedup_vs_dc;
    jt["mac_pj"] = t.mac_pj;
    jt["sram_pj"] = t.sram_pj;
    jt["broadcast_pj"] = t.broadcast_pj;
    jt["offset_pj"] = t.offset_pj;
    jt["bitmap_pj"] = t.bitmap_pj;
    jt["static_pj"] = t.static_pj;
    jt["total_pj"] = t.total_pj;
    j["totals"].push_back(std::move(jt));
  }
  return j.dump(2) + "\n";
}

ExperimentReport read_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError("report: invalid json: " + std::string(e.what()));
  }
  ExperimentReport rep;
  try {
    rep.schema = j.at("schema");
    if (rep.schema != "sgt-report-v1")
      throw IntegrityError("report: unknown schema '" + rep.schema + "'");
    rep.config = config_from_json(j.at("config"));
    for (const auto& jc : j.at("cells")) {
      CellResult c;
      c.layer_id = jc.at("layer");
      const auto pass = pass_from_name(jc.at("pass"));
      const auto scen = scenario_from_name(jc.at("scenario"));
      if (!pass || !scen) throw IntegrityError("report: unknown pass or scenario name");
      c.pass = *pass;
      c.scenario = *scen;
      c.cycles = jc.at("cycles");
      c.time_us = jc.at("time_us");
      c.speedup_vs_dc = jc.at("speedup_vs_dc");
      c.macs.performed = jc.at("macs_performed");
      c.macs.skipped_input = jc.at("macs_skipped_input");
      c.macs.skipped_output = jc.at("macs_skipped_output");
      c.macs.dense_total = jc.at("macs_dense_total");
      c.util_ratio = jc.at("util_ratio");
      c.wr_events = jc.at("wr_events");
      c.sram_bytes = jc.at("sram_bytes");
      c.broadcast_bytes = jc.at("broadcast_bytes");
      c.offset_decodes = jc.at("offset_decodes");
      c.bitmap_tests = jc.at("bitmap_tests");
      c.energy_pj = jc.at("energy_pj");
      rep.cells.push_back(std::move(c));
    }
    for (const auto& jt : j.at("totals")) {
      ScenarioTotals t;
      const auto scen = scenario_from_name(jt.at("scenario"));
      if (!scen) throw IntegrityError("report: unknown scenario name in totals");
      t.scenario = *scen;
      t.fp_cycles = jt.at("fp_cycles");
      t.bp_cycles = jt.at("bp_cycles");
      t.wg_cycles = jt.at("wg_cycles");
      t.total_cycles = jt.at("total_cycles");
      t.speedup_vs_dc = jt.at("speedup_vs_dc");
      t.mac_pj = jt.at("mac_pj");
      t.sram_pj = jt.at("sram_pj");
      t.broadcast_pj = jt.at("broadcast_pj");
      t.offset_pj = jt.at("offset_pj");
      t.bitmap_pj = jt.at("bitmap_pj");
      t.static_pj = jt.at("static_pj");
      t.total_pj = jt.at("total_pj");
      rep.totals.push_back(t);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("report: malformed report json: " + std::string(e.what()));
  }
  return rep;
}

std::string emit_csv(const ExperimentReport& rep) {
  std::ostringstream os;
  os << "layer,pass,scenario,cycles,time_us,speedup_vs_dc,macs_performed,macs_skipped_input,"
        "macs_skipped_output,macs_dense_total,util_ratio,wr_events,sram_bytes,broadcast_bytes,"
        "offset_decodes,bitmap_tests,energy_pj\n";
  char num[64];
  for (const CellResult& c : rep.cells) {
    os << c.layer_id << ',' << pass_name(c.pass) << ',' << scenario_name(c.scenario) << ','
       << c.cycles << ',';
    std::snprintf(num, sizeof(num), "%.6f", c.time_us);
    os << num << ',';
    std::snprintf(num, sizeof(num), "%.6f", c.speedup_vs_dc);
    os << num << ',' << c.macs.performed << ',' << c.macs.skipped_input << ','
       << c.macs.skipped_output << ',' << c.macs.dense_total << ',';
    std::snprintf(num, sizeof(num), "%.6f", c.util_ratio);
    os << num << ',' << c.wr_events << ',' << c.sram_bytes << ',' << c.broadcast_bytes << ','
       << c.offset_decodes << ',' << c.bitmap_tests << ',';
    std::snprintf(num, sizeof(num), "%.3f", c.energy_pj);
    os << num << '\n';
  }
  return os.str();
}

std::string emit_table(const ExperimentReport& rep) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-6s %-4s %-10s %12s %10s %9s %14s %9s %6s\n", "layer",
                "pass", "scenario", "cycles", "time_us", "speedup", "macs", "util", "wr");
  os << line;
  for (const CellResult& c : rep.cells) {
    std::snprintf(line, sizeof(line), "%-6d %-4s %-10s %12llu %10.2f %8.2fx %14llu %8.1f%% %6llu\n",
                  c.layer_id, pass_name(c.pass), scenario_name(c.scenario),
                  static_cast<unsigned long long>(c.cycles), c.time_us, c.speedup_vs_dc,
                  static_cast<unsigned long long>(c.macs.performed), c.util_ratio * 100.0,
                  static_cast<unsigned long long>(c.wr_events));
    os << line;
  }
  if (!rep.totals.empty()) {
    os << "\n";
    std::snprintf(line, sizeof(line), "%-10s %12s %12s %12s %12s %9s %14s\n", "total",
                  "fp_cycles", "bp_cycles", "wg_cycles", "cycles", "speedup", "energy_pj");
    os << line;
    for (const ScenarioTotals& t : rep.totals) {
      std::snprintf(line, sizeof(line), "%-10s %12llu %12llu %12llu %12llu %8.2fx %14.1f\n",
                    scenario_name(t.scenario), static_cast<unsigned long long>(t.fp_cycles),
                    static_cast<unsigned long long>(t.bp_cycles),
                    static_cast<unsigned long long>(t.wg_cycles),
                    static_cast<unsigned long long>(t.total_cycles), t.speedup_vs_dc, t.total_pj);
      os << line;
    }
  }
  return os.str();
}

}  // namespace sgt
