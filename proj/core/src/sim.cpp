#include "sgt/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace sgt {

void NodeConfig::validate() const {
  if (tx <= 0 || ty <= 0) throw ValidationError("NodeConfig: PE grid must be positive");
  if (lanes_per_pe <= 0 || !std::has_single_bit(static_cast<unsigned>(lanes_per_pe)))
    throw ValidationError("NodeConfig: lanes_per_pe must be a positive power of two");
  if (entries_per_group <= 0 || groups <= 0)
    throw ValidationError("NodeConfig: entries_per_group and groups must be positive");
  if (sram_bw_bytes_per_cycle <= 0 || broadcast_bw_bytes_per_cycle <= 0)
    throw ValidationError("NodeConfig: bandwidth of 0 is not simulatable");
  if (wr_threshold < 0.0 || wr_threshold > 1.0)
    throw ValidationError("NodeConfig: wr_threshold must lie in [0,1]");
  if (wdu_interval_cycles <= 0)
    throw ValidationError("NodeConfig: wdu_interval_cycles must be positive");
}

namespace {

int kv_int(const std::map<std::string, std::string>& kv, const std::string& key, int dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : std::stoi(it->second);
}
double kv_double(const std::map<std::string, std::string>& kv, const std::string& key, double dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : std::stod(it->second);
}

}  // namespace

NodeConfig NodeConfig::from_kv(const std::map<std::string, std::string>& kv) {
  NodeConfig c;
  c.tx = kv_int(kv, "Tx", c.tx);
  c.ty = kv_int(kv, "Ty", c.ty);
  c.lanes_per_pe = kv_int(kv, "lanes_per_pe", c.lanes_per_pe);
  c.entries_per_group = kv_int(kv, "entries_per_group", c.entries_per_group);
  c.groups = kv_int(kv, "groups", c.groups);
  c.sram_bw_bytes_per_cycle = kv_int(kv, "sram_bw_bytes_per_cycle", c.sram_bw_bytes_per_cycle);
  c.broadcast_bw_bytes_per_cycle =
      kv_int(kv, "broadcast_bw_bytes_per_cycle", c.broadcast_bw_bytes_per_cycle);
  c.adder_latency_cycles = kv_int(kv, "adder_latency_cycles", c.adder_latency_cycles);
  c.wr_threshold = kv_double(kv, "wr_threshold", c.wr_threshold);
  c.wr_transfer_cost_bytes_per_element =
      kv_int(kv, "wr_transfer_cost_bytes_per_element", c.wr_transfer_cost_bytes_per_element);
  c.clock_ghz = kv_double(kv, "clock_ghz", c.clock_ghz);
  c.reconfigurable_tree = kv_int(kv, "reconfigurable_tree", 1) != 0;
  c.wdu_interval_cycles = kv_int(kv, "wdu_interval_cycles", c.wdu_interval_cycles);
  c.validate();
  return c;
}

namespace {

struct Rect {
  int a0, b0, na, nb;
};

// Row/column remainders are absorbed by the last tile in each dimension.
std::vector<Rect> split_plane(int dim_a, int dim_b, int tx, int ty) {
  std::vector<Rect> rects;
  const int qa = dim_a / tx, qb = dim_b / ty;
  for (int i = 0; i < tx; ++i) {
    const int a0 = i * qa;
    const int na = (i == tx - 1) ? dim_a - a0 : qa;
    for (int j = 0; j < ty; ++j) {
      const int b0 = j * qb;
      const int nb = (j == ty - 1) ? dim_b - b0 : qb;
      rects.push_back({a0, b0, na, nb});
    }
  }
  return rects;
}

}  // namespace

std::vector<TileAssignment> tile_partition(const LayerSpec& spec, const NodeConfig& cfg) {
  cfg.validate();
  if (cfg.tx > spec.out_u || cfg.ty > spec.out_v)
    throw ValidationError("tile_partition: PE grid larger than output plane");
  std::vector<TileAssignment> tiles;
  const auto out_rects = split_plane(spec.out_u, spec.out_v, cfg.tx, cfg.ty);
  const auto in_rects = split_plane(spec.in_h, spec.in_w, cfg.tx, cfg.ty);
  for (std::size_t i = 0; i < out_rects.size(); ++i) {
    TileAssignment t;
    t.pe_id = static_cast<int>(i);
    t.u0 = out_rects[i].a0;
    t.v0 = out_rects[i].b0;
    t.nu = out_rects[i].na;
    t.nv = out_rects[i].nb;
    t.in_c = spec.in_c;
    t.in_h = in_rects[i].na + 2 * (spec.r / 2);
    t.in_w = in_rects[i].nb + 2 * (spec.s / 2);
    const std::uint64_t ext = static_cast<std::uint64_t>(t.in_h) * t.in_w;
    const std::uint64_t core = static_cast<std::uint64_t>(in_rects[i].na) * in_rects[i].nb;
    t.halo_bytes = static_cast<std::uint64_t>(t.in_c) * (ext - core) * 2;  // fp16 elements
    tiles.push_back(t);
  }
  return tiles;
}

BlockingPlan plan_blocking(const LayerSpec& spec, const NodeConfig& cfg) {
  cfg.validate();
  BlockingPlan p;
  p.capacity = cfg.pe_capacity();
  std::uint64_t crs = spec.crs();
  p.iterations = static_cast<int>((crs + p.capacity - 1) / p.capacity);
  while (crs > 0) {
    const int sz = static_cast<int>(std::min<std::uint64_t>(crs, p.capacity));
    p.sizes.push_back(sz);
    crs -= sz;
  }
  return p;
}

TreePlan configure_adder_tree(std::uint64_t crs, const NodeConfig& cfg) {
  cfg.validate();
  if (crs < 1) throw ValidationError("configure_adder_tree: crs must be >= 1");
  TreePlan plan;
  const int lanes = cfg.lanes_per_pe;
  const int entries = cfg.entries_per_group;
  plan.occupancy = static_cast<int>((crs + entries - 1) / entries);

  const int len = static_cast<int>(crs);
  if (plan.occupancy >= lanes || !cfg.reconfigurable_tree) {
    // un-reconfigured (or blocking regime): all lanes reduce to one output
    plan.passes.push_back({lanes, 1, 0, len});
    return plan;
  }
  int remaining = plan.occupancy;
  int entry = 0;
  while (remaining > 0) {
    const int block = std::bit_floor(static_cast<unsigned>(remaining));
    const int end = std::min(len, entry + block * entries);
    plan.passes.push_back({block, lanes / block, entry, end});
    entry = end;
    remaining -= block;
  }
  return plan;
}

std::uint64_t TileState::linear() const {
  const std::uint64_t nx = static_cast<std::uint64_t>(x1 - x0);
  const std::uint64_t ny = static_cast<std::uint64_t>(y1 - y0);
  return (static_cast<std::uint64_t>(iter) * nx + (x - x0)) * ny + (y - y0);
}

std::uint64_t TileState::end_linear() const {
  return static_cast<std::uint64_t>(iter_end) * (x1 - x0) * (y1 - y0);
}

std::optional<RedistributionCommand> wdu_step(const std::vector<TileState>& states,
                                              const NodeConfig& cfg) {
  int source = -1;
  for (const TileState& st : states) {
    if (st.done) {
      source = st.pe_id;
      break;
    }
  }
  if (source < 0) return std::nullopt;

  int target = -1;
  std::uint64_t best_remaining = 0;
  for (const TileState& st : states) {
    if (st.done) continue;
    const std::uint64_t rem = st.remaining();
    if (rem > best_remaining) {
      best_remaining = rem;
      target = st.pe_id;
    }
  }
  if (target < 0 || best_remaining < 2) return std::nullopt;

  const TileState* tgt = nullptr;
  for (const TileState& st : states)
    if (st.pe_id == target) tgt = &st;
  const double fraction =
      tgt->total_coords ? static_cast<double>(best_remaining) / static_cast<double>(tgt->total_coords)
                        : 0.0;
  if (fraction <= cfg.wr_threshold) return std::nullopt;

  RedistributionCommand cmd;
  cmd.source_pe = source;
  cmd.target_pe = target;
  cmd.reassigned_coords = best_remaining / 2;
  cmd.transfer_bytes = cmd.reassigned_coords * tgt->bytes_per_coord;
  return cmd;
}

GroupSchedule lane_schedule(const std::vector<std::uint32_t>& nz_counts) {
  GroupSchedule g;
  for (std::uint32_t c : nz_counts) g.drain = std::max(g.drain, c);
  for (std::uint32_t c : nz_counts) g.lane_stall += g.drain - c;
  return g;
}

const char* scenario_name(Scenario s) {
  switch (s) {
    case Scenario::DC: return "dc";
    case Scenario::IN: return "in";
    case Scenario::IN_OUT: return "in_out";
    case Scenario::IN_OUT_WR: return "in_out_wr";
  }
  return "?";
}

const char* pass_name(Pass p) {
  switch (p) {
    case Pass::FP: return "fp";
    case Pass::BP: return "bp";
    case Pass::WG: return "wg";
  }
  return "?";
}

std::optional<Scenario> scenario_from_name(const std::string& s) {
  if (s == "dc") return Scenario::DC;
  if (s == "in") return Scenario::IN;
  if (s == "in_out") return Scenario::IN_OUT;
  if (s == "in_out_wr") return Scenario::IN_OUT_WR;
  return std::nullopt;
}

std::optional<Pass> pass_from_name(const std::string& s) {
  if (s == "fp") return Pass::FP;
  if (s == "bp") return Pass::BP;
  if (s == "wg") return Pass::WG;
  return std::nullopt;
}

namespace {

// Per spatial output location: non-zero operand count per 32-entry chunk of
// the linearized receptive field ((r,s) outer, channel innermost).
struct SpatialProfile {
  std::vector<std::uint16_t> nz;
};

int chunk_len(int len, int entries, int k) { return std::min(entries, len - k * entries); }

// x receptive field of output (u,v): used by FP and WG.
std::vector<SpatialProfile> build_input_profiles(const Tensor3D& x, const LayerSpec& spec) {
  const int len = static_cast<int>(spec.crs());
  const int nchunks = (len + 31) / 32;
  std::vector<SpatialProfile> out(static_cast<std::size_t>(spec.out_u) * spec.out_v);
  for (int u = 0; u < spec.out_u; ++u) {
    for (int v = 0; v < spec.out_v; ++v) {
      SpatialProfile& p = out[static_cast<std::size_t>(u) * spec.out_v + v];
      p.nz.assign(nchunks, 0);
      int k = 0;
      for (int ri = 0; ri < spec.r; ++ri) {
        const int hi = u * spec.stride + ri - spec.pad;
        for (int si = 0; si < spec.s; ++si) {
          const int wi = v * spec.stride + si - spec.pad;
          const bool in_range = hi >= 0 && hi < spec.in_h && wi >= 0 && wi < spec.in_w;
          for (int ci = 0; ci < spec.in_c; ++ci, ++k)
            if (in_range && x.at(ci, hi, wi) != 0.0f) ++p.nz[k / 32];
        }
      }
    }
  }
  return out;
}

// dy gather field of dx element (h,w): used by BP.
std::vector<SpatialProfile> build_gather_profiles(const Tensor3D& dy, const LayerSpec& spec) {
  const int len = spec.m * spec.r * spec.s;
  const int nchunks = (len + 31) / 32;
  std::vector<SpatialProfile> out(static_cast<std::size_t>(spec.in_h) * spec.in_w);
  for (int hi = 0; hi < spec.in_h; ++hi) {
    for (int wi = 0; wi < spec.in_w; ++wi) {
      SpatialProfile& p = out[static_cast<std::size_t>(hi) * spec.in_w + wi];
      p.nz.assign(nchunks, 0);
      int k = 0;
      for (int ri = 0; ri < spec.r; ++ri) {
        const int un = hi + spec.pad - ri;
        const bool u_ok = un >= 0 && un % spec.stride == 0 && un / spec.stride < spec.out_u;
        for (int si = 0; si < spec.s; ++si) {
          const int vn = wi + spec.pad - si;
          const bool v_ok = vn >= 0 && vn % spec.stride == 0 && vn / spec.stride < spec.out_v;
          for (int mi = 0; mi < spec.m; ++mi, ++k)
            if (u_ok && v_ok && dy.at(mi, un / spec.stride, vn / spec.stride) != 0.0f)
              ++p.nz[k / 32];
        }
      }
    }
  }
  return out;
}

struct UnitCost {
  std::uint64_t cycles = 0, busy = 0, lane_stall = 0, load_stall = 0;
  std::uint64_t sram_bytes = 0, decodes = 0;
};

struct CostModel {
  const std::vector<SpatialProfile>* profiles = nullptr;
  TreePlan plan;
  int len = 0;         // operand entries per output
  int lanes = 16;
  int entries = 32;
  int lane_load_cycles = 1;
  int lane_bytes = 84;
  bool dense_drain = false;  // DC: every entry drains
  int unit_size = 1;         // coordinates consumed per scheduling unit
};

void account_group(const std::vector<std::uint32_t>& counts, const CostModel& cm, UnitCost& uc) {
  std::uint32_t drain = 0;
  std::uint64_t sum = 0;
  for (std::uint32_t c : counts) {
    drain = std::max(drain, c);
    sum += c;
  }
  const std::uint64_t load =
      static_cast<std::uint64_t>(counts.size()) * cm.lane_load_cycles;
  uc.busy += drain;
  uc.lane_stall += static_cast<std::uint64_t>(drain) * counts.size() - sum;
  uc.load_stall += load > drain ? load - drain : 0;
  uc.cycles += std::max<std::uint64_t>(drain, load);
  uc.sram_bytes += static_cast<std::uint64_t>(counts.size()) * cm.lane_bytes;
  if (!cm.dense_drain) uc.decodes += sum;
}

// Cost of one scheduling unit: up to unit_size output coordinates identified
// by their spatial profile ids.
UnitCost unit_cost(const CostModel& cm, const std::uint32_t* sps, int n) {
  UnitCost uc;
  std::vector<std::uint32_t> counts;
  for (const TreePass& p : cm.plan.passes) {
    const int cb = p.entry_begin / cm.entries;
    const int ce = (std::min(p.entry_end, cm.len) + cm.entries - 1) / cm.entries;
    if (ce <= cb) continue;
    if (p.concurrent_outputs == 1) {
      // chunks of a single output spread across lanes, multiple groups
      for (int i = 0; i < n; ++i) {
        const SpatialProfile& prof = (*cm.profiles)[sps[i]];
        for (int g = cb; g < ce; g += cm.lanes) {
          const int ge = std::min(ce, g + cm.lanes);
          counts.clear();
          for (int k = g; k < ge; ++k)
            counts.push_back(cm.dense_drain ? chunk_len(cm.len, cm.entries, k) : prof.nz[k]);
          account_group(counts, cm, uc);
        }
      }
    } else {
      // several outputs share the lane array in one group
      for (int b = 0; b < n; b += p.concurrent_outputs) {
        const int be = std::min(n, b + p.concurrent_outputs);
        counts.clear();
        for (int i = b; i < be; ++i) {
          const SpatialProfile& prof = (*cm.profiles)[sps[i]];
          for (int k = cb; k < ce; ++k)
            counts.push_back(cm.dense_drain ? chunk_len(cm.len, cm.entries, k) : prof.nz[k]);
        }
        account_group(counts, cm, uc);
      }
    }
  }
  return uc;
}

struct TileRunner {
  int pe_id = 0;
  std::vector<std::uint32_t> coords;  // spatial profile ids, issue order
  std::size_t head = 0;
  std::uint64_t time = 0;
  PeCycleStats stats;
  std::uint64_t total_initial = 0;

  bool exhausted() const { return head >= coords.size(); }
};

}  // namespace

Tensor3D conv_forward_blocked(const Tensor3D& x, const FilterBank& w,
                              const LayerSpec& spec, const BlockingPlan& plan) {
  check_input_shape(x, spec);
  check_filter_shape(w, spec);
  const int len = static_cast<int>(spec.crs());
  Tensor3D y(spec.m, spec.out_u, spec.out_v);
  int begin = 0;
  for (int it = 0; it < plan.iterations; ++it) {
    const int end = begin + plan.sizes[it];
    for (int mi = 0; mi < spec.m; ++mi) {
      for (int u = 0; u < spec.out_u; ++u) {
        for (int v = 0; v < spec.out_v; ++v) {
          float acc = y.at(mi, u, v);  // partial sum carried across iterations
          for (int k = begin; k < end; ++k) {
            const int ci = k % spec.in_c;
            const int rs = k / spec.in_c;
            const int si = rs % spec.s;
            const int ri = rs / spec.s;
            const int hi = u * spec.stride + ri - spec.pad;
            const int wi = v * spec.stride + si - spec.pad;
            if (hi < 0 || hi >= spec.in_h || wi < 0 || wi >= spec.in_w) continue;
            acc += w.at(mi, ci, ri, si) * x.at(ci, hi, wi);
          }
          y.at(mi, u, v) = acc;
        }
      }
    }
    begin = end;
  }
  (void)len;
  return y;
}

SimResult simulate_layer(const LayerSpec& spec, const LayerOperands& ops,
                         const NodeConfig& cfg, Scenario scenario, Pass pass) {
  cfg.validate();
  if (!ops.input) throw ValidationError("simulate_layer: missing input operand");
  const bool sparse_scen = scenario != Scenario::DC;
  const bool out_sparse = (scenario == Scenario::IN_OUT || scenario == Scenario::IN_OUT_WR) &&
                          pass == Pass::BP;
  if (out_sparse && !ops.out_bitmap)
    throw ValidationError("simulate_layer: missing output bitmap for IN_OUT in BP");
  if ((pass == Pass::FP || pass == Pass::BP) && !ops.weights)
    throw ValidationError("simulate_layer: missing weights");
  if (pass == Pass::WG && !ops.aux)
    throw ValidationError("simulate_layer: missing activation operand for WG");

  // offsets: use the caller's (validated inside the kernels) or build here
  std::optional<OffsetMap> own_in_offsets, own_aux_offsets;
  const OffsetMap* in_off = ops.input_offsets;
  if (!in_off) {
    own_in_offsets = encode_tc_offsets(*ops.input);
    in_off = &*own_in_offsets;
  }

  SimResult res;

  // ---- functional result + MAC accounting (timing never changes values)
  std::uint64_t dense_total = 0;
  if (pass == Pass::FP) {
    SparseConvResult r = sparse_conv_forward(*ops.input, *in_off, *ops.weights, spec);
    res.output = std::move(r.y);
    res.macs = r.macs;
    dense_total = mac_count(spec);
  } else if (pass == Pass::BP) {
    OutputBitmap full;
    const OutputBitmap* bm = ops.out_bitmap;
    if (!out_sparse) {
      full = OutputBitmap(spec.in_c, spec.in_h, spec.in_w);
      std::fill(full.bytes.begin(), full.bytes.end(), static_cast<std::uint8_t>(0xff));
      bm = &full;
    }
    SparseConvResult r = sparse_conv_backward_data(*ops.input, *in_off, *ops.weights, *bm, spec);
    res.output = std::move(r.y);
    res.macs = r.macs;
    dense_total = mac_count_backward(spec);
  } else {
    const OffsetMap* aux_off = ops.aux_offsets;
    if (!aux_off) {
      own_aux_offsets = encode_tc_offsets(*ops.aux);
      aux_off = &*own_aux_offsets;
    }
    SparseWgResult r = sparse_weight_grad(*ops.aux, *aux_off, *ops.input, *in_off, spec);
    res.dweights = std::move(r.dw);
    res.macs = r.macs;
    dense_total = mac_count(spec);
  }
  if (scenario == Scenario::DC) res.macs = MacStats{dense_total, 0, 0, dense_total};

  // ---- timing model
  CostModel cm;
  cm.lanes = cfg.lanes_per_pe;
  cm.entries = cfg.entries_per_group;
  cm.dense_drain = !sparse_scen;
  const int neuron_bytes = cfg.entries_per_group * 2;
  const int offset_bytes = (cfg.entries_per_group * OffsetMap::kOffsetBits + 7) / 8;
  cm.lane_bytes = neuron_bytes + (sparse_scen ? offset_bytes : 0);
  cm.lane_load_cycles = (cm.lane_bytes + cfg.sram_bw_bytes_per_cycle - 1) / cfg.sram_bw_bytes_per_cycle;

  std::vector<SpatialProfile> profiles;
  std::vector<Rect> frags;  // output-plane fragments per tile
  int plane_w = 0;
  int nchannels = 0;
  if (pass == Pass::BP) {
    cm.len = spec.m * spec.r * spec.s;
    profiles = build_gather_profiles(*ops.input, spec);
    if (cfg.tx > spec.in_h || cfg.ty > spec.in_w)
      throw ValidationError("simulate_layer: PE grid larger than gradient output plane");
    frags = split_plane(spec.in_h, spec.in_w, cfg.tx, cfg.ty);
    plane_w = spec.in_w;
    nchannels = spec.in_c;
  } else {
    cm.len = static_cast<int>(spec.crs());
    const Tensor3D& act = pass == Pass::FP ? *ops.input : *ops.aux;
    profiles = build_input_profiles(act, spec);
    if (cfg.tx > spec.out_u || cfg.ty > spec.out_v)
      throw ValidationError("simulate_layer: PE grid larger than output plane");
    frags = split_plane(spec.out_u, spec.out_v, cfg.tx, cfg.ty);
    plane_w = spec.out_v;
    nchannels = spec.m;
  }
  cm.profiles = &profiles;
  cm.plan = configure_adder_tree(static_cast<std::uint64_t>(cm.len), cfg);
  cm.unit_size = 1;
  for (const TreePass& p : cm.plan.passes)
    cm.unit_size = std::max(cm.unit_size, p.concurrent_outputs);

  const int ntiles = cfg.tx * cfg.ty;
  std::vector<TileRunner> tiles(ntiles);
  res.cycles.pe.resize(ntiles);
  const int halo_r = spec.r / 2, halo_s = spec.s / 2;

  for (int t = 0; t < ntiles; ++t) {
    TileRunner& tr = tiles[t];
    tr.pe_id = t;
    const Rect& f = frags[t];
    // issue order: channel outer (filter decoupling), spatial inner
    if (pass == Pass::BP) {
      for (int ci = 0; ci < nchannels; ++ci)
        for (int a = f.a0; a < f.a0 + f.na; ++a)
          for (int b = f.b0; b < f.b0 + f.nb; ++b) {
            if (out_sparse) {
              ++tr.stats.bitmap_tests;
              if (!ops.out_bitmap->test(ci, a, b)) continue;
            }
            tr.coords.push_back(static_cast<std::uint32_t>(a) * plane_w + b);
          }
    } else if (pass == Pass::FP) {
      for (int ci = 0; ci < nchannels; ++ci)
        for (int a = f.a0; a < f.a0 + f.na; ++a)
          for (int b = f.b0; b < f.b0 + f.nb; ++b)
            tr.coords.push_back(static_cast<std::uint32_t>(a) * plane_w + b);
    } else {  // WG: gradient channels with any signal, per location
      for (int a = f.a0; a < f.a0 + f.na; ++a)
        for (int b = f.b0; b < f.b0 + f.nb; ++b) {
          const std::size_t n = sparse_scen ? in_off->at(a, b).size()
                                            : static_cast<std::size_t>(nchannels);
          for (std::size_t i = 0; i < n; ++i)
            tr.coords.push_back(static_cast<std::uint32_t>(a) * plane_w + b);
        }
    }
    tr.total_initial = tr.coords.size();

    // halo exchange charged at layer start, at broadcast bandwidth
    const std::uint64_t ext = static_cast<std::uint64_t>(f.na + 2 * halo_r) * (f.nb + 2 * halo_s);
    const std::uint64_t core = static_cast<std::uint64_t>(f.na) * f.nb;
    const std::uint64_t halo_b = static_cast<std::uint64_t>(nchannels) * (ext - core) * 2;
    res.cycles.halo_bytes += halo_b;
    const std::uint64_t halo_cycles =
        (halo_b + cfg.broadcast_bw_bytes_per_cycle - 1) / cfg.broadcast_bw_bytes_per_cycle;
    tr.time += halo_cycles;
    tr.stats.load_stall += halo_cycles;
    // one adder-tree pipeline fill per tree configuration
    const std::uint64_t fills =
        static_cast<std::uint64_t>(cfg.adder_latency_cycles) * cm.plan.passes.size();
    tr.time += fills;
    tr.stats.reduce += fills;
  }
  res.cycles.broadcast_bytes += res.cycles.halo_bytes;
  if (ops.weights)
    res.cycles.broadcast_bytes += static_cast<std::uint64_t>(ops.weights->size()) * 2;

  const std::uint64_t bytes_per_coord =
      static_cast<std::uint64_t>(cm.len) * cfg.wr_transfer_cost_bytes_per_element;
  const bool use_wr = scenario == Scenario::IN_OUT_WR;

  auto slice_cycles = [&](const TileRunner& tr, std::size_t from, std::size_t count) {
    std::uint64_t cycles = 0;
    while (count > 0) {
      const int n = static_cast<int>(std::min<std::size_t>(cm.unit_size, count));
      cycles += unit_cost(cm, tr.coords.data() + from, n).cycles;
      from += n;
      count -= n;
    }
    return cycles;
  };

  auto process_until = [&](TileRunner& tr, std::uint64_t deadline) {
    while (!tr.exhausted() && tr.time < deadline) {
      const int n = static_cast<int>(
          std::min<std::size_t>(cm.unit_size, tr.coords.size() - tr.head));
      const UnitCost uc = unit_cost(cm, tr.coords.data() + tr.head, n);
      tr.head += n;
      tr.time += uc.cycles;
      tr.stats.busy += uc.busy;
      tr.stats.lane_stall += uc.lane_stall;
      tr.stats.load_stall += uc.load_stall;
      tr.stats.sram_bytes += uc.sram_bytes;
      tr.stats.offset_decodes += uc.decodes;
    }
  };

  if (!use_wr) {
    for (TileRunner& tr : tiles)
      process_until(tr, std::numeric_limits<std::uint64_t>::max());
  } else {
    std::uint64_t window_end = cfg.wdu_interval_cycles;
    bool all_done = false;
    while (!all_done) {
      all_done = true;
      for (TileRunner& tr : tiles) {
        process_until(tr, window_end);
        if (!tr.exhausted()) all_done = false;
      }
      if (all_done) break;

      std::vector<TileState> states(tiles.size());
      for (std::size_t i = 0; i < tiles.size(); ++i) {
        TileState& st = states[i];
        st.pe_id = tiles[i].pe_id;
        st.x0 = 0;
        st.x1 = static_cast<int>(tiles[i].coords.size());
        st.x = static_cast<int>(tiles[i].head);
        st.y0 = 0;
        st.y1 = 1;
        st.iter_end = 1;
        st.done = tiles[i].exhausted() && tiles[i].time <= window_end;
        st.total_coords = tiles[i].total_initial;
        st.bytes_per_coord = bytes_per_coord;
      }
      if (auto cmd = wdu_step(states, cfg)) {
        TileRunner& src = tiles[cmd->source_pe];
        TileRunner& tgt = tiles[cmd->target_pe];
        const std::uint64_t n = cmd->reassigned_coords;
        const std::uint64_t transfer_cycles =
            (cmd->transfer_bytes + cfg.broadcast_bw_bytes_per_cycle - 1) /
            cfg.broadcast_bw_bytes_per_cycle;
        // accept only when the idle PE provably finishes the moved half
        // before the loaded PE would have reached it: the receiver's cost is
        // exact because unit batching restarts at each tile's head
        const std::uint64_t keep_cost =
            slice_cycles(tgt, tgt.head + n, tgt.coords.size() - tgt.head - n);
        const std::uint64_t src_start = std::max(src.time, window_end);
        if (src_start + transfer_cycles < tgt.time + keep_cost) {
          src.coords.insert(src.coords.end(), tgt.coords.begin() + tgt.head,
                            tgt.coords.begin() + tgt.head + n);
          tgt.coords.erase(tgt.coords.begin() + tgt.head, tgt.coords.begin() + tgt.head + n);
          src.time = std::max(src.time, window_end) + transfer_cycles;
          src.stats.load_stall += transfer_cycles;
          res.cycles.wr_events += 1;
          res.cycles.wr_transfer_bytes += cmd->transfer_bytes;
          res.cycles.broadcast_bytes += cmd->transfer_bytes;
        }
      }
      window_end += cfg.wdu_interval_cycles;
    }
  }

  // node aggregation
  std::uint64_t max_finish = 0, sum_finish = 0;
  for (const TileRunner& tr : tiles) max_finish = std::max(max_finish, tr.time);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    PeCycleStats& pe = res.cycles.pe[i];
    pe = tiles[i].stats;
    pe.finish_time = tiles[i].time;
    sum_finish += tiles[i].time;
    pe.total = max_finish;
    const std::uint64_t active = pe.busy + pe.load_stall + pe.reduce;
    pe.idle = max_finish > active ? max_finish - active : 0;
  }
  res.cycles.total_cycles = max_finish;
  res.cycles.avg_to_max_ratio =
      max_finish ? static_cast<double>(sum_finish) / tiles.size() / static_cast<double>(max_finish)
                 : 1.0;
  return res;
}

}  // namespace sgt
