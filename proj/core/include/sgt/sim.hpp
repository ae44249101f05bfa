#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sgt/sparse_ops.hpp"
#include "sgt/sparsity.hpp"
#include "sgt/tensor.hpp"

namespace sgt {

// One accelerator node: a Tx x Ty grid of PEs, each with 16 double-buffered
// computation lanes and a reconfigurable adder tree.
struct NodeConfig {
  int tx = 4, ty = 4;
  int lanes_per_pe = 16;
  int entries_per_group = 32;
  int groups = 2;
  int sram_bw_bytes_per_cycle = 84;
  int broadcast_bw_bytes_per_cycle = 768;
  int adder_latency_cycles = 4;
  double wr_threshold = 0.30;
  int wr_transfer_cost_bytes_per_element = 2;
  double clock_ghz = 0.667;
  bool reconfigurable_tree = true;
  int wdu_interval_cycles = 64;

  // 1024 pairs at defaults
  int pe_capacity() const { return lanes_per_pe * entries_per_group * groups; }
  void validate() const;
  static NodeConfig from_kv(const std::map<std::string, std::string>& kv);
};

struct TileAssignment {
  int pe_id = 0;
  int u0 = 0, v0 = 0, nu = 0, nv = 0;       // output fragment rectangle
  int in_c = 0, in_h = 0, in_w = 0;         // input fragment extents incl. halo
  std::uint64_t halo_bytes = 0;             // exchanged at layer start
};

// Partition of the output plane; remainder rows/columns go to the last tile
// in each dimension.
std::vector<TileAssignment> tile_partition(const LayerSpec& spec, const NodeConfig& cfg);

struct BlockingPlan {
  int capacity = 0;
  int iterations = 0;
  std::vector<int> sizes;  // operand pairs per iteration
};
BlockingPlan plan_blocking(const LayerSpec& spec, const NodeConfig& cfg);

// Adder-tree schedule for one output's receptive field. Lane occupancy is
// ceil(crs / entries_per_group); non-power-of-two occupancies are decomposed
// hierarchically into power-of-two lane blocks, largest first.
struct TreePass {
  int lanes_per_output = 0;    // power of two
  int concurrent_outputs = 0;  // lanes_per_pe / lanes_per_output
  int entry_begin = 0, entry_end = 0;  // operand index range this pass covers
};
struct TreePlan {
  int occupancy = 0;
  std::vector<TreePass> passes;
};
TreePlan configure_adder_tree(std::uint64_t crs, const NodeConfig& cfg);

// Per-tile progress tracked by the work distribution unit. Coordinates are
// linearized: lexicographic <iter, x, y> over [0,iter_end) x [x0,x1) x [y0,y1).
struct TileState {
  int pe_id = 0;
  int iter = 0, x = 0, y = 0;
  int iter_end = 1;
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  bool done = false;
  std::uint64_t total_coords = 0;      // originally assigned
  std::uint64_t bytes_per_coord = 0;   // input footprint to forward on transfer

  std::uint64_t linear() const;
  std::uint64_t end_linear() const;
  std::uint64_t remaining() const { return end_linear() - linear(); }
};

struct RedistributionCommand {
  int source_pe = 0;  // idle tile that receives work
  int target_pe = 0;  // busiest tile that sheds work
  std::uint64_t reassigned_coords = 0;  // lower half of the target's remaining
  std::uint64_t transfer_bytes = 0;
};

// Emits a command when some tile is done and the busiest tile still has more
// than wr_threshold of its work remaining; otherwise nothing.
std::optional<RedistributionCommand> wdu_step(const std::vector<TileState>& states,
                                              const NodeConfig& cfg);

// Drain of one double-buffered group: the slowest lane gates the reduce.
struct GroupSchedule {
  std::uint32_t drain = 0;        // max non-zero count over lanes
  std::uint64_t lane_stall = 0;   // sum over lanes of (drain - own count)
};
GroupSchedule lane_schedule(const std::vector<std::uint32_t>& nz_counts);

struct PeCycleStats {
  std::uint64_t busy = 0;        // drain cycles on the critical lane
  std::uint64_t lane_stall = 0;  // lane-cycles idled inside drains (diagnostic)
  std::uint64_t load_stall = 0;  // loads not hidden by double buffering
  std::uint64_t reduce = 0;      // adder-tree pipeline fills
  std::uint64_t idle = 0;        // waiting for the slowest PE
  std::uint64_t total = 0;       // busy + load_stall + reduce + idle
  std::uint64_t finish_time = 0;
  std::uint64_t sram_bytes = 0;
  std::uint64_t offset_decodes = 0;
  std::uint64_t bitmap_tests = 0;
};

struct CycleStats {
  std::vector<PeCycleStats> pe;
  std::uint64_t total_cycles = 0;  // max over PEs
  double avg_to_max_ratio = 0.0;   // mean finish time / max finish time
  std::uint64_t wr_events = 0;
  std::uint64_t halo_bytes = 0;
  std::uint64_t wr_transfer_bytes = 0;
  std::uint64_t broadcast_bytes = 0;
};

enum class Scenario : std::uint8_t { DC = 0, IN = 1, IN_OUT = 2, IN_OUT_WR = 3 };
enum class Pass : std::uint8_t { FP = 0, BP = 1, WG = 2 };

const char* scenario_name(Scenario s);
const char* pass_name(Pass p);
std::optional<Scenario> scenario_from_name(const std::string& s);
std::optional<Pass> pass_from_name(const std::string& s);

// Operand bundle; offsets are computed internally when absent.
struct LayerOperands {
  const Tensor3D* input = nullptr;        // x for FP; dy for BP and WG
  const Tensor3D* aux = nullptr;          // x for WG
  const FilterBank* weights = nullptr;    // FP and BP
  const OffsetMap* input_offsets = nullptr;
  const OffsetMap* aux_offsets = nullptr;
  const OutputBitmap* out_bitmap = nullptr;  // BP output sparsity
};

struct SimResult {
  CycleStats cycles;
  MacStats macs;
  Tensor3D output;       // FP: y, BP: dx (masked); empty for WG
  FilterBank dweights;   // WG only
};

// Deterministic cycle-level model. The numeric output always comes from the
// functional sparse kernels; timing never changes values.
SimResult simulate_layer(const LayerSpec& spec, const LayerOperands& ops,
                         const NodeConfig& cfg, Scenario scenario, Pass pass);

// Synapse-blocked forward convolution: partial sums carried across
// capacity-sized chunks of the receptive field, accumulation order identical
// to conv2d_forward, so results are bitwise equal.
Tensor3D conv_forward_blocked(const Tensor3D& x, const FilterBank& w,
                              const LayerSpec& spec, const BlockingPlan& plan);

}  // namespace sgt
