#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sgt/config.hpp"
#include "sgt/sparsity.hpp"
#include "sgt/tensor.hpp"
#include "sgt/trainer.hpp"

namespace sgt {

// IEEE binary16 conversion, round-to-nearest-even.
std::uint16_t fp32_to_fp16(float f);
float fp16_to_fp32(std::uint16_t h);

enum class TraceRole : std::uint8_t {
  Activation = 0,   // f: value map
  Gradient = 1,     // g: gradient map
  WeightGrad = 2,   // dw
  Bitmap = 3,       // within-channel sparsity bitmap
  Offsets = 4,      // through-channel offset map
  Weights = 5,      // filter values
};

enum class TraceDtype : std::uint8_t {
  F32 = 0,      // little-endian fp32
  F16 = 1,      // little-endian fp16
  Bitmap = 2,   // packed bits, scan order c,h,w
  Offsets = 3,  // segment-count + 5-bit offset layout
};

// Trace pass codes mirror the simulator pass enum (0=fp, 1=bp, 2=wg).
struct TraceRecord {
  std::uint32_t layer_id = 0;
  std::uint8_t pass = 0;
  TraceRole role = TraceRole::Activation;
  std::vector<std::uint32_t> dims;
  TraceDtype dtype = TraceDtype::F32;
  std::vector<std::uint8_t> payload;
};

struct TraceFile {
  std::vector<TraceRecord> records;
};

// Binary container: magic "SGTR", u16 version (= 1), u32 record count, then
// per record: u32 layer_id, u8 pass, u8 role, u8 ndims, u32 dims[ndims],
// u8 dtype, u64 payload length, payload. All fields little-endian.
void write_trace(const std::string& path, const TraceFile& tf);
// Throws IntegrityError naming the byte offset of the first malformed field.
TraceFile read_trace(const std::string& path);

TraceRecord make_tensor_record(std::uint32_t layer_id, std::uint8_t pass, TraceRole role,
                               const Tensor3D& t, bool half);
TraceRecord make_filter_record(std::uint32_t layer_id, std::uint8_t pass, TraceRole role,
                               const FilterBank& w, bool half);
TraceRecord make_bitmap_record(std::uint32_t layer_id, std::uint8_t pass, const OutputBitmap& b);
TraceRecord make_offsets_record(std::uint32_t layer_id, std::uint8_t pass, const OffsetMap& m);

Tensor3D tensor_from_record(const TraceRecord& r);
FilterBank filter_from_record(const TraceRecord& r);
OutputBitmap bitmap_from_record(const TraceRecord& r);
OffsetMap offsets_from_record(const TraceRecord& r);

// One training step serialized for sample 0 of the batch. Records are
// pass-major: every layer's fp records first, then bp, then wg. Per layer:
// fp: f_in, f_out, bitmap (ReLU layers only), offsets of f_in, weights;
// bp: g at the conv output, then g at the layer input; wg: dw. The two bp
// gradients are distinguished by that order.
// Weights are the snapshot the step computed with, not the updated values.
TraceFile trace_from_step(const StepTrace& step, bool half);

struct TraceGenOptions {
  int steps = 1;
  std::uint64_t seed = 42;
  bool half = false;
  ModelConfig model;
};

// Trains on synthetic data and writes step_NNNN.sgtr files into dir.
// Returns the paths written.
std::vector<std::string> generate_traces(const std::string& dir, const TraceGenOptions& opt);

}  // namespace sgt
