#pragma once

#include <cstdint>
#include <optional>

#include "sgt/ops.hpp"
#include "sgt/sparsity.hpp"
#include "sgt/tensor.hpp"

namespace sgt {

// Performed/skipped MAC accounting for one kernel invocation.
// Invariant: performed + skipped_input + skipped_output == dense_total.
// A multiply under a masked-off output location counts as output-skipped
// even when its input operand is also zero: the address generator never
// issues the location, so lane-level zero-skipping never sees it.
struct MacStats {
  std::uint64_t performed = 0;
  std::uint64_t skipped_input = 0;
  std::uint64_t skipped_output = 0;
  std::uint64_t dense_total = 0;

  MacStats& operator+=(const MacStats& o) {
    performed += o.performed;
    skipped_input += o.skipped_input;
    skipped_output += o.skipped_output;
    dense_total += o.dense_total;
    return *this;
  }
};

struct SparseConvResult {
  Tensor3D y;
  MacStats macs;
};
struct SparseWgResult {
  FilterBank dw;
  MacStats macs;
};

// Forward convolution skipping zero inputs via the offset map. Padding reads
// count as input-skipped. dense_total == mac_count(spec).
SparseConvResult sparse_conv_forward(const Tensor3D& x, const OffsetMap& x_offsets,
                                     const FilterBank& w, const LayerSpec& spec);

// Backward-data convolution in gather form: one M*R*S dot product per dx
// element. Positions with a cleared bitmap bit are never issued; their MACs
// land in skipped_output and dx is an explicit zero there.
// dense_total == mac_count_backward(spec).
SparseConvResult sparse_conv_backward_data(const Tensor3D& dy, const OffsetMap& dy_offsets,
                                           const FilterBank& w, const OutputBitmap& out_bitmap,
                                           const LayerSpec& spec);

// Weight gradient; MACs are skipped when either indexed operand is zero
// (all such skips land in skipped_input; dw itself is dense).
SparseWgResult sparse_weight_grad(const Tensor3D& x, const std::optional<OffsetMap>& x_offsets,
                                  const Tensor3D& dy, const std::optional<OffsetMap>& dy_offsets,
                                  const LayerSpec& spec);

// Analytic expectation under independent uniform sparsity:
// round(dense_total * (1-s_out) * (1-s_in)), round-half-up.
std::uint64_t effective_mac_bound(const LayerSpec& spec, double s_out, double s_in);

}  // namespace sgt
