#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sgt/tensor.hpp"

namespace sgt {

// One bit per [C,H,W] element, set when the forward ReLU output was non-zero
// there (within-channel sparsity). Bits are packed little-endian in scan
// order c, h, w — the packed bytes are the serialized form.
struct OutputBitmap {
  int c = 0, h = 0, w = 0;
  std::vector<std::uint8_t> bytes;

  OutputBitmap() = default;
  OutputBitmap(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_),
        bytes((static_cast<std::size_t>(c_) * h_ * w_ + 7) / 8, 0) {}

  std::size_t size() const { return static_cast<std::size_t>(c) * h * w; }

  std::size_t bit_index(int ci, int hi, int wi) const {
    return (static_cast<std::size_t>(ci) * h + hi) * w + wi;
  }
  bool test(int ci, int hi, int wi) const {
    const std::size_t i = bit_index(ci, hi, wi);
    return (bytes[i >> 3] >> (i & 7)) & 1u;
  }
  void set(int ci, int hi, int wi, bool on) {
    const std::size_t i = bit_index(ci, hi, wi);
    if (on)
      bytes[i >> 3] |= static_cast<std::uint8_t>(1u << (i & 7));
    else
      bytes[i >> 3] &= static_cast<std::uint8_t>(~(1u << (i & 7)));
  }

  std::uint64_t popcount() const;
  bool same_dims(const OutputBitmap& o) const { return c == o.c && h == o.h && w == o.w; }
};

// Per-spatial-location non-zero channel indices (through-channel sparsity).
// Channels are covered in 32-entry segments; an offset within a segment is
// 0..31 and occupies 5 bits when serialized. Internally we keep the absolute
// non-zero channel list per location; segments are derived deterministically.
struct OffsetMap {
  static constexpr int kSegment = 32;
  static constexpr int kOffsetBits = 5;

  int c = 0, h = 0, w = 0;          // dims of the indexed tensor
  std::uint64_t elements_scanned = 0;  // indexing cost, charged once per layer
  std::vector<std::vector<std::uint16_t>> nz;  // h*w entries, ascending channels

  OffsetMap() = default;
  OffsetMap(int c_, int h_, int w_)
      : c(c_), h(h_), w(w_), nz(static_cast<std::size_t>(h_) * w_) {}

  int segments_per_location() const { return (c + kSegment - 1) / kSegment; }

  const std::vector<std::uint16_t>& at(int hi, int wi) const {
    return nz[static_cast<std::size_t>(hi) * w + wi];
  }
  std::vector<std::uint16_t>& at(int hi, int wi) {
    return nz[static_cast<std::size_t>(hi) * w + wi];
  }

  std::uint64_t total_nonzeros() const;
};

// Zero-fraction accounting for one tensor (layer, pass).
struct SparsityStats {
  int layer_id = 0;
  enum class PassTag : std::uint8_t { FP = 0, BP = 1 } pass = PassTag::FP;
  double zero_fraction = 0.0;
  std::vector<double> per_channel;  // zero fraction per channel
  std::vector<double> per_tile;     // zero fraction per (Tx,Ty) tile, row-major
};

struct FootprintDiff {
  bool equal = true;
  // first differing (c,h,w) in scan order when !equal
  int c = 0, h = 0, w = 0;
};

// Exact zero test throughout: ReLU produces exact zeros, and a threshold
// would silently change the skip set.
OffsetMap encode_tc_offsets(const Tensor3D& x);
OutputBitmap build_wc_bitmap(const Tensor3D& a);
double sparsity_fraction(const Tensor3D& x);
SparsityStats compute_sparsity_stats(const Tensor3D& x, int layer_id,
                                     SparsityStats::PassTag pass,
                                     int tiles_x = 1, int tiles_y = 1);
FootprintDiff footprint_equal(const OutputBitmap& a, const OutputBitmap& b);

// Throws IntegrityError when the map does not index exactly the non-zero
// set of x (stale offsets).
void validate_offsets(const Tensor3D& x, const OffsetMap& map);

// Serialized layout per location (h,w in scan order): segments in channel
// order, each segment = 1 count byte (low 6 bits) + ceil(n*5/8) bytes of
// 5-bit offsets packed in little-endian bit order.
std::vector<std::uint8_t> serialize_offsets(const OffsetMap& map);
OffsetMap deserialize_offsets(const std::uint8_t* data, std::size_t len,
                              int c, int h, int w);

}  // namespace sgt
