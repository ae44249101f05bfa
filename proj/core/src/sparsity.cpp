#include "sgt/sparsity.hpp"

#include <bit>
#include <string>

namespace sgt {

std::uint64_t OutputBitmap::popcount() const {
  std::uint64_t n = 0;
  for (std::uint8_t b : bytes) n += std::popcount(static_cast<unsigned>(b));
  return n;
}

std::uint64_t OffsetMap::total_nonzeros() const {
  std::uint64_t n = 0;
  for (const auto& loc : nz) n += loc.size();
  return n;
}

OffsetMap encode_tc_offsets(const Tensor3D& x) {
  OffsetMap map(x.c, x.h, x.w);
  for (int hi = 0; hi < x.h; ++hi) {
    for (int wi = 0; wi < x.w; ++wi) {
      auto& loc = map.at(hi, wi);
      for (int ci = 0; ci < x.c; ++ci) {
        if (x.at(ci, hi, wi) != 0.0f) loc.push_back(static_cast<std::uint16_t>(ci));
      }
    }
  }
  map.elements_scanned = x.size();
  return map;
}

OutputBitmap build_wc_bitmap(const Tensor3D& a) {
  OutputBitmap bm(a.c, a.h, a.w);
  for (int ci = 0; ci < a.c; ++ci)
    for (int hi = 0; hi < a.h; ++hi)
      for (int wi = 0; wi < a.w; ++wi)
        if (a.at(ci, hi, wi) != 0.0f) bm.set(ci, hi, wi, true);
  return bm;
}

double sparsity_fraction(const Tensor3D& x) {
  if (x.v.empty()) return 0.0;
  std::size_t zeros = 0;
  for (float f : x.v)
    if (f == 0.0f) ++zeros;
  return static_cast<double>(zeros) / static_cast<double>(x.v.size());
}

SparsityStats compute_sparsity_stats(const Tensor3D& x, int layer_id,
                                     SparsityStats::PassTag pass,
                                     int tiles_x, int tiles_y) {
  SparsityStats st;
  st.layer_id = layer_id;
  st.pass = pass;
  st.zero_fraction = sparsity_fraction(x);
  st.per_channel.resize(x.c, 0.0);
  for (int ci = 0; ci < x.c; ++ci) {
    std::size_t zeros = 0;
    for (int hi = 0; hi < x.h; ++hi)
      for (int wi = 0; wi < x.w; ++wi)
        if (x.at(ci, hi, wi) == 0.0f) ++zeros;
    st.per_channel[ci] = static_cast<double>(zeros) / (static_cast<double>(x.h) * x.w);
  }
  if (tiles_x < 1 || tiles_y < 1 || tiles_x > x.h || tiles_y > x.w) {
    tiles_x = 1;
    tiles_y = 1;
  }
  st.per_tile.resize(static_cast<std::size_t>(tiles_x) * tiles_y, 0.0);
  for (int tx = 0; tx < tiles_x; ++tx) {
    for (int ty = 0; ty < tiles_y; ++ty) {
      const int h0 = tx * (x.h / tiles_x);
      const int h1 = (tx == tiles_x - 1) ? x.h : (tx + 1) * (x.h / tiles_x);
      const int w0 = ty * (x.w / tiles_y);
      const int w1 = (ty == tiles_y - 1) ? x.w : (ty + 1) * (x.w / tiles_y);
      std::size_t zeros = 0, total = 0;
      for (int ci = 0; ci < x.c; ++ci)
        for (int hi = h0; hi < h1; ++hi)
          for (int wi = w0; wi < w1; ++wi, ++total)
            if (x.at(ci, hi, wi) == 0.0f) ++zeros;
      st.per_tile[static_cast<std::size_t>(tx) * tiles_y + ty] =
          total ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
    }
  }
  return st;
}

FootprintDiff footprint_equal(const OutputBitmap& a, const OutputBitmap& b) {
  if (!a.same_dims(b)) throw ShapeError("footprint_equal: bitmap dims mismatch");
  FootprintDiff d;
  for (int ci = 0; ci < a.c; ++ci)
    for (int hi = 0; hi < a.h; ++hi)
      for (int wi = 0; wi < a.w; ++wi)
        if (a.test(ci, hi, wi) != b.test(ci, hi, wi)) {
          d.equal = false;
          d.c = ci;
          d.h = hi;
          d.w = wi;
          return d;
        }
  return d;
}

void validate_offsets(const Tensor3D& x, const OffsetMap& map) {
  if (map.c != x.c || map.h != x.h || map.w != x.w)
    throw IntegrityError("offset map dims do not match tensor " + x.shape_str());
  for (int hi = 0; hi < x.h; ++hi) {
    for (int wi = 0; wi < x.w; ++wi) {
      const auto& loc = map.at(hi, wi);
      std::size_t k = 0;
      for (int ci = 0; ci < x.c; ++ci) {
        const bool nz = x.at(ci, hi, wi) != 0.0f;
        const bool indexed = k < loc.size() && loc[k] == ci;
        if (indexed) ++k;
        if (nz != indexed)
          throw IntegrityError("stale offsets at (" + std::to_string(ci) + "," +
                               std::to_string(hi) + "," + std::to_string(wi) +
                               "): " + (nz ? "non-zero not indexed" : "offset points at zero"));
      }
      if (k != loc.size())
        throw IntegrityError("stale offsets: trailing offsets beyond channel count");
    }
  }
}

std::vector<std::uint8_t> serialize_offsets(const OffsetMap& map) {
  std::vector<std::uint8_t> out;
  const int nseg = map.segments_per_location();
  for (int hi = 0; hi < map.h; ++hi) {
    for (int wi = 0; wi < map.w; ++wi) {
      const auto& loc = map.at(hi, wi);
      std::size_t k = 0;
      for (int seg = 0; seg < nseg; ++seg) {
        const int base = seg * OffsetMap::kSegment;
        const int lim = base + OffsetMap::kSegment;
        const std::size_t first = k;
        while (k < loc.size() && loc[k] < lim) ++k;
        const std::size_t n = k - first;
        out.push_back(static_cast<std::uint8_t>(n & 0x3f));
        const std::size_t payload = (n * OffsetMap::kOffsetBits + 7) / 8;
        const std::size_t start = out.size();
        out.resize(start + payload, 0);
        for (std::size_t j = 0; j < n; ++j) {
          const unsigned off = static_cast<unsigned>(loc[first + j] - base);
          const std::size_t bitpos = j * OffsetMap::kOffsetBits;
          for (int b = 0; b < OffsetMap::kOffsetBits; ++b) {
            if (off & (1u << b)) {
              const std::size_t p = bitpos + b;
              out[start + (p >> 3)] |= static_cast<std::uint8_t>(1u << (p & 7));
            }
          }
        }
      }
    }
  }
  return out;
}

OffsetMap deserialize_offsets(const std::uint8_t* data, std::size_t len,
                              int c, int h, int w) {
  OffsetMap map(c, h, w);
  const int nseg = map.segments_per_location();
  std::size_t pos = 0;
  for (int hi = 0; hi < h; ++hi) {
    for (int wi = 0; wi < w; ++wi) {
      auto& loc = map.at(hi, wi);
      for (int seg = 0; seg < nseg; ++seg) {
        if (pos >= len) throw IntegrityError("offset payload truncated at byte " + std::to_string(pos));
        const unsigned n = data[pos++] & 0x3f;
        const std::size_t payload = (n * OffsetMap::kOffsetBits + 7) / 8;
        if (pos + payload > len)
          throw IntegrityError("offset payload truncated at byte " + std::to_string(pos));
        const int base = seg * OffsetMap::kSegment;
        for (unsigned j = 0; j < n; ++j) {
          unsigned off = 0;
          const std::size_t bitpos = j * OffsetMap::kOffsetBits;
          for (int b = 0; b < OffsetMap::kOffsetBits; ++b) {
            const std::size_t p = bitpos + b;
            if (data[pos + (p >> 3)] >> (p & 7) & 1u) off |= 1u << b;
          }
          const int ch = base + static_cast<int>(off);
          if (ch >= c)
            throw IntegrityError("offset beyond channel count at byte " + std::to_string(pos));
          loc.push_back(static_cast<std::uint16_t>(ch));
        }
        pos += payload;
      }
    }
  }
  if (pos != len)
    throw IntegrityError("offset payload has " + std::to_string(len - pos) + " trailing bytes");
  map.elements_scanned = static_cast<std::uint64_t>(c) * h * w;
  return map;
}

}  // namespace sgt
