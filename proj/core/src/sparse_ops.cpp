#include "sgt/sparse_ops.hpp"

#include <cmath>

namespace sgt {

SparseConvResult sparse_conv_forward(const Tensor3D& x, const OffsetMap& x_offsets,
                                     const FilterBank& w, const LayerSpec& spec) {
  check_input_shape(x, spec);
  check_filter_shape(w, spec);
  validate_offsets(x, x_offsets);

  SparseConvResult res{Tensor3D(spec.m, spec.out_u, spec.out_v), {}};
  res.macs.dense_total = mac_count(spec);
  for (int mi = 0; mi < spec.m; ++mi) {
    for (int u = 0; u < spec.out_u; ++u) {
      for (int v = 0; v < spec.out_v; ++v) {
        float acc = 0.0f;
        for (int ri = 0; ri < spec.r; ++ri) {
          const int hi = u * spec.stride + ri - spec.pad;
          for (int si = 0; si < spec.s; ++si) {
            const int wi = v * spec.stride + si - spec.pad;
            if (hi < 0 || hi >= spec.in_h || wi < 0 || wi >= spec.in_w) {
              res.macs.skipped_input += spec.in_c;  // padding reads
              continue;
            }
            const auto& nz = x_offsets.at(hi, wi);
            for (std::uint16_t ci : nz) acc += w.at(mi, ci, ri, si) * x.at(ci, hi, wi);
            res.macs.performed += nz.size();
            res.macs.skipped_input += spec.in_c - nz.size();
          }
        }
        res.y.at(mi, u, v) = acc;
      }
    }
  }
  return res;
}

SparseConvResult sparse_conv_backward_data(const Tensor3D& dy, const OffsetMap& dy_offsets,
                                           const FilterBank& w, const OutputBitmap& out_bitmap,
                                           const LayerSpec& spec) {
  check_output_shape(dy, spec);
  check_filter_shape(w, spec);
  if (out_bitmap.c != spec.in_c || out_bitmap.h != spec.in_h || out_bitmap.w != spec.in_w)
    throw ShapeError("sparse_conv_backward_data: bitmap dims do not match input shape");
  validate_offsets(dy, dy_offsets);

  const std::uint64_t per_element = static_cast<std::uint64_t>(spec.m) * spec.r * spec.s;
  SparseConvResult res{Tensor3D(spec.in_c, spec.in_h, spec.in_w), {}};
  res.macs.dense_total = mac_count_backward(spec);
  for (int ci = 0; ci < spec.in_c; ++ci) {
    for (int hi = 0; hi < spec.in_h; ++hi) {
      for (int wi = 0; wi < spec.in_w; ++wi) {
        if (!out_bitmap.test(ci, hi, wi)) {
          res.macs.skipped_output += per_element;
          continue;
        }
        float acc = 0.0f;
        for (int ri = 0; ri < spec.r; ++ri) {
          const int un = hi + spec.pad - ri;
          const bool u_ok = un >= 0 && un % spec.stride == 0 && un / spec.stride < spec.out_u;
          for (int si = 0; si < spec.s; ++si) {
            const int vn = wi + spec.pad - si;
            const bool v_ok = vn >= 0 && vn % spec.stride == 0 && vn / spec.stride < spec.out_v;
            if (!u_ok || !v_ok) {
              res.macs.skipped_input += spec.m;  // no contributing window
              continue;
            }
            const int u = un / spec.stride, v = vn / spec.stride;
            const auto& nz = dy_offsets.at(u, v);
            for (std::uint16_t mi : nz) acc += w.at(mi, ci, ri, si) * dy.at(mi, u, v);
            res.macs.performed += nz.size();
            res.macs.skipped_input += spec.m - nz.size();
          }
        }
        res.y.at(ci, hi, wi) = acc;
      }
    }
  }
  return res;
}

SparseWgResult sparse_weight_grad(const Tensor3D& x, const std::optional<OffsetMap>& x_offsets,
                                  const Tensor3D& dy, const std::optional<OffsetMap>& dy_offsets,
                                  const LayerSpec& spec) {
  check_input_shape(x, spec);
  check_output_shape(dy, spec);
  if (!x_offsets && !dy_offsets)
    throw ValidationError("sparse_weight_grad: at least one operand must carry an offset map");
  if (x_offsets) validate_offsets(x, *x_offsets);
  if (dy_offsets) validate_offsets(dy, *dy_offsets);

  SparseWgResult res{FilterBank(spec.m, spec.in_c, spec.r, spec.s), {}};
  res.macs.dense_total = mac_count(spec);

  // dense fall-back channel lists when an operand is un-indexed
  std::vector<std::uint16_t> all_m(spec.m), all_c(spec.in_c);
  for (int i = 0; i < spec.m; ++i) all_m[i] = static_cast<std::uint16_t>(i);
  for (int i = 0; i < spec.in_c; ++i) all_c[i] = static_cast<std::uint16_t>(i);

  const std::uint64_t crs_c = spec.in_c;
  for (int u = 0; u < spec.out_u; ++u) {
    for (int v = 0; v < spec.out_v; ++v) {
      const auto& nzm = dy_offsets ? dy_offsets->at(u, v) : all_m;
      // gradient channels skipped entirely at this location
      res.macs.skipped_input += static_cast<std::uint64_t>(spec.m - nzm.size()) * spec.r * spec.s * crs_c;
      for (int ri = 0; ri < spec.r; ++ri) {
        const int hi = u * spec.stride + ri - spec.pad;
        for (int si = 0; si < spec.s; ++si) {
          const int wi = v * spec.stride + si - spec.pad;
          if (hi < 0 || hi >= spec.in_h || wi < 0 || wi >= spec.in_w) {
            res.macs.skipped_input += nzm.size() * crs_c;  // padding reads
            continue;
          }
          const auto& nzc = x_offsets ? x_offsets->at(hi, wi) : all_c;
          for (std::uint16_t mi : nzm) {
            const float g = dy.at(mi, u, v);
            for (std::uint16_t ci : nzc)
              res.dw.at(mi, ci, ri, si) += g * x.at(ci, hi, wi);
          }
          res.macs.performed += static_cast<std::uint64_t>(nzm.size()) * nzc.size();
          res.macs.skipped_input += static_cast<std::uint64_t>(nzm.size()) * (crs_c - nzc.size());
        }
      }
    }
  }
  return res;
}

std::uint64_t effective_mac_bound(const LayerSpec& spec, double s_out, double s_in) {
  if (s_out < 0.0 || s_out > 1.0 || s_in < 0.0 || s_in > 1.0)
    throw ValidationError("effective_mac_bound: sparsity fractions must lie in [0,1]");
  const double expected =
      static_cast<double>(mac_count(spec)) * (1.0 - s_out) * (1.0 - s_in);
  return static_cast<std::uint64_t>(std::floor(expected + 0.5));  // round-half-up
}

}  // namespace sgt
