#include "sgt/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace sgt {

Tensor3D conv2d_forward(const Tensor3D& x, const FilterBank& w, const LayerSpec& spec) {
  check_input_shape(x, spec);
  check_filter_shape(w, spec);
  Tensor3D y(spec.m, spec.out_u, spec.out_v);
  for (int mi = 0; mi < spec.m; ++mi) {
    for (int u = 0; u < spec.out_u; ++u) {
      for (int v = 0; v < spec.out_v; ++v) {
        float acc = 0.0f;
        for (int ri = 0; ri < spec.r; ++ri) {
          const int hi = u * spec.stride + ri - spec.pad;
          if (hi < 0 || hi >= spec.in_h) continue;
          for (int si = 0; si < spec.s; ++si) {
            const int wi = v * spec.stride + si - spec.pad;
            if (wi < 0 || wi >= spec.in_w) continue;
            for (int ci = 0; ci < spec.in_c; ++ci)
              acc += w.at(mi, ci, ri, si) * x.at(ci, hi, wi);
          }
        }
        y.at(mi, u, v) = acc;
      }
    }
  }
  return y;
}

Tensor3D conv2d_backward_data(const Tensor3D& dy, const FilterBank& w, const LayerSpec& spec) {
  check_output_shape(dy, spec);
  check_filter_shape(w, spec);
  Tensor3D dx(spec.in_c, spec.in_h, spec.in_w);
  for (int ci = 0; ci < spec.in_c; ++ci) {
    for (int hi = 0; hi < spec.in_h; ++hi) {
      for (int wi = 0; wi < spec.in_w; ++wi) {
        float acc = 0.0f;
        for (int ri = 0; ri < spec.r; ++ri) {
          const int un = hi + spec.pad - ri;
          if (un < 0 || un % spec.stride != 0) continue;
          const int u = un / spec.stride;
          if (u >= spec.out_u) continue;
          for (int si = 0; si < spec.s; ++si) {
            const int vn = wi + spec.pad - si;
            if (vn < 0 || vn % spec.stride != 0) continue;
            const int v = vn / spec.stride;
            if (v >= spec.out_v) continue;
            for (int mi = 0; mi < spec.m; ++mi)
              acc += w.at(mi, ci, ri, si) * dy.at(mi, u, v);
          }
        }
        dx.at(ci, hi, wi) = acc;
      }
    }
  }
  return dx;
}

FilterBank conv2d_weight_grad(const Tensor3D& x, const Tensor3D& dy, const LayerSpec& spec) {
  check_input_shape(x, spec);
  check_output_shape(dy, spec);
  FilterBank dw(spec.m, spec.in_c, spec.r, spec.s);
  for (int mi = 0; mi < spec.m; ++mi) {
    for (int ci = 0; ci < spec.in_c; ++ci) {
      for (int ri = 0; ri < spec.r; ++ri) {
        for (int si = 0; si < spec.s; ++si) {
          float acc = 0.0f;
          for (int u = 0; u < spec.out_u; ++u) {
            const int hi = u * spec.stride + ri - spec.pad;
            if (hi < 0 || hi >= spec.in_h) continue;
            for (int v = 0; v < spec.out_v; ++v) {
              const int wi = v * spec.stride + si - spec.pad;
              if (wi < 0 || wi >= spec.in_w) continue;
              acc += dy.at(mi, u, v) * x.at(ci, hi, wi);
            }
          }
          dw.at(mi, ci, ri, si) = acc;
        }
      }
    }
  }
  return dw;
}

ReluResult relu_forward(const Tensor3D& z) {
  ReluResult res{Tensor3D(z.c, z.h, z.w), OutputBitmap(z.c, z.h, z.w)};
  for (int ci = 0; ci < z.c; ++ci)
    for (int hi = 0; hi < z.h; ++hi)
      for (int wi = 0; wi < z.w; ++wi) {
        const float v = z.at(ci, hi, wi);
        if (v > 0.0f) {
          res.a.at(ci, hi, wi) = v;
          res.mask.set(ci, hi, wi, true);
        }
      }
  return res;
}

Tensor3D relu_backward(const Tensor3D& dy, const OutputBitmap& mask) {
  if (dy.c != mask.c || dy.h != mask.h || dy.w != mask.w)
    throw ShapeError("relu_backward: gradient " + dy.shape_str() + " vs mask dims mismatch");
  Tensor3D out(dy.c, dy.h, dy.w);
  for (int ci = 0; ci < dy.c; ++ci)
    for (int hi = 0; hi < dy.h; ++hi)
      for (int wi = 0; wi < dy.w; ++wi)
        if (mask.test(ci, hi, wi)) out.at(ci, hi, wi) = dy.at(ci, hi, wi);
  return out;
}

MaxPoolResult maxpool_forward(const Tensor3D& x, int window, int stride) {
  if (window <= 0 || stride <= 0) throw ShapeError("maxpool: window/stride must be positive");
  if (window > x.h || window > x.w)
    throw ShapeError("maxpool: window larger than input " + x.shape_str());
  const int oh = (x.h - window) / stride + 1;
  const int ow = (x.w - window) / stride + 1;
  MaxPoolResult res{Tensor3D(x.c, oh, ow), {}};
  res.argmax.resize(res.y.size());
  for (int ci = 0; ci < x.c; ++ci) {
    for (int u = 0; u < oh; ++u) {
      for (int v = 0; v < ow; ++v) {
        float best = -std::numeric_limits<float>::infinity();
        std::uint32_t best_idx = 0;
        // tie rule: first occurrence in row-major scan order
        for (int ri = 0; ri < window; ++ri) {
          for (int si = 0; si < window; ++si) {
            const int hi = u * stride + ri, wi = v * stride + si;
            const float val = x.at(ci, hi, wi);
            if (val > best) {
              best = val;
              best_idx = static_cast<std::uint32_t>(x.idx(ci, hi, wi));
            }
          }
        }
        res.y.at(ci, u, v) = best;
        res.argmax[res.y.idx(ci, u, v)] = best_idx;
      }
    }
  }
  return res;
}

Tensor3D maxpool_backward(const Tensor3D& dy, const MaxPoolResult& saved,
                          int in_c, int in_h, int in_w) {
  if (!dy.same_shape(saved.y))
    throw ShapeError("maxpool_backward: gradient " + dy.shape_str() + " vs pooled shape mismatch");
  Tensor3D dx(in_c, in_h, in_w);
  for (std::size_t i = 0; i < dy.v.size(); ++i) dx.v[saved.argmax[i]] += dy.v[i];
  return dx;
}

BatchNormResult batchnorm_forward(const std::vector<Tensor3D>& batch,
                                  const BatchNormParams& params) {
  if (batch.size() < 2) throw ValidationError("batchnorm: batch size must be >= 2");
  const int c = batch[0].c, h = batch[0].h, w = batch[0].w;
  for (const auto& t : batch)
    if (t.c != c || t.h != h || t.w != w)
      throw ShapeError("batchnorm: inconsistent sample shapes");
  if (static_cast<int>(params.gamma.size()) != c || static_cast<int>(params.beta.size()) != c)
    throw ShapeError("batchnorm: gamma/beta size must equal channel count");

  const double n = static_cast<double>(batch.size()) * h * w;
  BatchNormResult res;
  res.saved.mean.resize(c);
  res.saved.inv_std.resize(c);
  for (int ci = 0; ci < c; ++ci) {
    double sum = 0.0;
    for (const auto& t : batch)
      for (int hi = 0; hi < h; ++hi)
        for (int wi = 0; wi < w; ++wi) sum += t.at(ci, hi, wi);
    const double mean = sum / n;
    double var = 0.0;
    for (const auto& t : batch)
      for (int hi = 0; hi < h; ++hi)
        for (int wi = 0; wi < w; ++wi) {
          const double d = t.at(ci, hi, wi) - mean;
          var += d * d;
        }
    var /= n;
    res.saved.mean[ci] = static_cast<float>(mean);
    res.saved.inv_std[ci] = static_cast<float>(1.0 / std::sqrt(var + params.eps));
  }
  res.saved.xhat.reserve(batch.size());
  res.y.reserve(batch.size());
  for (const auto& t : batch) {
    Tensor3D xh(c, h, w), y(c, h, w);
    for (int ci = 0; ci < c; ++ci)
      for (int hi = 0; hi < h; ++hi)
        for (int wi = 0; wi < w; ++wi) {
          const float v = (t.at(ci, hi, wi) - res.saved.mean[ci]) * res.saved.inv_std[ci];
          xh.at(ci, hi, wi) = v;
          y.at(ci, hi, wi) = params.gamma[ci] * v + params.beta[ci];
        }
    res.saved.xhat.push_back(std::move(xh));
    res.y.push_back(std::move(y));
  }
  return res;
}

BatchNormGrad batchnorm_backward(const std::vector<Tensor3D>& dbatch,
                                 const BatchNormSaved& saved,
                                 const BatchNormParams& params) {
  if (dbatch.size() != saved.xhat.size())
    throw ShapeError("batchnorm_backward: batch size mismatch with saved statistics");
  const int c = dbatch[0].c, h = dbatch[0].h, w = dbatch[0].w;
  const double n = static_cast<double>(dbatch.size()) * h * w;

  BatchNormGrad g;
  g.dgamma.assign(c, 0.0f);
  g.dbeta.assign(c, 0.0f);
  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t si = 0; si < dbatch.size(); ++si)
    for (int ci = 0; ci < c; ++ci)
      for (int hi = 0; hi < h; ++hi)
        for (int wi = 0; wi < w; ++wi) {
          const double dy = dbatch[si].at(ci, hi, wi);
          sum_dy[ci] += dy;
          sum_dy_xhat[ci] += dy * saved.xhat[si].at(ci, hi, wi);
        }
  for (int ci = 0; ci < c; ++ci) {
    g.dgamma[ci] = static_cast<float>(sum_dy_xhat[ci]);
    g.dbeta[ci] = static_cast<float>(sum_dy[ci]);
  }
  g.dx.reserve(dbatch.size());
  for (std::size_t si = 0; si < dbatch.size(); ++si) {
    Tensor3D dx(c, h, w);
    for (int ci = 0; ci < c; ++ci) {
      const double k1 = sum_dy[ci] / n;
      const double k2 = sum_dy_xhat[ci] / n;
      const double scale = params.gamma[ci] * saved.inv_std[ci];
      for (int hi = 0; hi < h; ++hi)
        for (int wi = 0; wi < w; ++wi) {
          const double dy = dbatch[si].at(ci, hi, wi);
          const double xh = saved.xhat[si].at(ci, hi, wi);
          dx.at(ci, hi, wi) = static_cast<float>(scale * (dy - k1 - xh * k2));
        }
    }
    g.dx.push_back(std::move(dx));
  }
  return g;
}

}  // namespace sgt
