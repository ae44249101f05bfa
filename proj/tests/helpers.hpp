#pragma once

#include <cmath>
#include <cstdint>

#include "sgt/ops.hpp"
#include "sgt/tensor.hpp"
#include "sgt/trainer.hpp"

namespace test_util {

inline sgt::Tensor3D random_tensor(int c, int h, int w, sgt::Rng& rng,
                                   double zero_fraction = 0.0) {
  sgt::Tensor3D t(c, h, w);
  for (float& f : t.v)
    f = rng.uniform() < zero_fraction ? 0.0f : static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

inline sgt::FilterBank random_filters(int m, int c, int r, int s, sgt::Rng& rng) {
  sgt::FilterBank w(m, c, r, s);
  for (float& f : w.v) f = static_cast<float>(rng.uniform(-1.0, 1.0));
  return w;
}

inline double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * b[i];
  return acc;
}

inline bool rel_close(double a, double b, double tol) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-12});
  return std::fabs(a - b) / scale <= tol;
}

// elementwise comparison with relative tolerance against the larger magnitude
inline bool tensors_close(const sgt::Tensor3D& a, const sgt::Tensor3D& b, double tol) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    if (!rel_close(a.v[i], b.v[i], tol)) return false;
  return true;
}

}  // namespace test_util
