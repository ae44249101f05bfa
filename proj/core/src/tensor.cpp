#include "sgt/tensor.hpp"

#include <sstream>

namespace sgt {

std::string Tensor3D::shape_str() const {
  std::ostringstream os;
  os << "[" << c << "," << h << "," << w << "]";
  return os.str();
}

std::string FilterBank::shape_str() const {
  std::ostringstream os;
  os << "[" << m << "," << c << "," << r << "," << s << "]";
  return os.str();
}

const char* post_op_name(PostOp p) {
  switch (p) {
    case PostOp::None: return "none";
    case PostOp::ReLU: return "relu";
    case PostOp::MaxPool: return "maxpool";
    case PostOp::BatchNormThenReLU: return "bn_relu";
  }
  return "?";
}

LayerSpec LayerSpec::make(int in_c, int in_h, int in_w, int m, int r, int s,
                          int stride, int pad, PostOp post) {
  if (in_c <= 0 || in_h <= 0 || in_w <= 0 || m <= 0 || r <= 0 || s <= 0)
    throw ShapeError("LayerSpec: all dimensions must be positive");
  if (stride <= 0) throw ShapeError("LayerSpec: stride must be positive");
  if (pad < 0) throw ShapeError("LayerSpec: padding must be non-negative");
  LayerSpec spec;
  spec.in_c = in_c;
  spec.in_h = in_h;
  spec.in_w = in_w;
  spec.m = m;
  spec.r = r;
  spec.s = s;
  spec.stride = stride;
  spec.pad = pad;
  spec.post = post;
  const int uh = in_h + 2 * pad - r;
  const int uw = in_w + 2 * pad - s;
  if (uh < 0 || uw < 0)
    throw ShapeError("LayerSpec: filter larger than padded input");
  spec.out_u = uh / stride + 1;
  spec.out_v = uw / stride + 1;
  return spec;
}

std::uint64_t mac_count(const LayerSpec& spec) {
  return static_cast<std::uint64_t>(spec.m) * spec.out_u * spec.out_v *
         spec.in_c * spec.r * spec.s;
}

std::uint64_t mac_count_backward(const LayerSpec& spec) {
  return static_cast<std::uint64_t>(spec.in_c) * spec.in_h * spec.in_w *
         spec.m * spec.r * spec.s;
}

void check_input_shape(const Tensor3D& x, const LayerSpec& spec) {
  if (x.c != spec.in_c || x.h != spec.in_h || x.w != spec.in_w)
    throw ShapeError("input shape " + x.shape_str() + " does not match spec [" +
                     std::to_string(spec.in_c) + "," + std::to_string(spec.in_h) +
                     "," + std::to_string(spec.in_w) + "]");
}

void check_filter_shape(const FilterBank& w, const LayerSpec& spec) {
  if (w.m != spec.m || w.c != spec.in_c || w.r != spec.r || w.s != spec.s)
    throw ShapeError("filter shape " + w.shape_str() + " does not match spec [" +
                     std::to_string(spec.m) + "," + std::to_string(spec.in_c) +
                     "," + std::to_string(spec.r) + "," + std::to_string(spec.s) + "]");
}

void check_output_shape(const Tensor3D& dy, const LayerSpec& spec) {
  if (dy.c != spec.m || dy.h != spec.out_u || dy.w != spec.out_v)
    throw ShapeError("gradient shape " + dy.shape_str() + " does not match spec [" +
                     std::to_string(spec.m) + "," + std::to_string(spec.out_u) +
                     "," + std::to_string(spec.out_v) + "]");
}

}  // namespace sgt
