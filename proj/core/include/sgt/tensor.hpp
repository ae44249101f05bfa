#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgt {

// Validation errors map to CLI exit code 2, integrity errors to 3.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense [C,H,W] feature map, channel-major then row-major within a channel.
struct Tensor3D {
  int c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor3D() = default;
  Tensor3D(int c_, int h_, int w_, float fill = 0.0f)
      : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, fill) {}

  std::size_t size() const { return v.size(); }

  std::size_t idx(int ci, int hi, int wi) const {
    return (static_cast<std::size_t>(ci) * h + hi) * w + wi;
  }
  float& at(int ci, int hi, int wi) { return v[idx(ci, hi, wi)]; }
  float at(int ci, int hi, int wi) const { return v[idx(ci, hi, wi)]; }

  bool same_shape(const Tensor3D& o) const { return c == o.c && h == o.h && w == o.w; }
  std::string shape_str() const;
};

// Filter bank [M,C,R,S], M-major.
struct FilterBank {
  int m = 0, c = 0, r = 0, s = 0;
  std::vector<float> v;

  FilterBank() = default;
  FilterBank(int m_, int c_, int r_, int s_, float fill = 0.0f)
      : m(m_), c(c_), r(r_), s(s_),
        v(static_cast<std::size_t>(m_) * c_ * r_ * s_, fill) {}

  std::size_t size() const { return v.size(); }

  std::size_t idx(int mi, int ci, int ri, int si) const {
    return ((static_cast<std::size_t>(mi) * c + ci) * r + ri) * s + si;
  }
  float& at(int mi, int ci, int ri, int si) { return v[idx(mi, ci, ri, si)]; }
  float at(int mi, int ci, int ri, int si) const { return v[idx(mi, ci, ri, si)]; }

  std::string shape_str() const;
};

enum class PostOp : std::uint8_t { None = 0, ReLU = 1, MaxPool = 2, BatchNormThenReLU = 3 };

const char* post_op_name(PostOp p);

// Convolution layer shape record. out_u/out_v are derived on construction.
struct LayerSpec {
  int in_c = 0, in_h = 0, in_w = 0;  // [C,H,W]
  int m = 0, r = 0, s = 0;           // filters [M,C,R,S]
  int stride = 1;
  int pad = 0;  // per side
  PostOp post = PostOp::None;
  int out_u = 0, out_v = 0;  // conv output [M,U,V]

  static LayerSpec make(int in_c, int in_h, int in_w, int m, int r, int s,
                        int stride = 1, int pad = 0, PostOp post = PostOp::None);

  std::uint64_t crs() const {
    return static_cast<std::uint64_t>(in_c) * r * s;
  }
};

// Total dense MAC count for the forward pass: M*U*V*C*R*S.
std::uint64_t mac_count(const LayerSpec& spec);

// Dense MAC count of the gather-form backward-data pass (M and C interchanged,
// one M*R*S dot product per dx element): C*H*W*M*R*S.
std::uint64_t mac_count_backward(const LayerSpec& spec);

void check_input_shape(const Tensor3D& x, const LayerSpec& spec);
void check_filter_shape(const FilterBank& w, const LayerSpec& spec);
void check_output_shape(const Tensor3D& dy, const LayerSpec& spec);

}  // namespace sgt
