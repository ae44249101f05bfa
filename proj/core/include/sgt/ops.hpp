#pragma once

#include <utility>
#include <vector>

#include "sgt/sparsity.hpp"
#include "sgt/tensor.hpp"

namespace sgt {

// Dense reference kernels. Accumulation order is fixed: per output element,
// terms are summed over the linearized receptive field (r, s) outer, channel
// innermost — the same order the lane layout and the blocked path use.

Tensor3D conv2d_forward(const Tensor3D& x, const FilterBank& w, const LayerSpec& spec);
Tensor3D conv2d_backward_data(const Tensor3D& dy, const FilterBank& w, const LayerSpec& spec);
FilterBank conv2d_weight_grad(const Tensor3D& x, const Tensor3D& dy, const LayerSpec& spec);

// mask bit is set iff z > 0; forward output and backward skip-set are then
// literally identical (z == 0 keeps both sides zero).
struct ReluResult {
  Tensor3D a;
  OutputBitmap mask;
};
ReluResult relu_forward(const Tensor3D& z);
Tensor3D relu_backward(const Tensor3D& dy, const OutputBitmap& mask);

struct MaxPoolResult {
  Tensor3D y;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};
MaxPoolResult maxpool_forward(const Tensor3D& x, int window, int stride);
Tensor3D maxpool_backward(const Tensor3D& dy, const MaxPoolResult& saved,
                          int in_c, int in_h, int in_w);

struct BatchNormParams {
  std::vector<float> gamma, beta;
  float eps = 1e-5f;
};
struct BatchNormSaved {
  std::vector<float> mean, inv_std;            // per channel
  std::vector<Tensor3D> xhat;                  // normalized inputs per sample
};
struct BatchNormResult {
  std::vector<Tensor3D> y;
  BatchNormSaved saved;
};
struct BatchNormGrad {
  std::vector<Tensor3D> dx;
  std::vector<float> dgamma, dbeta;
};
BatchNormResult batchnorm_forward(const std::vector<Tensor3D>& batch,
                                  const BatchNormParams& params);
BatchNormGrad batchnorm_backward(const std::vector<Tensor3D>& dbatch,
                                 const BatchNormSaved& saved,
                                 const BatchNormParams& params);

}  // namespace sgt
