#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sgt/ops.hpp"
#include "sgt/tensor.hpp"

namespace sgt {

// Deterministic RNG: splitmix64 stream, transforms hand-rolled so sequences
// do not depend on the standard library's distribution choices.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next_u64();
  double uniform();                      // [0,1)
  double uniform(double lo, double hi);
  double gaussian();                     // standard normal (Box-Muller)
  std::uint32_t next_below(std::uint32_t n);

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

enum class LossKind : std::uint8_t { MSE = 0, SoftmaxCrossEntropy = 1 };

struct ConvLayer {
  LayerSpec spec;
  FilterBank weights;
  BatchNormParams bn;       // used when post == BatchNormThenReLU
  int pool_window = 2;      // used when post == MaxPool
  int pool_stride = 2;
};

struct Model {
  std::vector<ConvLayer> layers;
  LossKind loss = LossKind::MSE;

  // output shape of layer i after its post op
  void post_shape(std::size_t i, int& c, int& h, int& w) const;
  std::size_t output_elems() const;
};

// Everything one training step produces for one layer, per sample.
// g_at_out is the gradient at the conv output z (after the post op's
// backward), g_at_in the gradient at the layer input.
struct LayerTrace {
  std::vector<Tensor3D> f_in, f_out;          // per sample
  std::vector<OutputBitmap> mask;             // per sample; empty if no ReLU
  std::vector<Tensor3D> g_at_out, g_at_in;    // per sample
  FilterBank weights;                         // snapshot used by this step
  FilterBank dweights;                        // batch-summed
};

struct StepTrace {
  std::vector<LayerTrace> layers;
  double loss = 0.0;
};

// Builds a model from a layer description; weights drawn N(0, sqrt(2/CRS)).
struct LayerDesc {
  int filters = 0, kernel = 3, stride = 1, pad = 0;
  PostOp post = PostOp::ReLU;
  int pool_window = 2, pool_stride = 2;
};
Model build_model(int in_c, int in_h, int in_w, const std::vector<LayerDesc>& descs,
                  LossKind loss, Rng& rng);

// Runs FP, BP and WG for every layer, applies the SGD update in place and
// returns the full trace. Throws ValidationError on non-finite loss.
StepTrace train_step(Model& model, const std::vector<Tensor3D>& batch,
                     const std::vector<int>& labels, float learning_rate);

// Synthetic dataset: uniform noise samples with random labels.
struct Dataset {
  std::vector<Tensor3D> samples;
  std::vector<int> labels;
};
Dataset make_synthetic_dataset(int n, int c, int h, int w, int num_classes, Rng& rng);

}  // namespace sgt
