#include "sgt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sgt {

// splitmix64: standard-independent, identical stream on every platform
std::uint64_t Rng::next_u64() {
  state_ += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform(), u2 = uniform();
  while (u1 <= 1e-300) u1 = uniform();
  const double mag = std::sqrt(-2.0 * std::log(u1));
  spare_ = mag * std::sin(2.0 * 3.14159265358979323846 * u2);
  has_spare_ = true;
  return mag * std::cos(2.0 * 3.14159265358979323846 * u2);
}

std::uint32_t Rng::next_below(std::uint32_t n) {
  return n ? static_cast<std::uint32_t>(next_u64() % n) : 0;
}

void Model::post_shape(std::size_t i, int& c, int& h, int& w) const {
  const ConvLayer& l = layers[i];
  c = l.spec.m;
  h = l.spec.out_u;
  w = l.spec.out_v;
  if (l.spec.post == PostOp::MaxPool) {
    h = (h - l.pool_window) / l.pool_stride + 1;
    w = (w - l.pool_window) / l.pool_stride + 1;
  }
}

std::size_t Model::output_elems() const {
  int c, h, w;
  post_shape(layers.size() - 1, c, h, w);
  return static_cast<std::size_t>(c) * h * w;
}

Model build_model(int in_c, int in_h, int in_w, const std::vector<LayerDesc>& descs,
                  LossKind loss, Rng& rng) {
  Model model;
  model.loss = loss;
  int c = in_c, h = in_h, w = in_w;
  for (const LayerDesc& d : descs) {
    ConvLayer layer;
    layer.spec = LayerSpec::make(c, h, w, d.filters, d.kernel, d.kernel, d.stride, d.pad, d.post);
    layer.weights = FilterBank(d.filters, c, d.kernel, d.kernel);
    const double scale = std::sqrt(2.0 / static_cast<double>(layer.spec.crs()));
    for (float& f : layer.weights.v) f = static_cast<float>(rng.gaussian() * scale);
    layer.pool_window = d.pool_window;
    layer.pool_stride = d.pool_stride;
    if (d.post == PostOp::BatchNormThenReLU) {
      layer.bn.gamma.assign(d.filters, 1.0f);
      layer.bn.beta.assign(d.filters, 0.0f);
    }
    c = layer.spec.m;
    h = layer.spec.out_u;
    w = layer.spec.out_v;
    model.layers.push_back(std::move(layer));
    if (d.post == PostOp::MaxPool) {
      h = (h - d.pool_window) / d.pool_stride + 1;
      w = (w - d.pool_window) / d.pool_stride + 1;
    }
  }
  return model;
}

namespace {

struct LossGrad {
  double loss;
  std::vector<Tensor3D> grads;  // per sample, shape of final output
};

LossGrad loss_and_grad(LossKind kind, const std::vector<Tensor3D>& outs,
                       const std::vector<int>& labels) {
  LossGrad lg{0.0, {}};
  const double inv_n = 1.0 / static_cast<double>(outs.size());
  for (std::size_t si = 0; si < outs.size(); ++si) {
    const Tensor3D& a = outs[si];
    Tensor3D g(a.c, a.h, a.w);
    const std::size_t target = labels[si] % a.v.size();
    if (kind == LossKind::MSE) {
      for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double t = (i == target) ? 1.0 : 0.0;
        const double d = a.v[i] - t;
        lg.loss += 0.5 * d * d * inv_n;
        g.v[i] = static_cast<float>(d * inv_n);
      }
    } else {
      double maxv = a.v[0];
      for (float f : a.v) maxv = std::max(maxv, static_cast<double>(f));
      double denom = 0.0;
      for (float f : a.v) denom += std::exp(f - maxv);
      for (std::size_t i = 0; i < a.v.size(); ++i) {
        const double p = std::exp(a.v[i] - maxv) / denom;
        if (i == target) lg.loss += -std::log(std::max(p, 1e-30)) * inv_n;
        g.v[i] = static_cast<float>((p - (i == target ? 1.0 : 0.0)) * inv_n);
      }
    }
    lg.grads.push_back(std::move(g));
  }
  return lg;
}

}  // namespace

StepTrace train_step(Model& model, const std::vector<Tensor3D>& batch,
                     const std::vector<int>& labels, float learning_rate) {
  if (batch.empty() || batch.size() != labels.size())
    throw ValidationError("train_step: batch and labels must be non-empty and equal length");
  const std::size_t nlayers = model.layers.size();
  const std::size_t nsamples = batch.size();

  StepTrace trace;
  trace.layers.resize(nlayers);

  // per-layer saved state for the backward pass
  std::vector<std::vector<MaxPoolResult>> pool_saved(nlayers);
  std::vector<BatchNormSaved> bn_saved(nlayers);
  std::vector<std::vector<Tensor3D>> conv_out(nlayers);  // z per sample

  // forward
  std::vector<Tensor3D> cur = batch;
  for (std::size_t li = 0; li < nlayers; ++li) {
    ConvLayer& layer = model.layers[li];
    LayerTrace& lt = trace.layers[li];
    lt.f_in = cur;
    lt.weights = layer.weights;
    conv_out[li].reserve(nsamples);
    for (const Tensor3D& x : cur)
      conv_out[li].push_back(conv2d_forward(x, layer.weights, layer.spec));

    std::vector<Tensor3D> post;
    switch (layer.spec.post) {
      case PostOp::None:
        post = conv_out[li];
        break;
      case PostOp::ReLU:
        for (const Tensor3D& z : conv_out[li]) {
          ReluResult rr = relu_forward(z);
          lt.mask.push_back(std::move(rr.mask));
          post.push_back(std::move(rr.a));
        }
        break;
      case PostOp::MaxPool:
        for (const Tensor3D& z : conv_out[li]) {
          pool_saved[li].push_back(maxpool_forward(z, layer.pool_window, layer.pool_stride));
          post.push_back(pool_saved[li].back().y);
        }
        break;
      case PostOp::BatchNormThenReLU: {
        BatchNormResult bn = batchnorm_forward(conv_out[li], layer.bn);
        bn_saved[li] = std::move(bn.saved);
        for (Tensor3D& b : bn.y) {
          ReluResult rr = relu_forward(b);
          lt.mask.push_back(std::move(rr.mask));
          post.push_back(std::move(rr.a));
        }
        break;
      }
    }
    lt.f_out = post;
    cur = std::move(post);
  }

  LossGrad lg = loss_and_grad(model.loss, cur, labels);
  if (!std::isfinite(lg.loss))
    throw ValidationError("train_step: non-finite loss (" + std::to_string(lg.loss) + ")");
  trace.loss = lg.loss;

  // backward + weight gradients
  std::vector<Tensor3D> grad = std::move(lg.grads);  // gradient at layer output (post op)
  for (std::size_t li = nlayers; li-- > 0;) {
    ConvLayer& layer = model.layers[li];
    LayerTrace& lt = trace.layers[li];

    // post-op backward: gradient at the conv output z
    std::vector<Tensor3D> gz;
    switch (layer.spec.post) {
      case PostOp::None:
        gz = std::move(grad);
        break;
      case PostOp::ReLU:
        for (std::size_t si = 0; si < nsamples; ++si)
          gz.push_back(relu_backward(grad[si], lt.mask[si]));
        break;
      case PostOp::MaxPool:
        for (std::size_t si = 0; si < nsamples; ++si)
          gz.push_back(maxpool_backward(grad[si], pool_saved[li][si], layer.spec.m,
                                        layer.spec.out_u, layer.spec.out_v));
        break;
      case PostOp::BatchNormThenReLU: {
        std::vector<Tensor3D> db;
        for (std::size_t si = 0; si < nsamples; ++si)
          db.push_back(relu_backward(grad[si], lt.mask[si]));
        BatchNormGrad bg = batchnorm_backward(db, bn_saved[li], layer.bn);
        gz = std::move(bg.dx);
        for (int ci = 0; ci < layer.spec.m; ++ci) {
          layer.bn.gamma[ci] -= learning_rate * bg.dgamma[ci];
          layer.bn.beta[ci] -= learning_rate * bg.dbeta[ci];
        }
        break;
      }
    }
    lt.g_at_out = gz;

    // weight gradient, batch-summed
    lt.dweights = FilterBank(layer.spec.m, layer.spec.in_c, layer.spec.r, layer.spec.s);
    for (std::size_t si = 0; si < nsamples; ++si) {
      FilterBank dw = conv2d_weight_grad(lt.f_in[si], gz[si], layer.spec);
      for (std::size_t i = 0; i < dw.v.size(); ++i) lt.dweights.v[i] += dw.v[i];
    }

    // data gradient to the layer below
    std::vector<Tensor3D> gin;
    for (std::size_t si = 0; si < nsamples; ++si)
      gin.push_back(conv2d_backward_data(gz[si], layer.weights, layer.spec));
    lt.g_at_in = gin;
    grad = std::move(gin);
  }

  // SGD update after all gradients are captured
  for (std::size_t li = 0; li < nlayers; ++li) {
    ConvLayer& layer = model.layers[li];
    const FilterBank& dw = trace.layers[li].dweights;
    for (std::size_t i = 0; i < dw.v.size(); ++i)
      layer.weights.v[i] -= learning_rate * dw.v[i];
  }
  return trace;
}

Dataset make_synthetic_dataset(int n, int c, int h, int w, int num_classes, Rng& rng) {
  Dataset ds;
  for (int i = 0; i < n; ++i) {
    Tensor3D t(c, h, w);
    for (float& f : t.v) f = static_cast<float>(rng.uniform(-1.0, 1.0));
    ds.samples.push_back(std::move(t));
    ds.labels.push_back(static_cast<int>(rng.next_below(static_cast<std::uint32_t>(num_classes))));
  }
  return ds;
}

}  // namespace sgt
