#include "doctest.h"

#include "helpers.hpp"
#include "sgt/ops.hpp"
#include "sgt/tensor.hpp"
#include "sgt/trainer.hpp"

using namespace sgt;
using test_util::dot;
using test_util::random_filters;
using test_util::random_tensor;
using test_util::rel_close;

TEST_CASE("layer spec derives output dims and validates filter channels") {
  const LayerSpec s = LayerSpec::make(3, 8, 8, 4, 3, 3, 1, 1);
  CHECK(s.out_u == 8);
  CHECK(s.out_v == 8);
  const LayerSpec strided = LayerSpec::make(3, 9, 9, 4, 3, 3, 2, 0);
  CHECK(strided.out_u == 4);
  CHECK(strided.out_v == 4);
  CHECK_THROWS_AS(LayerSpec::make(0, 8, 8, 4, 3, 3), ValidationError);
  CHECK_THROWS_AS(LayerSpec::make(3, 2, 2, 4, 3, 3, 1, 0), ValidationError);  // window > input
}

TEST_CASE("mac_count formula and multiplicativity") {
  // C=3, R=S=3, M=2, U=V=3: 2*3*3*3*3*3 = 486
  const LayerSpec s = LayerSpec::make(3, 5, 5, 2, 3, 3, 1, 0);
  REQUIRE(s.out_u == 3);
  CHECK(mac_count(s) == 486);
  const LayerSpec one = LayerSpec::make(1, 1, 1, 1, 1, 1, 1, 0);
  CHECK(mac_count(one) == 1);
  const LayerSpec dm = LayerSpec::make(3, 5, 5, 4, 3, 3, 1, 0);
  CHECK(mac_count(dm) == 2 * mac_count(s));
  CHECK(mac_count_backward(s) == 3ull * 5 * 5 * 2 * 3 * 3);
}

TEST_CASE("conv2d_forward hand examples") {
  SUBCASE("1x1 scalar") {
    Tensor3D x(1, 1, 1);
    x.v[0] = 2.0f;
    FilterBank w(1, 1, 1, 1);
    w.v[0] = 3.0f;
    const LayerSpec s = LayerSpec::make(1, 1, 1, 1, 1, 1, 1, 0);
    CHECK(conv2d_forward(x, w, s).v[0] == 6.0f);
  }
  SUBCASE("2x2 all-ones window sums") {
    Tensor3D x(1, 3, 3);
    const float vals[9] = {1, 0, 2, 0, 3, 0, 4, 0, 5};
    for (int i = 0; i < 9; ++i) x.v[i] = vals[i];
    FilterBank w(1, 1, 2, 2, 1.0f);
    const LayerSpec s = LayerSpec::make(1, 3, 3, 1, 2, 2, 1, 0);
    const Tensor3D y = conv2d_forward(x, w, s);
    CHECK(y.at(0, 0, 0) == 4.0f);
    CHECK(y.at(0, 0, 1) == 5.0f);
    CHECK(y.at(0, 1, 0) == 7.0f);
    CHECK(y.at(0, 1, 1) == 8.0f);
  }
  SUBCASE("zero filters give zero output") {
    Rng rng(1);
    const Tensor3D x = random_tensor(2, 4, 4, rng);
    const FilterBank w(3, 2, 3, 3, 0.0f);
    const LayerSpec s = LayerSpec::make(2, 4, 4, 3, 3, 3, 1, 1);
    for (float f : conv2d_forward(x, w, s).v) CHECK(f == 0.0f);
  }
  SUBCASE("shape mismatch throws") {
    const LayerSpec s = LayerSpec::make(2, 4, 4, 3, 3, 3, 1, 1);
    CHECK_THROWS_AS(conv2d_forward(Tensor3D(1, 4, 4), FilterBank(3, 2, 3, 3), s), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(Tensor3D(2, 4, 4), FilterBank(3, 1, 3, 3), s), ShapeError);
  }
}

TEST_CASE("backward-data is the exact adjoint of forward") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int stride = 1 + static_cast<int>(rng.next_below(2));
    const int pad = static_cast<int>(rng.next_below(2));
    const LayerSpec s = LayerSpec::make(2, 4 + pad, 4 + pad, 3, 3, 3, stride, pad);
    const Tensor3D x = random_tensor(s.in_c, s.in_h, s.in_w, rng);
    const FilterBank w = random_filters(s.m, s.in_c, s.r, s.s, rng);
    const Tensor3D dy = random_tensor(s.m, s.out_u, s.out_v, rng);
    const double lhs = dot(conv2d_forward(x, w, s).v, dy.v);
    const double rhs = dot(x.v, conv2d_backward_data(dy, w, s).v);
    CHECK(rel_close(lhs, rhs, 1e-5));
  }
  SUBCASE("trivial cases") {
    const LayerSpec s = LayerSpec::make(1, 1, 1, 1, 1, 1, 1, 0);
    Tensor3D dy(1, 1, 1);
    dy.v[0] = 5.0f;
    FilterBank w(1, 1, 1, 1);
    w.v[0] = 2.0f;
    CHECK(conv2d_backward_data(dy, w, s).v[0] == 10.0f);
    dy.v[0] = 0.0f;
    CHECK(conv2d_backward_data(dy, w, s).v[0] == 0.0f);
  }
}

TEST_CASE("weight gradient matches counting case and finite differences") {
  SUBCASE("all-ones counting") {
    const LayerSpec s = LayerSpec::make(2, 4, 5, 3, 1, 1, 1, 0);
    const Tensor3D x(2, 4, 5, 1.0f);
    const Tensor3D dy(3, 4, 5, 1.0f);
    const FilterBank dw = conv2d_weight_grad(x, dy, s);
    for (float f : dw.v) CHECK(f == 20.0f);  // U*V
  }
  SUBCASE("central differences on loss = sum(y^2)/2") {
    Rng rng(11);
    const LayerSpec s = LayerSpec::make(2, 5, 5, 2, 3, 3, 1, 1);
    const Tensor3D x = random_tensor(s.in_c, s.in_h, s.in_w, rng);
    FilterBank w = random_filters(s.m, s.in_c, s.r, s.s, rng);
    const Tensor3D y = conv2d_forward(x, w, s);
    const FilterBank dw = conv2d_weight_grad(x, y, s);  // dL/dw with dy = y
    auto loss = [&](const FilterBank& wt) {
      double l = 0.0;
      for (float f : conv2d_forward(x, wt, s).v) l += 0.5 * static_cast<double>(f) * f;
      return l;
    };
    const float eps = 1e-3f;
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t i = rng.next_below(static_cast<std::uint32_t>(w.v.size()));
      FilterBank wp = w, wm = w;
      wp.v[i] += eps;
      wm.v[i] -= eps;
      const double fd = (loss(wp) - loss(wm)) / (2.0 * eps);
      CHECK(rel_close(fd, dw.v[i], 1e-3));
    }
  }
}

TEST_CASE("relu forward/backward and the z>0 gate") {
  Tensor3D z(1, 1, 3);
  z.v = {-1.0f, 0.0f, 2.0f};
  const ReluResult rr = relu_forward(z);
  CHECK(rr.a.v[0] == 0.0f);
  CHECK(rr.a.v[1] == 0.0f);
  CHECK(rr.a.v[2] == 2.0f);
  CHECK_FALSE(rr.mask.test(0, 0, 0));
  CHECK_FALSE(rr.mask.test(0, 0, 1));  // z == 0 is gated off
  CHECK(rr.mask.test(0, 0, 2));

  Tensor3D dy(1, 1, 3);
  dy.v = {5.0f, -3.0f, 2.0f};
  const Tensor3D g = relu_backward(dy, rr.mask);
  CHECK(g.v[0] == 0.0f);
  CHECK(g.v[1] == 0.0f);
  CHECK(g.v[2] == 2.0f);

  SUBCASE("all positive passes through") {
    Tensor3D p(2, 3, 3, 1.5f);
    const ReluResult pr = relu_forward(p);
    CHECK(pr.a.v == p.v);
    CHECK(pr.mask.popcount() == p.v.size());
    CHECK(relu_backward(dy, OutputBitmap(1, 1, 3)).v == std::vector<float>{0, 0, 0});
  }
  SUBCASE("random sign gives ~half set bits") {
    Rng rng(3);
    const Tensor3D r = random_tensor(4, 50, 50, rng);
    const double frac =
        static_cast<double>(relu_forward(r).mask.popcount()) / static_cast<double>(r.v.size());
    CHECK(frac > 0.45);
    CHECK(frac < 0.55);
  }
}

TEST_CASE("maxpool forward, tie rule, backward scatter, adjointness") {
  Tensor3D x(1, 2, 2);
  x.v = {1, 2, 3, 4};
  const MaxPoolResult mp = maxpool_forward(x, 2, 2);
  CHECK(mp.y.v.size() == 1);
  CHECK(mp.y.v[0] == 4.0f);
  Tensor3D dy(1, 1, 1);
  dy.v[0] = 7.0f;
  const Tensor3D dx = maxpool_backward(dy, mp, 1, 2, 2);
  CHECK(dx.v == std::vector<float>{0, 0, 0, 7});

  SUBCASE("constant input ties to first scan index") {
    const Tensor3D c(1, 2, 2, 5.0f);
    CHECK(maxpool_forward(c, 2, 2).argmax[0] == 0);
  }
  SUBCASE("window larger than input throws") {
    CHECK_THROWS_AS(maxpool_forward(Tensor3D(1, 2, 2), 3, 1), ValidationError);
  }
  SUBCASE("adjoint identity") {
    Rng rng(5);
    const Tensor3D a = random_tensor(3, 6, 6, rng);
    const MaxPoolResult r = maxpool_forward(a, 2, 2);
    const Tensor3D g = random_tensor(3, 3, 3, rng);
    const double lhs = dot(r.y.v, g.v);
    const double rhs = dot(a.v, maxpool_backward(g, r, 3, 6, 6).v);
    CHECK(rel_close(lhs, rhs, 1e-5));
  }
}

TEST_CASE("batchnorm statistics and gradients") {
  BatchNormParams params;
  params.gamma.assign(3, 1.0f);
  params.beta.assign(3, 0.0f);

  SUBCASE("identical samples produce identical outputs") {
    Rng rng(9);
    const Tensor3D s = random_tensor(3, 4, 4, rng);
    const BatchNormResult r = batchnorm_forward({s, s}, params);
    CHECK(r.y[0].v == r.y[1].v);
  }
  SUBCASE("batch below two throws") {
    CHECK_THROWS_AS(batchnorm_forward({Tensor3D(3, 4, 4)}, params), ValidationError);
  }
  SUBCASE("normalized output has unit statistics") {
    Rng rng(13);
    std::vector<Tensor3D> batch;
    for (int i = 0; i < 4; ++i) batch.push_back(random_tensor(3, 4, 4, rng));
    const BatchNormResult r = batchnorm_forward(batch, params);
    for (int ci = 0; ci < 3; ++ci) {
      double sum = 0.0, sq = 0.0;
      const double n = 4.0 * 4 * 4;
      for (const Tensor3D& t : r.y)
        for (int hi = 0; hi < 4; ++hi)
          for (int wi = 0; wi < 4; ++wi) {
            sum += t.at(ci, hi, wi);
            sq += static_cast<double>(t.at(ci, hi, wi)) * t.at(ci, hi, wi);
          }
      CHECK(std::fabs(sum / n) < 1e-5);
      CHECK(std::fabs(sq / n - 1.0) < 1e-3);
    }
  }
  SUBCASE("backward matches central differences") {
    Rng rng(17);
    BatchNormParams p;
    p.gamma = {1.2f, 0.8f};
    p.beta = {0.1f, -0.2f};
    std::vector<Tensor3D> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_tensor(2, 3, 3, rng));

    // a quadratic loss in y is invariant to x through the normalization
    // (sum xhat = 0, sum xhat^2 = n), so weight each element with fixed
    // random coefficients instead: loss = sum r.y, dL/dy = r
    std::vector<Tensor3D> coeff;
    for (int i = 0; i < 3; ++i) coeff.push_back(random_tensor(2, 3, 3, rng));
    auto loss = [&](const std::vector<Tensor3D>& b, const BatchNormParams& pp) {
      double l = 0.0;
      const BatchNormResult r = batchnorm_forward(b, pp);
      for (std::size_t si = 0; si < r.y.size(); ++si)
        for (std::size_t i = 0; i < r.y[si].v.size(); ++i)
          l += static_cast<double>(coeff[si].v[i]) * r.y[si].v[i];
      return l;
    };
    const BatchNormResult fwd = batchnorm_forward(batch, p);
    const BatchNormGrad bg = batchnorm_backward(coeff, fwd.saved, p);

    const float eps = 1e-3f;
    for (int trial = 0; trial < 10; ++trial) {
      const int si = static_cast<int>(rng.next_below(3));
      const std::size_t i = rng.next_below(static_cast<std::uint32_t>(batch[si].v.size()));
      auto bp = batch, bm = batch;
      bp[si].v[i] += eps;
      bm[si].v[i] -= eps;
      const double fd = (loss(bp, p) - loss(bm, p)) / (2.0 * eps);
      CHECK(rel_close(fd, bg.dx[si].v[i], 2e-3));
    }
    for (int ci = 0; ci < 2; ++ci) {
      auto pp = p, pm = p;
      pp.gamma[ci] += eps;
      pm.gamma[ci] -= eps;
      CHECK(rel_close((loss(batch, pp) - loss(batch, pm)) / (2.0 * eps), bg.dgamma[ci], 1e-3));
      pp = pm = p;
      pp.beta[ci] += eps;
      pm.beta[ci] -= eps;
      CHECK(rel_close((loss(batch, pp) - loss(batch, pm)) / (2.0 * eps), bg.dbeta[ci], 1e-3));
    }
  }
}
