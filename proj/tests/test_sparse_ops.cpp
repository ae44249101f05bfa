#include "doctest.h"

#include "helpers.hpp"
#include "sgt/ops.hpp"
#include "sgt/sparse_ops.hpp"
#include "sgt/trainer.hpp"

using namespace sgt;
using test_util::random_filters;
using test_util::random_tensor;
using test_util::tensors_close;

namespace {

OutputBitmap random_bitmap(int c, int h, int w, double set_fraction, Rng& rng) {
  OutputBitmap bm(c, h, w);
  for (int ci = 0; ci < c; ++ci)
    for (int hi = 0; hi < h; ++hi)
      for (int wi = 0; wi < w; ++wi)
        if (rng.uniform() < set_fraction) bm.set(ci, hi, wi, true);
  return bm;
}

void check_conservation(const MacStats& m) {
  CHECK(m.performed + m.skipped_input + m.skipped_output == m.dense_total);
}

}  // namespace

TEST_CASE("sparse forward matches the dense oracle and accounts MACs") {
  Rng rng(41);
  const LayerSpec s = LayerSpec::make(6, 6, 6, 4, 3, 3, 1, 1);
  SUBCASE("dense input skips nothing inside the image") {
    const LayerSpec np = LayerSpec::make(6, 6, 6, 4, 3, 3, 1, 0);  // no padding reads
    const Tensor3D x = random_tensor(6, 6, 6, rng);
    const SparseConvResult r = sparse_conv_forward(x, encode_tc_offsets(x), random_filters(4, 6, 3, 3, rng), np);
    CHECK(r.macs.skipped_input == 0);
    CHECK(r.macs.performed == mac_count(np));
    check_conservation(r.macs);
  }
  SUBCASE("50% zeros with 1x1 filters halves the MACs exactly") {
    const LayerSpec p = LayerSpec::make(2, 4, 4, 3, 1, 1, 1, 0);
    Tensor3D x(2, 4, 4, 1.0f);
    for (int hi = 0; hi < 4; ++hi)
      for (int wi = 0; wi < 4; ++wi) x.at(0, hi, wi) = 0.0f;
    const SparseConvResult r =
        sparse_conv_forward(x, encode_tc_offsets(x), random_filters(3, 2, 1, 1, rng), p);
    CHECK(r.macs.performed == r.macs.dense_total / 2);
  }
  SUBCASE("randomized equivalence against conv2d_forward") {
    for (int trial = 0; trial < 25; ++trial) {
      const Tensor3D x = random_tensor(6, 6, 6, rng, rng.uniform());
      const FilterBank w = random_filters(4, 6, 3, 3, rng);
      const SparseConvResult r = sparse_conv_forward(x, encode_tc_offsets(x), w, s);
      CHECK(tensors_close(r.y, conv2d_forward(x, w, s), 1e-5));
      check_conservation(r.macs);
    }
  }
  SUBCASE("stale offsets rejected") {
    const Tensor3D x = random_tensor(6, 6, 6, rng, 0.5);
    OffsetMap m = encode_tc_offsets(x);
    if (!m.at(0, 0).empty()) m.at(0, 0).pop_back();
    else m.at(0, 0).push_back(0);
    CHECK_THROWS_AS(sparse_conv_forward(x, m, random_filters(4, 6, 3, 3, rng), s),
                    IntegrityError);
  }
}

TEST_CASE("sparse backward-data masks outputs and matches dense-then-Hadamard") {
  Rng rng(43);
  const LayerSpec s = LayerSpec::make(4, 6, 6, 3, 3, 3, 1, 1);
  SUBCASE("two zero gradients in a 4-pair dot product cost 2 MACs") {
    const LayerSpec tiny = LayerSpec::make(1, 1, 1, 4, 1, 1, 1, 0);
    Tensor3D dy(4, 1, 1);
    dy.v = {1.0f, 0.0f, 2.0f, 0.0f};
    FilterBank w(4, 1, 1, 1, 1.0f);
    OutputBitmap bm(1, 1, 1);
    bm.set(0, 0, 0, true);
    const SparseConvResult r = sparse_conv_backward_data(dy, encode_tc_offsets(dy), w, bm, tiny);
    CHECK(r.macs.performed == 2);
    CHECK(r.macs.dense_total == 4);
    CHECK(r.y.v[0] == 3.0f);
  }
  SUBCASE("all-zero bitmap spends no MACs") {
    const Tensor3D dy = random_tensor(3, 6, 6, rng);
    const SparseConvResult r = sparse_conv_backward_data(
        dy, encode_tc_offsets(dy), random_filters(3, 4, 3, 3, rng), OutputBitmap(4, 6, 6), s);
    CHECK(r.macs.performed == 0);
    CHECK(r.macs.skipped_output == r.macs.dense_total);
    for (float f : r.y.v) CHECK(f == 0.0f);
  }
  SUBCASE("randomized masked equivalence") {
    for (int trial = 0; trial < 25; ++trial) {
      const Tensor3D dy = random_tensor(3, 6, 6, rng, rng.uniform());
      const FilterBank w = random_filters(3, 4, 3, 3, rng);
      const OutputBitmap bm = random_bitmap(4, 6, 6, rng.uniform(), rng);
      const SparseConvResult r = sparse_conv_backward_data(dy, encode_tc_offsets(dy), w, bm, s);
      const Tensor3D oracle = relu_backward(conv2d_backward_data(dy, w, s), bm);
      CHECK(tensors_close(r.y, oracle, 1e-5));
      check_conservation(r.macs);
      for (int ci = 0; ci < 4; ++ci)
        for (int hi = 0; hi < 6; ++hi)
          for (int wi = 0; wi < 6; ++wi)
            if (!bm.test(ci, hi, wi)) CHECK(r.y.at(ci, hi, wi) == 0.0f);
    }
  }
  SUBCASE("bitmap dim mismatch throws") {
    const Tensor3D dy = random_tensor(3, 6, 6, rng);
    CHECK_THROWS_AS(sparse_conv_backward_data(dy, encode_tc_offsets(dy),
                                              random_filters(3, 4, 3, 3, rng),
                                              OutputBitmap(4, 5, 6), s),
                    ShapeError);
  }
}

TEST_CASE("adding zeros never increases performed MACs") {
  Rng rng(47);
  const LayerSpec s = LayerSpec::make(4, 6, 6, 3, 3, 3, 1, 1);
  const FilterBank w = random_filters(3, 4, 3, 3, rng);
  Tensor3D dy = random_tensor(3, 6, 6, rng, 0.2);
  OutputBitmap bm = random_bitmap(4, 6, 6, 0.8, rng);
  std::uint64_t prev = sparse_conv_backward_data(dy, encode_tc_offsets(dy), w, bm, s).macs.performed;
  for (int round = 0; round < 5; ++round) {
    for (std::size_t i = 0; i < dy.v.size(); i += 4) dy.v[i] = 0.0f;  // flip more to zero
    const std::uint64_t cur =
        sparse_conv_backward_data(dy, encode_tc_offsets(dy), w, bm, s).macs.performed;
    CHECK(cur <= prev);
    prev = cur;
  }
}

TEST_CASE("sparse weight gradient") {
  Rng rng(53);
  const LayerSpec s = LayerSpec::make(4, 6, 6, 3, 3, 3, 1, 1);
  SUBCASE("zero gradient gives zero dw and zero MACs") {
    const Tensor3D x = random_tensor(4, 6, 6, rng);
    const Tensor3D dy(3, 6, 6);
    const SparseWgResult r =
        sparse_weight_grad(x, encode_tc_offsets(x), dy, encode_tc_offsets(dy), s);
    CHECK(r.macs.performed == 0);
    for (float f : r.dw.v) CHECK(f == 0.0f);
  }
  SUBCASE("dense operands without padding match the dense MAC count") {
    const LayerSpec np = LayerSpec::make(4, 6, 6, 3, 3, 3, 1, 0);
    const Tensor3D x = random_tensor(4, 6, 6, rng);
    const Tensor3D dy = random_tensor(3, 4, 4, rng);
    const SparseWgResult r =
        sparse_weight_grad(x, encode_tc_offsets(x), dy, encode_tc_offsets(dy), np);
    CHECK(r.macs.performed == mac_count(np));
    CHECK(r.macs.skipped_input == 0);
  }
  SUBCASE("randomized equivalence, single- and double-indexed") {
    for (int trial = 0; trial < 25; ++trial) {
      const Tensor3D x = random_tensor(4, 6, 6, rng, rng.uniform());
      const Tensor3D dy = random_tensor(3, 6, 6, rng, rng.uniform());
      const FilterBank oracle = conv2d_weight_grad(x, dy, s);
      const SparseWgResult both =
          sparse_weight_grad(x, encode_tc_offsets(x), dy, encode_tc_offsets(dy), s);
      const SparseWgResult only_dy =
          sparse_weight_grad(x, std::nullopt, dy, encode_tc_offsets(dy), s);
      for (std::size_t i = 0; i < oracle.v.size(); ++i) {
        CHECK(test_util::rel_close(both.dw.v[i], oracle.v[i], 1e-5));
        CHECK(test_util::rel_close(only_dy.dw.v[i], oracle.v[i], 1e-5));
      }
      check_conservation(both.macs);
      check_conservation(only_dy.macs);
      CHECK(both.macs.performed <= only_dy.macs.performed);
    }
  }
  SUBCASE("at least one offset map is required") {
    const Tensor3D x = random_tensor(4, 6, 6, rng);
    const Tensor3D dy = random_tensor(3, 6, 6, rng);
    CHECK_THROWS_AS(sparse_weight_grad(x, std::nullopt, dy, std::nullopt, s), ValidationError);
  }
}

TEST_CASE("effective MAC bound") {
  const LayerSpec s = LayerSpec::make(8, 8, 8, 8, 1, 1, 1, 0);
  CHECK(effective_mac_bound(s, 0.0, 0.0) == mac_count(s));
  CHECK(effective_mac_bound(s, 1.0, 0.3) == 0);
  CHECK_THROWS_AS(effective_mac_bound(s, -0.1, 0.0), ValidationError);

  SUBCASE("Monte-Carlo at s_out = s_in = 0.5 lands within 5% of the bound") {
    Rng rng(59);
    double total = 0.0;
    for (int seed = 0; seed < 20; ++seed) {
      const Tensor3D dy = random_tensor(8, 8, 8, rng, 0.5);
      const OutputBitmap bm = random_bitmap(8, 8, 8, 0.5, rng);
      const FilterBank w = random_filters(8, 8, 1, 1, rng);
      total += static_cast<double>(
          sparse_conv_backward_data(dy, encode_tc_offsets(dy), w, bm, s).macs.performed);
    }
    const double mean = total / 20.0;
    const double bound = static_cast<double>(effective_mac_bound(s, 0.5, 0.5));
    CHECK(mean > bound * 0.95);
    CHECK(mean < bound * 1.05);
  }
}
