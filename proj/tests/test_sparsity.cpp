#include "doctest.h"

#include "helpers.hpp"
#include "sgt/ops.hpp"
#include "sgt/sparsity.hpp"
#include "sgt/trainer.hpp"

using namespace sgt;
using test_util::random_tensor;

TEST_CASE("through-channel offsets index exactly the non-zero channels") {
  SUBCASE("hand example: C=8 [0,7,0,0,3,0,0,1]") {
    Tensor3D x(8, 1, 1);
    x.at(1, 0, 0) = 7.0f;
    x.at(4, 0, 0) = 3.0f;
    x.at(7, 0, 0) = 1.0f;
    const OffsetMap m = encode_tc_offsets(x);
    CHECK(m.segments_per_location() == 1);
    CHECK(m.at(0, 0) == std::vector<std::uint16_t>{1, 4, 7});
    CHECK(m.elements_scanned == 8);
  }
  SUBCASE("all-zero tensor has empty locations") {
    const OffsetMap m = encode_tc_offsets(Tensor3D(64, 2, 2));
    CHECK(m.segments_per_location() == 2);
    CHECK(m.total_nonzeros() == 0);
  }
  SUBCASE("random tensor round-trips against brute-force scan") {
    Rng rng(21);
    const Tensor3D x = random_tensor(40, 5, 7, rng, 0.6);
    const OffsetMap m = encode_tc_offsets(x);
    for (int hi = 0; hi < x.h; ++hi)
      for (int wi = 0; wi < x.w; ++wi) {
        std::vector<std::uint16_t> expect;
        for (int ci = 0; ci < x.c; ++ci)
          if (x.at(ci, hi, wi) != 0.0f) expect.push_back(static_cast<std::uint16_t>(ci));
        CHECK(m.at(hi, wi) == expect);
      }
    CHECK_NOTHROW(validate_offsets(x, m));
  }
}

TEST_CASE("within-channel bitmap") {
  Rng rng(23);
  const Tensor3D z = random_tensor(4, 6, 6, rng);
  const ReluResult rr = relu_forward(z);
  SUBCASE("bitmap of the relu output equals the relu mask") {
    const FootprintDiff d = footprint_equal(build_wc_bitmap(rr.a), rr.mask);
    CHECK(d.equal);
  }
  SUBCASE("popcount counts non-zeros exactly") {
    Tensor3D t(2, 3, 3);
    t.at(0, 1, 2) = 1.0f;
    t.at(1, 0, 0) = -2.0f;
    t.at(1, 2, 2) = 0.5f;
    CHECK(build_wc_bitmap(t).popcount() == 3);
    CHECK(build_wc_bitmap(Tensor3D(2, 3, 3)).popcount() == 0);
  }
  SUBCASE("sparsity fraction complements popcount") {
    const OutputBitmap bm = build_wc_bitmap(rr.a);
    const double dense = static_cast<double>(bm.popcount()) / static_cast<double>(bm.size());
    CHECK(sparsity_fraction(rr.a) + dense == 1.0);
  }
}

TEST_CASE("sparsity_fraction basics") {
  Tensor3D half(1, 1, 4);
  half.v = {0.0f, 1.0f, 0.0f, 2.0f};
  CHECK(sparsity_fraction(half) == 0.5);
  CHECK(sparsity_fraction(Tensor3D(2, 2, 2, 1.0f)) == 0.0);
}

TEST_CASE("footprint_equal reports the first differing coordinate") {
  Tensor3D a(1, 2, 2);
  a.at(0, 0, 0) = 1.0f;
  const OutputBitmap ba = build_wc_bitmap(a);
  CHECK(footprint_equal(ba, ba).equal);

  OutputBitmap bb = ba;
  bb.set(0, 1, 1, true);
  const FootprintDiff d = footprint_equal(ba, bb);
  CHECK_FALSE(d.equal);
  CHECK(d.c == 0);
  CHECK(d.h == 1);
  CHECK(d.w == 1);
  CHECK_THROWS_AS(footprint_equal(ba, OutputBitmap(2, 2, 2)), ShapeError);
}

TEST_CASE("stale offsets are rejected") {
  Rng rng(29);
  Tensor3D x = random_tensor(8, 3, 3, rng, 0.5);
  const OffsetMap m = encode_tc_offsets(x);
  SUBCASE("offset pointing at a zero") {
    Tensor3D y = x;
    for (int ci = 0; ci < y.c; ++ci)
      if (y.at(ci, 1, 1) != 0.0f) {
        y.at(ci, 1, 1) = 0.0f;
        break;
      }
    CHECK_THROWS_AS(validate_offsets(y, m), IntegrityError);
  }
  SUBCASE("non-zero missing from the index") {
    Tensor3D y = x;
    for (int ci = 0; ci < y.c; ++ci)
      if (y.at(ci, 2, 0) == 0.0f) {
        y.at(ci, 2, 0) = 1.5f;
        break;
      }
    CHECK_THROWS_AS(validate_offsets(y, m), IntegrityError);
  }
  SUBCASE("dim mismatch") {
    CHECK_THROWS_AS(validate_offsets(Tensor3D(8, 3, 4), m), IntegrityError);
  }
}

TEST_CASE("offset serialization layout and round trip") {
  SUBCASE("a full 32-entry segment costs 1 count byte + 20 payload bytes") {
    const Tensor3D dense(32, 1, 1, 1.0f);
    const auto bytes = serialize_offsets(encode_tc_offsets(dense));
    CHECK(bytes.size() == 21);
    CHECK((bytes[0] & 0x3f) == 32);
  }
  SUBCASE("round trip over random tensors") {
    Rng rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      const int c = 1 + static_cast<int>(rng.next_below(70));
      const Tensor3D x = random_tensor(c, 3, 4, rng, rng.uniform());
      const OffsetMap m = encode_tc_offsets(x);
      const auto bytes = serialize_offsets(m);
      const OffsetMap back = deserialize_offsets(bytes.data(), bytes.size(), c, 3, 4);
      CHECK(back.nz == m.nz);
    }
  }
  SUBCASE("truncated payload names the byte offset") {
    const Tensor3D dense(32, 1, 1, 1.0f);
    auto bytes = serialize_offsets(encode_tc_offsets(dense));
    bytes.resize(bytes.size() - 1);
    CHECK_THROWS_AS(deserialize_offsets(bytes.data(), bytes.size(), 32, 1, 1), IntegrityError);
    CHECK_THROWS_WITH_AS(deserialize_offsets(bytes.data(), bytes.size(), 32, 1, 1),
                         doctest::Contains("truncated at byte"), IntegrityError);
  }
}

TEST_CASE("sparsity stats aggregate per channel and per tile") {
  Tensor3D x(2, 4, 4, 1.0f);
  for (int hi = 0; hi < 4; ++hi)
    for (int wi = 0; wi < 4; ++wi) x.at(0, hi, wi) = 0.0f;  // channel 0 fully zero
  const SparsityStats st = compute_sparsity_stats(x, 3, SparsityStats::PassTag::BP, 2, 2);
  CHECK(st.layer_id == 3);
  CHECK(st.pass == SparsityStats::PassTag::BP);
  CHECK(st.zero_fraction == 0.5);
  CHECK(st.per_channel == std::vector<double>{1.0, 0.0});
  CHECK(st.per_tile == std::vector<double>{0.5, 0.5, 0.5, 0.5});
}
