#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <stdexcept>

#include "cseg/mask.hpp"
#include "cseg/morphology.hpp"
#include "cseg/rng.hpp"
#include "oracles.hpp"

using cseg::BinaryMask;

namespace {

BinaryMask random_mask(cseg::Rng& rng, int h, int w, double p) {
  BinaryMask m(h, w);
  for (auto& v : m.data) v = rng.next_double() < p ? 1 : 0;
  return m;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
  for (size_t i = 0; i < a.data.size(); ++i)
    if (a.data[i] && !b.data[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("elliptical_element hand shapes") {
  CHECK_THROWS_AS((void)cseg::elliptical_element(0), std::invalid_argument);

  CHECK(cseg::elliptical_element(1).footprint.area() == 1);
  // k=2: every corner center evaluates to 0.5^2 + 0.5^2 = 0.5 <= 1
  CHECK(cseg::elliptical_element(2).footprint.area() == 4);
  // k=3: worst corner 2*(1/1.5)^2 ~ 0.889 <= 1, so the full block
  CHECK(cseg::elliptical_element(3).footprint.area() == 9);
}

TEST_CASE("elliptical_element matches the inclusion rule for all tested k") {
  for (int k : {1, 2, 3, 4, 5, 10, 15, 19, 20, 25}) {
    cseg::StructuringElement se = cseg::elliptical_element(k);
    REQUIRE(se.footprint.height == k);
    REQUIRE(se.footprint.width == k);
    auto off = oracle::ellipse_offsets(k);
    long long count = 0;
    for (auto [r, c] : off) {
      CHECK(se.footprint.at(r, c) == 1);
      ++count;
    }
    CHECK(se.footprint.area() == count);
    // 180-degree rotational symmetry of the footprint
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c)
        CHECK(se.footprint.at(r, c) == se.footprint.at(k - 1 - r, k - 1 - c));
  }
}

TEST_CASE("dilate and erode hand cases") {
  cseg::StructuringElement k1 = cseg::elliptical_element(1);
  cseg::StructuringElement k3 = cseg::elliptical_element(3);

  BinaryMask empty(5, 5);
  CHECK(cseg::dilate(empty, k3) == empty);

  cseg::Rng rng(7);
  BinaryMask m = random_mask(rng, 5, 5, 0.4);
  CHECK(cseg::dilate(m, k1) == m);
  CHECK(cseg::erode(m, k1) == m);

  BinaryMask center(5, 5);
  center.set(2, 2, 1);
  BinaryMask d = cseg::dilate(center, k3);
  CHECK(d.area() == 9);
  for (int r = 1; r <= 3; ++r)
    for (int c = 1; c <= 3; ++c) CHECK(d.at(r, c) == 1);
  CHECK(cseg::erode(center, k3).area() == 0);

  BinaryMask full(4, 4, 1);
  CHECK(cseg::erode(full, k1) == full);
}

TEST_CASE("close fills a 1-px interior hole") {
  BinaryMask block(7, 7, 1);
  block.set(3, 3, 0);
  BinaryMask closed = cseg::close(block, cseg::elliptical_element(3));
  CHECK(closed == oracle::brute_close(block, 3));
  CHECK(closed.at(3, 3) == 1);

  BinaryMask empty(6, 6), full(6, 6, 1);
  CHECK(cseg::close(empty, cseg::elliptical_element(3)) == empty);
  CHECK(cseg::close(full, cseg::elliptical_element(3)) == full);
}

TEST_CASE("top_k_components hand cases") {
  BinaryMask empty(6, 6);
  CHECK(cseg::top_k_components(empty, 2) == empty);

  // single blob survives any k
  BinaryMask one(6, 6);
  one.set(2, 2, 1);
  one.set(2, 3, 1);
  CHECK(cseg::top_k_components(one, 2) == one);

  // sizes 5, 3, 1: top-2 drops the singleton
  BinaryMask m(8, 8);
  for (int c = 0; c < 5; ++c) m.set(0, c, 1);
  for (int c = 0; c < 3; ++c) m.set(4, c, 1);
  m.set(7, 7, 1);
  BinaryMask kept = cseg::top_k_components(m, 2);
  CHECK(kept.area() == 8);
  CHECK(kept.at(7, 7) == 0);
  CHECK(kept == oracle::brute_top_k(m, 2));
}

TEST_CASE("top_k tie-break prefers the first component in scan order") {
  BinaryMask m(5, 9);
  // three 2-px blobs, equal size; k=2 keeps the first two by first pixel
  m.set(0, 0, 1);
  m.set(0, 1, 1);
  m.set(0, 4, 1);
  m.set(0, 5, 1);
  m.set(4, 7, 1);
  m.set(4, 8, 1);
  BinaryMask kept = cseg::top_k_components(m, 2);
  CHECK(kept.at(0, 0) == 1);
  CHECK(kept.at(0, 4) == 1);
  CHECK(kept.at(4, 7) == 0);
  CHECK(kept == oracle::brute_top_k(m, 2));
}

TEST_CASE("8-connectivity joins diagonal pixels") {
  BinaryMask m(4, 4);
  m.set(0, 0, 1);
  m.set(1, 1, 1);
  m.set(2, 2, 1);
  CHECK(cseg::count_components(m) == 1);
  CHECK(cseg::top_k_components(m, 1) == m);
}

TEST_CASE("morphology equals brute force on random masks across element sizes") {
  // the acceptance gate runs the full 200-mask sweep; this is a fast slice
  cseg::Rng rng(1234);
  for (int k : {1, 2, 3, 10, 19, 20}) {
    for (int t = 0; t < 40; ++t) {
      BinaryMask m = random_mask(rng, 16, 16, 0.35);
      CHECK(cseg::dilate(m, cseg::elliptical_element(k)) == oracle::brute_dilate(m, k));
      CHECK(cseg::erode(m, cseg::elliptical_element(k)) == oracle::brute_erode(m, k));
      CHECK(cseg::close(m, cseg::elliptical_element(k)) == oracle::brute_close(m, k));
    }
  }
  for (int t = 0; t < 60; ++t) {
    BinaryMask m = random_mask(rng, 16, 16, 0.3);
    for (int k : {1, 2, 3, 5}) CHECK(cseg::top_k_components(m, k) == oracle::brute_top_k(m, k));
  }
}

TEST_CASE("extensivity, anti-extensivity, idempotence, monotonicity") {
  cseg::Rng rng(99);
  for (int t = 0; t < 60; ++t) {
    int k = (t % 2) ? 3 : 5;
    cseg::StructuringElement se = cseg::elliptical_element(k);
    BinaryMask m = random_mask(rng, 16, 16, 0.3);

    BinaryMask d = cseg::dilate(m, se);
    BinaryMask e = cseg::erode(m, se);
    CHECK(subset(m, d));
    CHECK(subset(e, m));

    BinaryMask c1 = cseg::close(m, se);
    CHECK(cseg::close(c1, se) == c1);

    // monotonicity: grow m by one random pixel
    BinaryMask m2 = m;
    m2.data[size_t(rng.next_below(m2.data.size()))] = 1;
    CHECK(subset(cseg::dilate(m, se), cseg::dilate(m2, se)));
    CHECK(subset(cseg::erode(m, se), cseg::erode(m2, se)));
    CHECK(subset(cseg::close(m, se), cseg::close(m2, se)));

    BinaryMask kept = cseg::top_k_components(m, 2);
    CHECK(subset(kept, m));
    CHECK(cseg::count_components(kept) <= std::max(2, 0));
  }
}
